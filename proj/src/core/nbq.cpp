// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbq.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace reca::nbq {

namespace {

const std::map<Group, std::vector<std::string>>& taxonomy() {
    static const std::map<Group, std::vector<std::string>> t = {
        {Group::multi_shot_transition, {"cut_quality", "camera_flow", "motion_continuity", "prop_state_carryover"}},
        {Group::character_identity,
         {"identity_cues", "clothing", "silhouette", "role", "facial_expression", "emotional_continuity"}},
        {Group::scene_location, {"layout", "lighting", "spatial_anchors", "required_entities", "location_handoff"}},
        {Group::event_causality, {"action_order", "visible_consequences", "reaction_timing", "prop_interactions"}},
        {Group::cinematic_realisation,
         {"shot_scale", "camera_movement", "framing", "scene_structure", "ending_visual_beat"}},
        {Group::artifact_absence, {"deformation", "extra_subjects", "subtitles", "watermarks", "abrupt_corruption"}},
    };
    return t;
}

// Tracks a JSON pointer so load errors name the offending position.
class Cursor {
public:
    Cursor(const Json& node, std::string path) : node_(node), path_(std::move(path)) {}

    const Json& node() const { return node_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void error(const std::string& what) const {
        fail(ErrorCode::schema, (path_.empty() ? std::string("/") : path_) + ": " + what);
    }

    bool has(const char* key) const { return node_.is_object() && node_.contains(key); }

    Cursor at(const char* key) const {
        if (!node_.is_object()) error("expected an object");
        if (!node_.contains(key)) Cursor(node_, path_ + "/" + key).error("missing required field");
        return Cursor(node_.at(key), path_ + "/" + key);
    }

    Cursor at(std::size_t i) const { return Cursor(node_.at(i), path_ + "/" + std::to_string(i)); }

    std::string str() const {
        if (!node_.is_string()) error("expected a string");
        return node_.get<std::string>();
    }
    double num() const {
        if (!node_.is_number()) error("expected a number");
        return node_.get<double>();
    }
    int integer() const {
        if (!node_.is_number_integer()) error("expected an integer");
        return node_.get<int>();
    }
    bool boolean() const {
        if (!node_.is_boolean()) error("expected a boolean");
        return node_.get<bool>();
    }
    std::size_t size() const {
        if (!node_.is_array()) error("expected an array");
        return node_.size();
    }
    std::vector<std::string> strings() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).str());
        return out;
    }

private:
    const Json& node_;
    std::string path_;
};

template <typename E, std::size_t N>
E parse_enum(const Cursor& c, const std::array<E, N>& values) {
    const auto s = c.str();
    for (auto v : values) {
        if (s == to_string(v)) return v;
    }
    c.error("unknown value '" + s + "'");
}

constexpr std::array<ProblemKind, 2> kKinds = {ProblemKind::binary, ProblemKind::likert};
constexpr std::array<Variant, 3> kVariants = {Variant::same_scene, Variant::scene_transition, Variant::goal_driven};
constexpr std::array<TransitionKind, 3> kTransitions = {
    TransitionKind::same_location, TransitionKind::hard_scene_change, TransitionKind::gradual_shift};

std::string problem_path(std::size_t i) { return "/problems/" + std::to_string(i); }

}  // namespace

const char* to_string(Group g) noexcept {
    switch (g) {
        case Group::multi_shot_transition: return "multi_shot_transition";
        case Group::character_identity: return "character_identity";
        case Group::scene_location: return "scene_location";
        case Group::event_causality: return "event_causality";
        case Group::cinematic_realisation: return "cinematic_realisation";
        case Group::artifact_absence: return "artifact_absence";
    }
    return "?";
}

Group group_from_string(const std::string& s) {
    for (auto g : kGroups) {
        if (s == to_string(g)) return g;
    }
    fail(ErrorCode::invalid_argument, "unknown group '" + s + "'");
}

const std::vector<std::string>& axes_of(Group g) { return taxonomy().at(g); }

std::optional<Group> group_of_axis(const std::string& axis) {
    for (const auto& [g, axes] : taxonomy()) {
        if (std::find(axes.begin(), axes.end(), axis) != axes.end()) return g;
    }
    return std::nullopt;
}

std::vector<std::string> all_axes() {
    std::vector<std::string> out;
    for (auto g : kGroups) {
        const auto& a = axes_of(g);
        out.insert(out.end(), a.begin(), a.end());
    }
    return out;
}

const char* to_string(ProblemKind k) noexcept { return k == ProblemKind::binary ? "binary" : "likert"; }

const char* to_string(Variant v) noexcept {
    switch (v) {
        case Variant::same_scene: return "same_scene";
        case Variant::scene_transition: return "scene_transition";
        case Variant::goal_driven: return "goal_driven";
    }
    return "?";
}

const char* to_string(TransitionKind t) noexcept {
    switch (t) {
        case TransitionKind::same_location: return "same_location";
        case TransitionKind::hard_scene_change: return "hard_scene_change";
        case TransitionKind::gradual_shift: return "gradual_shift";
    }
    return "?";
}

// ---- validation ------------------------------------------------------------------------------

void validate(const BenchInstance& in) {
    auto bad = [](const std::string& path, const std::string& what) { fail(ErrorCode::schema, path + ": " + what); };
    if (in.target_duration <= 0.0) bad("/target_duration", "must be > 0");
    if (in.slices.empty()) bad("/slices", "needs at least one slice");
    for (std::size_t j = 0; j < in.slices.size(); ++j) {
        if (!(in.slices[j].duration > 0.0)) bad("/slices/" + std::to_string(j) + "/duration", "must be > 0");
    }
    if (in.transitions.size() + 1 != in.slices.size()) {
        bad("/transitions", "needs exactly " + std::to_string(in.slices.size() - 1) + " entries");
    }
    const auto n = static_cast<int>(in.slices.size());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < in.problems.size(); ++i) {
        const auto& p = in.problems[i];
        const auto path = problem_path(i);
        if (p.id.empty()) bad(path + "/id", "must be non-empty");
        if (!index.emplace(p.id, i).second) bad(path + "/id", "duplicate problem id '" + p.id + "'");
        if (p.slice < 0 || p.slice >= n) bad(path + "/slice", "out of range");
        if (p.spans_next && p.slice + 1 >= n) bad(path + "/spans_next", "no following slice");
        auto g = group_of_axis(p.axis);
        if (!g) bad(path + "/axis", "unknown axis '" + p.axis + "'");
        if (*g != p.group) bad(path + "/group", "axis '" + p.axis + "' belongs to " + to_string(*g));
        if (!(p.weight > 0.0) || !std::isfinite(p.weight)) bad(path + "/weight", "must be > 0");
    }
    for (std::size_t i = 0; i < in.problems.size(); ++i) {
        const auto& p = in.problems[i];
        if (!p.prerequisite) continue;
        auto it = index.find(*p.prerequisite);
        if (it == index.end()) bad(problem_path(i) + "/prerequisite", "unknown problem '" + *p.prerequisite + "'");
        if (in.problems[it->second].slice > p.slice) {
            bad(problem_path(i) + "/prerequisite", "refers to a later slice");
        }
    }
    // Prerequisite chains must be acyclic; each problem has at most one
    // prerequisite, so walking each chain for |problems| steps suffices.
    for (std::size_t i = 0; i < in.problems.size(); ++i) {
        std::size_t cur = i;
        for (std::size_t step = 0; step <= in.problems.size(); ++step) {
            const auto& pre = in.problems[cur].prerequisite;
            if (!pre) break;
            cur = index.at(*pre);
            if (cur == i) bad(problem_path(i) + "/prerequisite", "cyclic prerequisite chain");
        }
    }
    std::set<int> aligned;
    for (std::size_t i = 0; i < in.alignments.size(); ++i) {
        const auto& a = in.alignments[i];
        const auto path = "/alignments/" + std::to_string(i);
        if (a.slice < 0 || a.slice >= n) bad(path + "/slice", "out of range");
        if (!aligned.insert(a.slice).second) bad(path + "/slice", "duplicate alignment");
        if (!(a.confidence >= 0.0 && a.confidence <= 1.0)) bad(path + "/confidence", "must lie in [0,1]");
        if (!(a.duration_deviation >= 0.0)) bad(path + "/duration_deviation", "must be >= 0");
    }
    for (const auto& [axis, w] : in.axis_weights) {
        if (!group_of_axis(axis)) bad("/axis_weights/" + axis, "unknown axis");
        if (!(w > 0.0)) bad("/axis_weights/" + axis, "must be > 0");
    }
    for (const auto& [g, w] : in.lambda) {
        if (!(w >= 0.0)) bad(std::string("/lambda/") + to_string(g), "must be >= 0");
    }
}

BenchInstance instance_from_json(const Json& doc) {
    Cursor root(doc, "");
    if (!doc.is_object()) root.error("expected an object");
    if (root.at("schema").str() != kInstanceSchema) root.at("schema").error("expected " + std::string(kInstanceSchema));
    BenchInstance in;
    in.id = root.at("id").str();
    in.anchor = root.at("anchor").str();
    in.intent = root.at("intent").str();
    in.target_duration = root.at("target_duration").num();
    in.variant = parse_enum(root.at("variant"), kVariants);
    if (root.has("shared_metadata")) {
        auto m = root.at("shared_metadata");
        if (!m.node().is_object()) m.error("expected an object");
        in.shared_metadata = m.node();
    }
    auto slices = root.at("slices");
    for (std::size_t j = 0; j < slices.size(); ++j) {
        auto s = slices.at(j);
        SliceMeta m;
        m.duration = s.at("duration").num();
        if (s.has("scene")) m.scene = s.at("scene").str();
        if (s.has("characters")) m.characters = s.at("characters").strings();
        if (s.has("required_entities")) m.required_entities = s.at("required_entities").strings();
        if (s.has("action_beats")) m.action_beats = s.at("action_beats").strings();
        if (s.has("shot_scale")) m.shot_scale = s.at("shot_scale").str();
        if (s.has("camera_movement")) m.camera_movement = s.at("camera_movement").str();
        in.slices.push_back(std::move(m));
    }
    auto transitions = root.at("transitions");
    for (std::size_t j = 0; j < transitions.size(); ++j) in.transitions.push_back(parse_enum(transitions.at(j), kTransitions));
    auto problems = root.at("problems");
    for (std::size_t i = 0; i < problems.size(); ++i) {
        auto c = problems.at(i);
        Problem p;
        p.id = c.at("id").str();
        p.slice = c.at("slice").integer();
        if (c.has("spans_next")) p.spans_next = c.at("spans_next").boolean();
        p.axis = c.at("axis").str();
        auto g = group_of_axis(p.axis);
        if (!g) c.at("axis").error("unknown axis '" + p.axis + "'");
        p.group = *g;
        if (c.has("group")) p.group = parse_enum(c.at("group"), kGroups);
        p.kind = parse_enum(c.at("kind"), kKinds);
        if (c.has("weight")) p.weight = c.at("weight").num();
        if (c.has("coverage_flag")) p.coverage_flag = c.at("coverage_flag").boolean();
        if (c.has("prerequisite") && !c.at("prerequisite").node().is_null()) p.prerequisite = c.at("prerequisite").str();
        if (c.has("text")) p.text = c.at("text").str();
        in.problems.push_back(std::move(p));
    }
    if (root.has("alignments")) {
        auto al = root.at("alignments");
        for (std::size_t i = 0; i < al.size(); ++i) {
            auto c = al.at(i);
            in.alignments.push_back({c.at("slice").integer(), c.at("confidence").num(), c.at("duration_deviation").num()});
        }
    }
    if (root.has("axis_weights")) {
        auto aw = root.at("axis_weights");
        if (!aw.node().is_object()) aw.error("expected an object");
        for (const auto& [k, v] : aw.node().items()) in.axis_weights[k] = Cursor(v, aw.path() + "/" + k).num();
    }
    if (root.has("lambda")) {
        auto lw = root.at("lambda");
        if (!lw.node().is_object()) lw.error("expected an object");
        for (const auto& [k, v] : lw.node().items()) {
            Cursor c(v, lw.path() + "/" + k);
            Group g{};
            bool found = false;
            for (auto cand : kGroups) {
                if (k == to_string(cand)) {
                    g = cand;
                    found = true;
                }
            }
            if (!found) c.error("unknown group");
            in.lambda[g] = c.num();
        }
    }
    validate(in);
    return in;
}

Json to_json(const BenchInstance& in) {
    Json doc;
    doc["schema"] = kInstanceSchema;
    doc["id"] = in.id;
    doc["anchor"] = in.anchor;
    doc["intent"] = in.intent;
    doc["target_duration"] = in.target_duration;
    doc["variant"] = to_string(in.variant);
    doc["shared_metadata"] = in.shared_metadata;
    Json slices = Json::array();
    for (const auto& s : in.slices) {
        slices.push_back({{"duration", s.duration},
                          {"scene", s.scene},
                          {"characters", s.characters},
                          {"required_entities", s.required_entities},
                          {"action_beats", s.action_beats},
                          {"shot_scale", s.shot_scale},
                          {"camera_movement", s.camera_movement}});
    }
    doc["slices"] = std::move(slices);
    Json tr = Json::array();
    for (auto t : in.transitions) tr.push_back(to_string(t));
    doc["transitions"] = std::move(tr);
    Json probs = Json::array();
    for (const auto& p : in.problems) {
        Json j{{"id", p.id},       {"slice", p.slice},  {"spans_next", p.spans_next},
               {"axis", p.axis},   {"group", to_string(p.group)}, {"kind", to_string(p.kind)},
               {"weight", p.weight}, {"coverage_flag", p.coverage_flag}};
        j["prerequisite"] = p.prerequisite ? Json(*p.prerequisite) : Json(nullptr);
        j["text"] = p.text;
        probs.push_back(std::move(j));
    }
    doc["problems"] = std::move(probs);
    Json al = Json::array();
    for (const auto& a : in.alignments) {
        al.push_back({{"slice", a.slice}, {"confidence", a.confidence}, {"duration_deviation", a.duration_deviation}});
    }
    doc["alignments"] = std::move(al);
    doc["axis_weights"] = Json::object();
    for (const auto& [k, v] : in.axis_weights) doc["axis_weights"][k] = v;
    doc["lambda"] = Json::object();
    for (const auto& [g, v] : in.lambda) doc["lambda"][to_string(g)] = v;
    return doc;
}

// ---- answers ------------------------------------------------------------------------------------

AnswerSet answers_from_json(const Json& doc) {
    Cursor root(doc, "");
    if (root.at("schema").str() != kAnswersSchema) root.at("schema").error("expected " + std::string(kAnswersSchema));
    auto a = root.at("answers");
    if (!a.node().is_object()) a.error("expected an object");
    AnswerSet out;
    for (const auto& [id, v] : a.node().items()) {
        Cursor c(v, "/answers/" + id);
        if (v.is_boolean()) {
            out[id] = v.get<bool>();
        } else if (v.is_number_integer()) {
            out[id] = v.get<int>();
        } else {
            c.error("expected a boolean or an integer rating");
        }
    }
    return out;
}

Json to_json(const AnswerSet& answers) {
    Json a = Json::object();
    for (const auto& [id, v] : answers) {
        if (std::holds_alternative<bool>(v)) {
            a[id] = std::get<bool>(v);
        } else {
            a[id] = std::get<int>(v);
        }
    }
    return Json{{"schema", kAnswersSchema}, {"answers", std::move(a)}};
}

double normalize_binary(bool satisfied) noexcept { return satisfied ? 1.0 : 0.0; }

double normalize_likert(int rating) {
    require(rating >= 1 && rating <= 5, ErrorCode::invalid_argument,
            "likert rating " + std::to_string(rating) + " outside 1..5");
    return (rating - 1) / 4.0;
}

double normalize(const Answer& answer, ProblemKind kind) {
    if (kind == ProblemKind::binary) {
        require(std::holds_alternative<bool>(answer), ErrorCode::schema, "binary problem needs a boolean answer");
        return normalize_binary(std::get<bool>(answer));
    }
    require(std::holds_alternative<int>(answer), ErrorCode::schema, "likert problem needs an integer rating");
    return normalize_likert(std::get<int>(answer));
}

// ---- scoring ----------------------------------------------------------------------------------

std::vector<bool> gate_segments(const std::vector<Alignment>& alignments, std::size_t slices, const GateConfig& cfg) {
    require(cfg.deviation_threshold >= 0.0 && cfg.deviation_threshold <= 1.0, ErrorCode::config,
            "deviation threshold must lie in [0,1]");
    require(cfg.confidence_threshold >= 0.0 && cfg.confidence_threshold <= 1.0, ErrorCode::config,
            "confidence threshold must lie in [0,1]");
    std::vector<bool> valid(slices, true);
    for (const auto& a : alignments) {
        require(a.slice >= 0 && static_cast<std::size_t>(a.slice) < slices, ErrorCode::invalid_argument,
                "alignment slice out of range");
        // "more than the threshold" is strict: deviation == threshold passes
        valid[a.slice] = a.confidence >= cfg.confidence_threshold && !(a.duration_deviation > cfg.deviation_threshold);
    }
    return valid;
}

std::map<std::string, double> apply_coverage_gate(const std::vector<Problem>& problems,
                                                  const std::map<std::string, double>& raw) {
    std::map<std::string, const Problem*> by_id;
    for (const auto& p : problems) by_id[p.id] = &p;
    std::map<std::string, double> gated;
    std::set<std::string> visiting;
    std::function<double(const Problem&)> eval = [&](const Problem& p) -> double {
        if (auto it = gated.find(p.id); it != gated.end()) return it->second;
        require(visiting.insert(p.id).second, ErrorCode::schema, "cyclic prerequisite at " + p.id);
        double s = 0.0;
        auto r = raw.find(p.id);
        if (r != raw.end()) {
            s = r->second;
            if (p.prerequisite) {
                auto pre = by_id.find(*p.prerequisite);
                require(pre != by_id.end(), ErrorCode::schema, "unknown prerequisite " + *p.prerequisite);
                if (!raw.count(*p.prerequisite) || eval(*pre->second) == 0.0) s = 0.0;
            }
        }
        visiting.erase(p.id);
        gated[p.id] = s;
        return s;
    };
    for (const auto& p : problems) eval(p);
    return gated;
}

std::optional<double> axis_score(const std::vector<Problem>& problems, const std::map<std::string, double>& gated,
                                 const std::string& axis) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& p : problems) {
        if (p.axis != axis) continue;
        auto it = gated.find(p.id);
        num += p.weight * (it == gated.end() ? 0.0 : it->second);
        den += p.weight;
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
}

double group_score(Group g, const std::map<std::string, double>& axis_scores,
                   const std::map<std::string, double>& axis_weights) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& a : axes_of(g)) {
        auto w = axis_weights.count(a) ? axis_weights.at(a) : 1.0;
        require(w > 0.0, ErrorCode::config, "axis weight for " + a + " must be > 0");
        if (auto it = axis_scores.find(a); it != axis_scores.end()) num += w * it->second;
        den += w;
    }
    return num / den;
}

std::map<Group, double> uniform_lambda() {
    std::map<Group, double> l;
    for (auto g : kGroups) l[g] = 1.0 / 6.0;
    return l;
}

double headline(const std::map<Group, double>& group_scores, const std::map<Group, double>& lambda) {
    double sum = 0.0;
    for (auto g : kGroups) {
        auto it = lambda.find(g);
        const double w = it == lambda.end() ? 0.0 : it->second;
        require(w >= 0.0, ErrorCode::config, std::string("lambda for ") + to_string(g) + " must be >= 0");
        sum += w;
    }
    require(std::fabs(sum - 1.0) <= 1e-9, ErrorCode::config, "group weights lambda must sum to 1");
    double h = 0.0;
    for (const auto& [g, w] : lambda) {
        auto it = group_scores.find(g);
        if (it != group_scores.end()) h += w * it->second;
    }
    return h;
}

Report score(const BenchInstance& in, const AnswerSet& answers, const GateConfig& gate) {
    validate(in);
    Report r;
    r.instance_id = in.id;
    r.slice_valid = gate_segments(in.alignments, in.slices.size(), gate);
    auto& hist = r.status_histogram;
    for (const char* k : {"valid_slices", "invalid_slices", "answered", "unanswered", "zeroed_invalid_slice",
                          "zeroed_by_prerequisite", "unknown_answers"}) {
        hist[k] = 0;
    }
    for (bool v : r.slice_valid) ++hist[v ? "valid_slices" : "invalid_slices"];

    std::set<std::string> ids;
    for (const auto& p : in.problems) ids.insert(p.id);
    for (const auto& [id, a] : answers) {
        if (!ids.count(id)) {
            ++hist["unknown_answers"];
            log(LogLevel::warn, "answer for unknown problem '" + id + "' ignored");
        }
    }

    std::map<std::string, double> raw;
    for (const auto& p : in.problems) {
        auto it = answers.find(p.id);
        if (it == answers.end()) {
            ++hist["unanswered"];
            continue;
        }
        ++hist["answered"];
        double s = normalize(it->second, p.kind);
        const bool valid = r.slice_valid[p.slice] && (!p.spans_next || r.slice_valid[p.slice + 1]);
        if (!valid) {
            s = 0.0;
            ++hist["zeroed_invalid_slice"];
        }
        raw[p.id] = s;
    }
    r.problem_scores = apply_coverage_gate(in.problems, raw);
    for (const auto& p : in.problems) {
        if (raw.count(p.id) && raw.at(p.id) > 0.0 && r.problem_scores.at(p.id) == 0.0) ++hist["zeroed_by_prerequisite"];
    }

    std::set<std::string> passing;
    for (const auto& a : all_axes()) {
        if (auto s = axis_score(in.problems, r.problem_scores, a)) r.axis_scores[a] = *s;
    }
    // A problem passes at a normalised score of at least one half.
    for (const auto& p : in.problems) {
        if (p.coverage_flag && r.problem_scores.at(p.id) >= 0.5) passing.insert(p.axis);
    }
    for (auto g : kGroups) r.group_scores[g] = group_score(g, r.axis_scores, in.axis_weights);
    r.headline = headline(r.group_scores, in.lambda.empty() ? uniform_lambda() : in.lambda);
    r.coverage = static_cast<double>(passing.size()) / static_cast<double>(all_axes().size());
    return r;
}

Json to_json(const Report& r) {
    Json doc;
    doc["schema"] = kReportSchema;
    doc["instance_id"] = r.instance_id;
    doc["headline"] = r.headline;
    doc["coverage"] = r.coverage;
    doc["groups"] = Json::object();
    for (auto g : kGroups) doc["groups"][to_string(g)] = r.group_scores.count(g) ? r.group_scores.at(g) : 0.0;
    doc["axes"] = Json::object();
    for (const auto& a : all_axes()) {
        doc["axes"][a] = r.axis_scores.count(a) ? Json(r.axis_scores.at(a)) : Json(nullptr);
    }
    doc["problems"] = Json::object();
    for (const auto& [id, s] : r.problem_scores) doc["problems"][id] = s;
    Json slices = Json::array();
    for (std::size_t j = 0; j < r.slice_valid.size(); ++j) {
        slices.push_back({{"index", j}, {"valid", static_cast<bool>(r.slice_valid[j])}});
    }
    doc["slices"] = std::move(slices);
    doc["status_histogram"] = Json::object();
    for (const auto& [k, v] : r.status_histogram) doc["status_histogram"][k] = v;
    doc["judge_calls"] = r.judge_calls ? backend::to_json(*r.judge_calls) : Json(nullptr);
    // Side metrics are report hooks; nothing computes them here.
    doc["side_metrics"] = {{"clip_t", nullptr},     {"vbench", nullptr},       {"moviebench", nullptr},
                           {"vistory", nullptr},    {"t2v_compbench", nullptr}};
    return doc;
}

// ---- remote judge --------------------------------------------------------------------------------

RemoteJudge::RemoteJudge(backend::Transport& transport, backend::RetryPolicy policy, std::string model,
                         backend::ClockFactory clocks)
    : transport_(transport), policy_(std::move(policy)), model_(std::move(model)), clocks_(std::move(clocks)) {}

AnswerSet RemoteJudge::answer(const BenchInstance& in) {
    AnswerSet out;
    const auto doc = to_json(in);
    for (std::size_t j = 0; j < in.slices.size(); ++j) {
        backend::CallRequest req;
        req.kind = backend::RequestKind::judge;
        req.request_id = in.id + ":slice" + std::to_string(j);
        req.model = model_;
        req.prompt = in.intent;
        Json problems = Json::array();
        std::map<std::string, ProblemKind> kinds;
        for (const auto& p : in.problems) {
            if (static_cast<std::size_t>(p.slice) != j) continue;
            kinds[p.id] = p.kind;
            problems.push_back({{"id", p.id}, {"axis", p.axis}, {"kind", to_string(p.kind)}, {"text", p.text}});
        }
        if (problems.empty()) continue;
        req.body = {{"instance_id", in.id},
                    {"slice", j},
                    {"slice_metadata", doc["slices"][j]},
                    {"shared_metadata", in.shared_metadata},
                    {"problems", std::move(problems)}};
        AnswerSet got;
        auto validator = [&](const std::string& payload) {
            got.clear();
            auto parsed = answers_from_json(Json{{"schema", kAnswersSchema},
                                                 {"answers", parse_json(payload, "judge response").at("answers")}});
            for (const auto& [id, a] : parsed) {
                auto k = kinds.find(id);
                require(k != kinds.end(), ErrorCode::schema, "judge answered unknown problem " + id);
                normalize(a, k->second);  // type and range check
                got[id] = a;
            }
        };
        auto clock = clocks_();
        auto outcome = backend::submit_and_poll(transport_, req, policy_, *clock, nullptr, validator);
        records_.push_back(outcome.record);
        if (outcome.ok) out.insert(got.begin(), got.end());
    }
    return out;
}

backend::StatusHistogram RemoteJudge::calls() const { return backend::histogram(records_); }

}  // namespace reca::nbq
