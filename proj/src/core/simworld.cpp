// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "simworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace reca::sim {

namespace {

const char* short_name(Dimension d) {
    switch (d) {
        case Dimension::character_identity: return "identity";
        case Dimension::scene_layout: return "layout";
        case Dimension::object_physics: return "object";
        case Dimension::action_fidelity: return "action";
        case Dimension::visual_continuity: return "continuity";
        case Dimension::camera_state: return "camera";
    }
    return "?";
}

nbq::Group group_for(Dimension d) {
    switch (d) {
        case Dimension::character_identity: return nbq::Group::character_identity;
        case Dimension::scene_layout: return nbq::Group::scene_location;
        case Dimension::object_physics: return nbq::Group::event_causality;
        case Dimension::action_fidelity: return nbq::Group::event_causality;
        case Dimension::visual_continuity: return nbq::Group::multi_shot_transition;
        case Dimension::camera_state: return nbq::Group::cinematic_realisation;
    }
    return nbq::Group::artifact_absence;
}

std::string hex8(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(x & 0xffffffffULL));
    return buf;
}

// Axis of each variable: its rank among same-dimension keys, modulo the
// group's axis count.
std::map<std::string, std::string> axis_assignment(const WorldState& anchor) {
    std::map<Dimension, int> rank;
    std::map<std::string, std::string> out;
    for (const auto& [key, var] : anchor.variables) {
        const auto& axes = nbq::axes_of(group_for(var.dimension));
        out[key] = axes[static_cast<std::size_t>(rank[var.dimension]++) % axes.size()];
    }
    return out;
}

std::map<nbq::Group, double> retention_lambda() {
    std::map<nbq::Group, double> l;
    for (auto g : nbq::kGroups) l[g] = g == nbq::Group::artifact_absence ? 0.0 : 0.2;
    return l;
}

}  // namespace

const char* to_string(Dimension d) noexcept {
    switch (d) {
        case Dimension::character_identity: return "character_identity";
        case Dimension::scene_layout: return "scene_layout";
        case Dimension::object_physics: return "object_physics";
        case Dimension::action_fidelity: return "action_fidelity";
        case Dimension::visual_continuity: return "visual_continuity";
        case Dimension::camera_state: return "camera_state";
    }
    return "?";
}

Dimension dimension_from_string(const std::string& s) {
    for (auto d : kDimensions) {
        if (s == to_string(d)) return d;
    }
    fail(ErrorCode::invalid_argument, "unknown dimension '" + s + "'");
}

Json to_json(const WorldState& w) {
    Json vars = Json::object();
    for (const auto& [k, v] : w.variables) vars[k] = {{"value", v.value}, {"dimension", to_string(v.dimension)}};
    return Json{{"schema", kSegmentSchema}, {"step", w.step}, {"variables", std::move(vars)}};
}

WorldState world_from_json(const Json& doc) {
    expect_schema(doc, kSegmentSchema);
    WorldState w;
    w.step = doc.at("step").get<int>();
    for (const auto& [k, v] : doc.at("variables").items()) {
        w.variables[k] = {v.at("value").get<std::string>(), dimension_from_string(v.at("dimension").get<std::string>())};
    }
    return w;
}

double p_render(double position, const DilutionCurve& c) {
    auto lerp = [](double x, double x0, double x1, double y0, double y1) {
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    };
    if (position <= c.l_star) return 1.0;
    if (position <= c.soft_lo) return lerp(position, c.l_star, c.soft_lo, 1.0, c.soft_lo_level);
    if (position <= c.soft_hi) return lerp(position, c.soft_lo, c.soft_hi, c.soft_lo_level, c.soft_hi_level);
    if (position < c.l_hard) return lerp(position, c.soft_hi, c.l_hard, c.soft_hi_level, 0.0);
    return 0.0;
}

void validate(const SimConfig& c) {
    for (const auto& [d, r] : c.carryover_decay) {
        require(r >= 0.0 && r <= 1.0, ErrorCode::config, std::string("decay rate for ") + to_string(d) + " outside [0,1]");
    }
    require(c.drift_prob >= 0.0 && c.drift_prob <= 1.0, ErrorCode::config, "drift_prob outside [0,1]");
    const auto& d = c.dilution;
    require(0 < d.l_star && d.l_star < d.soft_lo && d.soft_lo <= d.soft_hi && d.soft_hi < d.l_hard, ErrorCode::config,
            "dilution thresholds must satisfy 0 < L* < soft_lo <= soft_hi < L_hard");
    require(d.soft_lo_level >= d.soft_hi_level && d.soft_lo_level <= 1.0 && d.soft_hi_level >= 0.0, ErrorCode::config,
            "dilution levels must be non-increasing within [0,1]");
    require(c.step_seconds >= 1, ErrorCode::config, "step_seconds must be >= 1");
    require(c.vars_per_dimension >= 1, ErrorCode::config, "vars_per_dimension must be >= 1");
}

// ---- decay calibration ----------------------------------------------------------------------

std::map<Dimension, std::pair<double, double>> default_anchors() {
    return {{Dimension::action_fidelity, {0.66, 0.09}},   {Dimension::visual_continuity, {0.72, 0.16}},
            {Dimension::object_physics, {0.65, 0.16}},    {Dimension::scene_layout, {0.85, 0.24}},
            {Dimension::character_identity, {0.43, 0.47}}};
}

DecayRates calibrate_decay(const std::map<Dimension, std::pair<double, double>>& anchors, int steps) {
    require(steps > 0, ErrorCode::invalid_argument, "calibration needs steps > 0");
    DecayRates r;
    for (const auto& [d, se] : anchors) {
        require(se.first > 0.0 && se.second >= 0.0, ErrorCode::invalid_argument, "anchors must be positive");
        r[d] = std::min(1.0, std::pow(se.second / se.first, 1.0 / steps));
    }
    if (!r.count(Dimension::camera_state) && r.count(Dimension::scene_layout)) {
        r[Dimension::camera_state] = r[Dimension::scene_layout];
    }
    return r;
}

DecayRates default_decay() {
    return {{Dimension::character_identity, 1.0},
            {Dimension::scene_layout, 0.9703393119416455},
            {Dimension::object_physics, 0.9671746826961957},
            {Dimension::action_fidelity, 0.9536688230573818},
            {Dimension::visual_continuity, 0.9648222740344581},
            {Dimension::camera_state, 0.9703393119416455}};
}

DecayRates load_decay(const std::string& path) {
    auto doc = parse_json(read_file(path), path);
    expect_schema(doc, kDecaySchema);
    DecayRates r;
    for (const auto& [k, v] : doc.at("rates").items()) r[dimension_from_string(k)] = v.get<double>();
    return r;
}

Json decay_fixture(const std::map<Dimension, std::pair<double, double>>& anchors, int steps, int step_seconds) {
    auto rates = calibrate_decay(anchors, steps);
    Json doc;
    doc["schema"] = kDecaySchema;
    doc["step_seconds"] = step_seconds;
    doc["steps"] = steps;
    doc["notes"] = Json::array(
        {"rate = (end / start) ^ (1 / steps), from the naive-chain retention measured at 30 s and 240 s (42 "
         "five-second steps apart)",
         "character_identity measured a slight rise (0.43 -> 0.47); a decay channel cannot rise, so the rate is "
         "clamped to 1 (near-lossless)",
         "camera_state has no measured endpoints and borrows the scene_layout rate",
         "regenerate with: reca simulate --calibrate data/simworld_decay.json"});
    doc["anchors"] = Json::object();
    for (const auto& [d, se] : anchors) doc["anchors"][to_string(d)] = {se.first, se.second};
    doc["rates"] = Json::object();
    for (auto d : kDimensions) {
        if (rates.count(d)) doc["rates"][to_string(d)] = rates[d];
    }
    return doc;
}

// ---- world ----------------------------------------------------------------------------------

WorldState anchor_world(const SimConfig& config) {
    validate(config);
    WorldState w;
    for (auto d : kDimensions) {
        for (int i = 1; i <= config.vars_per_dimension; ++i) {
            const std::string key = std::string(short_name(d)) + "_" + std::to_string(i);
            w.variables[key] = {"a" + hex8(splitmix64(config.seed ^ fnv1a64(key))), d};
        }
    }
    return w;
}

std::vector<PromptLine> prompt_lines(const alloc::CompiledPrompt& prompt) {
    std::vector<PromptLine> out;
    for (const auto& e : prompt.entries) out.push_back({e.key, e.value, e.start_token});
    return out;
}

SimSegment sim_generate(const std::vector<PromptLine>& prompt, const WorldState& boundary, int duration,
                        const SimConfig& config, std::uint64_t stream, const std::string& task_id) {
    require(duration > 0, ErrorCode::precondition, "segment duration must be > 0");
    std::map<std::string, const PromptLine*> prompted;
    for (const auto& line : prompt) prompted.emplace(line.key, &line);
    const std::uint64_t seed = splitmix64(config.seed) ^ stream;
    const double steps = static_cast<double>(duration) / config.step_seconds;

    SimSegment seg;
    seg.world.step = boundary.step + 1;
    for (const auto& [key, var] : boundary.variables) {
        Variable out = var;
        auto it = prompted.find(key);
        if (it != prompted.end() &&
            hashed_uniform(seed, task_id, key, "render") < p_render(it->second->position, config.dilution)) {
            out.value = it->second->value;
        } else {
            auto rate = config.carryover_decay.find(var.dimension);
            const double keep = rate == config.carryover_decay.end() ? 1.0 : std::pow(rate->second, steps);
            const bool survives = hashed_uniform(seed, task_id, key, "carry") < keep &&
                                  hashed_uniform(seed, task_id, key, "drift") >= config.drift_prob;
            if (!survives) out.value = "m" + hex8(splitmix64(seed ^ fnv1a64(task_id + "/" + key)));
        }
        seg.world.variables.emplace(key, std::move(out));
    }
    seg.payload = dump_canonical(to_json(seg.world));
    seg.checksum = sha256_hex(seg.payload);
    return seg;
}

SimSegment sim_generate(const alloc::CompiledPrompt& prompt, const WorldState& boundary, int duration,
                        const SimConfig& config, std::uint64_t stream, const std::string& task_id) {
    return sim_generate(prompt_lines(prompt), boundary, duration, config, stream, task_id);
}

std::vector<state::Observation> sim_extract(const WorldState& world) {
    std::vector<state::Observation> out;
    const auto st = anchor_state(world);
    for (const auto& [key, var] : world.variables) {
        state::Observation o;
        o.key = key;
        o.observed_value = var.value;
        o.verified = true;
        o.kind = engine::kind_for(st.find(key), alloc::Section::active_entities);
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<state::Observation> sim_extract(const SimSegment& segment) { return sim_extract(segment.world); }

state::ExternalState anchor_state(const WorldState& world) {
    state::ExternalState st;
    for (const auto& [key, var] : world.variables) {
        state::VariableRecord r;
        r.key = key;
        r.value = var.value;
        r.provenance = state::Provenance::anchor;
        r.support = 1.0;
        r.confidence = 1.0;
        r.last_refresh = world.step;
        switch (var.dimension) {
            case Dimension::action_fidelity:
                r.category = state::Category::narrative;
                r.tag = "action";
                break;
            case Dimension::camera_state:
                r.category = state::Category::transition;
                r.tag = "camera";
                break;
            default:
                r.category = state::Category::visual;
                r.tag = short_name(var.dimension);
                break;
        }
        st.upsert(r, "anchor");
    }
    st.set_step(world.step);
    return st;
}

WorldState world_from_state(const state::ExternalState& st) {
    WorldState w;
    w.step = static_cast<int>(st.step());
    for (const auto* r : st.all_records()) {
        Dimension d = Dimension::character_identity;
        bool tagged = false;
        for (auto cand : kDimensions) {
            if (r->tag && *r->tag == short_name(cand)) {
                d = cand;
                tagged = true;
            }
        }
        if (!tagged && r->category == state::Category::narrative) d = Dimension::action_fidelity;
        if (!tagged && r->category == state::Category::transition) d = Dimension::camera_state;
        w.variables[r->key] = {r->value, d};
    }
    return w;
}

// ---- backend ------------------------------------------------------------------------------

backend::GeneratorCapability sim_capability() {
    backend::GeneratorCapability cap;
    cap.backend_id = "simworld";
    return cap;
}

SimTransport::SimTransport(WorldState anchor, SimConfig config, backend::GeneratorCapability cap)
    : anchor_(std::move(anchor)), config_(std::move(config)), cap_(std::move(cap)) {
    validate(config_);
}

backend::SubmitReply SimTransport::submit(const Json& wire, std::int64_t now_ms) {
    using backend::FailureKind;
    if (!wire.is_object() || wire.value("schema", "") != backend::kWireSchema) {
        return {std::nullopt, FailureKind::invalid, "not a reca-wire/1 request"};
    }
    if (wire.value("kind", "") != "generate") return {std::nullopt, FailureKind::invalid, "simworld only generates"};
    const int duration = wire.value("duration_s", 0);
    if (duration <= 0 || duration > cap_.tau_g || wire.value("prompt_tokens", 0) > cap_.b_g) {
        return {std::nullopt, FailureKind::invalid, "request exceeds simworld capability"};
    }
    std::vector<PromptLine> lines;
    if (wire.contains("body") && wire["body"].contains("entries")) {
        for (const auto& e : wire["body"]["entries"]) {
            lines.push_back({e.at("key").get<std::string>(), e.at("value").get<std::string>(),
                             e.value("start_token", 0)});
        }
    }
    const std::string ref = wire.value("boundary_ref", "anchor");
    WorldState boundary;
    {
        std::lock_guard lock(mu_);
        if (ref == "anchor" || ref.rfind("keyframe:", 0) == 0) {
            boundary = anchor_;
        } else if (ref.rfind("segment:", 0) == 0 && worlds_.count(ref.substr(8))) {
            boundary = worlds_.at(ref.substr(8));
        } else {
            return {std::nullopt, FailureKind::invalid, "unknown boundary " + ref};
        }
    }
    std::uint64_t stream = 0;
    if (wire.contains("seed") && wire["seed"].is_number_unsigned()) stream = wire["seed"].get<std::uint64_t>();
    auto seg = sim_generate(lines, boundary, duration, config_, stream, wire.value("request_id", ""));
    const auto id = "sim-" + sha256_hex(wire.dump()).substr(0, 24);
    std::lock_guard lock(mu_);
    worlds_.emplace(seg.checksum, seg.world);
    tasks_[id] = Pending{now_ms + duration * 1000LL, std::move(seg.payload), static_cast<double>(duration)};
    return {id, FailureKind::transient, ""};
}

backend::PollReply SimTransport::poll(const std::string& task_id, std::int64_t now_ms) {
    std::lock_guard lock(mu_);
    backend::PollReply r;
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) {
        r.state = backend::PollReply::State::failure;
        r.failure = backend::FailureKind::invalid;
        r.message = "unknown task " + task_id;
        return r;
    }
    if (now_ms < it->second.ready_at) return r;
    r.state = backend::PollReply::State::result;
    r.payload = it->second.payload;
    r.returned_duration = it->second.duration;
    return r;
}

WorldState SimTransport::world(const std::string& checksum) const {
    std::lock_guard lock(mu_);
    auto it = worlds_.find(checksum);
    require(it != worlds_.end(), ErrorCode::invalid_argument, "unknown segment " + checksum);
    return it->second;
}

engine::Extraction SimExtractor::extract(const backend::GenerationResult& result, const alloc::CompiledPrompt&,
                                         const state::ExternalState&) {
    engine::Extraction ex;
    try {
        ex.observations = sim_extract(world_from_json(parse_json(result.payload, "simworld payload")));
    } catch (const Error& e) {
        ex.failed = true;
        ex.detail = e.what();
    }
    return ex;
}

// ---- retention --------------------------------------------------------------------------------

nbq::BenchInstance retention_instance(const WorldState& anchor, const std::vector<WorldState>& segments,
                                      const std::vector<int>& durations) {
    require(segments.size() == durations.size(), ErrorCode::invalid_argument, "one duration per segment");
    require(!segments.empty(), ErrorCode::invalid_argument, "retention needs at least one segment");
    nbq::BenchInstance in;
    in.id = "simworld-retention";
    in.anchor = "anchor";
    in.intent = "preserve the anchor world";
    in.variant = nbq::Variant::same_scene;
    const auto axes = axis_assignment(anchor);
    int total = 0;
    for (std::size_t j = 0; j < segments.size(); ++j) {
        nbq::SliceMeta m;
        m.duration = durations[j];
        total += durations[j];
        in.slices.push_back(std::move(m));
        if (j > 0) in.transitions.push_back(nbq::TransitionKind::same_location);
        for (const auto& [key, var] : anchor.variables) {
            nbq::Problem p;
            p.id = "s" + std::to_string(j) + ":" + key;
            p.slice = static_cast<int>(j);
            p.axis = axes.at(key);
            p.group = group_for(var.dimension);
            p.kind = nbq::ProblemKind::binary;
            p.text = key + " keeps its anchor value";
            in.problems.push_back(std::move(p));
        }
    }
    in.target_duration = total;
    in.lambda = retention_lambda();
    return in;
}

nbq::AnswerSet oracle_answers(const WorldState& anchor, const std::vector<WorldState>& segments) {
    nbq::AnswerSet out;
    for (std::size_t j = 0; j < segments.size(); ++j) {
        for (const auto& [key, var] : anchor.variables) {
            auto it = segments[j].variables.find(key);
            out["s" + std::to_string(j) + ":" + key] = it != segments[j].variables.end() && it->second.value == var.value;
        }
    }
    return out;
}

double retention(const WorldState& anchor, const std::vector<WorldState>& segments, const std::vector<int>& durations) {
    return nbq::score(retention_instance(anchor, segments, durations), oracle_answers(anchor, segments)).headline;
}

double direct_retention(const WorldState& anchor, const std::vector<WorldState>& segments) {
    // pass and total counts per axis, straight from the worlds
    const auto axes = axis_assignment(anchor);
    std::map<std::string, std::pair<double, double>> per_axis;
    for (const auto& seg : segments) {
        for (const auto& [key, var] : anchor.variables) {
            auto it = seg.variables.find(key);
            auto& [pass, n] = per_axis[axes.at(key)];
            pass += (it != seg.variables.end() && it->second.value == var.value) ? 1.0 : 0.0;
            n += 1.0;
        }
    }
    double total = 0.0;
    for (const auto& [g, lambda] : retention_lambda()) {
        const auto& group_axes = nbq::axes_of(g);
        double sum = 0.0;
        for (const auto& a : group_axes) {
            if (auto it = per_axis.find(a); it != per_axis.end()) sum += it->second.first / it->second.second;
        }
        total += lambda * sum / static_cast<double>(group_axes.size());
    }
    return total;
}

// ---- experiments --------------------------------------------------------------------------------

const char* to_string(Controller c) noexcept { return c == Controller::naive_chain ? "naive_chain" : "reca"; }

Controller controller_from_string(const std::string& s) {
    if (s == "naive_chain" || s == "naive") return Controller::naive_chain;
    if (s == "reca") return Controller::reca;
    fail(ErrorCode::invalid_argument, "unknown controller '" + s + "'");
}

std::string sim_intent(int total_duration) {
    std::string out;
    const int beats = std::max(1, total_duration / 10);
    for (int j = 1; j <= beats; ++j) out += (j > 1 ? " " : "") + std::string("Moment ") + std::to_string(j) + " unfolds.";
    return out;
}

RunRecord run_naive(int total_duration, std::uint64_t seed, const SimConfig& config) {
    require(total_duration > 0, ErrorCode::precondition, "T must be > 0");
    SimConfig cfg = config;
    cfg.seed = seed;
    const auto anchor = anchor_world(cfg);
    const int tau = sim_capability().tau_g;
    // The static prompt is the whole intent, one line per beat.
    std::vector<PromptLine> prompt;
    int pos = alloc::kScaffoldTokens;
    const auto beats = plan::split_beats(sim_intent(total_duration));
    for (std::size_t j = 0; j < beats.size(); ++j) {
        const std::string key = "beat_" + std::to_string(j + 1);
        prompt.push_back({key, beats[j], pos});
        pos += alloc::default_counter().count(key + " = " + beats[j]);
    }
    std::vector<WorldState> worlds;
    std::vector<int> durations;
    WorldState boundary = anchor;
    for (int t = 0, j = 1; t < total_duration; t += tau, ++j) {
        const int d = std::min(tau, total_duration - t);
        auto seg = sim_generate(prompt, boundary, d, cfg, 0, "naive:" + std::to_string(j));
        boundary = seg.world;
        worlds.push_back(std::move(seg.world));
        durations.push_back(d);
    }
    RunRecord r;
    r.controller = Controller::naive_chain;
    r.duration = total_duration;
    r.seed = seed;
    r.segments = static_cast<int>(worlds.size());
    r.score = retention(anchor, worlds, durations);
    return r;
}

RunRecord run_reca(int total_duration, std::uint64_t seed, const SimConfig& config,
                   const engine::EngineConfig& engine_config) {
    SimConfig cfg = config;
    cfg.seed = seed;
    const auto anchor = anchor_world(cfg);
    SimTransport transport(anchor, cfg);
    backend::TransportGenerator generator(transport, sim_capability());
    SimExtractor extractor;
    auto ecfg = engine_config;
    ecfg.seed = seed;
    auto res = engine::run(anchor_state(anchor), sim_intent(total_duration), total_duration, ecfg, generator,
                           extractor);
    std::vector<WorldState> worlds;
    std::vector<int> durations;
    for (const auto& t : res.tasks) {
        const auto& o = res.outcomes.at(t.id);
        if (o.status != engine::LeafOutcome::Status::ok) {
            worlds.emplace_back();  // a missing segment preserves nothing
            durations.push_back(t.duration);
            continue;
        }
        for (const auto& s : o.segments) {
            worlds.push_back(transport.world(s.checksum));
            durations.push_back(s.duration);
        }
    }
    RunRecord r;
    r.controller = Controller::reca;
    r.duration = total_duration;
    r.seed = seed;
    r.exit_code = res.exit_code;
    r.segments = static_cast<int>(worlds.size());
    r.score = worlds.empty() ? 0.0 : retention(anchor, worlds, durations);
    return r;
}

ExperimentResult run_experiment(const std::vector<Controller>& controllers, const std::vector<int>& durations,
                                const std::vector<std::uint64_t>& seeds, const SimConfig& config,
                                const engine::EngineConfig& engine_config) {
    validate(config);
    require(!seeds.empty(), ErrorCode::invalid_argument, "experiment needs at least one seed");
    ExperimentResult out;
    for (auto c : controllers) {
        for (int t : durations) {
            double sum = 0.0;
            for (auto s : seeds) {
                auto r = c == Controller::naive_chain ? run_naive(t, s, config) : run_reca(t, s, config, engine_config);
                sum += r.score;
                out.records.push_back(r);
            }
            out.mean[c][t] = sum / static_cast<double>(seeds.size());
        }
    }
    return out;
}

std::string to_csv(const ExperimentResult& result) {
    std::string out = "duration,controller,seed,score\n";
    char buf[128];
    for (const auto& r : result.records) {
        std::snprintf(buf, sizeof buf, "%d,%s,%llu,%.6f\n", r.duration, to_string(r.controller),
                      static_cast<unsigned long long>(r.seed), r.score);
        out += buf;
    }
    return out;
}

Json summary_json(const ExperimentResult& result) {
    Json doc;
    doc["schema"] = "reca-sim-summary/1";
    std::set<std::uint64_t> seeds;
    for (const auto& r : result.records) seeds.insert(r.seed);
    doc["seeds"] = seeds.size();
    doc["mean"] = Json::object();
    for (const auto& [c, curve] : result.mean) {
        Json j = Json::object();
        for (const auto& [t, m] : curve) j[std::to_string(t)] = m;
        doc["mean"][to_string(c)] = std::move(j);
    }
    return doc;
}

std::string to_svg(const ExperimentResult& result) {
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 20, B = 50;
    int tmax = 1;
    for (const auto& [c, curve] : result.mean) {
        for (const auto& [t, m] : curve) tmax = std::max(tmax, t);
    }
    auto x = [&](double t) { return L + (W - L - R) * t / tmax; };
    auto y = [&](double s) { return T + (H - T - B) * (1.0 - s); };
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
                  W, H);
    out += buf;
    for (int k = 0; k <= 4; ++k) {
        const double s = k / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n",
                      L, y(s), W - R, y(s), L - 6, y(s) + 4, s);
        out += buf;
    }
    for (const auto& [t, m] : result.mean.begin()->second) {
        (void)m;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%d</text>\n", x(t),
                      H - B + 18, t);
        out += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">total duration (s)</text>\n"
                  "<text x=\"14\" y=\"%.1f\" transform=\"rotate(-90 14 %.1f)\" text-anchor=\"middle\">retention</text>\n",
                  (L + W - R) / 2, H - 10, (T + H - B) / 2, (T + H - B) / 2);
    out += buf;
    const char* colours[] = {"#c0392b", "#2471a3"};
    int idx = 0;
    for (const auto& [c, curve] : result.mean) {
        const char* colour = colours[idx % 2];
        std::string pts;
        for (const auto& [t, m] : curve) {
            std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", pts.empty() ? "" : " ", x(t), y(m));
            pts += buf;
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        for (const auto& [t, m] : curve) {
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", x(t), y(m), colour);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n", W - R - 120,
                      T + 16.0 + 16.0 * idx, colour, to_string(c));
        out += buf;
        ++idx;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace reca::sim
