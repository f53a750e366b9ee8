// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "planner.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <numeric>

namespace reca::plan {

const char* to_string(BoundaryMode m) noexcept {
    switch (m) {
        case BoundaryMode::anchor: return "anchor";
        case BoundaryMode::prev_last_frame: return "prev_last_frame";
        case BoundaryMode::keyframe: return "keyframe";
        case BoundaryMode::transition_constraint: return "transition_constraint";
    }
    return "?";
}

BoundaryMode boundary_mode_from_string(const std::string& s) {
    if (s == "anchor") return BoundaryMode::anchor;
    if (s == "prev_last_frame") return BoundaryMode::prev_last_frame;
    if (s == "keyframe") return BoundaryMode::keyframe;
    if (s == "transition_constraint") return BoundaryMode::transition_constraint;
    fail(ErrorCode::parse, "unknown boundary_mode \"" + s + "\"");
}

void validate(const PlanConfig& c) {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    require(finite_nonneg(c.lambda_tr), ErrorCode::config, "lambda_tr must be finite and >= 0");
    require(finite_nonneg(c.lambda_unsup), ErrorCode::config, "lambda_unsup must be finite and >= 0");
    require(c.epsilon >= 0.0 && c.epsilon <= 1.0, ErrorCode::config, "epsilon must lie in [0,1]");
    require(c.beam_width >= 1, ErrorCode::config, "beam_width must be >= 1");
    require(c.max_shots >= 1, ErrorCode::config, "max_shots must be >= 1");
    require(c.quantum >= 1, ErrorCode::config, "quantum must be >= 1");
    require(c.refine_rounds >= 0, ErrorCode::config, "refine_rounds must be >= 0");
}

// ---- scoring -----------------------------------------------------------------

std::vector<std::string> split_beats(const std::string& intent) {
    std::vector<std::string> beats;
    std::string cur;
    auto flush = [&] {
        auto b = normalize_whitespace(cur);
        if (!b.empty()) beats.push_back(std::move(b));
        cur.clear();
    };
    for (char ch : intent) {
        if (ch == '.' || ch == ';' || ch == '\n') {
            flush();
        } else {
            cur.push_back(ch);
        }
    }
    flush();
    return beats;
}

bool boundary_compatible(const ShotSpec& a, const ShotSpec& b) {
    switch (b.boundary_mode) {
        case BoundaryMode::prev_last_frame: return b.prev && *b.prev == a.index;
        case BoundaryMode::anchor: return !b.prev.has_value();
        case BoundaryMode::keyframe: return true;
        case BoundaryMode::transition_constraint: return b.prev.has_value();
    }
    return false;
}

ScoringHooks default_hooks() {
    ScoringHooks h;
    h.narrative = [](const ShotSpec& shot, const std::string& intent,
                     const state::ExternalState& st) -> double {
        std::set<std::string> realised;
        for (const auto& [key, rec] : st.narrative()) {
            if (rec.provenance == state::Provenance::generated) {
                realised.insert(to_lower(normalize_whitespace(rec.value)));
            }
        }
        const auto goal = to_lower(normalize_whitespace(shot.goal));
        for (const auto& beat : split_beats(intent)) {
            auto b = to_lower(beat);
            if (!realised.count(b) && goal.find(b) != std::string::npos) return 1.0;
        }
        return 0.0;
    };
    h.transition = [](const ShotSpec& a, const ShotSpec& b) -> double {
        return boundary_compatible(a, b) ? 1.0 : 0.0;
    };
    return h;
}

namespace {

template <typename F>
double guarded(F&& f, const char* what) {
    try {
        double v = f();
        if (std::isfinite(v)) return v;
        log(LogLevel::warn, std::string(what) + " hook returned a non-finite value; scored as 0");
    } catch (const std::exception& e) {
        log(LogLevel::warn, std::string(what) + " hook failed: " + e.what() + "; scored as 0");
    }
    return 0.0;
}

}  // namespace

double score_plan(const ShotSchedule& schedule, const state::ExternalState& st,
                  const std::string& intent, const PlanConfig& config, const ScoringHooks& hooks) {
    auto problems = check_schedule(schedule);
    require(problems.empty(), ErrorCode::precondition,
            "score_plan: invalid schedule: " + (problems.empty() ? "" : problems.front()));

    double nar = 0.0;
    if (hooks.narrative) {
        for (const auto& s : schedule.shots) {
            nar += guarded([&] { return hooks.narrative(s, intent, st); }, "narrative");
        }
    }
    double tr = 0.0;
    if (hooks.transition) {
        for (std::size_t i = 0; i + 1 < schedule.shots.size(); ++i) {
            tr += guarded([&] { return hooks.transition(schedule.shots[i], schedule.shots[i + 1]); },
                          "transition");
        }
    }

    // Anchor-provenance keys: preserved keys resolved against commitments,
    // then state, plus every anchor commitment in its own right.
    std::map<std::string, double> support;
    std::map<std::string, const state::VariableRecord*> committed;
    for (const auto& c : schedule.commitments) {
        if (c.provenance == state::Provenance::anchor) {
            committed[c.key] = &c;
            support[c.key] = c.support;
        }
    }
    for (const auto& s : schedule.shots) {
        for (const auto& key : s.preserved_keys) {
            if (committed.count(key)) continue;
            if (const auto* rec = st.find(key); rec && rec->provenance == state::Provenance::anchor) {
                support[key] = rec->support;
            }
        }
    }
    double hinge = 0.0;
    for (const auto& [key, q] : support) hinge += std::max(0.0, config.epsilon - q);

    return nar + config.lambda_tr * tr - config.lambda_unsup * hinge;
}

// ---- durations -----------------------------------------------------------------

std::vector<int> apportion(const std::vector<double>& weights, int total, int minimum) {
    const auto n = static_cast<int>(weights.size());
    require(n > 0, ErrorCode::invalid_argument, "apportion: no weights");
    require(minimum >= 0 && total >= minimum * n, ErrorCode::invalid_argument,
            "apportion: total " + std::to_string(total) + " cannot give " + std::to_string(n) +
                " shares of at least " + std::to_string(minimum));
    // Plain proportional rescale first; the minimum is a correction afterwards
    // so exact ratios survive whenever they already satisfy it.
    std::vector<int> out(weights.size(), 0);
    long double wsum = 0;
    for (double w : weights) wsum += std::max(0.0, w);
    int assigned = 0;
    std::vector<std::pair<long double, int>> frac;
    for (int i = 0; i < n; ++i) {
        const long double quota = wsum > 0 ? total * static_cast<long double>(std::max(0.0, weights[i])) / wsum
                                           : static_cast<long double>(total) / n;
        const auto f = std::floor(quota);
        out[i] = static_cast<int>(f);
        assigned += out[i];
        frac.emplace_back(quota - f, i);
    }
    std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (std::fabs(a.first - b.first) > 1e-12L) return a.first > b.first;
        return a.second < b.second;
    });
    for (int k = 0; k < total - assigned; ++k) ++out[frac[static_cast<std::size_t>(k % n)].second];
    // Raise short shares one unit at a time from the largest share (lowest index on ties).
    for (int i = 0; i < n; ++i) {
        while (out[i] < minimum) {
            int donor = -1;
            for (int j = 0; j < n; ++j) {
                if (out[j] > minimum && (donor < 0 || out[j] > out[donor])) donor = j;
            }
            --out[donor];
            ++out[i];
        }
    }
    return out;
}

std::vector<int> balanced_split(int duration, int tau) {
    require(tau > 0, ErrorCode::precondition, "tau_g must be > 0");
    require(duration > 0, ErrorCode::precondition, "duration must be > 0");
    const int m = (duration + tau - 1) / tau;
    std::vector<int> parts(static_cast<std::size_t>(m), duration / m);
    for (int j = 0; j < duration % m; ++j) ++parts[static_cast<std::size_t>(j)];
    return parts;
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Folds the last shot into its predecessor. Safe because prev < index means
// nothing can depend on the last shot.
void merge_last(ShotSchedule& s) {
    auto last = s.shots.back();
    s.shots.pop_back();
    auto& into = s.shots.back();
    into.goal = into.goal.empty() ? last.goal : into.goal + "; " + last.goal;
    into.duration += last.duration;
    into.preserved_keys.insert(last.preserved_keys.begin(), last.preserved_keys.end());
    for (const auto& [k, w] : last.salience) into.salience[k] = std::max(into.salience[k], w);
    into.units.clear();
}

bool any_explicit_units(const ShotSchedule& s) {
    return std::any_of(s.shots.begin(), s.shots.end(),
                       [](const ShotSpec& sh) { return !sh.units.empty(); });
}

bool durations_ok(const ShotSchedule& s, int total, int quantum) {
    int sum = 0;
    int calls = 0;
    for (const auto& sh : s.shots) {
        if (sh.duration <= 0) return false;
        sum += sh.duration;
        calls += ceil_div(sh.duration, quantum);
    }
    if (sum != total) return false;
    if (quantum > 1 && !any_explicit_units(s) && calls > ceil_div(total, quantum)) return false;
    return true;
}

}  // namespace

ShotSchedule repair_durations(ShotSchedule s, int total, int quantum) {
    require(total > 0, ErrorCode::precondition, "total duration must be > 0");
    require(quantum >= 1, ErrorCode::precondition, "quantum must be >= 1");
    require(!s.shots.empty(), ErrorCode::planning, "schedule has no shots");
    s.total_duration = total;
    if (durations_ok(s, total, quantum)) return s;

    const int q = quantum;
    const int whole = total / q;
    const int rem = total % q;
    while (static_cast<int>(s.shots.size()) > ceil_div(total, q)) merge_last(s);

    const auto n = static_cast<int>(s.shots.size());
    std::vector<double> w;
    for (const auto& sh : s.shots) w.push_back(std::max(0, sh.duration));

    std::vector<int> d(s.shots.size(), 0);
    if (rem > 0 && n > whole) {
        // n == whole + 1: the last shot takes the partial quantum alone.
        if (n > 1) {
            auto head = apportion(std::vector<double>(w.begin(), w.end() - 1), whole, 1);
            for (int i = 0; i + 1 < n; ++i) d[i] = head[i] * q;
        }
        d.back() = rem;
    } else {
        auto quanta = apportion(w, whole, 1);
        for (int i = 0; i < n; ++i) d[i] = quanta[i] * q;
        d.back() += rem;
    }
    for (int i = 0; i < n; ++i) {
        if (s.shots[i].duration != d[i]) s.shots[i].units.clear();
        s.shots[i].duration = d[i];
    }
    return s;
}

std::vector<std::string> check_schedule(const ShotSchedule& s) {
    std::vector<std::string> out;
    long long sum = 0;
    for (std::size_t i = 0; i < s.shots.size(); ++i) {
        const auto& sh = s.shots[i];
        const auto tag = "shot " + std::to_string(i + 1) + ": ";
        if (sh.index != static_cast<int>(i) + 1) out.push_back(tag + "index is not contiguous");
        if (sh.duration <= 0) out.push_back(tag + "duration must be > 0");
        if (sh.prev && (*sh.prev < 1 || *sh.prev >= sh.index)) {
            out.push_back(tag + "prev must be an earlier shot");
        }
        if (!sh.units.empty()) {
            int u = 0;
            for (int d : sh.units) {
                if (d <= 0) out.push_back(tag + "unit durations must be > 0");
                u += d;
            }
            if (u != sh.duration) out.push_back(tag + "units do not sum to the shot duration");
        }
        for (const auto& [k, v] : sh.salience) {
            if (!(v >= 0.0 && v <= 1.0)) out.push_back(tag + "salience of " + k + " outside [0,1]");
        }
        sum += sh.duration;
    }
    if (sum != s.total_duration) {
        out.push_back("durations sum to " + std::to_string(sum) + ", expected " +
                      std::to_string(s.total_duration));
    }
    return out;
}

// ---- dependency map ------------------------------------------------------------

DependencyReport validate_dependency_map(const ShotSchedule& s, std::optional<int> tau_g) {
    DependencyReport r;
    if (tau_g) require(*tau_g > 0, ErrorCode::precondition, "tau_g must be > 0");
    const auto n = static_cast<int>(s.shots.size());
    bool has_root = false;
    std::vector<int> chain(s.shots.size(), 0);
    for (int i = 0; i < n; ++i) {
        const auto& sh = s.shots[i];
        if (sh.index != i + 1) {
            r.violations.push_back({sh.index, "index " + std::to_string(sh.index) + " at position " +
                                                  std::to_string(i + 1)});
        }
        int leaves = 1;
        if (tau_g) {
            leaves = !sh.units.empty() ? static_cast<int>(sh.units.size())
                                       : std::max(1, ceil_div(std::max(sh.duration, 1), *tau_g));
        }
        int base = 0;
        if (!sh.prev) {
            has_root = true;
        } else if (*sh.prev == sh.index) {
            r.violations.push_back({sh.index, "self-dependency at " + std::to_string(sh.index)});
        } else if (*sh.prev > sh.index) {
            r.violations.push_back({sh.index, "forward reference at " + std::to_string(sh.index) +
                                                  " to " + std::to_string(*sh.prev)});
        } else if (*sh.prev < 1) {
            r.violations.push_back({sh.index, "unknown predecessor " + std::to_string(*sh.prev) +
                                                  " at " + std::to_string(sh.index)});
        } else {
            base = chain[static_cast<std::size_t>(*sh.prev - 1)];
        }
        chain[i] = base + leaves;
        r.critical_path = std::max(r.critical_path, chain[i]);
    }
    if (!has_root) r.violations.push_back({0, "no shot consumes the anchor (every prev is set)"});
    r.ok = r.violations.empty();
    return r;
}

// ---- proposers -------------------------------------------------------------------

namespace {

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : to_lower(text)) {
        if (std::isalnum(static_cast<unsigned char>(ch)) || static_cast<unsigned char>(ch) >= 0x80) {
            cur.push_back(ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool mentions(const std::string& goal, const state::VariableRecord& rec) {
    auto goal_words = words_of(goal);
    std::set<std::string> gw(goal_words.begin(), goal_words.end());
    for (const auto& w : words_of(rec.key)) {
        if (w.size() >= 3 && gw.count(w)) return true;
    }
    return false;
}

ShotSpec make_shot(int index, std::string goal, const state::ExternalState& st) {
    ShotSpec sh;
    sh.index = index;
    sh.goal = std::move(goal);
    for (const auto* rec : st.all_records()) {
        double w = 0.0;
        if (mentions(sh.goal, *rec)) {
            w = 1.0;
        } else if (rec->provenance == state::Provenance::anchor &&
                   rec->category == state::Category::visual) {
            w = 0.75;
        }
        if (w > 0.0) {
            sh.preserved_keys.insert(rec->key);
            sh.salience[rec->key] = w;
        }
    }
    return sh;
}

ShotSchedule group_beats(const std::vector<std::string>& beats, int n, bool chained,
                         const PlanRequest& req) {
    ShotSchedule s;
    s.total_duration = req.total_duration;
    const auto m = static_cast<int>(beats.size());
    std::size_t at = 0;
    for (int i = 0; i < n; ++i) {
        const int take = m / n + (i < m % n ? 1 : 0);
        std::string goal;
        for (int k = 0; k < take; ++k, ++at) goal += (goal.empty() ? "" : "; ") + beats[at];
        auto sh = make_shot(i + 1, goal, *req.state);
        if (chained && i > 0) {
            sh.prev = i;
            sh.boundary_mode = BoundaryMode::prev_last_frame;
        }
        s.shots.push_back(std::move(sh));
    }
    return repair_durations(std::move(s), req.total_duration, req.config.quantum);
}

}  // namespace

std::vector<ShotSchedule> RuleProposer::propose(const PlanRequest& req) {
    require(req.state != nullptr, ErrorCode::precondition, "plan request has no state");
    auto beats = split_beats(req.intent);
    if (beats.empty()) beats.push_back(normalize_whitespace(req.intent));
    const int q = req.config.quantum;
    const int cap = std::min({static_cast<int>(beats.size()), req.config.max_shots,
                              (req.total_duration + q - 1) / q});
    std::vector<ShotSchedule> out;
    out.push_back(group_beats(beats, cap, true, req));
    if (cap > 1) {
        out.push_back(group_beats(beats, cap, false, req));
        out.push_back(group_beats(beats, 1, false, req));
    }
    return out;
}

std::vector<ShotSchedule> RuleProposer::refine(const ShotSchedule& c, const PlanRequest& req) {
    std::vector<ShotSchedule> out;
    const auto n = c.shots.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        ShotSchedule m = c;
        auto& a = m.shots[i];
        const auto b = m.shots[i + 1];
        a.goal += "; " + b.goal;
        a.duration += b.duration;
        a.preserved_keys.insert(b.preserved_keys.begin(), b.preserved_keys.end());
        for (const auto& [k, w] : b.salience) a.salience[k] = std::max(a.salience[k], w);
        a.units.clear();
        m.shots.erase(m.shots.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        for (auto& sh : m.shots) {
            if (sh.index > b.index) --sh.index;
            if (sh.prev && *sh.prev == b.index) sh.prev = a.index;
            else if (sh.prev && *sh.prev > b.index) --*sh.prev;
        }
        out.push_back(repair_durations(std::move(m), req.total_duration, req.config.quantum));
    }
    for (std::size_t i = 1; i < n; ++i) {
        ShotSchedule t = c;
        auto& sh = t.shots[i];
        if (sh.prev) {
            sh.prev.reset();
            sh.boundary_mode = BoundaryMode::anchor;
        } else {
            sh.prev = sh.index - 1;
            sh.boundary_mode = BoundaryMode::prev_last_frame;
        }
        out.push_back(std::move(t));
    }
    return out;
}

// ---- beam search -----------------------------------------------------------------

namespace {

struct Scored {
    double score;
    std::string key;
    ShotSchedule schedule;
};

void rank(std::vector<Scored>& v) {
    std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key < b.key;
    });
}

}  // namespace

ShotSchedule plan(const state::ExternalState& st, const std::string& intent, int total,
                  const PlanConfig& config, PlanProposer& proposer, const ScoringHooks& hooks) {
    validate(config);
    require(total > 0, ErrorCode::precondition, "T must be > 0");
    PlanRequest req{&st, intent, total, config};

    std::set<std::string> seen;
    auto admit_candidates = [&](std::vector<ShotSchedule> cands, std::vector<Scored>& into) {
        for (auto& c : cands) {
            try {
                if (!c.shots.empty()) c = repair_durations(std::move(c), total, config.quantum);
            } catch (const Error& e) {
                log(LogLevel::warn, "planner: dropping candidate: " + std::string(e.what()));
                continue;
            }
            c.total_duration = total;
            auto problems = check_schedule(c);
            auto deps = validate_dependency_map(c);
            if (c.shots.empty() || !problems.empty() || !deps.ok) {
                log(LogLevel::warn, "planner: dropping invalid candidate from " + proposer.name());
                continue;
            }
            auto key = serialize(c);
            if (!seen.insert(key).second) continue;
            into.push_back({score_plan(c, st, intent, config, hooks), std::move(key), std::move(c)});
        }
    };

    std::vector<Scored> beam;
    admit_candidates(proposer.propose(req), beam);
    require(!beam.empty(), ErrorCode::planning,
            "no candidate schedule satisfies the duration constraint");
    rank(beam);
    if (beam.size() > static_cast<std::size_t>(config.beam_width)) beam.resize(config.beam_width);

    for (int round = 0; round < config.refine_rounds; ++round) {
        std::vector<Scored> next = beam;
        for (const auto& b : beam) admit_candidates(proposer.refine(b.schedule, req), next);
        rank(next);
        if (next.size() > static_cast<std::size_t>(config.beam_width)) next.resize(config.beam_width);
        bool same = next.size() == beam.size() &&
                    std::equal(next.begin(), next.end(), beam.begin(),
                               [](const Scored& a, const Scored& b) { return a.key == b.key; });
        beam = std::move(next);
        if (same) break;
    }

    ShotSchedule winner = std::move(beam.front().schedule);
    // Only gate-passing anchor commitments survive into the emitted plan.
    state::ExternalState probe = st;
    std::vector<state::VariableRecord> kept;
    std::set<std::string> dropped;
    for (const auto& c : winner.commitments) {
        if (c.provenance != state::Provenance::anchor) {
            kept.push_back(c);
            continue;
        }
        auto res = probe.admit(c, config.epsilon);
        if (res.accepted() || res.status == state::AdmitStatus::duplicate) {
            kept.push_back(c);
        } else {
            dropped.insert(c.key);
            log(LogLevel::info, "planner: stripped commitment " + c.key + ": " + res.reason);
        }
    }
    winner.commitments = std::move(kept);
    for (auto& sh : winner.shots) {
        for (const auto& k : dropped) {
            if (!st.contains(k)) {
                sh.preserved_keys.erase(k);
                sh.salience.erase(k);
            }
        }
    }
    return winner;
}

// ---- serialization -----------------------------------------------------------------

Json to_json(const ShotSchedule& s) {
    Json shots = Json::array();
    Json prevs = Json::array();
    for (const auto& sh : s.shots) {
        Json j;
        j["index"] = sh.index;
        j["goal"] = sh.goal;
        j["duration"] = sh.duration;
        j["boundary_mode"] = to_string(sh.boundary_mode);
        j["prev"] = sh.prev ? Json(*sh.prev) : Json(nullptr);
        j["preserved_keys"] = Json(std::vector<std::string>(sh.preserved_keys.begin(),
                                                            sh.preserved_keys.end()));
        Json sal = Json::object();
        for (const auto& [k, v] : sh.salience) sal[k] = v;
        j["salience"] = std::move(sal);
        j["units"] = Json(sh.units);
        shots.push_back(std::move(j));
        prevs.push_back(sh.prev ? Json(*sh.prev) : Json(nullptr));
    }
    Json commitments = Json::array();
    for (const auto& c : s.commitments) commitments.push_back(state::record_to_json(c));
    Json doc;
    doc["schema"] = kPlanSchema;
    doc["total_duration"] = s.total_duration;
    doc["shots"] = std::move(shots);
    doc["commitments"] = std::move(commitments);
    auto deps = validate_dependency_map(s);
    doc["dependency_map"] = {{"prev", std::move(prevs)}, {"critical_path", deps.critical_path}};
    return doc;
}

ShotSchedule schedule_from_json(const Json& doc) {
    expect_schema(doc, kPlanSchema);
    ShotSchedule s;
    try {
        s.total_duration = doc.at("total_duration").get<int>();
        for (const auto& j : doc.at("shots")) {
            ShotSpec sh;
            sh.index = j.at("index").get<int>();
            sh.goal = j.at("goal").get<std::string>();
            sh.duration = j.at("duration").get<int>();
            sh.boundary_mode = boundary_mode_from_string(j.value("boundary_mode", "anchor"));
            if (j.contains("prev") && !j["prev"].is_null()) sh.prev = j["prev"].get<int>();
            if (j.contains("preserved_keys")) {
                for (const auto& k : j["preserved_keys"]) sh.preserved_keys.insert(k.get<std::string>());
            }
            if (j.contains("salience")) {
                for (const auto& [k, v] : j["salience"].items()) sh.salience[k] = v.get<double>();
            }
            if (j.contains("units")) sh.units = j["units"].get<std::vector<int>>();
            s.shots.push_back(std::move(sh));
        }
        if (doc.contains("commitments")) {
            for (const auto& c : doc["commitments"]) s.commitments.push_back(state::record_from_json(c));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("reca-plan/1: ") + e.what());
    }
    auto problems = check_schedule(s);
    require(problems.empty(), ErrorCode::schema,
            "reca-plan/1: " + (problems.empty() ? std::string() : problems.front()));
    return s;
}

}  // namespace reca::plan
