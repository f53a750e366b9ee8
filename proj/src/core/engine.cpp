// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <mutex>
#include <queue>
#include <thread>
#include <tuple>

namespace reca::engine {

void validate(const EngineConfig& c) {
    require(c.concurrency >= 1, ErrorCode::config, "concurrency W must be >= 1");
    require(c.eta >= 0.0 && c.eta <= 1.0, ErrorCode::config, "eta must lie in [0,1]");
    require(c.max_repairs >= 0, ErrorCode::config, "max_repairs must be >= 0");
    require(c.recursion_depth >= 2, ErrorCode::config, "recursion_depth must be >= 2");
    require(c.alpha > 0.0, ErrorCode::config, "alpha must be > 0");
    require(c.lambda_red >= 0.0, ErrorCode::config, "lambda_red must be >= 0");
    require(!c.budget || *c.budget > 0, ErrorCode::config, "budget override must be > 0");
    require(c.default_salience >= 0.0 && c.default_salience <= 1.0, ErrorCode::config,
            "default_salience must lie in [0,1]");
    require(c.op_cost_ms >= 0, ErrorCode::config, "op_cost must be >= 0");
    plan::validate(c.plan);
}

// ---- extraction ------------------------------------------------------------------------

state::ObservationKind kind_for(const state::VariableRecord* rec, alloc::Section section) {
    using state::ObservationKind;
    if (rec) {
        const std::string tag = rec->tag.value_or("");
        switch (rec->category) {
            case state::Category::narrative: return ObservationKind::event_completion;
            case state::Category::transition:
                return tag == "camera" ? ObservationKind::camera_boundary : ObservationKind::transition_evidence;
            case state::Category::visual:
                if (tag == "object") return ObservationKind::object_change;
                if (tag == "scene") return ObservationKind::scene_change;
                return ObservationKind::identity_status;
        }
    }
    switch (section) {
        case alloc::Section::local_action: return ObservationKind::event_completion;
        case alloc::Section::camera_style_constraints: return ObservationKind::camera_boundary;
        case alloc::Section::transition_boundary: return ObservationKind::transition_evidence;
        default: return ObservationKind::identity_status;
    }
}

Extraction MockExtractor::extract(const backend::GenerationResult& result,
                                  const alloc::CompiledPrompt&, const state::ExternalState& input) {
    Extraction ex;
    try {
        auto doc = parse_json(result.payload, "mock payload");
        for (const auto& e : doc.at("entries")) {
            const auto key = e.at("key").get<std::string>();
            const auto* rec = input.find(key);
            state::Observation o;
            o.key = key;
            o.observed_value = e.at("value").get<std::string>();
            o.verified = true;
            o.kind = kind_for(rec, alloc::section_from_string(e.value("section", "active_entities")));
            ex.observations.push_back(std::move(o));
        }
    } catch (const std::exception& e) {
        ex.failed = true;
        ex.detail = e.what();
    }
    return ex;
}

RemoteExtractor::RemoteExtractor(backend::Transport& transport, backend::RetryPolicy policy,
                                 std::string model, backend::ClockFactory clocks)
    : transport_(transport), policy_(std::move(policy)), model_(std::move(model)), clocks_(std::move(clocks)) {}

Extraction RemoteExtractor::extract(const backend::GenerationResult& result,
                                    const alloc::CompiledPrompt& prompt, const state::ExternalState&) {
    backend::CallRequest req;
    req.kind = backend::RequestKind::extract;
    req.request_id = result.record.request_id;
    req.model = model_;
    req.prompt = prompt.text;
    req.body = backend::prompt_body(prompt);
    req.body["segment_b64"] = base64_encode(result.payload);
    req.body["segment_checksum"] = result.checksum;
    Extraction ex;
    auto validator = [&](const std::string& payload) {
        ex = Extraction{};
        auto doc = parse_json(payload, "extractor response");
        require(doc.contains("observations") && doc["observations"].is_array(), ErrorCode::schema,
                "extractor response has no observations array");
        for (const auto& o : doc["observations"]) {
            try {
                ex.observations.push_back(state::observation_from_json(o));
            } catch (const Error& e) {
                fail(ErrorCode::schema, std::string("observation: ") + e.what());
            }
        }
        ex.artifact = doc.value("artifact", false);
    };
    auto clock = clocks_();
    auto outcome = backend::submit_and_poll(transport_, req, policy_, *clock, nullptr, validator);
    {
        std::lock_guard lock(mu_);
        records_.push_back(outcome.record);
    }
    if (!outcome.ok) {
        Extraction failed;
        failed.failed = true;
        failed.detail = "extractor call ended " + std::string(backend::to_string(*outcome.record.status));
        return failed;
    }
    return ex;
}

std::vector<backend::CallRecord> RemoteExtractor::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

// ---- verification and repair ----------------------------------------------------------------

namespace {

std::map<std::string, std::string> verified_values(std::span<const state::Observation> observed) {
    std::map<std::string, std::string> seen;
    for (const auto& o : observed) {
        if (o.verified) seen[o.key] = o.observed_value;
    }
    return seen;
}

}  // namespace

double verify(const std::map<std::string, std::string>& planned,
              std::span<const state::Observation> observed) {
    if (planned.empty()) return 0.0;
    auto seen = verified_values(observed);
    std::size_t bad = 0;
    for (const auto& [key, expected] : planned) {
        auto it = seen.find(key);
        if (it == seen.end() || !values_equal(it->second, expected)) ++bad;
    }
    return static_cast<double>(bad) / static_cast<double>(planned.size());
}

MismatchReport make_report(const std::map<std::string, std::string>& planned,
                           const Extraction& extraction, const alloc::CompiledPrompt& prompt,
                           const state::ExternalState& input, int duration) {
    MismatchReport r;
    r.e = verify(planned, extraction.observations);
    r.artifact = extraction.artifact;
    r.extractor_failed = extraction.failed;
    r.duration = duration;
    auto seen = verified_values(extraction.observations);
    for (const auto& [key, expected] : planned) {
        auto it = seen.find(key);
        if (it != seen.end() && values_equal(it->second, expected)) continue;
        KeyMismatch m;
        m.key = key;
        m.expected = expected;
        if (it != seen.end()) m.observed = it->second;
        m.in_prompt = prompt.source_keys.count(key) > 0;
        const auto* rec = input.find(key);
        m.visual = rec && rec->category == state::Category::visual;
        r.keys.push_back(std::move(m));
    }
    return r;
}

const char* to_string(RepairAction a) noexcept {
    switch (a) {
        case RepairAction::RepackPrompt: return "RepackPrompt";
        case RepairAction::ReanchorState: return "ReanchorState";
        case RepairAction::RegenerateUnit: return "RegenerateUnit";
        case RepairAction::SplitUnit: return "SplitUnit";
        case RepairAction::GiveUp: return "GiveUp";
    }
    return "?";
}

RepairAction repair(const MismatchReport& r, int attempt, int max_repairs, int tau_g) {
    if (attempt > max_repairs) return RepairAction::GiveUp;
    if (r.artifact || r.extractor_failed) return RepairAction::RegenerateUnit;
    const bool missing_from_prompt =
        std::any_of(r.keys.begin(), r.keys.end(), [](const KeyMismatch& k) { return !k.in_prompt; });
    if (missing_from_prompt) return RepairAction::RepackPrompt;
    const bool any_missing =
        std::any_of(r.keys.begin(), r.keys.end(), [](const KeyMismatch& k) { return !k.observed; });
    const bool any_disagree =
        std::any_of(r.keys.begin(), r.keys.end(), [](const KeyMismatch& k) { return k.observed.has_value(); });
    if (any_missing && any_disagree && 2 * r.duration > tau_g && r.duration >= 2) {
        return RepairAction::SplitUnit;
    }
    const bool visual_disagree = std::any_of(r.keys.begin(), r.keys.end(), [](const KeyMismatch& k) {
        return k.observed.has_value() && k.visual && k.in_prompt;
    });
    if (visual_disagree) return RepairAction::ReanchorState;
    return RepairAction::RegenerateUnit;
}

// ---- scheduling ----------------------------------------------------------------------------------

ScheduleResult schedule(std::span<const SchedTask> tasks, int workers, std::int64_t op_cost_ms) {
    require(workers >= 1, ErrorCode::precondition, "schedule: W must be >= 1");
    require(op_cost_ms >= 0, ErrorCode::precondition, "schedule: op cost must be >= 0");
    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        require(tasks[i].duration_ms >= 0, ErrorCode::precondition,
                "schedule: negative duration for " + tasks[i].id);
        require(at.emplace(tasks[i].id, i).second, ErrorCode::invalid_argument,
                "schedule: duplicate task id " + tasks[i].id);
    }
    std::vector<std::vector<std::size_t>> children(tasks.size());
    std::vector<int> missing(tasks.size(), 0);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        for (const auto& d : tasks[i].deps) {
            auto it = at.find(d);
            require(it != at.end(), ErrorCode::invalid_argument,
                    "schedule: " + tasks[i].id + " depends on unknown task " + d);
            children[it->second].push_back(i);
            ++missing[i];
        }
    }
    {
        // Kahn pass: every task must be reachable in topological order.
        auto indeg = missing;
        std::vector<std::size_t> q;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (indeg[i] == 0) q.push_back(i);
        }
        std::size_t seen = 0;
        while (!q.empty()) {
            auto i = q.back();
            q.pop_back();
            ++seen;
            for (auto c : children[i]) {
                if (--indeg[c] == 0) q.push_back(c);
            }
        }
        require(seen == tasks.size(), ErrorCode::cycle, "schedule: dependency cycle");
    }

    ScheduleResult res;
    std::vector<std::int64_t> ready_at(tasks.size(), 0);
    // (ready time, id) for tasks whose deps are done but not yet dispatched
    std::set<std::pair<std::int64_t, std::string>> waiting;
    std::set<std::pair<std::int64_t, std::string>> running;  // (finish, id)
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (missing[i] == 0) waiting.insert({0, tasks[i].id});
    }
    std::int64_t now = 0;
    std::size_t done = 0;
    while (done < tasks.size()) {
        // dispatch eligible tasks in id order
        std::vector<std::string> eligible;
        for (const auto& [t, id] : waiting) {
            if (t <= now) eligible.push_back(id);
        }
        std::sort(eligible.begin(), eligible.end());
        for (const auto& id : eligible) {
            if (static_cast<int>(running.size()) >= workers) break;
            const auto i = at[id];
            waiting.erase({ready_at[i], id});
            res.order.push_back(id);
            res.start_ms[id] = now;
            running.insert({now + tasks[i].duration_ms, id});
        }
        // advance to the next finish or the next ready time
        std::int64_t next = std::numeric_limits<std::int64_t>::max();
        if (!running.empty()) next = running.begin()->first;
        for (const auto& [t, id] : waiting) {
            if (t > now) next = std::min(next, t);
        }
        require(next != std::numeric_limits<std::int64_t>::max(), ErrorCode::precondition,
                "schedule: no progress possible");
        now = std::max(now, next);
        while (!running.empty() && running.begin()->first <= now) {
            auto [finish, id] = *running.begin();
            running.erase(running.begin());
            res.finish_ms[id] = finish;
            res.makespan_ms = std::max(res.makespan_ms, finish);
            ++done;
            for (auto c : children[at[id]]) {
                ready_at[c] = std::max(ready_at[c], finish + op_cost_ms);
                if (--missing[c] == 0) waiting.insert({ready_at[c], tasks[c].id});
            }
        }
    }
    return res;
}

// ---- leaf graph -----------------------------------------------------------------------------------

namespace {

std::string leaf_id(int shot, int unit) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%03du%02d", shot, unit);
    return buf;
}

}  // namespace

std::vector<LeafTask> build_leaf_tasks(const plan::ShotSchedule& s, int tau_g) {
    std::vector<LeafTask> out;
    std::map<int, std::string> last_unit;
    for (const auto& shot : s.shots) {
        auto units = alloc::decompose_shot(shot, tau_g);
        for (auto& u : units) {
            LeafTask t;
            t.id = leaf_id(u.shot_index, u.unit_index);
            t.duration = u.duration;
            if (u.unit_index > 1) {
                t.deps.push_back(leaf_id(u.shot_index, u.unit_index - 1));
            } else if (shot.prev) {
                t.deps.push_back(last_unit.at(*shot.prev));
            }
            t.unit = std::move(u);
            out.push_back(std::move(t));
        }
        last_unit[shot.index] = out.back().id;
    }
    return out;
}

std::set<std::string> descendants(std::span<const LeafTask> tasks, const std::string& id) {
    std::map<std::string, std::vector<std::string>> children;
    for (const auto& t : tasks) {
        for (const auto& d : t.deps) children[d].push_back(t.id);
    }
    std::set<std::string> out;
    std::vector<std::string> stack{id};
    while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        for (const auto& c : children[cur]) {
            if (out.insert(c).second) stack.push_back(c);
        }
    }
    return out;
}

const char* to_string(Phase p) noexcept {
    switch (p) {
        case Phase::dispatched: return "dispatched";
        case Phase::completed: return "completed";
        case Phase::verified: return "verified";
        case Phase::repaired: return "repaired";
        case Phase::failed: return "failed";
    }
    return "?";
}

// ---- leaf execution ----------------------------------------------------------------------------------

namespace {

struct LeafContext {
    const EngineConfig* config;
    backend::Generator* generator;
    Extractor* extractor;
    const state::ExternalState* root;
};

struct LeafRun {
    LeafOutcome outcome;
    alloc::Boundary boundary;
    alloc::CompiledPrompt prompt;
    std::map<std::string, std::string> planned;
};

alloc::Boundary make_boundary(const LeafTask& t, const std::string& dep_ref) {
    using plan::BoundaryMode;
    alloc::Boundary b;
    b.mode = t.unit.boundary_mode;
    const bool has_dep = !t.deps.empty();
    if (!has_dep && (b.mode == BoundaryMode::prev_last_frame || b.mode == BoundaryMode::transition_constraint)) {
        b.mode = BoundaryMode::anchor;
    }
    switch (b.mode) {
        case BoundaryMode::anchor:
            b.ref = "anchor";
            b.text = "open on the anchor frame";
            break;
        case BoundaryMode::prev_last_frame:
            b.ref = dep_ref;
            b.text = "continue from the last frame of " + t.deps.front();
            break;
        case BoundaryMode::keyframe:
            b.ref = "keyframe:s" + std::to_string(t.unit.shot_index);
            b.text = "match the keyframe of shot " + std::to_string(t.unit.shot_index);
            break;
        case BoundaryMode::transition_constraint:
            b.ref = dep_ref;
            b.text = "cut from " + t.deps.front() + " under the planned transition";
            break;
    }
    return b;
}

alloc::CompiledPrompt build_prompt(const LeafTask& t, const alloc::Boundary& boundary,
                                   const state::ExternalState& input, const EngineConfig& cfg,
                                   const backend::GeneratorCapability& cap,
                                   const std::set<std::string>& boosted) {
    const auto k = input.step();
    std::vector<alloc::CandidateItem> pool;
    alloc::SelectOptions opt;
    opt.lambda_red = cfg.lambda_red;
    for (const auto* rec : input.all_records()) {
        double sal = cfg.default_salience;
        if (auto it = t.unit.salience.find(rec->key); it != t.unit.salience.end()) {
            sal = it->second;
        } else if (t.unit.preserved_keys.count(rec->key)) {
            sal = 0.75;
        }
        if (state::marked_for_reinjection(state::refresh_priority(*rec, sal, k, cfg.alpha), cfg.eta) ||
            boosted.count(rec->key)) {
            sal = 1.0;
            opt.pinned.insert(rec->key);
        }
        pool.push_back(alloc::make_item(rec->key, rec->value, alloc::section_for(*rec), rec->support,
                                        sal, state::freshness(*rec, k, cfg.alpha)));
    }
    const int budget = std::min(cap.b_g, cfg.budget.value_or(cap.b_g));
    opt.scaffold_tokens = alloc::scaffold_for(t.unit.goal, boundary);
    auto sel = alloc::select(std::move(pool), budget, opt);
    return alloc::compile(sel, t.unit.goal, boundary, budget);
}

std::uint64_t call_seed(const EngineConfig& cfg, const std::string& id, int salt) {
    return splitmix64(cfg.seed ^ fnv1a64(id) ^ splitmix64(static_cast<std::uint64_t>(salt)));
}

LeafRun execute_leaf(const LeafTask& task, const state::ExternalState& input,
                     const std::string& dep_ref, int salt, const LeafContext& ctx) {
    const auto& cfg = *ctx.config;
    const auto cap = ctx.generator->capability();
    LeafRun run;
    auto& out = run.outcome;
    std::int64_t t = 0;
    auto event = [&](Phase p, std::string detail) {
        out.events.push_back({t, task.id, p, std::move(detail)});
    };

    state::ExternalState working = input;
    for (const auto& key : task.unit.preserved_keys) {
        if (const auto* rec = working.find(key)) run.planned[key] = rec->value;
    }
    run.boundary = make_boundary(task, dep_ref);
    std::set<std::string> boosted;
    std::vector<int> parts{task.duration};
    int attempt = 0;

    while (true) {
        run.prompt = build_prompt(task, run.boundary, working, cfg, cap, boosted);
        event(Phase::dispatched, "attempt " + std::to_string(attempt + 1));
        std::vector<Segment> segments;
        backend::GenerationResult last;
        std::string ref = run.boundary.ref;
        bool backend_failed = false;
        bool rejected = false;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            alloc::CompiledPrompt prompt = run.prompt;
            prompt.boundary.ref = ref;
            const std::string call_id = parts.size() == 1 ? task.id : task.id + char('a' + p);
            auto res = ctx.generator->generate(
                {call_id, &prompt, parts[p], call_seed(cfg, call_id, salt)});
            const auto latency = res.record.finished_ms() - res.record.submission_time_ms;
            res.record.shift(t - res.record.submission_time_ms);
            t += latency;
            out.calls.push_back(res.record);
            if (!res.ok) {
                if (res.status == backend::TerminalStatus::rejected) {
                    rejected = true;
                } else {
                    backend_failed = true;
                }
                out.error = std::string("generator call ") + backend::to_string(res.status) + ": " +
                            res.record.error;
                break;
            }
            Segment seg;
            seg.leaf_id = task.id;
            seg.shot = task.unit.shot_index;
            seg.unit = task.unit.unit_index;
            seg.part = parts.size() == 1 ? 0 : static_cast<int>(p) + 1;
            seg.duration = parts[p];
            seg.checksum = res.checksum;
            seg.boundary_ref = ref;
            segments.push_back(std::move(seg));
            ref = "segment:" + res.checksum;
            last = std::move(res);
        }
        if (backend_failed) {
            event(Phase::failed, out.error);
            out.status = LeafOutcome::Status::backend_failure;
            out.latency_ms = t;
            return run;
        }
        Extraction ex;
        if (rejected) {
            ex.failed = true;
            ex.detail = out.error;
        } else {
            event(Phase::completed, last.checksum);
            ex = ctx.extractor->extract(last, run.prompt, working);
        }
        auto report = make_report(run.planned, ex, run.prompt, working, task.duration);
        if (report.e <= cfg.eta && !report.artifact && !report.extractor_failed) {
            char buf[48];
            std::snprintf(buf, sizeof buf, "e=%.4f", report.e);
            event(Phase::verified, buf);
            std::vector<std::string> notes;
            out.output = state::apply_refresh(working, ex.observations, task.unit.goal, working.step() + 1,
                                              &notes);
            for (const auto& n : notes) log(LogLevel::debug, task.id + ": " + n);
            out.segments = std::move(segments);
            out.status = LeafOutcome::Status::ok;
            out.latency_ms = t;
            out.error.clear();
            return run;
        }
        ++attempt;
        const auto action = repair(report, attempt, cfg.max_repairs, cap.tau_g);
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s e=%.4f%s", to_string(action), report.e,
                      report.artifact ? " artifact" : report.extractor_failed ? " extractor_failed" : "");
        if (action == RepairAction::GiveUp) {
            event(Phase::failed, buf);
            out.status = LeafOutcome::Status::gave_up;
            out.latency_ms = t;
            if (out.error.empty()) out.error = buf;
            return run;
        }
        event(Phase::repaired, buf);
        ++out.repairs;
        ++salt;
        switch (action) {
            case RepairAction::RepackPrompt:
                for (const auto& k : report.keys) {
                    if (!k.in_prompt) boosted.insert(k.key);
                }
                break;
            case RepairAction::ReanchorState:
                for (const auto& k : report.keys) {
                    if (!k.observed || !k.visual) continue;
                    const auto* anchor = ctx.root->find(k.key);
                    if (!anchor) continue;
                    auto rec = *anchor;
                    rec.last_refresh = std::min(rec.last_refresh, working.step());
                    working.upsert(rec, "reanchor");
                    run.planned[k.key] = rec.value;
                }
                break;
            case RepairAction::SplitUnit:
                parts = {(task.duration + 1) / 2, task.duration / 2};
                break;
            default: break;
        }
    }
}

// Runs `to_run` on a pool of W workers; leaves outside the set keep their
// outcome in `result.outcomes` and feed their outputs to dependents.
void execute(RunResult& result, const std::set<std::string>& to_run, const std::map<std::string, int>& salts,
             const LeafContext& ctx) {
    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < result.tasks.size(); ++i) at[result.tasks[i].id] = i;
    std::map<std::string, std::vector<std::string>> children;
    std::map<std::string, int> pending;
    std::set<std::string> ready;
    for (const auto& id : to_run) {
        const auto& t = result.tasks[at.at(id)];
        int n = 0;
        for (const auto& d : t.deps) {
            if (to_run.count(d)) {
                ++n;
                children[d].push_back(id);
            } else {
                require(result.outcomes.count(d) && result.outcomes[d].status == LeafOutcome::Status::ok,
                        ErrorCode::precondition, "leaf " + id + " depends on unfinished " + d);
            }
        }
        pending[id] = n;
        if (n == 0) ready.insert(id);
        result.outcomes.erase(id);
    }

    std::mutex mu;
    std::condition_variable cv;
    std::size_t remaining = to_run.size();
    std::exception_ptr fatal;

    auto input_for = [&](const LeafTask& t, std::string& dep_ref) {
        if (t.deps.empty()) {
            dep_ref = "anchor";
            return result.root_state;
        }
        std::vector<state::ChainState> chains;
        for (const auto& d : t.deps) {
            const auto& o = result.outcomes.at(d);
            chains.push_back({d, o.output});
            dep_ref = "segment:" + o.segments.back().checksum;
        }
        return chains.size() == 1 ? chains.front().state : state::merge_chains(chains);
    };

    auto cancel_subtree = [&](const std::string& failed) {
        for (const auto& d : descendants(result.tasks, failed)) {
            if (!to_run.count(d) || result.outcomes.count(d)) continue;
            LeafOutcome c;
            c.status = LeafOutcome::Status::cancelled;
            c.error = "upstream " + failed + " failed";
            result.outcomes[d] = std::move(c);
            --remaining;
        }
    };

    auto worker = [&] {
        std::unique_lock lock(mu);
        while (true) {
            cv.wait(lock, [&] { return !ready.empty() || remaining == 0 || fatal; });
            if (remaining == 0 || fatal) return;
            const std::string id = *ready.begin();
            ready.erase(ready.begin());
            const LeafTask task = result.tasks[at.at(id)];
            std::string dep_ref;
            state::ExternalState input = input_for(task, dep_ref);
            const int salt = salts.count(id) ? salts.at(id) : 0;
            lock.unlock();
            LeafRun run;
            try {
                run = execute_leaf(task, input, dep_ref, salt, ctx);
            } catch (...) {
                lock.lock();
                if (!fatal) fatal = std::current_exception();
                cv.notify_all();
                return;
            }
            lock.lock();
            auto& stored = result.tasks[at.at(id)];
            stored.boundary = run.boundary;
            stored.prompt = std::move(run.prompt);
            stored.planned_delta = std::move(run.planned);
            const bool ok = run.outcome.status == LeafOutcome::Status::ok;
            result.outcomes[id] = std::move(run.outcome);
            --remaining;
            if (ok) {
                for (const auto& c : children[id]) {
                    if (--pending[c] == 0) ready.insert(c);
                }
            } else {
                cancel_subtree(id);
            }
            cv.notify_all();
        }
    };

    const int w = std::max(1, std::min<int>(ctx.config->concurrency, static_cast<int>(to_run.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (fatal) std::rethrow_exception(fatal);
}

// Places the leaves of `ids` on the simulated timeline starting at `base`
// and assembles trace, timeline, calls and final state.
void finalize(RunResult& result, const std::set<std::string>& ids, const EngineConfig& cfg) {
    std::vector<SchedTask> sched;
    for (const auto& t : result.tasks) {
        if (!ids.count(t.id)) continue;
        const auto& o = result.outcomes.at(t.id);
        if (o.status == LeafOutcome::Status::cancelled) continue;
        SchedTask s{t.id, {}, o.latency_ms};
        for (const auto& d : t.deps) {
            if (ids.count(d) && result.outcomes.at(d).status != LeafOutcome::Status::cancelled) s.deps.push_back(d);
        }
        sched.push_back(std::move(s));
    }
    auto plan = schedule(sched, cfg.concurrency, cfg.op_cost_ms);

    result.trace = ExecutionTrace{};
    result.trace.leaf_count = static_cast<int>(result.tasks.size());
    result.trace.makespan_ms = plan.makespan_ms;
    result.dispatched.clear();

    std::vector<std::string> by_start(plan.order.begin(), plan.order.end());
    std::stable_sort(by_start.begin(), by_start.end(), [&](const std::string& a, const std::string& b) {
        return plan.start_ms.at(a) < plan.start_ms.at(b);
    });
    for (const auto& id : by_start) {
        auto& o = result.outcomes.at(id);
        const auto start = plan.start_ms.at(id);
        result.dispatched.insert(id);
        for (auto e : o.events) {
            e.t_ms += start;
            result.trace.events.push_back(std::move(e));
        }
        result.trace.generator_calls += static_cast<int>(o.calls.size());
    }
    // Cancelled leaves fail at the moment their failed ancestor did.
    for (const auto& t : result.tasks) {
        if (!ids.count(t.id)) continue;
        const auto& o = result.outcomes.at(t.id);
        if (o.status != LeafOutcome::Status::cancelled) continue;
        std::int64_t when = plan.makespan_ms;
        const auto& up = o.error.substr(o.error.find(' ') + 1, o.error.rfind(' ') - o.error.find(' ') - 1);
        if (plan.finish_ms.count(up)) when = plan.finish_ms.at(up);
        result.trace.events.push_back({when, t.id, Phase::failed, "cancelled: " + o.error});
    }
    std::stable_sort(result.trace.events.begin(), result.trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.t_ms < b.t_ms; });

    // timeline, calls and final state over every leaf, not just `ids`
    result.timeline.clear();
    result.calls.clear();
    std::map<std::string, std::int64_t> offset;
    for (const auto& [id, s] : plan.start_ms) offset[id] = s;
    // Segments sit at their position in the concatenated video, which does
    // not depend on how the leaves were scheduled.
    std::map<std::string, std::int64_t> video_start;
    std::int64_t video_at = 0;
    for (const auto& t : result.tasks) {
        video_start[t.id] = video_at;
        video_at += t.duration * 1000LL;
    }
    bool any_backend = false;
    bool any_gave_up = false;
    std::set<std::string> ok_ids;
    for (const auto& t : result.tasks) {
        const auto& o = result.outcomes.at(t.id);
        if (o.status == LeafOutcome::Status::backend_failure) any_backend = true;
        if (o.status == LeafOutcome::Status::gave_up) any_gave_up = true;
        const std::int64_t shift = offset.count(t.id) ? offset[t.id] : 0;
        if (ids.count(t.id)) {
            for (auto c : o.calls) {
                c.shift(shift);
                result.calls.push_back(std::move(c));
            }
        }
        if (o.status != LeafOutcome::Status::ok) continue;
        ok_ids.insert(t.id);
        std::int64_t at = video_start.at(t.id);
        for (auto s : o.segments) {
            s.start_ms = at;
            s.end_ms = at + s.duration * 1000LL;
            at = s.end_ms;
            result.timeline.push_back(std::move(s));
        }
    }
    std::sort(result.timeline.begin(), result.timeline.end(), [](const Segment& a, const Segment& b) {
        return std::tie(a.shot, a.unit, a.part) < std::tie(b.shot, b.unit, b.part);
    });
    std::stable_sort(result.calls.begin(), result.calls.end(),
                     [](const backend::CallRecord& a, const backend::CallRecord& b) {
                         return std::tie(a.submission_time_ms, a.request_id) <
                                std::tie(b.submission_time_ms, b.request_id);
                     });

    std::set<std::string> has_ok_child;
    for (const auto& t : result.tasks) {
        if (!ok_ids.count(t.id)) continue;
        for (const auto& d : t.deps) has_ok_child.insert(d);
    }
    std::vector<state::ChainState> sinks;
    for (const auto& id : ok_ids) {
        if (!has_ok_child.count(id)) sinks.push_back({id, result.outcomes.at(id).output});
    }
    result.final_state = sinks.empty() ? result.root_state : state::merge_chains(sinks);

    result.exit_code = any_backend ? kExitBackend : any_gave_up ? kExitPartial : kExitOk;
    if (result.exit_code != kExitOk && result.error.empty()) {
        for (const auto& t : result.tasks) {
            const auto& o = result.outcomes.at(t.id);
            if (o.status == LeafOutcome::Status::backend_failure || o.status == LeafOutcome::Status::gave_up) {
                result.error = t.id + ": " + o.error;
                break;
            }
        }
    }
}

RunResult planning_failure(const state::ExternalState& anchor, std::string error) {
    RunResult r;
    r.exit_code = kExitPlanning;
    r.error = std::move(error);
    r.root_state = anchor;
    r.final_state = anchor;
    return r;
}

}  // namespace

RunResult run_schedule(const state::ExternalState& anchor, const plan::ShotSchedule& schedule_in,
                       const EngineConfig& config, backend::Generator& generator, Extractor& extractor) {
    validate(config);
    const auto cap = generator.capability();
    backend::validate(cap);
    auto problems = plan::check_schedule(schedule_in);
    if (!problems.empty()) return planning_failure(anchor, "invalid schedule: " + problems.front());
    auto deps = plan::validate_dependency_map(schedule_in, cap.tau_g);
    if (!deps.ok) return planning_failure(anchor, "invalid dependency map: " + deps.violations.front().message);

    RunResult result;
    result.schedule = schedule_in;
    result.root_state = anchor;
    for (const auto& c : schedule_in.commitments) {
        auto r = result.root_state.admit(c, config.plan.epsilon);
        if (!r.accepted() && r.status != state::AdmitStatus::duplicate) {
            log(LogLevel::warn, "commitment " + c.key + " not admitted: " + r.reason);
        }
    }
    try {
        result.tasks = build_leaf_tasks(schedule_in, cap.tau_g);
    } catch (const Error& e) {
        return planning_failure(anchor, e.what());
    }
    std::set<std::string> all;
    for (const auto& t : result.tasks) all.insert(t.id);
    LeafContext ctx{&config, &generator, &extractor, &result.root_state};
    execute(result, all, {}, ctx);
    finalize(result, all, config);
    return result;
}

RunResult run(const state::ExternalState& anchor, const std::string& intent, int total_duration,
              const EngineConfig& config, backend::Generator& generator, Extractor& extractor,
              plan::PlanProposer* proposer) {
    validate(config);
    require(total_duration > 0, ErrorCode::precondition, "T must be > 0");
    require(anchor.step() == 0, ErrorCode::precondition, "anchor state must be at step 0");
    auto pc = config.plan;
    pc.quantum = generator.capability().tau_g;
    plan::RuleProposer rule;
    plan::ShotSchedule schedule;
    try {
        schedule = plan::plan(anchor, intent, total_duration, pc, proposer ? *proposer : rule);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::planning && e.code() != ErrorCode::backend) throw;
        return planning_failure(anchor, e.what());
    }
    return run_schedule(anchor, schedule, config, generator, extractor);
}

RunResult repair_subtree(const RunResult& prior, const std::string& leaf_id, const EngineConfig& config,
                         backend::Generator& generator, Extractor& extractor) {
    validate(config);
    auto it = std::find_if(prior.tasks.begin(), prior.tasks.end(),
                           [&](const LeafTask& t) { return t.id == leaf_id; });
    require(it != prior.tasks.end(), ErrorCode::invalid_argument, "unknown leaf " + leaf_id);
    RunResult result = prior;
    result.error.clear();
    std::set<std::string> ids = descendants(result.tasks, leaf_id);
    ids.insert(leaf_id);
    // A fresh seed for the failed leaf; descendants keep theirs.
    std::map<std::string, int> salts;
    const auto& po = prior.outcomes.at(leaf_id);
    salts[leaf_id] = po.repairs + 1 + 1000;
    LeafContext ctx{&config, &generator, &extractor, &result.root_state};
    execute(result, ids, salts, ctx);
    // Record the post-hoc repair on the failed leaf before its new dispatch.
    auto& o = result.outcomes.at(leaf_id);
    o.events.insert(o.events.begin(), TraceEvent{0, leaf_id, Phase::repaired, "RegenerateUnit post-hoc"});
    finalize(result, ids, config);
    return result;
}

// ---- serialization ----------------------------------------------------------------------------------

Json trace_to_json(const RunResult& r) {
    Json events = Json::array();
    for (const auto& e : r.trace.events) {
        events.push_back({{"t_ms", e.t_ms}, {"task", e.task_id}, {"phase", to_string(e.phase)}, {"detail", e.detail}});
    }
    Json doc;
    doc["schema"] = kTraceSchema;
    doc["exit_code"] = r.exit_code;
    doc["error"] = r.error;
    doc["makespan_ms"] = r.trace.makespan_ms;
    doc["leaf_count"] = r.trace.leaf_count;
    doc["generator_calls"] = r.trace.generator_calls;
    doc["events"] = std::move(events);
    return doc;
}

Json timeline_to_json(const RunResult& r) {
    Json segs = Json::array();
    int total = 0;
    for (const auto& s : r.timeline) {
        total += s.duration;
        segs.push_back({{"leaf_id", s.leaf_id},
                        {"shot", s.shot},
                        {"unit", s.unit},
                        {"part", s.part},
                        {"duration", s.duration},
                        {"start_ms", s.start_ms},
                        {"end_ms", s.end_ms},
                        {"checksum", s.checksum},
                        {"boundary_ref", s.boundary_ref}});
    }
    Json doc;
    doc["schema"] = kTimelineSchema;
    doc["total_duration"] = total;
    doc["segments"] = std::move(segs);
    return doc;
}

Json report_to_json(const RunResult& r) {
    std::map<std::string, int> leaves{{"ok", 0}, {"gave_up", 0}, {"backend_failure", 0}, {"cancelled", 0}};
    int repairs = 0;
    int calls = 0;
    for (const auto& t : r.tasks) {
        auto it = r.outcomes.find(t.id);
        if (it == r.outcomes.end()) continue;
        const auto& o = it->second;
        switch (o.status) {
            case LeafOutcome::Status::ok: ++leaves["ok"]; break;
            case LeafOutcome::Status::gave_up: ++leaves["gave_up"]; break;
            case LeafOutcome::Status::backend_failure: ++leaves["backend_failure"]; break;
            case LeafOutcome::Status::cancelled: ++leaves["cancelled"]; break;
        }
        repairs += o.repairs;
        calls += static_cast<int>(o.calls.size());
    }
    std::vector<backend::CallRecord> all;
    for (const auto& [id, o] : r.outcomes) all.insert(all.end(), o.calls.begin(), o.calls.end());
    int rendered = 0;
    for (const auto& s : r.timeline) rendered += s.duration;
    Json doc;
    doc["schema"] = kReportSchema;
    doc["exit_code"] = r.exit_code;
    doc["error"] = r.error;
    doc["total_duration"] = r.schedule.total_duration;
    doc["rendered_duration"] = rendered;
    doc["shots"] = r.schedule.shots.size();
    doc["leaf_count"] = r.tasks.size();
    doc["leaves"] = leaves;
    doc["repairs"] = repairs;
    doc["generator_calls"] = calls;
    doc["call_status"] = backend::to_json(backend::histogram(all));
    doc["timeline_sha256"] = sha256_hex(dump_canonical(timeline_to_json(r)));
    doc["final_state_sha256"] = sha256_hex(r.final_state.serialize());
    return doc;
}

}  // namespace reca::engine
