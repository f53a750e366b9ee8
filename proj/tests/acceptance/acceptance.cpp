// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes. Everything runs offline on the mock and
// simulated backends with fixed seeds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "allocator.hpp"
#include "backends.hpp"
#include "config.hpp"
#include "engine.hpp"
#include "nbq.hpp"
#include "planner.hpp"
#include "runner.hpp"
#include "simworld.hpp"
#include "state_store.hpp"

using namespace reca;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

state::ExternalState load_anchor() {
    return state::ExternalState::from_json(
        parse_json(read_file(std::string(RECA_DATA_DIR) + "/anchor_example.json"), "anchor"));
}

std::set<std::string> anchor_keys(const state::ExternalState& s) {
    std::set<std::string> out;
    for (const auto* r : s.all_records()) out.insert(r->key);
    return out;
}

const std::vector<std::string> kWords = {"red",   "coat",  "pier", "lantern", "harbor", "dawn",  "boat",
                                         "stone", "light", "sea",  "mist",    "gull",   "rope",  "net",
                                         "tide",  "wind",  "deck", "crate",   "brass",  "shadow"};

std::string random_words(std::mt19937_64& rng, int lo, int hi) {
    std::uniform_int_distribution<int> n(lo, hi);
    std::uniform_int_distribution<std::size_t> w(0, kWords.size() - 1);
    std::string out;
    for (int i = n(rng); i > 0; --i) out += (out.empty() ? "" : " ") + kWords[w(rng)];
    return out;
}

// ---- 1 -------------------------------------------------------------------------------

Outcome freshness_formula() {
    state::VariableRecord r;
    r.key = "k";
    r.value = "v";
    r.last_refresh = 3;
    const double f = state::freshness(r, 5, 0.4);
    const bool ok = std::fabs(f - std::exp(-0.8)) <= 1e-9 && f > 0.4 && f < 0.5;
    return {ok, "freshness(delta=2, alpha=0.4) = " + fmt("%.12f", f)};
}

// ---- 2 -------------------------------------------------------------------------------

plan::ShotSchedule fuzz_schedule(std::mt19937_64& rng, const std::set<std::string>& keys) {
    std::uniform_int_distribution<int> shots(1, 90), dur(1, 40), coin(0, 2);
    plan::ShotSchedule s;
    const int n = shots(rng);
    for (int i = 1; i <= n; ++i) {
        plan::ShotSpec sh;
        sh.index = i;
        sh.goal = random_words(rng, 2, 6);
        sh.duration = dur(rng);
        sh.preserved_keys = keys;
        if (i > 1 && coin(rng) != 0) {
            sh.prev = std::uniform_int_distribution<int>(1, i - 1)(rng);
            sh.boundary_mode = plan::BoundaryMode::prev_last_frame;
        }
        s.shots.push_back(std::move(sh));
    }
    s.total_duration = std::accumulate(s.shots.begin(), s.shots.end(), 0,
                                       [](int a, const plan::ShotSpec& b) { return a + b.duration; });
    return s;
}

Outcome recursion_bound() {
    std::mt19937_64 rng(2);
    const auto anchor = load_anchor();
    const auto keys = anchor_keys(anchor);
    plan::PlanConfig pc;
    pc.quantum = 5;
    std::size_t worst = 0;
    int cases = 0;
    for (; cases < 500; ++cases) {
        plan::FixedProposer fixed(fuzz_schedule(rng, keys));
        const auto s = plan::plan(anchor, "fuzzed intent", 300, pc, fixed);
        const auto leaves = engine::build_leaf_tasks(s, 5).size();
        int total = 0;
        for (const auto& sh : s.shots) total += sh.duration;
        if (total != 300) return {false, "case " + std::to_string(cases) + " sums to " + std::to_string(total)};
        worst = std::max(worst, leaves);
        if (leaves > 60) return {false, "case " + std::to_string(cases) + " has " + std::to_string(leaves) + " leaves"};
    }
    // End-to-end on the mock backend for a subset.
    int executed = 0;
    for (int i = 0; i < 10; ++i, ++executed) {
        backend::MockTransport t;
        backend::TransportGenerator gen(t, {});
        engine::MockExtractor ex;
        engine::EngineConfig cfg;
        cfg.concurrency = 8;
        plan::FixedProposer fixed(fuzz_schedule(rng, keys));
        const auto r = engine::run(anchor, "fuzzed intent", 300, cfg, gen, ex, &fixed);
        if (r.trace.leaf_count > 60 || r.exit_code == engine::kExitPlanning) {
            return {false, "engine run " + std::to_string(i) + " leaf_count " + std::to_string(r.trace.leaf_count) +
                               " exit " + std::to_string(r.exit_code)};
        }
        worst = std::max(worst, static_cast<std::size_t>(r.trace.leaf_count));
    }
    return {true, std::to_string(cases) + " fuzzed plans + " + std::to_string(executed) +
                      " mock runs, max leaf_count " + std::to_string(worst) + " <= 60"};
}

// ---- 3 -------------------------------------------------------------------------------

Outcome budget_enforcement() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> items(1, 200), lvl(1, 4), sect(0, 5), coin(0, 1);
    std::uniform_real_distribution<double> fresh(0.01, 1.0);
    int worst = 0;
    for (int c = 0; c < 1000; ++c) {
        std::vector<alloc::CandidateItem> pool;
        const int n = items(rng);
        for (int i = 0; i < n; ++i) {
            pool.push_back(alloc::make_item("k" + std::to_string(i), random_words(rng, 1, 80),
                                            alloc::kSections[static_cast<std::size_t>(sect(rng))], lvl(rng) * 0.25,
                                            lvl(rng) * 0.25, fresh(rng)));
        }
        const std::string goal = random_words(rng, 1, 40);
        alloc::Boundary b;
        b.text = random_words(rng, 0, 20);
        alloc::SelectOptions opt;
        opt.lambda_red = coin(rng) ? 0.5 : 0.0;
        opt.scaffold_tokens = alloc::scaffold_for(goal, b);
        const auto sel = alloc::select(pool, 1000, opt);
        const auto p = alloc::compile(sel, goal, b, 1000);
        const int recount = alloc::default_counter().count(p.text);
        worst = std::max({worst, p.token_count, recount});
        if (p.token_count > 1000 || recount > 1000) {
            return {false, "pool " + std::to_string(c) + " compiled to " + std::to_string(recount) + " tokens"};
        }
    }
    return {true, "1000 pools, max prompt " + std::to_string(worst) + " <= 1000 tokens"};
}

// ---- 4 -------------------------------------------------------------------------------

// Hand-trace oracle of greedy insertion with lambda_red = 0: utility
// descending (ties: cheaper, then key), skip what does not fit.
std::vector<std::string> greedy_oracle(const std::vector<alloc::CandidateItem>& pool, int usable) {
    std::vector<const alloc::CandidateItem*> order;
    for (const auto& it : pool) order.push_back(&it);
    auto u = [](const alloc::CandidateItem* x) { return x->support * x->salience * x->fresh; };
    std::sort(order.begin(), order.end(), [&](auto* a, auto* b) {
        if (u(a) != u(b)) return u(a) > u(b);
        if (a->token_cost != b->token_cost) return a->token_cost < b->token_cost;
        return a->key < b->key;
    });
    std::vector<std::string> out;
    int used = 0;
    for (auto* it : order) {
        if (u(it) <= 0.0 || used + it->token_cost > usable) continue;
        used += it->token_cost;
        out.push_back(it->key);
    }
    return out;
}

double brute_force_optimum(const std::vector<alloc::CandidateItem>& pool, int usable) {
    double best = 0.0;
    const std::size_t n = pool.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        int cost = 0;
        double util = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) {
                cost += pool[i].token_cost;
                util += pool[i].support * pool[i].salience * pool[i].fresh;
            }
        }
        if (cost <= usable) best = std::max(best, util);
    }
    return best;
}

Outcome greedy_oracle_check() {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> items(1, 12), lvl(0, 4), budget(30, 220), age(0, 6);
    double worst_ratio = 1.0;
    int cases = 0;
    for (; cases < 2000; ++cases) {
        std::vector<alloc::CandidateItem> pool;
        const int n = items(rng);
        for (int i = 0; i < n; ++i) {
            pool.push_back(alloc::make_item("k" + std::to_string(i), random_words(rng, 1, 30),
                                            alloc::Section::active_entities, lvl(rng) * 0.25, lvl(rng) * 0.25,
                                            std::exp(-0.4 * age(rng))));
        }
        alloc::SelectOptions opt;
        opt.lambda_red = 0.0;
        opt.scaffold_tokens = 10;
        const int b = budget(rng);
        const auto sel = alloc::select(pool, b, opt);
        std::vector<std::string> got;
        for (const auto& it : sel.items) got.push_back(it.key);
        const auto want = greedy_oracle(pool, b - 10);
        if (got != want) return {false, "pool " + std::to_string(cases) + " diverges from the hand-trace oracle"};
        const double opt_u = brute_force_optimum(pool, b - 10);
        if (opt_u > 0.0) worst_ratio = std::min(worst_ratio, sel.total_utility / opt_u);
    }
    const bool ok = worst_ratio >= 0.5;
    return {ok, std::to_string(cases) + " pools match the oracle; min greedy/optimum " + fmt("%.4f", worst_ratio) +
                    (ok ? " >= 0.5" : " < 0.5")};
}

// ---- 5 -------------------------------------------------------------------------------

Outcome unit_decomposition() {
    if (plan::balanced_split(28, 10) != std::vector<int>{10, 9, 9}) return {false, "28/10 did not give [10,9,9]"};
    plan::ShotSpec shot;
    shot.index = 5;
    shot.goal = "shot five";
    shot.duration = 28;
    const auto units = alloc::decompose_shot(shot, 10);
    if (units.size() != 3 || units[0].duration != 10 || units[1].duration != 9 || units[2].duration != 9) {
        return {false, "decompose_shot(28, 10) disagrees with balanced_split"};
    }
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> d(1, 300), t(1, 20);
    for (int c = 0; c < 10000; ++c) {
        const int dd = d(rng), tt = t(rng);
        const auto parts = plan::balanced_split(dd, tt);
        const int sum = std::accumulate(parts.begin(), parts.end(), 0);
        const bool within = std::all_of(parts.begin(), parts.end(), [&](int p) { return p >= 1 && p <= tt; });
        if (sum != dd || !within || static_cast<int>(parts.size()) != (dd + tt - 1) / tt) {
            return {false, "split(" + std::to_string(dd) + ", " + std::to_string(tt) + ") violates an invariant"};
        }
    }
    return {true, "28/10 -> [10,9,9]; 10000 fuzzed splits keep sum, cap and count"};
}

// ---- 6 -------------------------------------------------------------------------------

// Exact P|prec|Cmax optimum by branch and bound over start-ordered
// schedules: every optimal schedule left-shifts into one of these.
std::int64_t exhaustive_optimum(const std::vector<engine::SchedTask>& tasks, int workers) {
    const std::size_t n = tasks.size();
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) idx[tasks[i].id] = i;
    std::vector<std::vector<std::size_t>> deps(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& d : tasks[i].deps) deps[i].push_back(idx.at(d));
    }
    std::int64_t best = 0;
    for (const auto& t : tasks) best += t.duration_ms;  // serial schedule
    std::vector<std::int64_t> finish(n, -1), machine(static_cast<std::size_t>(workers), 0);
    std::function<void(std::size_t, std::int64_t)> dfs = [&](std::size_t placed, std::int64_t span) {
        if (span >= best) return;
        if (placed == n) {
            best = span;
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (finish[i] >= 0) continue;
            std::int64_t ready = 0;
            bool ok = true;
            for (auto d : deps[i]) {
                if (finish[d] < 0) ok = false;
                else ready = std::max(ready, finish[d]);
            }
            if (!ok) continue;
            std::set<std::int64_t> tried;
            for (std::size_t m = 0; m < machine.size(); ++m) {
                if (!tried.insert(machine[m]).second) continue;  // identical machines
                const std::int64_t start = std::max(ready, machine[m]);
                const std::int64_t end = start + tasks[i].duration_ms;
                const auto saved = machine[m];
                machine[m] = end;
                finish[i] = end;
                dfs(placed + 1, std::max(span, end));
                finish[i] = -1;
                machine[m] = saved;
            }
        }
    };
    dfs(0, 0);
    return best;
}

std::int64_t critical_path(const std::vector<engine::SchedTask>& tasks) {
    std::map<std::string, std::int64_t> done;
    for (const auto& t : tasks) {  // generated in topological order
        std::int64_t ready = 0;
        for (const auto& d : t.deps) ready = std::max(ready, done.at(d));
        done[t.id] = ready + t.duration_ms;
    }
    std::int64_t out = 0;
    for (const auto& [_, f] : done) out = std::max(out, f);
    return out;
}

Outcome scheduler_makespan() {
    std::vector<engine::SchedTask> indep;
    for (int i = 0; i < 12; ++i) indep.push_back({"t" + std::to_string(100 + i), {}, 5000});
    const auto a = engine::schedule(indep, 4, 0).makespan_ms;
    if (a != 15000) return {false, "12 x 5 s at W=4 took " + std::to_string(a) + " ms"};
    const std::int64_t op = 250;
    std::vector<engine::SchedTask> chain = {{"a", {}, 5000}, {"b", {"a"}, 5000}, {"c", {"b"}, 5000}};
    for (int w : {1, 2, 4, 16}) {
        const auto m = engine::schedule(chain, w, op).makespan_ms;
        if (m != 15000 + 2 * op) return {false, "chain at W=" + std::to_string(w) + " took " + std::to_string(m)};
    }
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> count(1, 8), dur(1, 9), wk(1, 3);
    std::bernoulli_distribution edge(0.3);
    int cases = 0;
    double worst = 0.0;
    for (; cases < 300; ++cases) {
        std::vector<engine::SchedTask> tasks;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) {
            engine::SchedTask t{"n" + std::to_string(i), {}, dur(rng) * 1000};
            for (int j = 0; j < i; ++j) {
                if (edge(rng)) t.deps.push_back("n" + std::to_string(j));
            }
            tasks.push_back(std::move(t));
        }
        const int w = wk(rng);
        const auto got = engine::schedule(tasks, w, 0).makespan_ms;
        std::int64_t work = 0;
        for (const auto& t : tasks) work += t.duration_ms;
        const double lower = std::max<double>(static_cast<double>(critical_path(tasks)), static_cast<double>(work) / w);
        const auto opt = exhaustive_optimum(tasks, w);
        const double upper = (2.0 - 1.0 / w) * static_cast<double>(opt);
        if (static_cast<double>(got) < lower - 1e-9 || static_cast<double>(got) > upper + 1e-9) {
            return {false, "DAG " + std::to_string(cases) + ": makespan " + std::to_string(got) + " outside [" +
                               fmt("%.0f", lower) + ", " + fmt("%.0f", upper) + "]"};
        }
        worst = std::max(worst, static_cast<double>(got) / static_cast<double>(opt));
    }
    return {true, "12x5 s @W=4 = 15 s; chain = 15 s + 2 tau_op at W in {1,2,4,16}; " + std::to_string(cases) +
                      " DAGs within bounds, worst makespan/OPT " + fmt("%.3f", worst)};
}

// ---- 7 -------------------------------------------------------------------------------

// Fails every call of one leaf while `failing` is set.
class FailingGenerator final : public backend::Generator {
public:
    FailingGenerator(backend::Generator& inner, std::string leaf) : inner_(inner), leaf_(std::move(leaf)) {}
    backend::GeneratorCapability capability() const override { return inner_.capability(); }
    backend::GenerationResult generate(const backend::GenerationRequest& r) override {
        if (failing && r.leaf_id.rfind(leaf_, 0) == 0) {
            backend::GenerationResult res;
            res.ok = false;
            res.status = backend::TerminalStatus::timeout;
            res.record.request_id = r.leaf_id;
            res.record.error = "injected failure";
            return res;
        }
        return inner_.generate(r);
    }
    bool failing = true;

private:
    backend::Generator& inner_;
    std::string leaf_;
};

std::string outcome_bytes(const engine::LeafOutcome& o) {
    std::string out = o.output.serialize();
    for (const auto& c : o.calls) out += backend::record_to_json(c).dump();
    for (const auto& s : o.segments) out += s.checksum;
    return out;
}

Outcome repair_locality() {
    const auto anchor = load_anchor();
    const auto keys = anchor_keys(anchor);
    plan::ShotSchedule s;
    s.total_duration = 45;
    for (int i = 1; i <= 3; ++i) {
        plan::ShotSpec sh;
        sh.index = i;
        sh.goal = "beat " + std::to_string(i);
        sh.duration = 15;
        sh.preserved_keys = keys;
        if (i == 2) {
            sh.prev = 1;
            sh.boundary_mode = plan::BoundaryMode::prev_last_frame;
        }
        s.shots.push_back(std::move(sh));
    }
    backend::MockTransport t;
    backend::TransportGenerator inner(t, {});
    FailingGenerator gen(inner, "s001u02");
    engine::MockExtractor ex;
    engine::EngineConfig cfg;
    cfg.concurrency = 4;
    const auto first = engine::run_schedule(anchor, s, cfg, gen, ex);
    const std::set<std::string> expected = {"s001u02", "s001u03", "s002u01", "s002u02", "s002u03"};
    for (const auto& id : expected) {
        if (id == "s001u02") continue;
        if (first.outcomes.at(id).status != engine::LeafOutcome::Status::cancelled) {
            return {false, id + " was not cancelled after its ancestor failed"};
        }
    }
    if (first.outcomes.at("s003u03").status != engine::LeafOutcome::Status::ok) {
        return {false, "independent chain did not finish"};
    }
    gen.failing = false;
    const auto second = engine::repair_subtree(first, "s001u02", cfg, gen, ex);
    if (second.dispatched != expected) {
        std::string got;
        for (const auto& id : second.dispatched) got += id + " ";
        return {false, "re-dispatched set was { " + got + "}"};
    }
    for (const auto& [id, o] : first.outcomes) {
        if (expected.count(id)) continue;
        if (outcome_bytes(o) != outcome_bytes(second.outcomes.at(id))) return {false, id + " changed during repair"};
    }
    if (second.exit_code != engine::kExitOk) return {false, "repaired run exit " + std::to_string(second.exit_code)};
    return {true, "re-dispatched {failed} + 4 descendants; 4 other leaves byte-identical"};
}

// ---- 8 -------------------------------------------------------------------------------

// Straight-line reference scorer written independently of nbq.cpp.
struct Reference {
    std::map<std::string, double> axes;
    std::map<nbq::Group, double> groups;
    double headline = 0.0;
    double coverage = 0.0;
};

Reference reference_score(const nbq::BenchInstance& in, const nbq::AnswerSet& ans, const nbq::GateConfig& gate) {
    const std::size_t slices = in.slices.size();
    std::vector<bool> valid(slices, true);
    for (const auto& a : in.alignments) {
        valid[static_cast<std::size_t>(a.slice)] =
            a.confidence >= gate.confidence_threshold && !(a.duration_deviation > gate.deviation_threshold);
    }
    std::map<std::string, double> base;
    std::map<std::string, const nbq::Problem*> by_id;
    for (const auto& p : in.problems) {
        by_id[p.id] = &p;
        double v = 0.0;
        auto it = ans.find(p.id);
        if (it != ans.end()) {
            if (p.kind == nbq::ProblemKind::binary) v = std::get<bool>(it->second) ? 1.0 : 0.0;
            else v = (std::get<int>(it->second) - 1) / 4.0;
        }
        const auto s = static_cast<std::size_t>(p.slice);
        if (!valid[s] || (p.spans_next && !valid[s + 1])) v = 0.0;
        base[p.id] = v;
    }
    // A problem survives only if every ancestor is answered and scores > 0.
    std::map<std::string, double> gated;
    for (const auto& p : in.problems) {
        double v = base[p.id];
        const nbq::Problem* cur = &p;
        std::set<std::string> seen{p.id};
        while (cur->prerequisite) {
            const auto& pre = *cur->prerequisite;
            if (!seen.insert(pre).second) break;
            if (!ans.count(pre) || base[pre] <= 0.0) {
                v = 0.0;
                break;
            }
            cur = by_id.at(pre);
        }
        gated[p.id] = v;
    }
    Reference r;
    for (const auto& axis : nbq::all_axes()) {
        double num = 0.0, den = 0.0;
        for (const auto& p : in.problems) {
            if (p.axis != axis) continue;
            num += p.weight * gated[p.id];
            den += p.weight;
        }
        if (den > 0.0) r.axes[axis] = num / den;
    }
    int covered = 0;
    for (const auto& axis : nbq::all_axes()) {
        for (const auto& p : in.problems) {
            if (p.axis == axis && p.coverage_flag && gated[p.id] >= 0.5) {
                ++covered;
                break;
            }
        }
    }
    r.coverage = covered / static_cast<double>(nbq::all_axes().size());
    for (auto g : nbq::kGroups) {
        double num = 0.0, den = 0.0;
        for (const auto& axis : nbq::axes_of(g)) {
            const double alpha = in.axis_weights.count(axis) ? in.axis_weights.at(axis) : 1.0;
            den += alpha;
            if (r.axes.count(axis)) num += alpha * r.axes.at(axis);
        }
        r.groups[g] = num / den;
    }
    for (auto g : nbq::kGroups) {
        const double lambda = in.lambda.empty() ? 1.0 / nbq::kGroups.size() : in.lambda.at(g);
        r.headline += lambda * r.groups[g];
    }
    return r;
}

std::pair<nbq::BenchInstance, nbq::AnswerSet> random_instance(std::mt19937_64& rng, int n) {
    std::uniform_int_distribution<int> slices(1, 4), problems(1, 12), likert(1, 5), pct(0, 99);
    const auto axes = nbq::all_axes();
    std::uniform_int_distribution<std::size_t> axis(0, axes.size() - 1);
    nbq::BenchInstance in;
    in.id = "gen-" + std::to_string(n);
    in.anchor = "a";
    in.intent = "i";
    in.target_duration = 10;
    const int s = slices(rng);
    for (int j = 0; j < s; ++j) in.slices.push_back({10.0, "scene", {}, {}, {}, "", ""});
    for (int j = 0; j + 1 < s; ++j) in.transitions.push_back(nbq::TransitionKind::same_location);
    for (int j = 0; j < s; ++j) {
        if (pct(rng) < 70) in.alignments.push_back({j, pct(rng) / 100.0 + 0.01, pct(rng) / 100.0});
    }
    nbq::AnswerSet ans;
    const int m = problems(rng);
    for (int i = 0; i < m; ++i) {
        nbq::Problem p;
        p.id = "q" + std::to_string(i);
        p.slice = std::uniform_int_distribution<int>(0, s - 1)(rng);
        p.spans_next = p.slice + 1 < s && pct(rng) < 25;
        p.axis = axes[axis(rng)];
        p.group = *nbq::group_of_axis(p.axis);
        p.kind = pct(rng) < 50 ? nbq::ProblemKind::binary : nbq::ProblemKind::likert;
        p.weight = 0.5 + pct(rng) / 50.0;
        p.coverage_flag = pct(rng) < 80;
        // Prerequisites point at an earlier problem on the same or an earlier slice.
        std::vector<std::string> earlier;
        for (const auto& q : in.problems) {
            if (q.slice <= p.slice) earlier.push_back(q.id);
        }
        if (!earlier.empty() && pct(rng) < 40) {
            p.prerequisite = earlier[std::uniform_int_distribution<std::size_t>(0, earlier.size() - 1)(rng)];
        }
        if (pct(rng) < 85) {
            if (p.kind == nbq::ProblemKind::binary) ans[p.id] = pct(rng) < 60;
            else ans[p.id] = likert(rng);
        }
        in.problems.push_back(std::move(p));
    }
    if (pct(rng) < 50) {
        for (const auto& a : axes) {
            if (pct(rng) < 30) in.axis_weights[a] = 0.5 + pct(rng) / 40.0;
        }
    }
    return {in, ans};
}

Outcome nbq_equivalence() {
    std::mt19937_64 rng(8);
    const nbq::GateConfig gate;
    for (int n = 0; n < 50; ++n) {
        auto [in, ans] = random_instance(rng, n);
        const auto got = nbq::score(in, ans, gate);
        const auto want = reference_score(in, ans, gate);
        if (std::fabs(got.headline - want.headline) > 1e-12 || std::fabs(got.coverage - want.coverage) > 1e-12) {
            return {false, "instance " + std::to_string(n) + ": headline " + fmt("%.15f", got.headline) + " vs " +
                               fmt("%.15f", want.headline)};
        }
        for (const auto& [g, v] : want.groups) {
            if (std::fabs(got.group_scores.at(g) - v) > 1e-12) return {false, "instance " + std::to_string(n) + " group"};
        }
        if (got.axis_scores.size() != want.axes.size()) return {false, "instance " + std::to_string(n) + " axes"};
        for (const auto& [a, v] : want.axes) {
            if (std::fabs(got.axis_scores.at(a) - v) > 1e-12) return {false, "instance " + std::to_string(n) + " " + a};
        }
    }
    if (nbq::normalize_likert(1) != 0.0 || nbq::normalize_likert(5) != 1.0) return {false, "Likert endpoints"};
    const auto g = nbq::gate_segments({{0, 1.0, 0.5}, {1, 1.0, 0.6}}, 2);
    if (!g[0] || g[1]) return {false, "deviation gate at 0.5 / 0.6"};
    // Chain q0 <- q1 <- q2: q0 failing zeroes both consequents.
    nbq::BenchInstance in;
    in.id = "chain";
    in.target_duration = 10;
    in.slices.push_back({10.0, "", {}, {}, {}, "", ""});
    for (int i = 0; i < 3; ++i) {
        nbq::Problem p;
        p.id = "q" + std::to_string(i);
        p.axis = "action_order";
        p.group = nbq::Group::event_causality;
        if (i > 0) p.prerequisite = "q" + std::to_string(i - 1);
        in.problems.push_back(p);
    }
    const auto r = nbq::score(in, {{"q0", false}, {"q1", true}, {"q2", true}});
    if (r.problem_scores.at("q1") != 0.0 || r.problem_scores.at("q2") != 0.0) return {false, "chain not zeroed"};
    return {true, "50 generated instances match the reference within 1e-12; Likert 1->0, 5->1; gate 0.5 valid, "
                  "0.6 invalid; chained prerequisites zero transitively"};
}

// ---- 9 -------------------------------------------------------------------------------

Outcome determinism_and_replay() {
    const auto anchor = load_anchor();
    const std::string intent =
        "Mara walks the pier. She finds the lantern. She lights it. She looks out to sea. A boat appears. "
        "She waves.";
    std::string timeline, state_bytes, report;
    app::RunBundle keep;
    for (int w : {1, 4, 16}) {
        config::Config c;
        c.set("backend", "mock", config::Source::flag);
        c.set("engine.concurrency", std::to_string(w), config::Source::flag);
        c.set("log.level", "error", config::Source::flag);
        auto b = app::execute(c, anchor, intent, 120);
        if (b.result.exit_code != engine::kExitOk) return {false, "W=" + std::to_string(w) + " exit " + std::to_string(b.result.exit_code)};
        const auto t = dump_canonical(engine::timeline_to_json(b.result));
        const auto s = b.result.final_state.serialize();
        const auto r = dump_canonical(engine::report_to_json(b.result));
        if (timeline.empty()) {
            timeline = t;
            state_bytes = s;
            report = r;
            keep = std::move(b);
        } else if (t != timeline || s != state_bytes || r != report) {
            return {false, "W=" + std::to_string(w) + " differs from W=1"};
        }
    }
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / ("reca_accept_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    app::write_artifacts(keep, dir.string());
    const auto rep = app::replay(dir.string());
    fs::remove_all(dir);
    std::vector<std::string> a, b;
    for (const auto& s : keep.result.timeline) a.push_back(s.checksum);
    for (const auto& s : rep.bundle.result.timeline) b.push_back(s.checksum);
    if (rep.bundle.live_calls != 0) return {false, "replay issued " + std::to_string(rep.bundle.live_calls) + " live calls"};
    if (!rep.timeline_match || a != b) return {false, "replay checksums differ"};
    if (rep.bundle.result.final_state.serialize() != state_bytes) return {false, "replayed state differs"};
    return {true, "timeline, state and report byte-identical at W in {1,4,16}; replay: 0 live calls, " +
                      std::to_string(b.size()) + " checksums reproduced"};
}

// ---- 10 ------------------------------------------------------------------------------

// One-sided exact sign test: P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n) {
    double p = 0.0;
    for (int i = k; i <= n; ++i) {
        double c = 1.0;
        for (int j = 1; j <= i; ++j) c = c * (n - i + j) / j;
        p += c * std::pow(0.5, n);
    }
    return p;
}

Outcome duration_scaling() {
    sim::SimConfig sc;
    sc.carryover_decay = sim::load_decay(std::string(RECA_DATA_DIR) + "/simworld_decay.json");
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
    const std::vector<int> ds = {30, 60, 120, 240};
    const auto res = sim::run_experiment({sim::Controller::naive_chain, sim::Controller::reca}, ds, seeds, sc);
    const auto& naive = res.mean.at(sim::Controller::naive_chain);
    const auto& reca = res.mean.at(sim::Controller::reca);
    bool monotone = true;
    for (std::size_t i = 1; i < ds.size(); ++i) monotone = monotone && naive.at(ds[i]) <= naive.at(ds[i - 1]);
    std::map<std::uint64_t, double> n240, r240;
    for (const auto& r : res.records) {
        if (r.duration != 240) continue;
        (r.controller == sim::Controller::reca ? r240 : n240)[r.seed] = r.score;
    }
    int wins = 0, nonties = 0;
    for (auto s : seeds) {
        if (r240[s] == n240[s]) continue;
        ++nonties;
        if (r240[s] > n240[s]) ++wins;
    }
    const double p = nonties ? sign_test_p(wins, nonties) : 1.0;
    const double margin = reca.at(240) - naive.at(240);
    const bool ok = monotone && margin >= 0.15 && p < 0.01;
    std::string detail = "naive " + fmt("%.3f", naive.at(30)) + "/" + fmt("%.3f", naive.at(60)) + "/" +
                         fmt("%.3f", naive.at(120)) + "/" + fmt("%.3f", naive.at(240)) + (monotone ? " non-increasing" : " NOT monotone") +
                         "; 240 s margin " + fmt("%.3f", margin) + ", sign test " + std::to_string(wins) + "/" +
                         std::to_string(nonties) + " p=" + fmt("%.2e", p);
    return {ok, detail};
}

// ---- 11 ------------------------------------------------------------------------------

Outcome retry_protocol() {
    backend::CallRequest req;
    req.kind = backend::RequestKind::generate;
    req.request_id = "r1";
    req.model = "mock";
    req.prompt = "[current_beat]: test";
    req.duration_s = 5;
    req.seed = 7;
    const backend::RetryPolicy policy;
    {
        backend::MockTransport inner;
        backend::FaultInjectingTransport t(inner, {backend::Fault::transient, backend::Fault::rate_limited,
                                                   backend::Fault::transient, backend::Fault::transient});
        backend::SimClock clock;
        const auto out = backend::submit_and_poll(t, req, policy, clock);
        std::vector<std::int64_t> backoffs;
        for (const auto& e : out.record.polling_trace) {
            if (e.event == "backoff") backoffs.push_back(std::stoll(e.detail));
        }
        if (backoffs != std::vector<std::int64_t>{2000, 8000, 32000}) return {false, "backoff schedule differs"};
        if (out.ok || out.record.status != backend::TerminalStatus::timeout || t.network_calls() != 4) {
            return {false, "exhausted retries did not end as timeout after 4 submissions"};
        }
    }
    {
        backend::MockTransport inner;
        backend::FaultInjectingTransport t(inner, {backend::Fault::malformed});
        backend::SimClock clock;
        const auto out = backend::submit_and_poll(t, req, policy, clock, nullptr, [](const std::string& payload) {
            parse_json(payload, "payload");
        });
        const auto wires = t.received();
        if (!out.ok || wires.size() != 2 || !wires[1].contains("parser_error") || wires[0].contains("parser_error")) {
            return {false, "parse retry did not resubmit once with the parser error"};
        }
        backend::FaultInjectingTransport t2(inner, {backend::Fault::malformed, backend::Fault::malformed});
        const auto out2 = backend::submit_and_poll(t2, req, policy, clock, nullptr, [](const std::string& payload) {
            parse_json(payload, "payload");
        });
        if (out2.record.status != backend::TerminalStatus::parse_failed || t2.received().size() != 2) {
            return {false, "second malformed payload was retried"};
        }
    }
    {
        backend::MockTransport inner;
        backend::FaultInjectingTransport t(inner, {backend::Fault::safety});
        backend::SimClock clock;
        const auto out = backend::submit_and_poll(t, req, policy, clock);
        if (out.record.status != backend::TerminalStatus::rejected || t.network_calls() != 1 || !clock.sleeps().empty()) {
            return {false, "safety rejection was retried"};
        }
    }
    return {true, "backoff 2/8/32 s on the simulated clock; one parse retry with the error appended; safety "
                  "rejection terminal after 1 submission"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const Criterion all[] = {
        {1, "freshness formula", freshness_formula},
        {2, "recursion bound", recursion_bound},
        {3, "budget enforcement", budget_enforcement},
        {4, "greedy selector oracle", greedy_oracle_check},
        {5, "unit decomposition", unit_decomposition},
        {6, "scheduler makespan", scheduler_makespan},
        {7, "repair locality", repair_locality},
        {8, "NB-Q oracle equivalence", nbq_equivalence},
        {9, "determinism and replay", determinism_and_replay},
        {10, "simulated duration scaling", duration_scaling},
        {11, "retry protocol", retry_protocol},
    };
    set_log_sink({});
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(all)) - failed, std::size(all));
    return failed == 0 ? 0 : 1;
}
