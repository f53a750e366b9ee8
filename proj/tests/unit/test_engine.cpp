// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>

#include "engine.hpp"

using namespace reca;
using namespace reca::engine;

namespace {

state::ExternalState anchor() {
    return state::ExternalState::from_json(
        parse_json(read_file(std::string(RECA_DATA_DIR) + "/anchor_example.json"), "anchor"));
}

state::Observation seen(std::string key, std::string value) {
    state::Observation o;
    o.key = std::move(key);
    o.observed_value = std::move(value);
    o.verified = true;
    return o;
}

struct MockRig {
    backend::MockTransport transport;
    backend::TransportGenerator generator;
    MockExtractor extractor;
    explicit MockRig(backend::GeneratorCapability cap = {}) : transport(cap), generator(transport, cap) {}
};

plan::ShotSpec shot(int index, int duration, std::optional<int> prev = std::nullopt) {
    plan::ShotSpec s;
    s.index = index;
    s.goal = "beat " + std::to_string(index);
    s.duration = duration;
    s.prev = prev;
    s.boundary_mode = prev ? plan::BoundaryMode::prev_last_frame : plan::BoundaryMode::anchor;
    return s;
}

std::vector<SchedTask> tasks_of(int n, std::int64_t ms, bool chain) {
    std::vector<SchedTask> out;
    for (int i = 0; i < n; ++i) {
        SchedTask t;
        t.id = "t" + std::to_string(100 + i);
        t.duration_ms = ms;
        if (chain && i > 0) t.deps = {out.back().id};
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("five seconds is a single leaf") {
    MockRig rig;
    const auto r = run(anchor(), "Mara lifts the lantern", 5, EngineConfig{}, rig.generator, rig.extractor);
    CHECK(r.exit_code == kExitOk);
    CHECK(r.trace.leaf_count == 1);
    REQUIRE(r.timeline.size() == 1);
    CHECK(r.timeline[0].duration == 5);
    CHECK(r.timeline[0].start_ms == 0);
    CHECK(r.timeline[0].end_ms == 5000);
}

TEST_CASE("fifteen seconds is three segments") {
    MockRig rig;
    const auto r = run(anchor(), "Mara walks to the pier. She lifts the lantern", 15, EngineConfig{}, rig.generator,
                       rig.extractor);
    CHECK(r.exit_code == kExitOk);
    CHECK(r.timeline.size() == 3);
    int total = 0;
    for (const auto& s : r.timeline) total += s.duration;
    CHECK(total == 15);
    for (const auto& [id, o] : r.outcomes) CHECK(o.status == LeafOutcome::Status::ok);
}

TEST_CASE("three hundred seconds at five per call stays within 60 leaves") {
    MockRig rig;
    EngineConfig cfg;
    cfg.concurrency = 8;
    const auto r = run(anchor(), "a. b. c. d. e. f. g. h. i. j. k. l. m. n. o. p. q. r. s. t. u. v", 300, cfg,
                       rig.generator, rig.extractor);
    CHECK(r.exit_code == kExitOk);
    CHECK(r.trace.leaf_count <= 60);
    CHECK(r.trace.generator_calls >= r.trace.leaf_count);
}

TEST_CASE("an 18-shot 259 s plan with explicit segments replays as 30 calls") {
    const std::vector<std::vector<int>> units = {{10}, {5},     {6},      {6},      {10, 9, 9}, {7, 7},
                                                 {8, 8, 8}, {12}, {9},    {8, 6},   {10, 8},    {9, 9},
                                                 {11, 11},  {11, 9}, {7, 9}, {7},    {10, 8},    {12}};
    plan::ShotSchedule s;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const int idx = static_cast<int>(i) + 1;
        auto sh = shot(idx, std::accumulate(units[i].begin(), units[i].end(), 0),
                       i ? std::optional<int>(idx - 1) : std::nullopt);
        sh.units = units[i];
        s.total_duration += sh.duration;
        s.shots.push_back(std::move(sh));
    }
    REQUIRE(s.total_duration == 259);
    backend::GeneratorCapability cap;
    cap.tau_g = 12;
    MockRig rig(cap);
    EngineConfig cfg;
    const auto r = run_schedule(anchor(), s, cfg, rig.generator, rig.extractor);
    CHECK(r.exit_code == kExitOk);
    CHECK(r.trace.leaf_count == 30);
    CHECK(r.timeline.size() == 30);
    int total = 0;
    for (const auto& seg : r.timeline) total += seg.duration;
    CHECK(total == 259);
    CHECK(r.timeline.back().end_ms == 259000);
}

TEST_CASE("verify counts missing and disagreeing keys") {
    const std::map<std::string, std::string> planned = {{"a", "1"}, {"b", "2"}, {"c", "3"}, {"d", "4"}};
    const std::vector<state::Observation> exact = {seen("a", "1"), seen("b", "2"), seen("c", "3"), seen("d", "4")};
    CHECK(verify(planned, exact) == 0.0);
    CHECK(verify(planned, {}) == 1.0);
    const std::vector<state::Observation> one_off = {seen("a", "1"), seen("b", "2"), seen("c", "x"), seen("d", "4")};
    CHECK(verify(planned, one_off) == 0.25);
    auto unverified = exact;
    unverified[0].verified = false;
    CHECK(verify(planned, unverified) == 0.25);
    CHECK(verify({}, exact) == 0.0);
}

TEST_CASE("repair policy table") {
    MismatchReport r;
    r.duration = 5;
    r.keys.push_back({"coat", "red", std::string("blue"), false, true});
    CHECK(repair(r, 1, 2, 5) == RepairAction::RepackPrompt);
    CHECK(repair(r, 3, 2, 5) == RepairAction::GiveUp);

    MismatchReport art;
    art.artifact = true;
    CHECK(repair(art, 1, 2, 5) == RepairAction::RegenerateUnit);

    MismatchReport vis;
    vis.duration = 2;
    vis.keys.push_back({"coat", "red", std::string("blue"), true, true});
    CHECK(repair(vis, 1, 2, 5) == RepairAction::ReanchorState);

    MismatchReport mixed;
    mixed.duration = 5;
    mixed.keys.push_back({"coat", "red", std::string("blue"), true, true});
    mixed.keys.push_back({"lamp", "lit", std::nullopt, true, false});
    CHECK(repair(mixed, 1, 2, 5) == RepairAction::SplitUnit);
    mixed.duration = 2;
    CHECK(repair(mixed, 1, 2, 5) == RepairAction::ReanchorState);
}

TEST_CASE("identical independent tasks pack into waves") {
    const auto t = tasks_of(12, 5000, false);
    CHECK(schedule(t, 4, 0).makespan_ms == 15000);
    CHECK(schedule(t, 4, 700).makespan_ms == 15000);
}

TEST_CASE("a chain is bound by its critical path") {
    const auto t = tasks_of(3, 5000, true);
    for (int w : {1, 2, 8}) CHECK(schedule(t, w, 300).makespan_ms == 15000 + 2 * 300);
}

TEST_CASE("one worker runs everything back to back") {
    const auto chain = tasks_of(4, 3000, true);
    CHECK(schedule(chain, 1, 250).makespan_ms == 12000 + 3 * 250);
    const auto flat = tasks_of(5, 2000, false);
    CHECK(schedule(flat, 1, 250).makespan_ms == 10000);
}

TEST_CASE("scheduler ties go to the smaller id and cycles are rejected") {
    auto t = tasks_of(3, 1000, false);
    std::reverse(t.begin(), t.end());
    const auto r = schedule(t, 1, 0);
    CHECK(r.order == std::vector<std::string>{"t100", "t101", "t102"});
    auto cyc = tasks_of(2, 1000, true);
    cyc[0].deps = {cyc[1].id};
    CHECK_THROWS_AS(schedule(cyc, 2, 0), Error);
}

TEST_CASE("leaf DAG and descendants") {
    plan::ShotSchedule s;
    s.shots = {shot(1, 10), shot(2, 10, 1), shot(3, 5)};
    s.total_duration = 25;
    const auto tasks = build_leaf_tasks(s, 5);
    REQUIRE(tasks.size() == 5);
    CHECK(tasks[0].id == "s001u01");
    CHECK(tasks[1].deps == std::vector<std::string>{"s001u01"});
    CHECK(tasks[2].deps == std::vector<std::string>{"s001u02"});
    CHECK(tasks[4].deps.empty());
    CHECK(descendants(tasks, "s001u02") == std::set<std::string>{"s002u01", "s002u02"});
    CHECK(descendants(tasks, "s003u01").empty());
}

TEST_CASE("runs are identical across concurrency levels") {
    std::string timeline, state;
    for (int w : {1, 3, 16}) {
        MockRig rig;
        EngineConfig cfg;
        cfg.concurrency = w;
        const auto r = run(anchor(), "Mara walks. She stops. She lifts the lantern. She looks out", 40, cfg,
                           rig.generator, rig.extractor);
        REQUIRE(r.exit_code == kExitOk);
        const auto t = dump_canonical(timeline_to_json(r));
        const auto st = r.final_state.serialize();
        if (timeline.empty()) {
            timeline = t;
            state = st;
        }
        CHECK(t == timeline);
        CHECK(st == state);
    }
}

TEST_CASE("subtree repair reuses unaffected leaves") {
    plan::ShotSchedule s;
    s.shots = {shot(1, 10), shot(2, 5, 1), shot(3, 10)};
    s.total_duration = 25;
    MockRig rig;
    EngineConfig cfg;
    const auto first = run_schedule(anchor(), s, cfg, rig.generator, rig.extractor);
    REQUIRE(first.exit_code == kExitOk);
    const auto again = repair_subtree(first, "s001u02", cfg, rig.generator, rig.extractor);
    CHECK(again.exit_code == kExitOk);
    CHECK(again.dispatched == std::set<std::string>{"s001u02", "s002u01"});
    for (const auto& id : {"s001u01", "s003u01", "s003u02"}) {
        CHECK(dump_canonical(backend::record_to_json(again.outcomes.at(id).calls.at(0))) ==
              dump_canonical(backend::record_to_json(first.outcomes.at(id).calls.at(0))));
    }
}

TEST_CASE("report and timeline documents carry their schemas") {
    MockRig rig;
    const auto r = run(anchor(), "Mara waits", 10, EngineConfig{}, rig.generator, rig.extractor);
    CHECK(trace_to_json(r).at("schema") == kTraceSchema);
    CHECK(timeline_to_json(r).at("schema") == kTimelineSchema);
    CHECK(report_to_json(r).at("schema") == kReportSchema);
}

TEST_CASE("engine config validation") {
    EngineConfig c;
    c.concurrency = 0;
    CHECK_THROWS_AS(validate(c), Error);
    c = {};
    c.eta = 1.5;
    CHECK_THROWS_AS(validate(c), Error);
}
