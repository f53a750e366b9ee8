// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "runner.hpp"

#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>

#include "simworld.hpp"

namespace reca::app {

namespace fs = std::filesystem;

namespace {

LogLevel level_from_string(const std::string& s) {
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

const char* level_tag(LogLevel l) {
    switch (l) {
        case LogLevel::error: return "error";
        case LogLevel::warn: return "warn";
        case LogLevel::info: return "info";
        case LogLevel::debug: return "debug";
    }
    return "?";
}

config::Config config_from_flat(const Json& flat) {
    require(flat.is_object(), ErrorCode::schema, "config.json: expected an object");
    config::Config c;
    for (const auto& [k, v] : flat.items()) {
        require(v.is_string(), ErrorCode::schema, "config.json/" + k + ": expected a string");
        c.set(k, v.get<std::string>(), config::Source::file);
    }
    return c;
}

}  // namespace

void apply_log_level(const std::string& level) {
    const LogLevel max = level_from_string(level);
    set_log_sink([max](LogLevel l, const std::string& msg) {
        if (l <= max) std::cerr << "[reca:" << level_tag(l) << "] " << msg << '\n';
    });
}

Backend make_backend(const config::RunConfig& rc, const state::ExternalState& anchor) {
    Backend b;
    auto cap = rc.capability;
    b.provider = rc.backend;
    if (rc.backend == "replay") {
        auto rt = std::make_unique<backend::ReplayTransport>(backend::load_manifest(rc.manifest));
        b.replay = rt.get();
        b.provider = rt->provider() == "replay" ? "mock" : rt->provider();
        if (!rt->model_id().empty()) cap.backend_id = rt->model_id();
        b.transport = std::move(rt);
    } else if (rc.backend == "mock") {
        b.transport = std::make_unique<backend::MockTransport>(cap);
    } else if (rc.backend == "simworld") {
        b.transport = std::make_unique<sim::SimTransport>(sim::world_from_state(anchor), rc.sim, cap);
    } else {
        b.transport = std::make_unique<backend::HttpTransport>(rc.http);
    }
    // Only a live http backend waits in real time.
    const auto clocks = rc.backend == "http" ? backend::wall_clock_factory() : backend::sim_clock_factory();
    b.generator = std::make_unique<backend::TransportGenerator>(*b.transport, cap, rc.retry, clocks);
    if (b.provider == "simworld") {
        b.extractor = std::make_unique<sim::SimExtractor>();
    } else if (b.provider == "http") {
        auto ex = std::make_unique<engine::RemoteExtractor>(*b.transport, rc.retry, rc.http.model, clocks);
        b.remote_extractor = ex.get();
        b.extractor = std::move(ex);
        auto pr = std::make_unique<backend::RemoteProposer>(*b.transport, rc.retry, rc.http.model, clocks);
        b.remote_proposer = pr.get();
        b.proposer = std::move(pr);
    } else {
        b.extractor = std::make_unique<engine::MockExtractor>();
    }
    return b;
}

std::string plan_json(const config::Config& config, const state::ExternalState& anchor, const std::string& intent,
                      int total_duration) {
    const auto rc = config::to_run_config(config);
    apply_log_level(rc.log_level);
    auto b = make_backend(rc, anchor);
    plan::RuleProposer rule;
    auto pc = rc.engine.plan;
    pc.quantum = b.generator->capability().tau_g;
    return plan::serialize(plan::plan(anchor, intent, total_duration, pc, b.proposer ? *b.proposer : rule));
}

namespace {

void collect_aux(const Backend& b, RunBundle& out) {
    if (b.remote_proposer) {
        for (const auto& r : b.remote_proposer->records()) out.aux_calls.push_back(r);
    }
    if (b.remote_extractor) {
        for (auto& r : b.remote_extractor->records()) out.aux_calls.push_back(std::move(r));
    }
    if (b.replay) out.live_calls += b.replay->misses();
}

}  // namespace

RunBundle execute(const config::Config& config, const state::ExternalState& anchor, const std::string& intent,
                  int total_duration, const std::optional<plan::ShotSchedule>& schedule) {
    const auto rc = config::to_run_config(config);
    apply_log_level(rc.log_level);
    auto b = make_backend(rc, anchor);
    RunBundle out;
    out.config = config.to_json();
    out.intent = intent;
    out.total_duration = total_duration;
    out.anchor = anchor;
    out.provider = b.provider;
    if (schedule) {
        out.result = engine::run_schedule(anchor, *schedule, rc.engine, *b.generator, *b.extractor);
    } else {
        out.result = engine::run(anchor, intent, total_duration, rc.engine, *b.generator, *b.extractor,
                                 b.proposer.get());
    }
    collect_aux(b, out);
    return out;
}

void repair(RunBundle& bundle, const std::string& leaf_id) {
    const auto config = config_from_flat(bundle.config);
    const auto rc = config::to_run_config(config);
    auto b = make_backend(rc, bundle.anchor);
    bundle.result = engine::repair_subtree(bundle.result, leaf_id, rc.engine, *b.generator, *b.extractor);
    collect_aux(b, bundle);
}

std::vector<backend::CallRecord> manifest_records(const RunBundle& bundle) {
    std::vector<backend::CallRecord> out = bundle.result.calls;
    out.insert(out.end(), bundle.aux_calls.begin(), bundle.aux_calls.end());
    return out;
}

std::string manifest_jsonl(const RunBundle& bundle) {
    std::string out;
    for (const auto& r : manifest_records(bundle)) out += backend::record_to_json(r).dump() + "\n";
    return out;
}

void write_artifacts(const RunBundle& bundle, const std::string& dir) {
    const fs::path root(dir);
    std::error_code ec;
    for (const char* sub : {"prompts", "segments", "state"}) {
        fs::create_directories(root / sub, ec);
        require(!ec, ErrorCode::io, "cannot create " + (root / sub).string() + ": " + ec.message());
    }
    const auto& r = bundle.result;
    const auto put = [&](const fs::path& p, const Json& doc) { write_file(p.string(), dump_canonical(doc) + "\n"); };

    if (!r.schedule.shots.empty()) put(root / "plan.json", plan::to_json(r.schedule));
    for (const auto& t : r.tasks) {
        auto it = r.outcomes.find(t.id);
        if (it == r.outcomes.end() || it->second.status == engine::LeafOutcome::Status::cancelled) continue;
        put(root / "prompts" / (t.id + ".json"), alloc::to_json(t.prompt));
    }
    std::map<std::string, const std::string*> payloads;
    for (const auto& c : r.calls) {
        if (!c.checksum.empty()) payloads.emplace(c.checksum, &c.output);
    }
    for (const auto& s : r.timeline) {
        auto it = payloads.find(s.checksum);
        if (it != payloads.end()) write_file((root / "segments" / (s.checksum + ".bin")).string(), *it->second);
    }
    put(root / "segments" / "timeline.json", engine::timeline_to_json(r));
    put(root / "state" / "anchor.json", bundle.anchor.to_json());
    put(root / "state" / "final.json", r.final_state.to_json());
    put(root / "trace.json", engine::trace_to_json(r));
    write_file((root / "manifest.jsonl").string(), manifest_jsonl(bundle));
    put(root / "report.json", engine::report_to_json(r));
    put(root / "config.json", bundle.config);
    Json run;
    run["schema"] = kRunSchema;
    run["intent"] = bundle.intent;
    run["total_duration"] = bundle.total_duration;
    run["provider"] = bundle.provider;
    run["exit_code"] = r.exit_code;
    put(root / "run.json", run);
}

ReplayOutcome replay(const std::string& run_dir) {
    const fs::path root(run_dir);
    auto config = config_from_flat(parse_json(read_file((root / "config.json").string()), "config.json"));
    config.set("backend", "replay", config::Source::flag);
    config.set("paths.manifest", (root / "manifest.jsonl").string(), config::Source::flag);
    const auto run = parse_json(read_file((root / "run.json").string()), "run.json");
    expect_schema(run, kRunSchema);
    const auto anchor = state::ExternalState::from_json(
        parse_json(read_file((root / "state" / "anchor.json").string()), "state/anchor.json"));
    std::optional<plan::ShotSchedule> schedule;
    if (fs::exists(root / "plan.json")) {
        schedule = plan::schedule_from_json(parse_json(read_file((root / "plan.json").string()), "plan.json"));
    }
    ReplayOutcome out;
    out.bundle = execute(config, anchor, run.at("intent").get<std::string>(), run.at("total_duration").get<int>(),
                         schedule);
    const auto recorded = parse_json(read_file((root / "segments" / "timeline.json").string()), "timeline.json");
    out.timeline_match = dump_canonical(recorded) == dump_canonical(engine::timeline_to_json(out.bundle.result));
    return out;
}

std::string run_id(const config::Config& config) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return std::string(buf) + "-" + config.hash();
}

Json score(const config::Config& config, const Json& instance, const std::optional<Json>& answers) {
    const auto rc = config::to_run_config(config);
    apply_log_level(rc.log_level);
    const auto inst = nbq::instance_from_json(instance);
    nbq::AnswerSet set;
    std::optional<backend::StatusHistogram> calls;
    if (answers) {
        set = nbq::answers_from_json(*answers);
    } else {
        require(rc.backend == "http", ErrorCode::precondition,
                "remote judging needs backend=http; pass an answers document otherwise");
        backend::HttpTransport transport(rc.http);
        nbq::RemoteJudge judge(transport, rc.retry, rc.http.model, backend::wall_clock_factory());
        set = judge.answer(inst);
        calls = judge.calls();
    }
    auto report = nbq::score(inst, set, rc.gate);
    report.judge_calls = calls;
    return nbq::to_json(report);
}

}  // namespace reca::app
