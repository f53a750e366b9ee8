// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

// Wires a resolved configuration to concrete backends and owns the run
// directory layout shared by the C API and the command-line tool.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "config.hpp"
#include "engine.hpp"
#include "nbq.hpp"

namespace reca::app {

inline constexpr const char* kRunSchema = "reca-run/1";

/// Transport, generator and extractor for one run. With backend=replay the
/// manifest's recorded provider picks the extractor and its model id
/// becomes the capability id, so request digests match the recording.
struct Backend {
    std::unique_ptr<backend::Transport> transport;
    std::unique_ptr<backend::Generator> generator;
    std::unique_ptr<engine::Extractor> extractor;
    std::unique_ptr<plan::PlanProposer> proposer;  // null: rule-based
    backend::ReplayTransport* replay = nullptr;
    engine::RemoteExtractor* remote_extractor = nullptr;
    backend::RemoteProposer* remote_proposer = nullptr;
    std::string provider;  // mock | simworld | http
};

Backend make_backend(const config::RunConfig& rc, const state::ExternalState& anchor);

struct RunBundle {
    Json config = Json::object();  // flat resolved keys
    std::string intent;
    int total_duration = 0;
    state::ExternalState anchor;
    engine::RunResult result;
    std::vector<backend::CallRecord> aux_calls;  // planning and extraction
    std::size_t live_calls = 0;                  // replay misses
    std::string provider;
};

std::string plan_json(const config::Config& config, const state::ExternalState& anchor, const std::string& intent,
                      int total_duration);

/// Plans (unless `schedule` is given) and executes.
RunBundle execute(const config::Config& config, const state::ExternalState& anchor, const std::string& intent,
                  int total_duration, const std::optional<plan::ShotSchedule>& schedule = std::nullopt);

/// Re-runs one leaf subtree with the bundle's own configuration.
void repair(RunBundle& bundle, const std::string& leaf_id);

/// Every terminal call record: run calls in submission order, then the rest.
std::vector<backend::CallRecord> manifest_records(const RunBundle& bundle);
std::string manifest_jsonl(const RunBundle& bundle);

/// plan.json, prompts/, segments/, state/, trace.json, manifest.jsonl,
/// report.json, config.json and run.json under dir.
void write_artifacts(const RunBundle& bundle, const std::string& dir);

struct ReplayOutcome {
    RunBundle bundle;
    bool timeline_match = false;
};

/// Re-executes a run directory against its manifest with no fallback.
ReplayOutcome replay(const std::string& run_dir);

std::string run_id(const config::Config& config);

/// Scores against canned answers, or through the http judge when absent.
Json score(const config::Config& config, const Json& instance, const std::optional<Json>& answers);

/// Installs a stderr log sink filtered at the given level name.
void apply_log_level(const std::string& level);

}  // namespace reca::app
