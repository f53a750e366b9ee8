// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "reca/reca.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "config.hpp"
#include "runner.hpp"
#include "simworld.hpp"

struct reca_config {
    reca::config::Config config;
};

struct reca_state {
    reca::state::ExternalState state;
};

struct reca_run {
    reca::app::RunBundle bundle;
};

namespace {

thread_local std::string g_last_error;

reca_status_t status_for(reca::ErrorCode code) {
    using reca::ErrorCode;
    switch (code) {
        case ErrorCode::invalid_argument:
        case ErrorCode::config:
        case ErrorCode::cycle: return RECA_INVALID_ARG;
        case ErrorCode::parse:
        case ErrorCode::schema: return RECA_PARSE;
        case ErrorCode::precondition:
        case ErrorCode::budget_too_small: return RECA_PRECONDITION;
        case ErrorCode::capability: return RECA_CAPABILITY;
        case ErrorCode::planning: return RECA_PLANNING;
        case ErrorCode::backend: return RECA_BACKEND;
        case ErrorCode::io: return RECA_IO;
    }
    return RECA_INTERNAL;
}

reca_status_t set_error(reca_status_t status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

// Runs fn and converts any exception into a status plus last error.
template <class F>
reca_status_t guarded(F&& fn) noexcept {
    try {
        return fn();
    } catch (const reca::Error& e) {
        return set_error(status_for(e.code()), std::string(reca::to_string(e.code())) + ": " + e.what());
    } catch (const std::bad_alloc&) {
        return set_error(RECA_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return set_error(RECA_INTERNAL, e.what());
    } catch (...) {
        return set_error(RECA_INTERNAL, "unknown exception");
    }
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

reca_status_t out_string(char** out, const std::string& s) {
    *out = dup(s);
    return RECA_OK;
}

#define RECA_REQUIRE_ARG(cond)                                                  \
    do {                                                                        \
        if (!(cond)) return set_error(RECA_INVALID_ARG, "null argument: " #cond); \
    } while (0)

reca_status_t status_for_exit(int exit_code, const std::string& error) {
    switch (exit_code) {
        case reca::engine::kExitOk: return RECA_OK;
        case reca::engine::kExitPartial: return set_error(RECA_PARTIAL, "run finished with leaves that gave up");
        case reca::engine::kExitPlanning: return set_error(RECA_PLANNING, error.empty() ? "planning failed" : error);
        default: return set_error(RECA_BACKEND, error.empty() ? "backend failure" : error);
    }
}

std::string canonical(const reca::Json& doc) { return reca::dump_canonical(doc); }

}  // namespace

extern "C" {

const char* reca_version(void) { return "0.1.0"; }

const char* reca_status_name(reca_status_t status) {
    switch (status) {
        case RECA_OK: return "ok";
        case RECA_INVALID_ARG: return "invalid_argument";
        case RECA_PARSE: return "parse";
        case RECA_PRECONDITION: return "precondition";
        case RECA_CAPABILITY: return "capability";
        case RECA_PLANNING: return "planning";
        case RECA_BACKEND: return "backend";
        case RECA_IO: return "io";
        case RECA_PARTIAL: return "partial";
        case RECA_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* reca_last_error(void) { return g_last_error.c_str(); }

void reca_string_free(char* s) { std::free(s); }

// ---- configuration ----------------------------------------------------------------

reca_status_t reca_config_create(const char* file_path, reca_config_t** out) {
    RECA_REQUIRE_ARG(out);
    *out = nullptr;
    return guarded([&] {
        std::optional<std::string> path;
        if (file_path && *file_path) path = file_path;
        auto cfg = reca::config::resolve({}, path);
        *out = new reca_config{std::move(cfg)};
        return RECA_OK;
    });
}

reca_status_t reca_config_set(reca_config_t* config, const char* key, const char* value) {
    RECA_REQUIRE_ARG(config && key && value);
    return guarded([&] {
        config->config.set(key, value, reca::config::Source::flag);
        return RECA_OK;
    });
}

reca_status_t reca_config_validate(const reca_config_t* config) {
    RECA_REQUIRE_ARG(config);
    return guarded([&] {
        reca::config::to_run_config(config->config);
        return RECA_OK;
    });
}

reca_status_t reca_config_get(const reca_config_t* config, const char* key, char** out_value) {
    RECA_REQUIRE_ARG(config && key && out_value);
    return guarded([&] { return out_string(out_value, config->config.get(key)); });
}

reca_status_t reca_config_to_json(const reca_config_t* config, char** out_json) {
    RECA_REQUIRE_ARG(config && out_json);
    return guarded([&] { return out_string(out_json, canonical(config->config.to_json())); });
}

reca_status_t reca_config_describe(char** out_text) {
    RECA_REQUIRE_ARG(out_text);
    return guarded([&] { return out_string(out_text, reca::config::help_text()); });
}

void reca_config_free(reca_config_t* config) { delete config; }

// ---- external state -----------------------------------------------------------------

reca_status_t reca_state_from_json(const char* json, reca_state_t** out) {
    RECA_REQUIRE_ARG(json && out);
    *out = nullptr;
    return guarded([&] {
        auto st = reca::state::ExternalState::from_json(reca::parse_json(json, "state"));
        *out = new reca_state{std::move(st)};
        return RECA_OK;
    });
}

reca_status_t reca_state_to_json(const reca_state_t* state, char** out_json) {
    RECA_REQUIRE_ARG(state && out_json);
    return guarded([&] { return out_string(out_json, state->state.serialize()); });
}

reca_status_t reca_state_admit(reca_state_t* state, const char* record_json, double epsilon, int* out_accepted) {
    RECA_REQUIRE_ARG(state && record_json && out_accepted);
    return guarded([&] {
        const auto rec = reca::state::record_from_json(reca::parse_json(record_json, "record"));
        *out_accepted = state->state.admit(rec, epsilon).accepted() ? 1 : 0;
        return RECA_OK;
    });
}

reca_status_t reca_state_freshness(const reca_state_t* state, const char* key, int64_t step, double alpha,
                                   double* out) {
    RECA_REQUIRE_ARG(state && key && out);
    return guarded([&] {
        const auto* rec = state->state.find(key);
        reca::require(rec != nullptr, reca::ErrorCode::invalid_argument, std::string("unknown key ") + key);
        *out = reca::state::freshness(*rec, step, alpha);
        return RECA_OK;
    });
}

void reca_state_free(reca_state_t* state) { delete state; }

// ---- plan and run ---------------------------------------------------------------------

reca_status_t reca_plan(const reca_config_t* config, const reca_state_t* anchor, const char* intent,
                        int total_duration, char** out_plan_json) {
    RECA_REQUIRE_ARG(config && anchor && intent && out_plan_json);
    return guarded([&] {
        return out_string(out_plan_json, reca::app::plan_json(config->config, anchor->state, intent, total_duration));
    });
}

reca_status_t reca_run(const reca_config_t* config, const reca_state_t* anchor, const char* intent,
                       int total_duration, const char* plan_json, reca_run_t** out) {
    RECA_REQUIRE_ARG(config && anchor && intent && out);
    *out = nullptr;
    return guarded([&] {
        std::optional<reca::plan::ShotSchedule> schedule;
        if (plan_json) schedule = reca::plan::schedule_from_json(reca::parse_json(plan_json, "plan"));
        auto run = std::make_unique<reca_run_t>();
        run->bundle = reca::app::execute(config->config, anchor->state, intent, total_duration, schedule);
        const int code = run->bundle.result.exit_code;
        const std::string error = run->bundle.result.error;
        *out = run.release();
        return status_for_exit(code, error);
    });
}

int reca_run_exit_code(const reca_run_t* run) { return run ? run->bundle.result.exit_code : -1; }

size_t reca_run_leaf_count(const reca_run_t* run) { return run ? run->bundle.result.tasks.size() : 0; }

reca_status_t reca_run_plan_json(const reca_run_t* run, char** out) {
    RECA_REQUIRE_ARG(run && out);
    return guarded([&] { return out_string(out, reca::plan::serialize(run->bundle.result.schedule)); });
}

reca_status_t reca_run_timeline_json(const reca_run_t* run, char** out) {
    RECA_REQUIRE_ARG(run && out);
    return guarded([&] { return out_string(out, canonical(reca::engine::timeline_to_json(run->bundle.result))); });
}

reca_status_t reca_run_trace_json(const reca_run_t* run, char** out) {
    RECA_REQUIRE_ARG(run && out);
    return guarded([&] { return out_string(out, canonical(reca::engine::trace_to_json(run->bundle.result))); });
}

reca_status_t reca_run_state_json(const reca_run_t* run, char** out) {
    RECA_REQUIRE_ARG(run && out);
    return guarded([&] { return out_string(out, run->bundle.result.final_state.serialize()); });
}

reca_status_t reca_run_report_json(const reca_run_t* run, char** out) {
    RECA_REQUIRE_ARG(run && out);
    return guarded([&] { return out_string(out, canonical(reca::engine::report_to_json(run->bundle.result))); });
}

reca_status_t reca_run_manifest_jsonl(const reca_run_t* run, char** out) {
    RECA_REQUIRE_ARG(run && out);
    return guarded([&] { return out_string(out, reca::app::manifest_jsonl(run->bundle)); });
}

reca_status_t reca_run_write_artifacts(const reca_run_t* run, const char* dir) {
    RECA_REQUIRE_ARG(run && dir);
    return guarded([&] {
        reca::app::write_artifacts(run->bundle, dir);
        return RECA_OK;
    });
}

reca_status_t reca_run_repair(reca_run_t* run, const char* leaf_id) {
    RECA_REQUIRE_ARG(run && leaf_id);
    return guarded([&] {
        reca::app::repair(run->bundle, leaf_id);
        return status_for_exit(run->bundle.result.exit_code, run->bundle.result.error);
    });
}

void reca_run_free(reca_run_t* run) { delete run; }

reca_status_t reca_run_id(const reca_config_t* config, char** out) {
    RECA_REQUIRE_ARG(config && out);
    return guarded([&] { return out_string(out, reca::app::run_id(config->config)); });
}

// ---- replay, simulation, scoring --------------------------------------------------------

reca_status_t reca_replay(const char* run_dir, reca_run_t** out, size_t* out_live_calls, int* out_match) {
    RECA_REQUIRE_ARG(run_dir && out);
    *out = nullptr;
    return guarded([&] {
        auto outcome = reca::app::replay(run_dir);
        if (out_live_calls) *out_live_calls = outcome.bundle.live_calls;
        if (out_match) *out_match = outcome.timeline_match ? 1 : 0;
        const int code = outcome.bundle.result.exit_code;
        const std::string error = outcome.bundle.result.error;
        *out = new reca_run_t{std::move(outcome.bundle)};
        return status_for_exit(code, error);
    });
}

reca_status_t reca_simulate(const reca_config_t* config, const int* durations, size_t n_durations, size_t n_seeds,
                            char** out_csv, char** out_summary_json, char** out_svg) {
    RECA_REQUIRE_ARG(config && durations && n_durations > 0 && n_seeds > 0);
    return guarded([&] {
        const auto rc = reca::config::to_run_config(config->config);
        reca::app::apply_log_level(rc.log_level);
        std::vector<int> ds(durations, durations + n_durations);
        for (int d : ds) reca::require(d > 0, reca::ErrorCode::invalid_argument, "durations must be positive");
        std::vector<std::uint64_t> seeds;
        for (size_t i = 1; i <= n_seeds; ++i) seeds.push_back(i);
        using reca::sim::Controller;
        const auto result = reca::sim::run_experiment({Controller::naive_chain, Controller::reca}, ds, seeds,
                                                      rc.sim, rc.engine);
        // Ownership transfers only once every output is built.
        std::string csv = reca::sim::to_csv(result);
        std::string summary = canonical(reca::sim::summary_json(result));
        std::string svg = reca::sim::to_svg(result);
        if (out_csv) *out_csv = dup(csv);
        if (out_summary_json) *out_summary_json = dup(summary);
        if (out_svg) *out_svg = dup(svg);
        return RECA_OK;
    });
}

reca_status_t reca_score(const reca_config_t* config, const char* instance_json, const char* answers_json,
                         char** out_report_json) {
    RECA_REQUIRE_ARG(config && instance_json && out_report_json);
    return guarded([&] {
        std::optional<reca::Json> answers;
        if (answers_json) answers = reca::parse_json(answers_json, "answers");
        const auto report =
            reca::app::score(config->config, reca::parse_json(instance_json, "instance"), answers);
        return out_string(out_report_json, canonical(report));
    });
}

reca_status_t reca_calibrate_decay(char** out_fixture_json) {
    RECA_REQUIRE_ARG(out_fixture_json);
    return guarded([&] {
        const auto doc = reca::sim::decay_fixture(reca::sim::default_anchors(), 42, 5);
        return out_string(out_fixture_json, doc.dump(2) + "\n");
    });
}

}  // extern "C"
