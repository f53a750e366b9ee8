// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

namespace reca::config {

const std::vector<KeySpec>& keys() {
    static const std::vector<KeySpec> k = {
        {"backend", "mock", "generator backend: mock, http, replay or simworld", ""},
        {"backend.tau_g", "5", "seconds per generator call (tau_G)", "operationalisation constant"},
        {"backend.b_g", "1000", "prompt tokens per generator call (B_G)", "operationalisation constant"},
        {"backend.width", "1280", "output width in pixels", ""},
        {"backend.height", "720", "output height in pixels", ""},
        {"backend.endpoint", "", "base URL of the http backend", ""},
        {"backend.api_key_env", "RECA_API_KEY", "environment variable holding the http bearer key", ""},
        {"backend.model", "", "model id sent with each request", ""},
        {"backend.region", "", "provider region recorded in manifests", ""},
        {"retry.backoff_ms", "2000,8000,32000", "backoff before each retry of a transient failure",
         "call protocol: three retries at 2, 8 and 32 s"},
        {"retry.parse_retries", "1", "resubmissions of a malformed response", "call protocol: one retry"},
        {"retry.poll_interval_ms", "1000", "delay between polls", ""},
        {"retry.poll_budget_ms", "600000", "total polling time before a call times out", ""},
        {"engine.concurrency", "4", "worker pool width W", ""},
        {"engine.eta", "0.25", "mismatch threshold for verification and reinjection", ""},
        {"engine.max_repairs", "2", "repair attempts per leaf", ""},
        {"engine.recursion_depth", "2", "decomposition depth (shots, then units)", ""},
        {"engine.alpha", "0.4", "freshness decay per step", "operationalisation constant"},
        {"engine.op_cost_ms", "0", "fixed cost per dependency edge in the makespan model", ""},
        {"engine.default_salience", "0.25", "salience of keys the plan does not mention", ""},
        {"planner.lambda_tr", "1", "weight of the transition reward", ""},
        {"planner.lambda_unsup", "2", "weight of the unsupported-commitment penalty", ""},
        {"planner.epsilon", "0.5", "support threshold for admitting commitments", "operationalisation constant"},
        {"planner.beam_width", "4", "plans kept per search round", ""},
        {"planner.max_shots", "64", "upper bound on shots per plan", ""},
        {"planner.refine_rounds", "3", "refinement rounds after the initial proposals", ""},
        {"alloc.budget", "", "prompt budget override; never above backend.b_g", ""},
        {"alloc.lambda_red", "0.5", "redundancy penalty weight", ""},
        {"nbq.deviation_threshold", "0.5", "duration deviation above which a slice is invalid",
         "segmentation gate default of +-50%"},
        {"nbq.confidence_threshold", "0.5", "alignment confidence below which a slice is invalid", ""},
        {"sim.drift_prob", "0", "per-segment mutation probability of unrendered variables", ""},
        {"sim.decay_fixture", "", "decay rates file; empty uses the compiled-in calibration", ""},
        {"sim.vars_per_dimension", "6", "variables per world dimension", ""},
        {"paths.out_dir", "runs", "directory receiving run directories", ""},
        {"paths.manifest", "", "manifest replayed by the replay backend", ""},
        {"seed", "0", "base seed for every stochastic component", ""},
        {"log.level", "info", "error, warn, info or debug", ""},
    };
    return k;
}

const char* to_string(Source s) noexcept {
    switch (s) {
        case Source::defaults: return "default";
        case Source::env: return "env";
        case Source::file: return "file";
        case Source::flag: return "flag";
    }
    return "?";
}

std::string env_name(const std::string& key) {
    std::string out = "RECA_";
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

Config::Config() {
    for (const auto& k : keys()) values_[k.key] = {k.default_value, Source::defaults};
}

void Config::set(const std::string& key, const std::string& value, Source source) {
    auto it = values_.find(key);
    require(it != values_.end(), ErrorCode::config, "unknown config key '" + key + "'");
    it->second = {value, source};
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), ErrorCode::config, "unknown config key '" + key + "'");
    return it->second.first;
}

Source Config::source(const std::string& key) const {
    get(key);
    return values_.at(key).second;
}

int Config::get_int(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::config, key + ": expected an integer, got '" + v + "'");
}

double Config::get_double(const std::string& key) const {
    const auto& v = get(key);
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::config, key + ": expected a number, got '" + v + "'");
}

bool Config::get_bool(const std::string& key) const {
    const auto v = to_lower(get(key));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorCode::config, key + ": expected a boolean, got '" + v + "'");
}

std::optional<int> Config::get_optional_int(const std::string& key) const {
    if (get(key).empty()) return std::nullopt;
    return get_int(key);
}

Json Config::to_json() const {
    Json doc = Json::object();
    for (const auto& k : keys()) doc[k.key] = values_.at(k.key).first;
    return doc;
}

std::string Config::hash() const { return sha256_hex(dump_canonical(to_json())).substr(0, 8); }

std::map<std::string, std::string> flatten_file(const Json& doc) {
    require(doc.is_object(), ErrorCode::config, "config file must hold an object");
    std::map<std::string, std::string> out;
    std::function<void(const Json&, const std::string&)> walk = [&](const Json& node, const std::string& prefix) {
        for (const auto& [k, v] : node.items()) {
            const auto key = prefix.empty() ? k : prefix + "." + k;
            if (v.is_object()) {
                walk(v, key);
            } else if (v.is_string()) {
                out[key] = v.get<std::string>();
            } else if (v.is_array()) {
                std::string joined;
                for (const auto& e : v) joined += (joined.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
                out[key] = joined;
            } else if (v.is_null()) {
                out[key] = "";
            } else {
                out[key] = v.dump();
            }
        }
    };
    walk(doc, "");
    return out;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v) return std::nullopt;
        return std::string(v);
    };
}

Config resolve(const std::map<std::string, std::string>& flags, const std::optional<std::string>& file_path,
               const EnvLookup& env) {
    Config c;
    if (env) {
        for (const auto& k : keys()) {
            if (auto v = env(env_name(k.key))) c.set(k.key, *v, Source::env);
        }
    }
    if (file_path) {
        std::string text;
        try {
            text = read_file(*file_path);
        } catch (const Error& e) {
            fail(ErrorCode::config, std::string("config file: ") + e.what());
        }
        Json doc;
        try {
            doc = parse_json(text, *file_path);
        } catch (const Error& e) {
            fail(ErrorCode::config, e.what());
        }
        for (const auto& [k, v] : flatten_file(doc)) c.set(k, v, Source::file);
    }
    for (const auto& [k, v] : flags) c.set(k, v, Source::flag);
    return c;
}

namespace {

std::vector<std::int64_t> parse_backoff(const std::string& text) {
    std::vector<std::int64_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            auto v = std::stoll(part, &used);
            require(used == part.size() && v >= 0, ErrorCode::config, "");
            out.push_back(v);
        } catch (const std::exception&) {
            fail(ErrorCode::config, "retry.backoff_ms: expected comma-separated non-negative integers");
        }
    }
    return out;
}

}  // namespace

RunConfig to_run_config(const Config& c) {
    RunConfig r;
    r.backend = c.get("backend");
    require(r.backend == "mock" || r.backend == "http" || r.backend == "replay" || r.backend == "simworld",
            ErrorCode::config, "backend must be mock, http, replay or simworld");
    r.capability.backend_id = r.backend == "http" ? c.get("backend.model") : r.backend;
    if (r.capability.backend_id.empty()) r.capability.backend_id = r.backend;
    r.capability.tau_g = c.get_int("backend.tau_g");
    r.capability.b_g = c.get_int("backend.b_g");
    r.capability.resolution = {c.get_int("backend.width"), c.get_int("backend.height")};
    try {
        backend::validate(r.capability);
    } catch (const Error& e) {
        fail(ErrorCode::config, e.what());
    }
    r.http.base_url = c.get("backend.endpoint");
    r.http.api_key_env = c.get("backend.api_key_env");
    r.http.model = c.get("backend.model");
    r.http.region = c.get("backend.region");
    require(r.backend != "http" || !r.http.base_url.empty(), ErrorCode::config, "http backend needs backend.endpoint");

    r.retry.backoff_ms = parse_backoff(c.get("retry.backoff_ms"));
    r.retry.parse_retries = c.get_int("retry.parse_retries");
    r.retry.poll_interval_ms = c.get_int("retry.poll_interval_ms");
    r.retry.poll_budget_ms = c.get_int("retry.poll_budget_ms");
    require(r.retry.parse_retries >= 0 && r.retry.poll_interval_ms > 0 && r.retry.poll_budget_ms > 0,
            ErrorCode::config, "retry settings must be positive");

    auto& e = r.engine;
    e.concurrency = c.get_int("engine.concurrency");
    e.eta = c.get_double("engine.eta");
    e.max_repairs = c.get_int("engine.max_repairs");
    e.recursion_depth = c.get_int("engine.recursion_depth");
    e.alpha = c.get_double("engine.alpha");
    e.op_cost_ms = c.get_int("engine.op_cost_ms");
    e.default_salience = c.get_double("engine.default_salience");
    e.lambda_red = c.get_double("alloc.lambda_red");
    e.budget = c.get_optional_int("alloc.budget");
    {
        const auto& text = c.get("seed");
        std::size_t used = 0;
        try {
            require(!text.empty() && text[0] != '-', ErrorCode::config, "");
            e.seed = static_cast<std::uint64_t>(std::stoull(text, &used));
            require(used == text.size(), ErrorCode::config, "");
        } catch (const std::exception&) {
            fail(ErrorCode::config, "seed: expected a non-negative integer");
        }
    }
    e.plan.lambda_tr = c.get_double("planner.lambda_tr");
    e.plan.lambda_unsup = c.get_double("planner.lambda_unsup");
    e.plan.epsilon = c.get_double("planner.epsilon");
    e.plan.beam_width = c.get_int("planner.beam_width");
    e.plan.max_shots = c.get_int("planner.max_shots");
    e.plan.refine_rounds = c.get_int("planner.refine_rounds");
    e.plan.quantum = r.capability.tau_g;
    require(!e.budget || *e.budget <= r.capability.b_g, ErrorCode::config, "alloc.budget may not exceed backend.b_g");
    try {
        engine::validate(e);
    } catch (const Error& err) {
        fail(ErrorCode::config, err.what());
    }

    r.gate.deviation_threshold = c.get_double("nbq.deviation_threshold");
    r.gate.confidence_threshold = c.get_double("nbq.confidence_threshold");
    require(r.gate.deviation_threshold >= 0 && r.gate.deviation_threshold <= 1 && r.gate.confidence_threshold >= 0 &&
                r.gate.confidence_threshold <= 1,
            ErrorCode::config, "nbq thresholds must lie in [0,1]");

    r.sim.seed = e.seed;
    r.sim.drift_prob = c.get_double("sim.drift_prob");
    r.sim.vars_per_dimension = c.get_int("sim.vars_per_dimension");
    const auto& fixture = c.get("sim.decay_fixture");
    r.sim.carryover_decay = fixture.empty() ? sim::default_decay() : sim::load_decay(fixture);
    try {
        sim::validate(r.sim);
    } catch (const Error& err) {
        fail(ErrorCode::config, err.what());
    }

    r.out_dir = c.get("paths.out_dir");
    r.manifest = c.get("paths.manifest");
    require(r.backend != "replay" || !r.manifest.empty(), ErrorCode::config, "replay backend needs paths.manifest");
    r.log_level = c.get("log.level");
    require(r.log_level == "error" || r.log_level == "warn" || r.log_level == "info" || r.log_level == "debug",
            ErrorCode::config, "log.level must be error, warn, info or debug");
    return r;
}

std::string help_text() {
    std::size_t width = 0;
    for (const auto& k : keys()) width = std::max(width, k.key.size());
    std::string out = "Configuration keys (flags > --config file > RECA_* environment > defaults):\n";
    for (const auto& k : keys()) {
        std::string line = "  " + k.key + std::string(width - k.key.size() + 2, ' ');
        line += "[default: " + (k.default_value.empty() ? std::string("unset") : k.default_value) + "] " + k.help;
        if (!k.note.empty()) line += " (" + k.note + ")";
        out += line + "\n";
    }
    return out;
}

}  // namespace reca::config
