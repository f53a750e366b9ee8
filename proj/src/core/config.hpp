// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "engine.hpp"
#include "nbq.hpp"
#include "simworld.hpp"

namespace reca::config {

struct KeySpec {
    std::string key;
    std::string default_value;  // empty: unset
    std::string help;
    std::string note;  // where the default comes from, if anywhere
};

/// Every recognised key, in documentation order.
const std::vector<KeySpec>& keys();

enum class Source { defaults, env, file, flag };
const char* to_string(Source s) noexcept;

/// Environment variable for a key: RECA_ + upper-cased key with '.' -> '_'.
std::string env_name(const std::string& key);

class Config {
public:
    /// Every key at its default.
    Config();

    /// Throws config for unknown keys.
    void set(const std::string& key, const std::string& value, Source source);
    const std::string& get(const std::string& key) const;
    Source source(const std::string& key) const;

    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::optional<int> get_optional_int(const std::string& key) const;

    /// Flat resolved key -> value map.
    Json to_json() const;
    /// Short digest of the resolved values.
    std::string hash() const;

private:
    std::map<std::string, std::pair<std::string, Source>> values_;
};

/// Flattens a config-file document; nested objects join with '.'.
std::map<std::string, std::string> flatten_file(const Json& doc);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Applies defaults < environment < file < flags.
Config resolve(const std::map<std::string, std::string>& flags, const std::optional<std::string>& file_path,
               const EnvLookup& env = process_env());

/// Typed view validated against every module's preconditions.
struct RunConfig {
    std::string backend;  // mock | http | replay | simworld
    backend::GeneratorCapability capability;
    backend::HttpOptions http;
    backend::RetryPolicy retry;
    engine::EngineConfig engine;
    nbq::GateConfig gate;
    sim::SimConfig sim;
    std::string out_dir;
    std::string manifest;  // replay source
    std::string log_level;
};

RunConfig to_run_config(const Config& config);

/// One line per key with its default and note.
std::string help_text();

}  // namespace reca::config
