// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace reca {

// Canonical documents keep insertion order so serialization is byte-stable.
using Json = nlohmann::ordered_json;

enum class ErrorCode {
    invalid_argument,
    precondition,
    parse,
    schema,
    capability,
    planning,
    backend,
    io,
    config,
    budget_too_small,
    cycle,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

// ---- logging -------------------------------------------------------------

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink; an empty sink silences logging.
void set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

// ---- text ----------------------------------------------------------------

/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Exact equality after whitespace normalization.
bool values_equal(std::string_view a, std::string_view b);

std::string to_lower(std::string_view text);

// ---- digests and encodings -------------------------------------------------

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// 64-bit FNV-1a, used for seeded stream derivation (not for integrity).
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

/// Uniform in [0,1) from a counter-style hash of the given parts.
double hashed_uniform(std::uint64_t seed, std::string_view a, std::string_view b = {},
                      std::string_view c = {});

// ---- json helpers ----------------------------------------------------------

Json parse_json(std::string_view text, std::string_view what);
std::string dump_canonical(const Json& doc);
void expect_schema(const Json& doc, std::string_view schema);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace reca
