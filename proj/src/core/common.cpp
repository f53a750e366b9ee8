// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "common.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace reca {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::parse: return "parse";
        case ErrorCode::schema: return "schema";
        case ErrorCode::capability: return "capability";
        case ErrorCode::planning: return "planning";
        case ErrorCode::backend: return "backend";
        case ErrorCode::io: return "io";
        case ErrorCode::config: return "config";
        case ErrorCode::budget_too_small: return "budget_too_small";
        case ErrorCode::cycle: return "cycle";
    }
    return "unknown";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

namespace {

std::mutex g_log_mutex;
LogSink g_log_sink = [](LogLevel level, const std::string& msg) {
    if (level <= LogLevel::warn) {
        std::cerr << (level == LogLevel::error ? "[reca:error] " : "[reca:warn] ") << msg << '\n';
    }
};

}  // namespace

void set_log_sink(LogSink sink) {
    std::lock_guard lock(g_log_mutex);
    g_log_sink = std::move(sink);
}

void log(LogLevel level, const std::string& message) {
    std::lock_guard lock(g_log_mutex);
    if (g_log_sink) g_log_sink(level, message);
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(ch);
    }
    return out;
}

bool values_equal(std::string_view a, std::string_view b) {
    return normalize_whitespace(a) == normalize_whitespace(b);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::backend, "sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(bytes.data()),
                            static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.empty()) return {};
    require(text.size() % 4 == 0, ErrorCode::parse, "base64 length is not a multiple of 4");
    std::string out(3 * text.size() / 4 + 1, '\0');
    int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(text.data()),
                            static_cast<int>(text.size()));
    require(n >= 0, ErrorCode::parse, "invalid base64 payload");
    // EVP_DecodeBlock keeps padding bytes as zeros.
    std::size_t pad = 0;
    if (text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double hashed_uniform(std::uint64_t seed, std::string_view a, std::string_view b,
                      std::string_view c) {
    std::uint64_t h = splitmix64(seed);
    h = fnv1a64(a, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(b, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(c, h);
    // 53 high bits -> [0,1)
    return static_cast<double>(splitmix64(h) >> 11) * (1.0 / 9007199254740992.0);
}

Json parse_json(std::string_view text, std::string_view what) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::parse, std::string(what) + ": " + e.what());
    }
}

std::string dump_canonical(const Json& doc) { return doc.dump(2) + "\n"; }

void expect_schema(const Json& doc, std::string_view schema) {
    if (!doc.is_object() || !doc.contains("schema") || !doc["schema"].is_string()) {
        fail(ErrorCode::schema, "document has no schema tag, expected \"" + std::string(schema) + "\"");
    }
    const auto& found = doc["schema"].get_ref<const std::string&>();
    if (found != schema) {
        fail(ErrorCode::schema,
             "schema mismatch: expected \"" + std::string(schema) + "\", found \"" + found + "\"");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "short write to " + path);
}

}  // namespace reca
