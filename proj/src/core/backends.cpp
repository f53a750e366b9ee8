// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "backends.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace reca::backend {

const char* to_string(RequestKind k) noexcept {
    switch (k) {
        case RequestKind::generate: return "generate";
        case RequestKind::propose: return "propose";
        case RequestKind::judge: return "judge";
        case RequestKind::extract: return "extract";
    }
    return "?";
}

const char* to_string(TerminalStatus s) noexcept {
    switch (s) {
        case TerminalStatus::scored: return "scored";
        case TerminalStatus::rejected: return "rejected";
        case TerminalStatus::timeout: return "timeout";
        case TerminalStatus::parse_failed: return "parse_failed";
    }
    return "?";
}

const char* to_string(FailureKind f) noexcept {
    switch (f) {
        case FailureKind::transient: return "transient";
        case FailureKind::rate_limited: return "rate_limited";
        case FailureKind::safety: return "safety";
        case FailureKind::invalid: return "invalid";
    }
    return "?";
}

RequestKind request_kind_from_string(const std::string& s) {
    for (auto k : {RequestKind::generate, RequestKind::propose, RequestKind::judge, RequestKind::extract}) {
        if (s == to_string(k)) return k;
    }
    fail(ErrorCode::parse, "unknown request kind \"" + s + "\"");
}

TerminalStatus terminal_status_from_string(const std::string& s) {
    for (auto t : {TerminalStatus::scored, TerminalStatus::rejected, TerminalStatus::timeout,
                   TerminalStatus::parse_failed}) {
        if (s == to_string(t)) return t;
    }
    fail(ErrorCode::parse, "unknown terminal status \"" + s + "\"");
}

FailureKind failure_kind_from_string(const std::string& s) {
    for (auto f : {FailureKind::transient, FailureKind::rate_limited, FailureKind::safety,
                   FailureKind::invalid}) {
        if (s == to_string(f)) return f;
    }
    return FailureKind::transient;
}

void validate(const GeneratorCapability& cap) {
    require(cap.tau_g > 0, ErrorCode::config, "capability tau_g must be > 0");
    require(cap.b_g > 0, ErrorCode::config, "capability b_g must be > 0");
    require(cap.resolution.width > 0 && cap.resolution.height > 0, ErrorCode::config,
            "capability resolution must be positive");
}

// ---- wire ----------------------------------------------------------------------------

Json CallRequest::to_wire(const std::optional<std::string>& parser_error) const {
    Json w;
    w["schema"] = kWireSchema;
    w["kind"] = to_string(kind);
    w["request_id"] = request_id;
    w["model"] = model;
    w["prompt"] = prompt;
    w["prompt_tokens"] = prompt_tokens;
    w["boundary_ref"] = boundary_ref;
    w["duration_s"] = duration_s;
    w["resolution"] = {{"width", resolution.width}, {"height", resolution.height}};
    w["seed"] = seed ? Json(*seed) : Json(nullptr);
    w["safety"] = safety;
    w["prompt_rewriting"] = rewriting;
    w["temperature"] = 0;
    w["body"] = body;
    if (parser_error) w["parser_error"] = *parser_error;
    return w;
}

std::string request_digest(const Json& wire) {
    Json copy = wire;
    copy.erase("parser_error");
    return sha256_hex(copy.dump());
}

void check_capability(const CallRequest& r, const GeneratorCapability& cap) {
    if (r.kind != RequestKind::generate) return;
    if (r.duration_s <= 0 || r.duration_s > cap.tau_g) {
        fail(ErrorCode::capability, "requested duration " + std::to_string(r.duration_s) +
                                        " s outside (0, tau_G=" + std::to_string(cap.tau_g) +
                                        "] of backend " + cap.backend_id);
    }
    if (r.prompt_tokens > cap.b_g) {
        fail(ErrorCode::capability, "prompt of " + std::to_string(r.prompt_tokens) +
                                        " tokens exceeds B_G=" + std::to_string(cap.b_g) +
                                        " of backend " + cap.backend_id);
    }
    if (r.resolution.width > cap.resolution.width || r.resolution.height > cap.resolution.height) {
        fail(ErrorCode::capability, "requested resolution exceeds backend " + cap.backend_id);
    }
    if (r.rewriting && !cap.prompt_rewriting_switch) {
        fail(ErrorCode::capability, "backend " + cap.backend_id + " has no prompt-rewriting switch");
    }
}

void CallRecord::shift(std::int64_t offset) {
    submission_time_ms += offset;
    for (auto& e : polling_trace) e.t_ms += offset;
}

// ---- clocks ----------------------------------------------------------------------------

void SimClock::sleep_ms(std::int64_t ms) {
    {
        std::lock_guard lock(mu_);
        sleeps_.push_back(ms);
    }
    now_ += ms;
}

std::vector<std::int64_t> SimClock::sleeps() const {
    std::lock_guard lock(mu_);
    return sleeps_;
}

namespace {
std::int64_t steady_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}
}  // namespace

WallClock::WallClock() : origin_(steady_ms()) {}
std::int64_t WallClock::now_ms() { return steady_ms() - origin_; }
void WallClock::sleep_ms(std::int64_t ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

ClockFactory sim_clock_factory() {
    return [] { return std::make_unique<SimClock>(); };
}
ClockFactory wall_clock_factory() {
    return [] { return std::make_unique<WallClock>(); };
}

// ---- lifecycle ----------------------------------------------------------------------------

CallOutcome submit_and_poll(Transport& transport, const CallRequest& request,
                            const RetryPolicy& policy, Clock& clock,
                            const GeneratorCapability* capability,
                            const ResponseValidator& validator) {
    if (capability) check_capability(request, *capability);

    CallOutcome out;
    CallRecord& rec = out.record;
    rec.provider = transport.provider();
    rec.model_id = request.model.empty() ? transport.model_id() : request.model;
    rec.endpoint = transport.endpoint();
    rec.region = transport.region();
    rec.kind = to_string(request.kind);
    rec.request_id = request.request_id;
    rec.prompt = request.prompt;
    rec.boundary_ref = request.boundary_ref;
    rec.requested_resolution = request.resolution;
    rec.requested_duration = request.duration_s;
    rec.safety_setting = request.safety;
    rec.rewriting = request.rewriting;
    rec.seed = request.seed;
    rec.request = request.to_wire();
    rec.request_digest = request_digest(rec.request);
    rec.submission_time_ms = clock.now_ms();

    auto finish = [&](TerminalStatus s, std::string error) {
        rec.status = s;
        rec.error = std::move(error);
        out.ok = s == TerminalStatus::scored;
        return out;
    };

    std::optional<std::string> parser_error;
    std::size_t transient_failures = 0;
    // Returns true when another attempt should follow the backoff.
    auto on_failure = [&](FailureKind kind, const std::string& msg, bool& terminal,
                          TerminalStatus& status) {
        if (kind == FailureKind::safety || kind == FailureKind::invalid) {
            terminal = true;
            status = TerminalStatus::rejected;
            return;
        }
        if (transient_failures >= policy.backoff_ms.size()) {
            terminal = true;
            status = TerminalStatus::timeout;
            return;
        }
        const auto wait = policy.backoff_ms[transient_failures++];
        rec.polling_trace.push_back({clock.now_ms(), "backoff", std::to_string(wait) + "ms after " +
                                                                    to_string(kind) + ": " + msg});
        clock.sleep_ms(wait);
    };

    while (true) {
        ++rec.attempts;
        const auto wire = request.to_wire(parser_error);
        SubmitReply sub = transport.submit(wire, clock.now_ms());
        if (!sub.task_id) {
            rec.polling_trace.push_back({clock.now_ms(), "submit_failed",
                                         std::string(to_string(sub.failure)) + ": " + sub.message});
            bool terminal = false;
            TerminalStatus status{};
            on_failure(sub.failure, sub.message, terminal, status);
            if (terminal) return finish(status, std::string(to_string(sub.failure)) + ": " + sub.message);
            continue;
        }
        rec.task_id = *sub.task_id;
        rec.polling_trace.push_back({clock.now_ms(), "submit", rec.task_id});

        std::int64_t waited = 0;
        bool resubmit = false;
        while (!resubmit) {
            if (waited >= policy.poll_budget_ms) {
                return finish(TerminalStatus::timeout,
                              "polling budget of " + std::to_string(policy.poll_budget_ms) + " ms exhausted");
            }
            clock.sleep_ms(policy.poll_interval_ms);
            waited += policy.poll_interval_ms;
            PollReply p = transport.poll(rec.task_id, clock.now_ms());
            if (p.state == PollReply::State::pending) {
                rec.polling_trace.push_back({clock.now_ms(), "poll", "pending"});
                continue;
            }
            if (p.state == PollReply::State::failure) {
                rec.polling_trace.push_back({clock.now_ms(), "poll",
                                             std::string("failure ") + to_string(p.failure) + ": " + p.message});
                bool terminal = false;
                TerminalStatus status{};
                on_failure(p.failure, p.message, terminal, status);
                if (terminal) return finish(status, std::string(to_string(p.failure)) + ": " + p.message);
                resubmit = true;
                continue;
            }
            rec.polling_trace.push_back({clock.now_ms(), "poll", "result"});
            if (validator) {
                try {
                    validator(p.payload);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::parse && e.code() != ErrorCode::schema) throw;
                    rec.polling_trace.push_back({clock.now_ms(), "parse_error", e.what()});
                    if (rec.parse_retries < policy.parse_retries) {
                        ++rec.parse_retries;
                        parser_error = e.what();
                        resubmit = true;
                        continue;
                    }
                    rec.output = p.payload;
                    return finish(TerminalStatus::parse_failed, e.what());
                }
            }
            rec.returned_duration = p.returned_duration;
            rec.returned_fps = p.fps;
            rec.output = p.payload;
            rec.checksum = sha256_hex(p.payload);
            out.payload = std::move(p.payload);
            return finish(TerminalStatus::scored, "");
        }
    }
}

// ---- mock ------------------------------------------------------------------------------------

std::string mock_generate(const Json& wire, std::uint64_t seed) {
    const auto digest = request_digest(wire);
    Json p;
    p["schema"] = "reca-mock-payload/1";
    p["kind"] = wire.value("kind", "generate");
    p["request_digest"] = digest;
    p["seed"] = seed;
    p["duration_s"] = wire.value("duration_s", 0);
    p["boundary_ref"] = wire.value("boundary_ref", "");
    Json entries = Json::array();
    if (wire.contains("body") && wire["body"].contains("entries")) entries = wire["body"]["entries"];
    p["entries"] = std::move(entries);
    p["frames"] = sha256_hex(digest + ":" + std::to_string(seed));
    return p.dump();
}

MockTransport::MockTransport(GeneratorCapability cap, MockOptions options)
    : cap_(std::move(cap)), opt_(options) {
    validate(cap_);
}

SubmitReply MockTransport::submit(const Json& wire, std::int64_t now_ms) {
    ++submissions_;
    if (!wire.is_object() || wire.value("schema", "") != kWireSchema) {
        return {std::nullopt, FailureKind::invalid, "not a reca-wire/1 request"};
    }
    const auto kind = wire.value("kind", "generate");
    const int duration = wire.value("duration_s", 0);
    if (kind == "generate" &&
        (duration <= 0 || duration > cap_.tau_g || wire.value("prompt_tokens", 0) > cap_.b_g)) {
        return {std::nullopt, FailureKind::invalid, "request exceeds mock capability"};
    }
    std::uint64_t seed = opt_.seed;
    if (wire.contains("seed") && wire["seed"].is_number_unsigned()) seed ^= wire["seed"].get<std::uint64_t>();
    auto payload = mock_generate(wire, seed);
    const auto latency = kind == "generate" ? duration * opt_.latency_per_second_ms : opt_.fixed_latency_ms;
    const auto id = "mock-" + sha256_hex(payload).substr(0, 24);
    std::lock_guard lock(mu_);
    tasks_[id] = Pending{now_ms + latency, std::move(payload), static_cast<double>(duration)};
    return {id, FailureKind::transient, ""};
}

PollReply MockTransport::poll(const std::string& task_id, std::int64_t now_ms) {
    std::lock_guard lock(mu_);
    auto it = tasks_.find(task_id);
    PollReply r;
    if (it == tasks_.end()) {
        r.state = PollReply::State::failure;
        r.failure = FailureKind::invalid;
        r.message = "unknown task " + task_id;
        return r;
    }
    if (now_ms < it->second.ready_at) return r;
    r.state = PollReply::State::result;
    r.payload = it->second.payload;
    r.returned_duration = it->second.duration;
    return r;
}

// ---- fault injection ---------------------------------------------------------------------------

FaultInjectingTransport::FaultInjectingTransport(Transport& inner, std::vector<Fault> script)
    : inner_(inner), script_(std::move(script)) {}

SubmitReply FaultInjectingTransport::submit(const Json& wire, std::int64_t now_ms) {
    ++calls_;
    Fault f = Fault::none;
    {
        std::lock_guard lock(mu_);
        received_.push_back(wire);
        if (next_ < script_.size()) f = script_[next_++];
    }
    switch (f) {
        case Fault::rate_limited: return {std::nullopt, FailureKind::rate_limited, "429 rate limited"};
        case Fault::transient: return {std::nullopt, FailureKind::transient, "503 unavailable"};
        case Fault::safety: return {std::nullopt, FailureKind::safety, "content safety filter"};
        case Fault::invalid: return {std::nullopt, FailureKind::invalid, "400 bad request"};
        default: break;
    }
    auto reply = inner_.submit(wire, now_ms);
    if (reply.task_id && f != Fault::none) {
        std::lock_guard lock(mu_);
        task_faults_[*reply.task_id] = f;
    }
    return reply;
}

PollReply FaultInjectingTransport::poll(const std::string& task_id, std::int64_t now_ms) {
    ++calls_;
    Fault f = Fault::none;
    {
        std::lock_guard lock(mu_);
        if (auto it = task_faults_.find(task_id); it != task_faults_.end()) f = it->second;
    }
    if (f == Fault::hang) return PollReply{};
    auto r = inner_.poll(task_id, now_ms);
    if (r.state != PollReply::State::result) return r;
    if (f == Fault::malformed) {
        std::lock_guard lock(mu_);
        task_faults_.erase(task_id);
        r.payload = "{\"truncated\": ";
    } else if (f == Fault::poll_transient) {
        std::lock_guard lock(mu_);
        task_faults_.erase(task_id);
        PollReply fr;
        fr.state = PollReply::State::failure;
        fr.failure = FailureKind::transient;
        fr.message = "502 upstream reset";
        return fr;
    }
    return r;
}

std::vector<Json> FaultInjectingTransport::received() const {
    std::lock_guard lock(mu_);
    return received_;
}

// ---- http ---------------------------------------------------------------------------------------

namespace {

FailureKind classify_http(int status, const std::string& body) {
    if (status == 429) return FailureKind::rate_limited;
    if (status >= 500 || status <= 0) return FailureKind::transient;
    try {
        auto j = Json::parse(body);
        if (j.contains("error") && j["error"].value("kind", "") == "safety") return FailureKind::safety;
    } catch (const nlohmann::json::exception&) {
    }
    return FailureKind::invalid;
}

httplib::Headers auth_headers(const HttpOptions& opt) {
    httplib::Headers h;
    if (const char* key = std::getenv(opt.api_key_env.c_str()); key && *key) {
        h.emplace("Authorization", std::string("Bearer ") + key);
    }
    return h;
}

}  // namespace

HttpTransport::HttpTransport(HttpOptions options) : opt_(std::move(options)) {
    require(!opt_.base_url.empty(), ErrorCode::config, "http transport needs a base URL");
}

SubmitReply HttpTransport::submit(const Json& wire, std::int64_t) {
    httplib::Client cli(opt_.base_url);
    cli.set_connection_timeout(opt_.connect_timeout_s);
    cli.set_read_timeout(opt_.read_timeout_s);
    auto res = cli.Post("/v1/tasks", auth_headers(opt_), wire.dump(), "application/json");
    if (!res) return {std::nullopt, FailureKind::transient, httplib::to_string(res.error())};
    if (res->status < 200 || res->status >= 300) {
        return {std::nullopt, classify_http(res->status, res->body),
                "HTTP " + std::to_string(res->status)};
    }
    try {
        auto j = Json::parse(res->body);
        if (j.contains("task_id") && j["task_id"].is_string()) {
            return {j["task_id"].get<std::string>(), FailureKind::transient, ""};
        }
    } catch (const nlohmann::json::exception&) {
    }
    return {std::nullopt, FailureKind::transient, "submit response carries no task_id"};
}

PollReply HttpTransport::poll(const std::string& task_id, std::int64_t) {
    httplib::Client cli(opt_.base_url);
    cli.set_connection_timeout(opt_.connect_timeout_s);
    cli.set_read_timeout(opt_.read_timeout_s);
    PollReply r;
    auto res = cli.Get("/v1/tasks/" + task_id, auth_headers(opt_));
    if (!res || res->status >= 300) {
        r.state = PollReply::State::failure;
        r.failure = res ? classify_http(res->status, res->body) : FailureKind::transient;
        r.message = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        return r;
    }
    try {
        auto j = Json::parse(res->body);
        const auto status = j.value("status", "");
        if (status == "pending") return r;
        if (status == "result") {
            r.state = PollReply::State::result;
            r.payload = base64_decode(j.value("payload_b64", ""));
            if (j.contains("returned_duration") && j["returned_duration"].is_number()) {
                r.returned_duration = j["returned_duration"].get<double>();
            }
            if (j.contains("fps") && j["fps"].is_number()) r.fps = j["fps"].get<double>();
            return r;
        }
        r.state = PollReply::State::failure;
        r.failure = failure_kind_from_string(j.contains("error") ? j["error"].value("kind", "") : "");
        r.message = j.contains("error") ? j["error"].value("message", "") : "unknown poll status";
    } catch (const std::exception& e) {
        r.state = PollReply::State::failure;
        r.failure = FailureKind::transient;
        r.message = std::string("unreadable poll response: ") + e.what();
    }
    return r;
}

// ---- manifest -------------------------------------------------------------------------------------

StatusHistogram histogram(std::span<const CallRecord> records) {
    StatusHistogram h;
    for (const auto& r : records) {
        ++h.submitted;
        if (!r.status) continue;
        switch (*r.status) {
            case TerminalStatus::scored: ++h.scored; break;
            case TerminalStatus::rejected: ++h.rejected; break;
            case TerminalStatus::timeout: ++h.timeout; break;
            case TerminalStatus::parse_failed: ++h.parse_failed; break;
        }
    }
    return h;
}

Json to_json(const StatusHistogram& h) {
    return {{"submitted", h.submitted}, {"scored", h.scored},   {"rejected", h.rejected},
            {"timeout", h.timeout},     {"parse_failed", h.parse_failed}};
}

Json record_to_json(const CallRecord& r) {
    Json trace = Json::array();
    for (const auto& e : r.polling_trace) {
        trace.push_back({{"t_ms", e.t_ms}, {"event", e.event}, {"detail", e.detail}});
    }
    Json j;
    j["schema"] = kManifestSchema;
    j["provider"] = r.provider;
    j["model_id"] = r.model_id;
    j["endpoint"] = r.endpoint;
    j["region"] = r.region;
    j["submission_time_ms"] = r.submission_time_ms;
    j["kind"] = r.kind;
    j["request_id"] = r.request_id;
    j["task_id"] = r.task_id;
    j["request_digest"] = r.request_digest;
    j["prompt"] = r.prompt;
    j["boundary_ref"] = r.boundary_ref;
    j["requested_resolution"] = {{"width", r.requested_resolution.width},
                                 {"height", r.requested_resolution.height}};
    j["requested_duration"] = r.requested_duration;
    j["returned_duration"] = r.returned_duration ? Json(*r.returned_duration) : Json(nullptr);
    j["returned_fps"] = r.returned_fps ? Json(*r.returned_fps) : Json(nullptr);
    j["safety_setting"] = r.safety_setting;
    j["rewriting"] = r.rewriting;
    j["seed"] = r.seed ? Json(*r.seed) : Json(nullptr);
    j["attempts"] = r.attempts;
    j["parse_retries"] = r.parse_retries;
    j["polling_trace"] = std::move(trace);
    j["status"] = r.status ? Json(to_string(*r.status)) : Json(nullptr);
    j["checksum"] = r.checksum.empty() ? Json(nullptr) : Json(r.checksum);
    j["error"] = r.error;
    j["request"] = r.request;
    j["output_b64"] = base64_encode(r.output);
    return j;
}

CallRecord record_from_json(const Json& j) {
    expect_schema(j, kManifestSchema);
    CallRecord r;
    try {
        r.provider = j.at("provider").get<std::string>();
        r.model_id = j.at("model_id").get<std::string>();
        r.endpoint = j.at("endpoint").get<std::string>();
        r.region = j.at("region").get<std::string>();
        r.submission_time_ms = j.at("submission_time_ms").get<std::int64_t>();
        r.kind = j.at("kind").get<std::string>();
        r.request_id = j.at("request_id").get<std::string>();
        r.task_id = j.at("task_id").get<std::string>();
        r.request_digest = j.at("request_digest").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.boundary_ref = j.at("boundary_ref").get<std::string>();
        r.requested_resolution = {j.at("requested_resolution").at("width").get<int>(),
                                  j.at("requested_resolution").at("height").get<int>()};
        r.requested_duration = j.at("requested_duration").get<int>();
        if (!j.at("returned_duration").is_null()) r.returned_duration = j["returned_duration"].get<double>();
        if (!j.at("returned_fps").is_null()) r.returned_fps = j["returned_fps"].get<double>();
        r.safety_setting = j.at("safety_setting").get<std::string>();
        r.rewriting = j.at("rewriting").get<bool>();
        if (!j.at("seed").is_null()) r.seed = j["seed"].get<std::uint64_t>();
        r.attempts = j.at("attempts").get<int>();
        r.parse_retries = j.at("parse_retries").get<int>();
        for (const auto& e : j.at("polling_trace")) {
            r.polling_trace.push_back({e.at("t_ms").get<std::int64_t>(), e.at("event").get<std::string>(),
                                       e.at("detail").get<std::string>()});
        }
        if (!j.at("status").is_null()) r.status = terminal_status_from_string(j["status"].get<std::string>());
        if (!j.at("checksum").is_null()) r.checksum = j["checksum"].get<std::string>();
        r.error = j.at("error").get<std::string>();
        r.request = j.at("request");
        r.output = base64_decode(j.at("output_b64").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("reca-manifest/1: ") + e.what());
    }
    if (r.status == TerminalStatus::scored) {
        require(r.checksum == sha256_hex(r.output), ErrorCode::schema,
                "reca-manifest/1: checksum mismatch for task " + r.task_id);
    }
    return r;
}

namespace {
void require_terminal(const CallRecord& r) {
    require(r.status.has_value(), ErrorCode::precondition, "manifest records must be terminal");
    require((r.status == TerminalStatus::scored) == !r.checksum.empty(), ErrorCode::precondition,
            "manifest record checksum must be present iff scored");
}
}  // namespace

std::size_t MemoryManifest::append(const CallRecord& record) {
    require_terminal(record);
    std::lock_guard lock(mu_);
    records_.push_back(record);
    return records_.size() - 1;
}

std::vector<CallRecord> MemoryManifest::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

FileManifest::FileManifest(std::string path) : path_(std::move(path)) {
    std::filesystem::path p(path_);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++count_;
    }
}

std::size_t FileManifest::append(const CallRecord& record) {
    require_terminal(record);
    const auto line = record_to_json(record).dump() + "\n";
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) fail(ErrorCode::io, "cannot open manifest " + path_);
    out << line;
    out.flush();
    if (!out) fail(ErrorCode::io, "manifest write failed: " + path_);
    return count_++;
}

std::size_t record_manifest(const CallRecord& record, ManifestSink& sink) { return sink.append(record); }

std::vector<CallRecord> parse_manifest(std::string_view text) {
    std::vector<CallRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        ++line_no;
        pos = end + 1;
        if (normalize_whitespace(line).empty()) continue;
        try {
            out.push_back(record_from_json(parse_json(line, "manifest line")));
        } catch (const Error& e) {
            fail(e.code(), "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<CallRecord> load_manifest(const std::string& path) { return parse_manifest(read_file(path)); }

// ---- replay ---------------------------------------------------------------------------------------

ReplayTransport::ReplayTransport(std::vector<CallRecord> records, Transport* fallback)
    : fallback_(fallback) {
    for (const auto& r : records) {
        if (r.kind == to_string(RequestKind::generate)) {
            provider_ = r.provider;
            model_ = r.model_id;
            break;
        }
    }
    for (auto& r : records) {
        if (r.status == TerminalStatus::scored) by_digest_[r.request_digest] = std::move(r);
    }
}

SubmitReply ReplayTransport::submit(const Json& wire, std::int64_t now_ms) {
    const auto digest = request_digest(wire);
    if (by_digest_.count(digest)) {
        ++hits_;
        return {"replay:" + digest, FailureKind::transient, ""};
    }
    ++misses_;
    if (!fallback_) return {std::nullopt, FailureKind::invalid, "no recorded output for request " + digest};
    ++live_;
    auto reply = fallback_->submit(wire, now_ms);
    if (reply.task_id) {
        std::lock_guard lock(mu_);
        forwarded_["live:" + *reply.task_id] = *reply.task_id;
        reply.task_id = "live:" + *reply.task_id;
    }
    return reply;
}

PollReply ReplayTransport::poll(const std::string& task_id, std::int64_t now_ms) {
    if (task_id.rfind("replay:", 0) == 0) {
        const auto& rec = by_digest_.at(task_id.substr(7));
        PollReply r;
        r.state = PollReply::State::result;
        r.payload = rec.output;
        r.returned_duration = rec.returned_duration;
        r.fps = rec.returned_fps;
        return r;
    }
    std::string inner;
    {
        std::lock_guard lock(mu_);
        auto it = forwarded_.find(task_id);
        if (it != forwarded_.end()) inner = it->second;
    }
    if (inner.empty() || !fallback_) {
        PollReply r;
        r.state = PollReply::State::failure;
        r.failure = FailureKind::invalid;
        r.message = "unknown task " + task_id;
        return r;
    }
    return fallback_->poll(inner, now_ms);
}

// ---- generator adapter ------------------------------------------------------------------------------

Json prompt_body(const alloc::CompiledPrompt& prompt) {
    Json entries = Json::array();
    for (const auto& e : prompt.entries) {
        entries.push_back({{"section", alloc::to_string(e.section)},
                           {"key", e.key},
                           {"value", e.value},
                           {"start_token", e.start_token}});
    }
    return {{"entries", std::move(entries)},
            {"boundary_mode", plan::to_string(prompt.boundary.mode)},
            {"token_count", prompt.token_count}};
}

TransportGenerator::TransportGenerator(Transport& transport, GeneratorCapability cap,
                                       RetryPolicy policy, ClockFactory clocks)
    : transport_(transport), cap_(std::move(cap)), policy_(std::move(policy)), clocks_(std::move(clocks)) {
    validate(cap_);
}

GenerationResult TransportGenerator::generate(const GenerationRequest& g) {
    require(g.prompt != nullptr, ErrorCode::precondition, "generation request has no prompt");
    CallRequest req;
    req.kind = RequestKind::generate;
    req.request_id = g.leaf_id;
    req.model = cap_.backend_id;
    req.prompt = g.prompt->text;
    req.prompt_tokens = g.prompt->token_count;
    req.boundary_ref = g.prompt->boundary.ref;
    req.duration_s = g.duration;
    req.resolution = cap_.resolution;
    if (cap_.supports_seed) req.seed = g.seed;
    req.body = prompt_body(*g.prompt);
    auto clock = clocks_();
    auto outcome = submit_and_poll(transport_, req, policy_, *clock, &cap_);
    GenerationResult r;
    r.ok = outcome.ok;
    r.status = *outcome.record.status;
    r.payload = std::move(outcome.payload);
    r.checksum = outcome.record.checksum;
    r.returned_duration = outcome.record.returned_duration.value_or(g.duration);
    r.record = std::move(outcome.record);
    return r;
}

// ---- remote proposer ------------------------------------------------------------------------------------

RemoteProposer::RemoteProposer(Transport& transport, RetryPolicy policy, std::string model,
                               ClockFactory clocks)
    : transport_(transport), policy_(std::move(policy)), model_(std::move(model)), clocks_(std::move(clocks)) {}

std::vector<plan::ShotSchedule> RemoteProposer::propose(const plan::PlanRequest& request) {
    require(request.state != nullptr, ErrorCode::precondition, "plan request has no state");
    CallRequest req;
    req.kind = RequestKind::propose;
    req.request_id = "plan";
    req.model = model_;
    req.prompt = request.intent;
    req.duration_s = request.total_duration;
    req.body = {{"intent", request.intent},
                {"total_duration", request.total_duration},
                {"quantum", request.config.quantum},
                {"max_shots", request.config.max_shots},
                {"state", request.state->to_json()}};
    std::vector<plan::ShotSchedule> parsed;
    auto validator = [&](const std::string& payload) {
        parsed.clear();
        auto doc = parse_json(payload, "proposer response");
        require(doc.contains("candidates") && doc["candidates"].is_array(), ErrorCode::schema,
                "proposer response has no candidates array");
        for (const auto& c : doc["candidates"]) parsed.push_back(plan::schedule_from_json(c));
    };
    auto clock = clocks_();
    auto outcome = submit_and_poll(transport_, req, policy_, *clock, nullptr, validator);
    records_.push_back(outcome.record);
    if (!outcome.ok) {
        fail(ErrorCode::backend, "remote proposer call ended " +
                                     std::string(to_string(*outcome.record.status)) + ": " +
                                     outcome.record.error);
    }
    return parsed;
}

}  // namespace reca::backend
