// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "allocator.hpp"
#include "common.hpp"
#include "planner.hpp"

namespace reca::backend {

inline constexpr const char* kWireSchema = "reca-wire/1";
inline constexpr const char* kManifestSchema = "reca-manifest/1";

struct Resolution {
    int width = 1280;
    int height = 720;
    friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct GeneratorCapability {
    std::string backend_id = "mock";
    int tau_g = 5;     // seconds per call
    int b_g = 1000;    // prompt tokens per call
    Resolution resolution;
    bool supports_seed = true;
    bool prompt_rewriting_switch = false;
};

void validate(const GeneratorCapability& cap);

enum class RequestKind { generate, propose, judge, extract };
enum class TerminalStatus { scored, rejected, timeout, parse_failed };
enum class FailureKind { transient, rate_limited, safety, invalid };

const char* to_string(RequestKind k) noexcept;
const char* to_string(TerminalStatus s) noexcept;
const char* to_string(FailureKind f) noexcept;
RequestKind request_kind_from_string(const std::string& s);
TerminalStatus terminal_status_from_string(const std::string& s);
FailureKind failure_kind_from_string(const std::string& s);

struct CallRequest {
    RequestKind kind = RequestKind::generate;
    std::string request_id;  // caller-side id, e.g. a leaf id
    std::string model;
    std::string prompt;
    int prompt_tokens = 0;
    std::string boundary_ref;
    int duration_s = 0;
    Resolution resolution;
    std::optional<std::uint64_t> seed;
    std::string safety = "on";
    bool rewriting = false;
    Json body = Json::object();  // kind-specific structured payload

    /// The reca-wire/1 submit document; a parse retry appends the error.
    Json to_wire(const std::optional<std::string>& parser_error = std::nullopt) const;
};

/// Digest of a wire request with any parser_error field removed.
std::string request_digest(const Json& wire);

/// Local gate; throws ErrorCode::capability before any external effect.
void check_capability(const CallRequest& request, const GeneratorCapability& cap);

struct PollEvent {
    std::int64_t t_ms = 0;
    std::string event;   // submit | submit_failed | poll | backoff | parse_error
    std::string detail;
};

struct CallRecord {
    std::string provider;
    std::string model_id;
    std::string endpoint;
    std::string region;
    std::int64_t submission_time_ms = 0;
    std::string kind;
    std::string request_id;
    std::string prompt;
    std::string boundary_ref;
    Resolution requested_resolution;
    int requested_duration = 0;
    std::optional<double> returned_duration;
    std::optional<double> returned_fps;
    std::string safety_setting = "on";
    bool rewriting = false;
    std::optional<std::uint64_t> seed;
    std::string task_id;
    std::string request_digest;
    Json request = Json::object();  // wire document of the first attempt
    std::vector<PollEvent> polling_trace;
    int attempts = 0;
    int parse_retries = 0;
    std::optional<TerminalStatus> status;
    std::string checksum;      // present iff scored
    std::string output;        // payload bytes, stored base64 in the manifest
    std::string error;

    std::int64_t finished_ms() const {
        return polling_trace.empty() ? submission_time_ms : polling_trace.back().t_ms;
    }
    /// Shifts every timestamp; used to place a call on the run timeline.
    void shift(std::int64_t offset_ms);
};

struct SubmitReply {
    std::optional<std::string> task_id;
    FailureKind failure = FailureKind::transient;
    std::string message;
};

struct PollReply {
    enum class State { pending, result, failure } state = State::pending;
    std::string payload;
    std::optional<double> returned_duration;
    std::optional<double> fps;
    FailureKind failure = FailureKind::transient;
    std::string message;
};

/// Submit/poll transport speaking reca-wire/1. Implementations must be safe
/// for concurrent use.
class Transport {
public:
    virtual ~Transport() = default;
    virtual SubmitReply submit(const Json& wire, std::int64_t now_ms) = 0;
    virtual PollReply poll(const std::string& task_id, std::int64_t now_ms) = 0;
    virtual std::string provider() const = 0;
    virtual std::string endpoint() const { return ""; }
    virtual std::string region() const { return ""; }
    virtual std::string model_id() const { return ""; }
};

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_ms(std::int64_t ms) = 0;
};

/// Simulated clock: sleeping advances time instantly.
class SimClock final : public Clock {
public:
    explicit SimClock(std::int64_t start_ms = 0) : now_(start_ms) {}
    std::int64_t now_ms() override { return now_.load(); }
    void sleep_ms(std::int64_t ms) override;
    std::vector<std::int64_t> sleeps() const;

private:
    std::atomic<std::int64_t> now_;
    mutable std::mutex mu_;
    std::vector<std::int64_t> sleeps_;
};

class WallClock final : public Clock {
public:
    WallClock();
    std::int64_t now_ms() override;
    void sleep_ms(std::int64_t ms) override;

private:
    std::int64_t origin_;
};

using ClockFactory = std::function<std::unique_ptr<Clock>()>;
ClockFactory sim_clock_factory();
ClockFactory wall_clock_factory();

struct RetryPolicy {
    std::vector<std::int64_t> backoff_ms{2000, 8000, 32000};
    int parse_retries = 1;
    std::int64_t poll_interval_ms = 1000;
    std::int64_t poll_budget_ms = 600000;
};

/// Throws Error(parse or schema) when a payload is malformed.
using ResponseValidator = std::function<void(const std::string& payload)>;

struct CallOutcome {
    bool ok = false;
    std::string payload;
    CallRecord record;
};

/// Full call lifecycle. Transient and rate-limit failures are retried with
/// the backoff schedule and end as timeout when exhausted; safety and
/// invalid-request failures end as rejected; malformed payloads get
/// `parse_retries` resubmissions with the parser error appended.
CallOutcome submit_and_poll(Transport& transport, const CallRequest& request,
                            const RetryPolicy& policy, Clock& clock,
                            const GeneratorCapability* capability = nullptr,
                            const ResponseValidator& validator = {});

// ---- mock -----------------------------------------------------------------------------

/// Byte-deterministic payload from (request digest, seed). Generation
/// payloads echo the prompt entries the request carries.
std::string mock_generate(const Json& wire, std::uint64_t seed);

struct MockOptions {
    std::int64_t latency_per_second_ms = 1000;  // generation latency per output second
    std::int64_t fixed_latency_ms = 1000;       // non-generation kinds
    std::uint64_t seed = 0;
};

class MockTransport final : public Transport {
public:
    explicit MockTransport(GeneratorCapability cap = {}, MockOptions options = {});
    SubmitReply submit(const Json& wire, std::int64_t now_ms) override;
    PollReply poll(const std::string& task_id, std::int64_t now_ms) override;
    std::string provider() const override { return "mock"; }
    std::string endpoint() const override { return "mock://local"; }
    std::string model_id() const override { return cap_.backend_id; }
    const GeneratorCapability& capability() const { return cap_; }
    std::size_t submissions() const { return submissions_.load(); }

private:
    struct Pending {
        std::int64_t ready_at;
        std::string payload;
        double duration;
    };
    GeneratorCapability cap_;
    MockOptions opt_;
    std::mutex mu_;
    std::map<std::string, Pending> tasks_;
    std::atomic<std::size_t> submissions_{0};
};

// ---- fault injection ----------------------------------------------------------------------

enum class Fault { none, rate_limited, transient, safety, invalid, malformed, hang, poll_transient };

/// Wraps a transport and applies one scripted fault per submission, in
/// order; submissions past the script pass through. Records every wire
/// request it receives.
class FaultInjectingTransport final : public Transport {
public:
    FaultInjectingTransport(Transport& inner, std::vector<Fault> script);
    SubmitReply submit(const Json& wire, std::int64_t now_ms) override;
    PollReply poll(const std::string& task_id, std::int64_t now_ms) override;
    std::string provider() const override { return inner_.provider(); }
    std::string endpoint() const override { return inner_.endpoint(); }
    std::string model_id() const override { return inner_.model_id(); }
    std::vector<Json> received() const;
    std::size_t network_calls() const { return calls_.load(); }

private:
    Transport& inner_;
    std::vector<Fault> script_;
    std::size_t next_ = 0;
    mutable std::mutex mu_;
    std::vector<Json> received_;
    std::map<std::string, Fault> task_faults_;
    std::atomic<std::size_t> calls_{0};
};

// ---- http ---------------------------------------------------------------------------------

struct HttpOptions {
    std::string base_url;                  // scheme://host[:port]
    std::string api_key_env = "RECA_API_KEY";
    std::string region;
    std::string model;
    int connect_timeout_s = 10;
    int read_timeout_s = 60;
};

/// reca-wire/1 over HTTP(S): POST /v1/tasks, GET /v1/tasks/{id}.
/// Credentials are read from the environment per request and never stored.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(HttpOptions options);
    SubmitReply submit(const Json& wire, std::int64_t now_ms) override;
    PollReply poll(const std::string& task_id, std::int64_t now_ms) override;
    std::string provider() const override { return "http"; }
    std::string endpoint() const override { return opt_.base_url; }
    std::string region() const override { return opt_.region; }
    std::string model_id() const override { return opt_.model; }

private:
    HttpOptions opt_;
};

// ---- manifest -------------------------------------------------------------------------------

struct StatusHistogram {
    std::size_t submitted = 0;
    std::size_t scored = 0;
    std::size_t rejected = 0;
    std::size_t timeout = 0;
    std::size_t parse_failed = 0;
    friend bool operator==(const StatusHistogram&, const StatusHistogram&) = default;
};

StatusHistogram histogram(std::span<const CallRecord> records);
Json to_json(const StatusHistogram& h);

Json record_to_json(const CallRecord& r);
CallRecord record_from_json(const Json& j);

class ManifestSink {
public:
    virtual ~ManifestSink() = default;
    /// Appends a terminal record; returns its 0-based position.
    virtual std::size_t append(const CallRecord& record) = 0;
};

class MemoryManifest final : public ManifestSink {
public:
    std::size_t append(const CallRecord& record) override;
    std::vector<CallRecord> records() const;

private:
    mutable std::mutex mu_;
    std::vector<CallRecord> records_;
};

/// JSON-lines file; each append is flushed and write failures throw.
class FileManifest final : public ManifestSink {
public:
    explicit FileManifest(std::string path);
    std::size_t append(const CallRecord& record) override;
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::mutex mu_;
    std::size_t count_ = 0;
};

std::size_t record_manifest(const CallRecord& record, ManifestSink& sink);
std::vector<CallRecord> load_manifest(const std::string& path);
std::vector<CallRecord> parse_manifest(std::string_view text);

/// Serves stored outputs by request digest. Misses go to `fallback` when
/// given (counted as live calls) and fail otherwise.
class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(std::vector<CallRecord> records, Transport* fallback = nullptr);
    SubmitReply submit(const Json& wire, std::int64_t now_ms) override;
    PollReply poll(const std::string& task_id, std::int64_t now_ms) override;
    /// Provider and model of the recorded generator; "replay" when unknown.
    std::string provider() const override { return provider_; }
    std::string endpoint() const override { return "replay://manifest"; }
    std::string model_id() const override { return model_; }
    std::size_t live_calls() const { return live_.load(); }
    std::size_t hits() const { return hits_.load(); }
    /// Submissions the manifest could not serve, forwarded or not.
    std::size_t misses() const { return misses_.load(); }

private:
    std::map<std::string, CallRecord> by_digest_;
    Transport* fallback_;
    std::string provider_ = "replay";
    std::string model_;
    std::mutex mu_;
    std::map<std::string, std::string> forwarded_;  // replay task id -> fallback task id
    std::atomic<std::size_t> live_{0};
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

// ---- generator adapter --------------------------------------------------------------------------

struct GenerationRequest {
    std::string leaf_id;
    const alloc::CompiledPrompt* prompt = nullptr;
    int duration = 0;
    std::optional<std::uint64_t> seed;
};

struct GenerationResult {
    bool ok = false;
    TerminalStatus status = TerminalStatus::timeout;
    std::string payload;
    std::string checksum;
    double returned_duration = 0.0;
    CallRecord record;
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual GeneratorCapability capability() const = 0;
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

/// Generator over any transport; each call runs on its own clock from the
/// factory (simulated by default), so latencies are per-call and exact.
class TransportGenerator final : public Generator {
public:
    TransportGenerator(Transport& transport, GeneratorCapability cap, RetryPolicy policy = {},
                       ClockFactory clocks = sim_clock_factory());
    GeneratorCapability capability() const override { return cap_; }
    GenerationResult generate(const GenerationRequest& request) override;

private:
    Transport& transport_;
    GeneratorCapability cap_;
    RetryPolicy policy_;
    ClockFactory clocks_;
};

/// Structured prompt entries for transports that model content (mock, sim).
Json prompt_body(const alloc::CompiledPrompt& prompt);

// ---- remote proposer ------------------------------------------------------------------------------

/// Plan proposer behind the same call lifecycle: the response payload is
/// {"candidates": [reca-plan/1, ...]}.
class RemoteProposer final : public plan::PlanProposer {
public:
    RemoteProposer(Transport& transport, RetryPolicy policy = {}, std::string model = {},
                   ClockFactory clocks = sim_clock_factory());
    std::string name() const override { return "remote"; }
    std::vector<plan::ShotSchedule> propose(const plan::PlanRequest& request) override;
    const std::vector<CallRecord>& records() const { return records_; }

private:
    Transport& transport_;
    RetryPolicy policy_;
    std::string model_;
    ClockFactory clocks_;
    std::vector<CallRecord> records_;
};

}  // namespace reca::backend
