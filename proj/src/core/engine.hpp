// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "allocator.hpp"
#include "backends.hpp"
#include "planner.hpp"
#include "state_store.hpp"

namespace reca::engine {

struct EngineConfig {
    int concurrency = 4;  // W
    double eta = 0.25;
    int max_repairs = 2;
    int recursion_depth = 2;
    double alpha = state::kDefaultAlpha;
    double lambda_red = alloc::kDefaultLambdaRed;
    std::optional<int> budget;  // B_G override; never above the backend's
    double default_salience = 0.25;
    std::int64_t op_cost_ms = 0;  // tau_op charged on every dependency edge
    std::uint64_t seed = 0;
    plan::PlanConfig plan;
};

void validate(const EngineConfig& config);

// ---- extraction ------------------------------------------------------------------

struct Extraction {
    std::vector<state::Observation> observations;
    bool artifact = false;  // segment-level corruption
    bool failed = false;    // extractor could not read the segment
    std::string detail;
};

class Extractor {
public:
    virtual ~Extractor() = default;
    virtual Extraction extract(const backend::GenerationResult& result,
                               const alloc::CompiledPrompt& prompt,
                               const state::ExternalState& input) = 0;
};

/// Observation kind for a key, from its record (or prompt section when new).
state::ObservationKind kind_for(const state::VariableRecord* record, alloc::Section section);

/// Reads the entries echoed by mock payloads back as verified observations.
class MockExtractor final : public Extractor {
public:
    Extraction extract(const backend::GenerationResult& result, const alloc::CompiledPrompt& prompt,
                       const state::ExternalState& input) override;
};

/// Extractor behind the call lifecycle; the response payload is
/// {"observations": [...], "artifact": bool}.
class RemoteExtractor final : public Extractor {
public:
    RemoteExtractor(backend::Transport& transport, backend::RetryPolicy policy = {},
                    std::string model = {}, backend::ClockFactory clocks = backend::sim_clock_factory());
    Extraction extract(const backend::GenerationResult& result, const alloc::CompiledPrompt& prompt,
                       const state::ExternalState& input) override;
    /// Terminal records of every extraction call, in completion order.
    std::vector<backend::CallRecord> records() const;

private:
    backend::Transport& transport_;
    backend::RetryPolicy policy_;
    std::string model_;
    backend::ClockFactory clocks_;
    mutable std::mutex mu_;
    std::vector<backend::CallRecord> records_;
};

// ---- verification and repair --------------------------------------------------------

struct KeyMismatch {
    std::string key;
    std::string expected;
    std::optional<std::string> observed;  // nullopt: missing
    bool in_prompt = false;
    bool visual = false;
};

struct MismatchReport {
    double e = 0.0;
    std::vector<KeyMismatch> keys;
    bool artifact = false;
    bool extractor_failed = false;
    int duration = 0;
};

/// Fraction of planned keys whose verified observation is missing or
/// disagrees; 0 for an empty plan.
double verify(const std::map<std::string, std::string>& planned,
              std::span<const state::Observation> observed);

MismatchReport make_report(const std::map<std::string, std::string>& planned,
                           const Extraction& extraction, const alloc::CompiledPrompt& prompt,
                           const state::ExternalState& input, int duration);

enum class RepairAction { RepackPrompt, ReanchorState, RegenerateUnit, SplitUnit, GiveUp };
const char* to_string(RepairAction a) noexcept;

/// Deterministic policy; `attempt` is the 1-based repair about to be made.
RepairAction repair(const MismatchReport& report, int attempt, int max_repairs, int tau_g);

// ---- scheduling -------------------------------------------------------------------------

struct SchedTask {
    std::string id;
    std::vector<std::string> deps;
    std::int64_t duration_ms = 0;
};

struct ScheduleResult {
    std::vector<std::string> order;  // dispatch order
    std::map<std::string, std::int64_t> start_ms;
    std::map<std::string, std::int64_t> finish_ms;
    std::int64_t makespan_ms = 0;
};

/// Event-driven list scheduling with at most W tasks active. A task is
/// ready op_cost after its last dependency finishes; ready ties go to the
/// smaller id.
ScheduleResult schedule(std::span<const SchedTask> tasks, int workers, std::int64_t op_cost_ms);

// ---- run -------------------------------------------------------------------------------------

struct LeafTask {
    std::string id;  // sNNNuMM
    alloc::UnitSpec unit;
    int duration = 0;
    std::vector<std::string> deps;
    alloc::Boundary boundary;                          // as dispatched
    alloc::CompiledPrompt prompt;                      // final attempt
    std::map<std::string, std::string> planned_delta;  // key -> expected value
};

/// Leaf DAG for a schedule: unit j chains on unit j - 1, unit 1 on the last
/// unit of the predecessor shot.
std::vector<LeafTask> build_leaf_tasks(const plan::ShotSchedule& schedule, int tau_g);

/// Ids reachable from `id` along dependency edges (excluding `id`).
std::set<std::string> descendants(std::span<const LeafTask> tasks, const std::string& id);

enum class Phase { dispatched, completed, verified, repaired, failed };
const char* to_string(Phase p) noexcept;

struct TraceEvent {
    std::int64_t t_ms = 0;
    std::string task_id;
    Phase phase = Phase::dispatched;
    std::string detail;
};

struct ExecutionTrace {
    std::vector<TraceEvent> events;
    std::int64_t makespan_ms = 0;
    int leaf_count = 0;
    int generator_calls = 0;
};

struct Segment {
    std::string leaf_id;
    int shot = 0;
    int unit = 0;
    int part = 0;  // > 0 only after SplitUnit
    int duration = 0;
    std::int64_t start_ms = 0;  // position in the concatenated video
    std::int64_t end_ms = 0;
    std::string checksum;
    std::string boundary_ref;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitPlanning = 3;
inline constexpr int kExitBackend = 4;

/// Per-leaf result kept so a later subtree repair can reuse unaffected work.
struct LeafOutcome {
    enum class Status { ok, gave_up, backend_failure, cancelled } status = Status::cancelled;
    state::ExternalState output;
    std::vector<Segment> segments;
    std::vector<backend::CallRecord> calls;  // leaf-local times
    std::vector<TraceEvent> events;          // leaf-local times
    std::int64_t latency_ms = 0;
    int repairs = 0;
    std::string error;
};

struct RunResult {
    int exit_code = kExitOk;
    std::string error;
    plan::ShotSchedule schedule;
    state::ExternalState root_state;
    std::vector<LeafTask> tasks;
    std::map<std::string, LeafOutcome> outcomes;
    std::vector<Segment> timeline;
    ExecutionTrace trace;
    state::ExternalState final_state;
    std::vector<backend::CallRecord> calls;  // run timeline, submission order
    std::set<std::string> dispatched;        // leaves executed by this invocation
};

/// Plans with `proposer` (rule-based when null) at quantum tau_G, then
/// executes. Planning failures return exit code 3.
RunResult run(const state::ExternalState& anchor, const std::string& intent, int total_duration,
              const EngineConfig& config, backend::Generator& generator, Extractor& extractor,
              plan::PlanProposer* proposer = nullptr);

/// Executes an existing schedule verbatim.
RunResult run_schedule(const state::ExternalState& anchor, const plan::ShotSchedule& schedule,
                       const EngineConfig& config, backend::Generator& generator,
                       Extractor& extractor);

/// Re-executes `leaf_id` with a fresh seed plus its descendants; every
/// other leaf keeps its prior outcome.
RunResult repair_subtree(const RunResult& prior, const std::string& leaf_id,
                         const EngineConfig& config, backend::Generator& generator,
                         Extractor& extractor);

inline constexpr const char* kTraceSchema = "reca-trace/1";
inline constexpr const char* kTimelineSchema = "reca-timeline/1";

inline constexpr const char* kReportSchema = "reca-report/1";

Json trace_to_json(const RunResult& result);
Json timeline_to_json(const RunResult& result);
/// Outcome summary; independent of W and of wall-clock timing.
Json report_to_json(const RunResult& result);

}  // namespace reca::engine
