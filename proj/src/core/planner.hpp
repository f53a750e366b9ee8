// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "state_store.hpp"

namespace reca::plan {

enum class BoundaryMode { anchor, prev_last_frame, keyframe, transition_constraint };

const char* to_string(BoundaryMode m) noexcept;
BoundaryMode boundary_mode_from_string(const std::string& s);

/// One planned shot (g_i, d_i, kappa_i) plus its boundary and predecessor.
struct ShotSpec {
    int index = 1;  // 1-based
    std::string goal;
    int duration = 0;  // whole seconds
    std::set<std::string> preserved_keys;
    std::map<std::string, double> salience;  // planner-side w(z; g) on the five-step scale
    BoundaryMode boundary_mode = BoundaryMode::anchor;
    std::optional<int> prev;  // nullopt is the independent, anchor-rooted sibling
    std::vector<int> units;   // explicit segmentation; empty means derive from tau_G

    friend bool operator==(const ShotSpec&, const ShotSpec&) = default;
};

struct ShotSchedule {
    std::vector<ShotSpec> shots;
    int total_duration = 0;
    // Visual commitments proposed alongside the shots; anchor-provenance
    // ones are scored against the admission threshold.
    std::vector<state::VariableRecord> commitments;

    friend bool operator==(const ShotSchedule&, const ShotSchedule&) = default;
};

struct PlanConfig {
    double lambda_tr = 1.0;
    double lambda_unsup = 2.0;
    double epsilon = state::kDefaultEpsilon;
    int beam_width = 4;
    int max_shots = 64;
    int quantum = 1;  // duration granularity; the engine sets this to tau_G
    int refine_rounds = 3;
};

void validate(const PlanConfig& config);

/// Narrative and transition reward terms of the plan objective.
struct ScoringHooks {
    std::function<double(const ShotSpec&, const std::string& intent, const state::ExternalState&)>
        narrative;
    std::function<double(const ShotSpec&, const ShotSpec&)> transition;
};

/// +1 per shot whose goal contains an intent beat not yet realised in the
/// narrative state; +1 per boundary-compatible adjacent pair.
ScoringHooks default_hooks();

/// Ordered clauses of the intent text, split on sentence and clause marks.
std::vector<std::string> split_beats(const std::string& intent);

bool boundary_compatible(const ShotSpec& a, const ShotSpec& b);

double score_plan(const ShotSchedule& schedule, const state::ExternalState& state,
                  const std::string& intent, const PlanConfig& config,
                  const ScoringHooks& hooks = default_hooks());

struct PlanRequest {
    const state::ExternalState* state = nullptr;
    std::string intent;
    int total_duration = 0;
    PlanConfig config;
};

class PlanProposer {
public:
    virtual ~PlanProposer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<ShotSchedule> propose(const PlanRequest& request) = 0;
    /// Local variants of a beam member; the default proposes none.
    virtual std::vector<ShotSchedule> refine(const ShotSchedule& /*candidate*/,
                                             const PlanRequest& /*request*/) {
        return {};
    }
};

/// Deterministic rule-based proposer: one shot per intent beat, in chained
/// and independent variants, plus the single-shot plan. Refinement merges
/// adjacent shots and toggles single handoffs.
class RuleProposer final : public PlanProposer {
public:
    std::string name() const override { return "rule"; }
    std::vector<ShotSchedule> propose(const PlanRequest& request) override;
    std::vector<ShotSchedule> refine(const ShotSchedule& candidate,
                                     const PlanRequest& request) override;
};

/// Always returns the given schedule (used to replay an existing plan).
class FixedProposer final : public PlanProposer {
public:
    explicit FixedProposer(ShotSchedule schedule) : schedule_(std::move(schedule)) {}
    std::string name() const override { return "fixed"; }
    std::vector<ShotSchedule> propose(const PlanRequest&) override { return {schedule_}; }

private:
    ShotSchedule schedule_;
};

ShotSchedule plan(const state::ExternalState& state, const std::string& intent, int total_duration,
                  const PlanConfig& config, PlanProposer& proposer,
                  const ScoringHooks& hooks = default_hooks());

// ---- durations -------------------------------------------------------------

/// Splits `total` across `weights` proportionally with largest-remainder
/// rounding (ties to the lower index); every share is at least `minimum`.
std::vector<int> apportion(const std::vector<double>& weights, int total, int minimum = 1);

/// m = ceil(d / tau) balanced parts, larger parts first.
std::vector<int> balanced_split(int duration, int tau);

/// Rescales shot durations so they sum to `total` and, when quantum > 1,
/// so the shots need no more than ceil(total / quantum) leaf calls.
/// Trailing shots are merged when there are more shots than quanta.
ShotSchedule repair_durations(ShotSchedule schedule, int total, int quantum);

/// Empty when the schedule satisfies its type invariants.
std::vector<std::string> check_schedule(const ShotSchedule& schedule);

// ---- dependency map ----------------------------------------------------------

struct Violation {
    int index;
    std::string message;
};

struct DependencyReport {
    bool ok = false;
    std::vector<Violation> violations;
    int critical_path = 0;  // longest leaf chain, counted in leaves
};

/// With tau_g, shots expand into units (unit j > 1 chains on unit j - 1 and
/// unit 1 on the last unit of prev); without it every shot is one leaf.
DependencyReport validate_dependency_map(const ShotSchedule& schedule,
                                         std::optional<int> tau_g = std::nullopt);

// ---- serialization -----------------------------------------------------------

inline constexpr const char* kPlanSchema = "reca-plan/1";

Json to_json(const ShotSchedule& schedule);
ShotSchedule schedule_from_json(const Json& doc);
inline std::string serialize(const ShotSchedule& s) { return dump_canonical(to_json(s)); }

}  // namespace reca::plan
