// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "backends.hpp"
#include "common.hpp"

namespace reca::nbq {

inline constexpr const char* kInstanceSchema = "msve-instance/1";
inline constexpr const char* kReportSchema = "nbq-report/1";
inline constexpr const char* kAnswersSchema = "nbq-answers/1";

inline constexpr double kDefaultDeviationThreshold = 0.5;
inline constexpr double kDefaultConfidenceThreshold = 0.5;

// ---- taxonomy ---------------------------------------------------------------------

enum class Group {
    multi_shot_transition,
    character_identity,
    scene_location,
    event_causality,
    cinematic_realisation,
    artifact_absence,
};

inline constexpr std::array<Group, 6> kGroups = {
    Group::multi_shot_transition, Group::character_identity,    Group::scene_location,
    Group::event_causality,       Group::cinematic_realisation, Group::artifact_absence,
};

const char* to_string(Group g) noexcept;
Group group_from_string(const std::string& s);

/// Full axis set of a group, in rubric order.
const std::vector<std::string>& axes_of(Group g);

/// Owning group of an axis; nullopt for axes outside the rubric.
std::optional<Group> group_of_axis(const std::string& axis);

/// Every axis of every group, group order then rubric order.
std::vector<std::string> all_axes();

// ---- instance ---------------------------------------------------------------------------

enum class ProblemKind { binary, likert };
enum class Variant { same_scene, scene_transition, goal_driven };
enum class TransitionKind { same_location, hard_scene_change, gradual_shift };

const char* to_string(ProblemKind k) noexcept;
const char* to_string(Variant v) noexcept;
const char* to_string(TransitionKind t) noexcept;

struct SliceMeta {
    double duration = 0.0;
    std::string scene;
    std::vector<std::string> characters;
    std::vector<std::string> required_entities;
    std::vector<std::string> action_beats;
    std::string shot_scale;
    std::string camera_movement;
};

struct Problem {
    std::string id;
    int slice = 0;            // 0-based source slice
    bool spans_next = false;  // transition problem over slices j and j+1
    std::string axis;
    Group group = Group::multi_shot_transition;
    ProblemKind kind = ProblemKind::binary;
    double weight = 1.0;
    bool coverage_flag = true;
    std::optional<std::string> prerequisite;
    std::string text;
};

struct Alignment {
    int slice = 0;
    double confidence = 1.0;
    double duration_deviation = 0.0;  // |generated - target| / target
};

struct BenchInstance {
    std::string id;
    std::string anchor;
    std::string intent;
    double target_duration = 0.0;
    Variant variant = Variant::same_scene;
    Json shared_metadata = Json::object();
    std::vector<SliceMeta> slices;
    std::vector<TransitionKind> transitions;  // slices - 1 entries
    std::vector<Problem> problems;
    std::vector<Alignment> alignments;  // empty: every slice aligned
    std::map<std::string, double> axis_weights;  // alpha_a; default 1
    std::map<Group, double> lambda;              // default uniform
};

/// Structural checks; throws Error(schema) naming a JSON pointer.
void validate(const BenchInstance& instance);

BenchInstance instance_from_json(const Json& doc);
Json to_json(const BenchInstance& instance);

// ---- answers ----------------------------------------------------------------------------

/// A binary verdict or a 1..5 Likert rating.
using Answer = std::variant<bool, int>;
using AnswerSet = std::map<std::string, Answer>;

AnswerSet answers_from_json(const Json& doc);
Json to_json(const AnswerSet& answers);

double normalize_binary(bool satisfied) noexcept;
/// (r - 1) / 4; throws invalid_argument outside 1..5.
double normalize_likert(int rating);
/// Throws schema when the answer type does not match the problem kind.
double normalize(const Answer& answer, ProblemKind kind);

// ---- scoring --------------------------------------------------------------------------------

struct GateConfig {
    double deviation_threshold = kDefaultDeviationThreshold;
    double confidence_threshold = kDefaultConfidenceThreshold;
};

/// Per-slice validity: confidence >= threshold and deviation not above
/// the deviation threshold. Slices without an alignment are valid.
std::vector<bool> gate_segments(const std::vector<Alignment>& alignments, std::size_t slices,
                                const GateConfig& config = {});

/// Zeroes every problem whose prerequisite is unanswered or gates to 0,
/// transitively. `raw` holds scores of answered problems only.
std::map<std::string, double> apply_coverage_gate(const std::vector<Problem>& problems,
                                                  const std::map<std::string, double>& raw);

/// Weighted mean over the axis's problems; nullopt when none exist.
std::optional<double> axis_score(const std::vector<Problem>& problems,
                                 const std::map<std::string, double>& gated, const std::string& axis);

/// Full-axis-set denominator; missing axes add 0 to the numerator.
double group_score(Group g, const std::map<std::string, double>& axis_scores,
                   const std::map<std::string, double>& axis_weights);

/// Throws config unless lambda sums to 1 within 1e-9.
double headline(const std::map<Group, double>& group_scores, const std::map<Group, double>& lambda);

std::map<Group, double> uniform_lambda();

struct Report {
    std::string instance_id;
    std::map<std::string, double> axis_scores;  // populated axes only
    std::map<Group, double> group_scores;
    double headline = 0.0;
    double coverage = 0.0;  // axes with a passing covered problem / all axes
    std::map<std::string, double> problem_scores;  // gated
    std::vector<bool> slice_valid;
    std::map<std::string, std::size_t> status_histogram;
    std::optional<backend::StatusHistogram> judge_calls;
};

/// Validate, gate slices, normalize, zero invalid slices, apply the
/// coverage gate, aggregate.
Report score(const BenchInstance& instance, const AnswerSet& answers, const GateConfig& gate = {});

Json to_json(const Report& report);

// ---- judges -----------------------------------------------------------------------------------

class Judge {
public:
    virtual ~Judge() = default;
    virtual AnswerSet answer(const BenchInstance& instance) = 0;
    /// Terminal outcomes of any remote calls made so far.
    virtual backend::StatusHistogram calls() const { return {}; }
};

/// Canned answers loaded from an "nbq-answers/1" document.
class FixtureJudge final : public Judge {
public:
    explicit FixtureJudge(AnswerSet answers) : answers_(std::move(answers)) {}
    AnswerSet answer(const BenchInstance&) override { return answers_; }

private:
    AnswerSet answers_;
};

/// One judge call per slice through the backend lifecycle. The response
/// payload is {"answers": {problem id: bool | 1..5}}; failed slices leave
/// their problems unanswered.
class RemoteJudge final : public Judge {
public:
    RemoteJudge(backend::Transport& transport, backend::RetryPolicy policy = {}, std::string model = {},
                backend::ClockFactory clocks = backend::sim_clock_factory());
    AnswerSet answer(const BenchInstance& instance) override;
    backend::StatusHistogram calls() const override;
    const std::vector<backend::CallRecord>& records() const { return records_; }

private:
    backend::Transport& transport_;
    backend::RetryPolicy policy_;
    std::string model_;
    backend::ClockFactory clocks_;
    std::vector<backend::CallRecord> records_;
};

}  // namespace reca::nbq
