// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

// Lossy world simulator: a behavioural stand-in for a short-clip video
// generator, used to compare controllers over long horizons offline.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "allocator.hpp"
#include "backends.hpp"
#include "engine.hpp"
#include "nbq.hpp"
#include "state_store.hpp"

namespace reca::sim {

enum class Dimension {
    character_identity,
    scene_layout,
    object_physics,
    action_fidelity,
    visual_continuity,
    camera_state,
};

inline constexpr std::array<Dimension, 6> kDimensions = {
    Dimension::character_identity, Dimension::scene_layout,      Dimension::object_physics,
    Dimension::action_fidelity,    Dimension::visual_continuity, Dimension::camera_state,
};

const char* to_string(Dimension d) noexcept;
Dimension dimension_from_string(const std::string& s);

struct Variable {
    std::string value;
    Dimension dimension = Dimension::character_identity;
    friend bool operator==(const Variable&, const Variable&) = default;
};

struct WorldState {
    std::map<std::string, Variable> variables;
    int step = 0;
    friend bool operator==(const WorldState&, const WorldState&) = default;
};

inline constexpr const char* kSegmentSchema = "reca-sim-segment/1";
inline constexpr const char* kDecaySchema = "reca-sim-decay/1";

Json to_json(const WorldState& w);
WorldState world_from_json(const Json& doc);

/// Render probability by token position: 1 up to l_star, then piecewise
/// linear through soft_lo_level at soft_lo and soft_hi_level at soft_hi,
/// reaching 0 at l_hard and staying 0 beyond.
struct DilutionCurve {
    double l_star = 150;
    double soft_lo = 500;
    double soft_hi = 800;
    double l_hard = 1000;
    double soft_lo_level = 0.9;
    double soft_hi_level = 0.5;
};

double p_render(double position, const DilutionCurve& curve);

using DecayRates = std::map<Dimension, double>;

struct SimConfig {
    std::uint64_t seed = 0;
    DecayRates carryover_decay;  // per elapsed step; missing dimensions are lossless
    DilutionCurve dilution;
    double drift_prob = 0.0;  // extra per-segment mutation of unrendered variables
    int step_seconds = 5;
    int vars_per_dimension = 6;
};

void validate(const SimConfig& config);

/// Rates from (start, end) retention anchors `steps` apart, clamped to 1.
DecayRates calibrate_decay(const std::map<Dimension, std::pair<double, double>>& anchors, int steps);
/// The committed fixture's rates, compiled in.
DecayRates default_decay();
/// Reads a reca-sim-decay/1 document.
DecayRates load_decay(const std::string& path);
/// Recomputes the fixture document from its anchors.
Json decay_fixture(const std::map<Dimension, std::pair<double, double>>& anchors, int steps, int step_seconds);
std::map<Dimension, std::pair<double, double>> default_anchors();

/// vars_per_dimension variables per dimension with single-token values.
WorldState anchor_world(const SimConfig& config);

struct PromptLine {
    std::string key;
    std::string value;
    int position = 0;  // first token of the line
};

std::vector<PromptLine> prompt_lines(const alloc::CompiledPrompt& prompt);

struct SimSegment {
    WorldState world;
    std::string payload;  // canonical world serialization
    std::string checksum;
};

/// One generated segment. Prompted variables render with p_render of their
/// position; the rest keep the boundary value with probability
/// decay^(duration / step_seconds) * (1 - drift_prob) and mutate otherwise.
/// Randomness depends only on (config.seed, stream, task_id, key).
SimSegment sim_generate(const std::vector<PromptLine>& prompt, const WorldState& boundary, int duration,
                        const SimConfig& config, std::uint64_t stream, const std::string& task_id);
SimSegment sim_generate(const alloc::CompiledPrompt& prompt, const WorldState& boundary, int duration,
                        const SimConfig& config, std::uint64_t stream, const std::string& task_id);

/// Oracle extractor: one verified observation per variable.
std::vector<state::Observation> sim_extract(const SimSegment& segment);
std::vector<state::Observation> sim_extract(const WorldState& world);

/// Record layout used by the engine for a simulated world.
state::ExternalState anchor_state(const WorldState& world);
/// Inverse of anchor_state; the dimension comes from the record tag, or
/// from the category when the tag is unknown.
WorldState world_from_state(const state::ExternalState& state);

// ---- backend ------------------------------------------------------------------------

backend::GeneratorCapability sim_capability();

/// Transport over the simulator. Boundary refs "anchor" and "keyframe:*"
/// resolve to the anchor world, "segment:<checksum>" to a prior segment.
class SimTransport final : public backend::Transport {
public:
    SimTransport(WorldState anchor, SimConfig config, backend::GeneratorCapability cap = sim_capability());
    backend::SubmitReply submit(const Json& wire, std::int64_t now_ms) override;
    backend::PollReply poll(const std::string& task_id, std::int64_t now_ms) override;
    std::string provider() const override { return "simworld"; }
    std::string endpoint() const override { return "sim://local"; }
    std::string model_id() const override { return cap_.backend_id; }

    /// World behind a segment checksum; throws invalid_argument if unknown.
    WorldState world(const std::string& checksum) const;

private:
    struct Pending {
        std::int64_t ready_at;
        std::string payload;
        double duration;
    };
    WorldState anchor_;
    SimConfig config_;
    backend::GeneratorCapability cap_;
    mutable std::mutex mu_;
    std::map<std::string, WorldState> worlds_;
    std::map<std::string, Pending> tasks_;
};

class SimExtractor final : public engine::Extractor {
public:
    engine::Extraction extract(const backend::GenerationResult& result, const alloc::CompiledPrompt& prompt,
                               const state::ExternalState& input) override;
};

// ---- retention --------------------------------------------------------------------------

/// One binary persistence problem per variable per segment; variables of a
/// dimension are spread over the axes of its rubric group. The artifact
/// group carries no problems and gets lambda 0.
nbq::BenchInstance retention_instance(const WorldState& anchor, const std::vector<WorldState>& segments,
                                      const std::vector<int>& durations);
/// Oracle judge: a variable persists when its segment value equals the anchor's.
nbq::AnswerSet oracle_answers(const WorldState& anchor, const std::vector<WorldState>& segments);
double retention(const WorldState& anchor, const std::vector<WorldState>& segments,
                 const std::vector<int>& durations);
/// Same quantity computed directly from the worlds, without nbq.
double direct_retention(const WorldState& anchor, const std::vector<WorldState>& segments);

// ---- experiments ------------------------------------------------------------------------------

enum class Controller { naive_chain, reca };
const char* to_string(Controller c) noexcept;
Controller controller_from_string(const std::string& s);

/// Narrative intent with one beat per 10 s.
std::string sim_intent(int total_duration);

struct RunRecord {
    Controller controller = Controller::naive_chain;
    int duration = 0;
    std::uint64_t seed = 0;
    double score = 0.0;
    int segments = 0;
    int exit_code = 0;
};

/// Last-frame handoff with a static intent-only prompt, tau_G segments.
RunRecord run_naive(int total_duration, std::uint64_t seed, const SimConfig& config);
/// The engine over SimTransport.
RunRecord run_reca(int total_duration, std::uint64_t seed, const SimConfig& config,
                   const engine::EngineConfig& engine_config);

struct ExperimentResult {
    std::vector<RunRecord> records;  // (controller, duration, seed) order
    std::map<Controller, std::map<int, double>> mean;
};

ExperimentResult run_experiment(const std::vector<Controller>& controllers, const std::vector<int>& durations,
                                const std::vector<std::uint64_t>& seeds, const SimConfig& config,
                                const engine::EngineConfig& engine_config = {});

std::string to_csv(const ExperimentResult& result);
Json summary_json(const ExperimentResult& result);
/// Retention vs duration, one polyline per controller.
std::string to_svg(const ExperimentResult& result);

}  // namespace reca::sim
