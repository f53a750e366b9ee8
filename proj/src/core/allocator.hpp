// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "planner.hpp"
#include "state_store.hpp"

namespace reca::alloc {

inline constexpr int kDefaultBudget = 1000;  // B_G
inline constexpr int kScaffoldTokens = 24;   // six 4-token section headers
inline constexpr double kDefaultLambdaRed = 0.5;

// ---- token counting -----------------------------------------------------------

class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual int count(std::string_view text) const = 0;
};

/// Each run of word characters (alphanumerics, '_', non-ASCII bytes) is one
/// token; every other non-space character is one token. Counts are additive
/// across whitespace-separated pieces.
class ApproxTokenCounter final : public TokenCounter {
public:
    int count(std::string_view text) const override;
};

const TokenCounter& default_counter();

// ---- selection ------------------------------------------------------------------

enum class Section {
    current_beat,
    anchor_locked_state,
    active_entities,
    local_action,
    camera_style_constraints,
    transition_boundary,
};

inline constexpr std::array<Section, 6> kSections = {
    Section::current_beat,         Section::anchor_locked_state,
    Section::active_entities,      Section::local_action,
    Section::camera_style_constraints, Section::transition_boundary,
};

const char* to_string(Section s) noexcept;
Section section_from_string(const std::string& s);

/// Section a state record renders under.
Section section_for(const state::VariableRecord& record);

struct CandidateItem {
    std::string key;
    std::string text;
    std::string value;
    Section section = Section::active_entities;
    int token_cost = 0;
    double support = 0.0;
    double salience = 0.0;
    double fresh = 0.0;
};

/// q_sup * w * f.
double utility(const CandidateItem& item);

CandidateItem make_item(const std::string& key, const std::string& value, Section section,
                        double support, double salience, double fresh,
                        const TokenCounter& counter = default_counter());

struct SelectOptions {
    double lambda_red = kDefaultLambdaRed;
    int scaffold_tokens = kScaffoldTokens;
    std::set<std::string> pinned;  // keys exempt from the redundancy test
};

enum class SkipReason { non_positive_utility, duplicate_key, over_budget, redundant };

struct Skipped {
    std::string key;
    SkipReason reason;
};

struct Selection {
    std::vector<CandidateItem> items;  // insertion order (utility descending)
    int total_cost = 0;                // item tokens, excluding scaffolding
    double total_utility = 0.0;
    int budget = 0;
    int scaffold_tokens = 0;
    std::vector<Skipped> skipped;
};

/// Shared-token Jaccard overlap of two texts (lowercased word sets).
double text_overlap(std::string_view a, std::string_view b);

/// Greedy descending-utility insertion under `budget - scaffold` tokens.
Selection select(std::vector<CandidateItem> pool, int budget, const SelectOptions& options = {});

// ---- compile ------------------------------------------------------------------------

struct Boundary {
    plan::BoundaryMode mode = plan::BoundaryMode::anchor;
    std::string ref;   // anchor id, segment checksum or keyframe id
    std::string text;  // rendered descriptor; may be empty
};

struct PromptEntry {
    Section section;
    std::string key;
    std::string value;
    std::string text;
    int start_token = 0;  // offset of the first token of this line in the prompt
    int token_cost = 0;
    double utility = 0.0;
};

struct CompiledPrompt {
    std::string goal;
    Boundary boundary;
    std::vector<PromptEntry> entries;  // section order, then utility order
    std::set<std::string> source_keys;
    int token_count = 0;
    int budget = 0;
    std::string text;  // rendered prompt

    std::vector<const PromptEntry*> section(Section s) const;
};

/// Renders the fixed six-section layout. Items that overflow the budget are
/// dropped lowest-utility first and the prompt is re-rendered.
CompiledPrompt compile(const Selection& slice, const std::string& goal, const Boundary& boundary,
                       int budget, const TokenCounter& counter = default_counter());

/// Scaffolding for a leaf: section headers plus goal and boundary text.
int scaffold_for(const std::string& goal, const Boundary& boundary,
                 const TokenCounter& counter = default_counter());

inline constexpr const char* kPromptSchema = "reca-prompt/1";
Json to_json(const CompiledPrompt& p);
CompiledPrompt prompt_from_json(const Json& doc);

// ---- decomposition ------------------------------------------------------------------

struct UnitSpec {
    int shot_index = 1;
    int unit_index = 1;
    std::string goal;
    int duration = 0;
    std::set<std::string> preserved_keys;
    std::map<std::string, double> salience;
    plan::BoundaryMode boundary_mode = plan::BoundaryMode::anchor;
};

/// m = ceil(d / tau_g) balanced units (or the shot's explicit units).
std::vector<UnitSpec> decompose_shot(const plan::ShotSpec& shot, int tau_g);

}  // namespace reca::alloc
