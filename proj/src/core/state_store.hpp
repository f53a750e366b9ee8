// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace reca::state {

using Step = std::int64_t;

enum class Category { visual, narrative, transition };
enum class Provenance { anchor, intent, generated };
enum class ObservationKind {
    event_completion,
    identity_status,
    object_change,
    scene_change,
    camera_boundary,
    transition_evidence,
};

const char* to_string(Category c) noexcept;
const char* to_string(Provenance p) noexcept;
const char* to_string(ObservationKind k) noexcept;
Category category_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);
ObservationKind observation_kind_from_string(const std::string& s);

/// Category a newly discovered variable lands in, by observation kind.
Category category_for(ObservationKind kind) noexcept;

inline constexpr double kDefaultAlpha = 0.4;
inline constexpr double kDefaultEpsilon = 0.5;
inline constexpr std::size_t kAuditCap = 256;

struct VariableRecord {
    std::string key;
    std::string value;
    std::optional<std::string> tag;  // structured hint, e.g. "camera" or "style"
    Category category = Category::visual;
    Provenance provenance = Provenance::anchor;
    double support = 0.0;
    double confidence = 1.0;
    Step last_refresh = 0;

    friend bool operator==(const VariableRecord&, const VariableRecord&) = default;
};

struct Observation {
    std::string key;
    std::string observed_value;
    bool verified = false;
    ObservationKind kind = ObservationKind::identity_status;
    std::optional<double> confidence;  // pass-through from the extractor
};

struct AuditEntry {
    Step step = 0;
    std::string operation;
    std::string old_value;
    std::string new_value;
    Provenance provenance = Provenance::anchor;

    friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

enum class AdmitStatus {
    admitted,
    updated,
    duplicate,
    rejected_unsupported,
    rejected_anchor_protected,
    rejected_provenance_conflict,
    rejected_generated,
    rejected_invalid,
};

struct AdmitResult {
    AdmitStatus status;
    std::string reason;

    bool accepted() const noexcept {
        return status == AdmitStatus::admitted || status == AdmitStatus::updated;
    }
};

const char* to_string(AdmitStatus s) noexcept;

// f_k(z) = exp(-alpha (k - t_ref)).
double freshness(const VariableRecord& record, Step k, double alpha = kDefaultAlpha);

// Pri_k(z) = w_k(z; g_{k+1}) (1 - f_k(z)).
double refresh_priority(const VariableRecord& record, double salience, Step k,
                        double alpha = kDefaultAlpha);

inline bool marked_for_reinjection(double priority, double eta) { return priority > eta; }

/// Checks field ranges; returns an empty string when valid.
std::string validate_record(const VariableRecord& record);

/// Persistent external memory: visual, narrative and transition maps, a
/// per-variable audit trail and the step counter.
///
/// ExternalState is a value type. Snapshots handed to concurrent readers are
/// plain copies; the engine mutates only through admit() and apply_refresh().
struct ChainState;

class ExternalState {
public:
    using RecordMap = std::map<std::string, VariableRecord>;
    using AuditTrail = std::deque<AuditEntry>;

    ExternalState() = default;

    Step step() const noexcept { return step_; }
    void set_step(Step k) { step_ = k; }
    const RecordMap& visual() const noexcept { return visual_; }
    const RecordMap& narrative() const noexcept { return narrative_; }
    const RecordMap& transition() const noexcept { return transition_; }
    const std::map<std::string, AuditTrail>& metadata() const noexcept { return metadata_; }

    const RecordMap& records(Category c) const noexcept;
    const VariableRecord* find(const std::string& key) const;
    bool contains(const std::string& key) const { return find(key) != nullptr; }
    std::size_t size() const noexcept;
    std::vector<const VariableRecord*> all_records() const;  // key order
    const AuditTrail& audit(const std::string& key) const;

    AdmitResult admit(const VariableRecord& candidate, double epsilon = kDefaultEpsilon);

    /// Inserts or replaces a record without the admission gate. Used when
    /// loading snapshots and by planners that model hypothetical commitments.
    void upsert(const VariableRecord& record, std::string_view operation = "upsert");

    /// Checks every type invariant; returns the violations found.
    std::vector<std::string> check_invariants() const;

    Json to_json() const;
    static ExternalState from_json(const Json& doc);
    std::string serialize() const { return dump_canonical(to_json()); }

    friend bool operator==(const ExternalState&, const ExternalState&) = default;

private:
    friend ExternalState apply_refresh(const ExternalState&, std::span<const Observation>,
                                       const std::string&, Step, std::vector<std::string>*);
    friend ExternalState merge_chains(std::span<const ChainState>);

    RecordMap& mutable_records(Category c) noexcept;
    VariableRecord* find_mutable(const std::string& key);
    void append_audit(const std::string& key, AuditEntry entry);

    RecordMap visual_;
    RecordMap narrative_;
    RecordMap transition_;
    std::map<std::string, AuditTrail> metadata_;
    Step step_ = 0;
};

/// Writes verified observations back into a copy of the state at step k.
/// `notes`, when given, receives one line per dropped observation.
ExternalState apply_refresh(const ExternalState& state, std::span<const Observation> observations,
                            const std::string& goal, Step k,
                            std::vector<std::string>* notes = nullptr);

struct ChainState {
    std::string chain_id;
    ExternalState state;
};

/// Keyed merge of independent chain outputs. For each key the record with
/// the later last_refresh wins, then the higher confidence, then the
/// lexicographically smaller chain id. Commutative over input order.
ExternalState merge_chains(std::span<const ChainState> chains);

inline constexpr const char* kStateSchema = "reca-state/1";

Json record_to_json(const VariableRecord& r);
VariableRecord record_from_json(const Json& j);
Json observation_to_json(const Observation& o);
Observation observation_from_json(const Json& j);

}  // namespace reca::state
