// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include "state_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

namespace reca::state {

const char* to_string(Category c) noexcept {
    switch (c) {
        case Category::visual: return "visual";
        case Category::narrative: return "narrative";
        case Category::transition: return "transition";
    }
    return "?";
}

const char* to_string(Provenance p) noexcept {
    switch (p) {
        case Provenance::anchor: return "anchor";
        case Provenance::intent: return "intent";
        case Provenance::generated: return "generated";
    }
    return "?";
}

const char* to_string(ObservationKind k) noexcept {
    switch (k) {
        case ObservationKind::event_completion: return "event_completion";
        case ObservationKind::identity_status: return "identity_status";
        case ObservationKind::object_change: return "object_change";
        case ObservationKind::scene_change: return "scene_change";
        case ObservationKind::camera_boundary: return "camera_boundary";
        case ObservationKind::transition_evidence: return "transition_evidence";
    }
    return "?";
}

const char* to_string(AdmitStatus s) noexcept {
    switch (s) {
        case AdmitStatus::admitted: return "admitted";
        case AdmitStatus::updated: return "updated";
        case AdmitStatus::duplicate: return "duplicate";
        case AdmitStatus::rejected_unsupported: return "rejected_unsupported";
        case AdmitStatus::rejected_anchor_protected: return "rejected_anchor_protected";
        case AdmitStatus::rejected_provenance_conflict: return "rejected_provenance_conflict";
        case AdmitStatus::rejected_generated: return "rejected_generated";
        case AdmitStatus::rejected_invalid: return "rejected_invalid";
    }
    return "?";
}

Category category_from_string(const std::string& s) {
    if (s == "visual") return Category::visual;
    if (s == "narrative") return Category::narrative;
    if (s == "transition") return Category::transition;
    fail(ErrorCode::schema, "unknown category \"" + s + "\"");
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "anchor") return Provenance::anchor;
    if (s == "intent") return Provenance::intent;
    if (s == "generated") return Provenance::generated;
    fail(ErrorCode::schema, "unknown provenance \"" + s + "\"");
}

ObservationKind observation_kind_from_string(const std::string& s) {
    static const std::pair<const char*, ObservationKind> kKinds[] = {
        {"event_completion", ObservationKind::event_completion},
        {"identity_status", ObservationKind::identity_status},
        {"object_change", ObservationKind::object_change},
        {"scene_change", ObservationKind::scene_change},
        {"camera_boundary", ObservationKind::camera_boundary},
        {"transition_evidence", ObservationKind::transition_evidence},
    };
    for (const auto& [name, kind] : kKinds) {
        if (s == name) return kind;
    }
    fail(ErrorCode::schema, "unknown observation kind \"" + s + "\"");
}

Category category_for(ObservationKind kind) noexcept {
    switch (kind) {
        case ObservationKind::event_completion: return Category::narrative;
        case ObservationKind::identity_status:
        case ObservationKind::object_change:
        case ObservationKind::scene_change: return Category::visual;
        case ObservationKind::camera_boundary:
        case ObservationKind::transition_evidence: return Category::transition;
    }
    return Category::visual;
}

double freshness(const VariableRecord& record, Step k, double alpha) {
    require(alpha > 0.0 && std::isfinite(alpha), ErrorCode::precondition,
            "freshness: alpha must be a positive finite number");
    require(k >= record.last_refresh, ErrorCode::precondition,
            "freshness: step " + std::to_string(k) + " precedes last refresh " +
                std::to_string(record.last_refresh) + " of \"" + record.key + "\"");
    if (k == record.last_refresh) return 1.0;
    return std::exp(-alpha * static_cast<double>(k - record.last_refresh));
}

double refresh_priority(const VariableRecord& record, double salience, Step k, double alpha) {
    require(salience >= 0.0 && salience <= 1.0, ErrorCode::precondition,
            "refresh_priority: salience must lie in [0,1]");
    return salience * (1.0 - freshness(record, k, alpha));
}

namespace {

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

std::string validate_record(const VariableRecord& r) {
    if (r.key.empty()) return "empty key";
    if (!in_unit_interval(r.support)) return "support outside [0,1] for \"" + r.key + "\"";
    if (!in_unit_interval(r.confidence)) return "confidence outside [0,1] for \"" + r.key + "\"";
    if (r.last_refresh < 0) return "negative last_refresh for \"" + r.key + "\"";
    return {};
}

// ---- ExternalState -------------------------------------------------------

const ExternalState::RecordMap& ExternalState::records(Category c) const noexcept {
    switch (c) {
        case Category::narrative: return narrative_;
        case Category::transition: return transition_;
        case Category::visual: break;
    }
    return visual_;
}

ExternalState::RecordMap& ExternalState::mutable_records(Category c) noexcept {
    return const_cast<RecordMap&>(std::as_const(*this).records(c));
}

const VariableRecord* ExternalState::find(const std::string& key) const {
    for (const RecordMap* m : {&visual_, &narrative_, &transition_}) {
        if (auto it = m->find(key); it != m->end()) return &it->second;
    }
    return nullptr;
}

VariableRecord* ExternalState::find_mutable(const std::string& key) {
    return const_cast<VariableRecord*>(std::as_const(*this).find(key));
}

std::size_t ExternalState::size() const noexcept {
    return visual_.size() + narrative_.size() + transition_.size();
}

std::vector<const VariableRecord*> ExternalState::all_records() const {
    std::vector<const VariableRecord*> out;
    out.reserve(size());
    for (const RecordMap* m : {&visual_, &narrative_, &transition_}) {
        for (const auto& [_, rec] : *m) out.push_back(&rec);
    }
    std::sort(out.begin(), out.end(),
              [](const VariableRecord* a, const VariableRecord* b) { return a->key < b->key; });
    return out;
}

const ExternalState::AuditTrail& ExternalState::audit(const std::string& key) const {
    static const AuditTrail kEmpty;
    auto it = metadata_.find(key);
    return it == metadata_.end() ? kEmpty : it->second;
}

void ExternalState::append_audit(const std::string& key, AuditEntry entry) {
    auto& trail = metadata_[key];
    trail.push_back(std::move(entry));
    while (trail.size() > kAuditCap) trail.pop_front();
}

AdmitResult ExternalState::admit(const VariableRecord& candidate, double epsilon) {
    require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::precondition,
            "admit: epsilon must lie in [0,1]");
    if (auto why = validate_record(candidate); !why.empty()) {
        return {AdmitStatus::rejected_invalid, why};
    }
    if (candidate.last_refresh > step_) {
        return {AdmitStatus::rejected_invalid, "last_refresh lies in the future"};
    }
    if (candidate.provenance == Provenance::generated) {
        return {AdmitStatus::rejected_generated,
                "generated-provenance variables enter only through refresh"};
    }
    if (candidate.provenance == Provenance::anchor && candidate.support < epsilon) {
        return {AdmitStatus::rejected_unsupported, "anchor support below threshold"};
    }

    if (VariableRecord* existing = find_mutable(candidate.key)) {
        if (existing->provenance == Provenance::anchor &&
            candidate.provenance == Provenance::intent) {
            return {AdmitStatus::rejected_anchor_protected,
                    "intent cannot overwrite anchor-provenance \"" + candidate.key + "\""};
        }
        if (existing->provenance != candidate.provenance) {
            return {AdmitStatus::rejected_provenance_conflict,
                    std::string("key already held with provenance ") +
                        to_string(existing->provenance)};
        }
        if (existing->category != candidate.category) {
            return {AdmitStatus::rejected_invalid, "category differs from existing record"};
        }
        if (values_equal(existing->value, candidate.value) && existing->tag == candidate.tag &&
            existing->support == candidate.support &&
            existing->confidence == candidate.confidence) {
            return {AdmitStatus::duplicate, "identical record already admitted"};
        }
        AuditEntry entry{step_, "admit-update", existing->value, candidate.value,
                         candidate.provenance};
        *existing = candidate;
        append_audit(candidate.key, std::move(entry));
        return {AdmitStatus::updated, {}};
    }

    mutable_records(candidate.category).emplace(candidate.key, candidate);
    append_audit(candidate.key, {step_, "admit", {}, candidate.value, candidate.provenance});
    return {AdmitStatus::admitted, {}};
}

void ExternalState::upsert(const VariableRecord& record, std::string_view operation) {
    if (auto why = validate_record(record); !why.empty()) fail(ErrorCode::invalid_argument, why);
    std::string old_value;
    if (VariableRecord* existing = find_mutable(record.key)) {
        old_value = existing->value;
        if (existing->category != record.category) {
            mutable_records(existing->category).erase(record.key);
        }
    }
    mutable_records(record.category)[record.key] = record;
    append_audit(record.key,
                 {step_, std::string(operation), std::move(old_value), record.value, record.provenance});
}

std::vector<std::string> ExternalState::check_invariants() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (Category c : {Category::visual, Category::narrative, Category::transition}) {
        for (const auto& [key, rec] : records(c)) {
            if (!seen.insert(key).second) out.push_back("duplicate key across maps: " + key);
            if (rec.key != key) out.push_back("record key mismatch: " + key);
            if (rec.category != c) out.push_back("category mismatch for " + key);
            if (auto why = validate_record(rec); !why.empty()) out.push_back(why);
            if (rec.last_refresh > step_) out.push_back("last_refresh beyond step for " + key);
            if (!metadata_.contains(key)) out.push_back("missing audit trail for " + key);
        }
    }
    for (const auto& [key, trail] : metadata_) {
        if (!seen.contains(key)) out.push_back("audit trail without record: " + key);
        if (trail.size() > kAuditCap) out.push_back("audit trail over cap: " + key);
    }
    return out;
}

ExternalState apply_refresh(const ExternalState& state, std::span<const Observation> observations,
                            const std::string& goal, Step k, std::vector<std::string>* notes) {
    require(k == state.step() || k == state.step() + 1, ErrorCode::precondition,
            "apply_refresh: step " + std::to_string(k) + " is neither the current step " +
                std::to_string(state.step()) + " nor its successor");
    auto note = [&](std::string line) {
        log(LogLevel::debug, line);
        if (notes) notes->push_back(std::move(line));
    };

    ExternalState next = state;
    next.step_ = k;
    for (const Observation& obs : observations) {
        VariableRecord* rec = next.find_mutable(obs.key);
        if (obs.confidence && (*obs.confidence < 0.0 || *obs.confidence > 1.0)) {
            note("dropped observation for \"" + obs.key + "\": confidence outside [0,1]");
            continue;
        }
        if (!obs.verified) {
            note(std::string(rec ? "unverified observation for \"" : "dropped unknown unverified \"") +
                 obs.key + "\" during \"" + goal + "\"");
            continue;
        }
        if (rec == nullptr) {
            VariableRecord fresh{obs.key,
                                 obs.observed_value,
                                 std::nullopt,
                                 category_for(obs.kind),
                                 Provenance::generated,
                                 1.0,
                                 obs.confidence.value_or(1.0),
                                 k};
            next.mutable_records(fresh.category).emplace(fresh.key, fresh);
            next.append_audit(obs.key, {k, "discover", {}, obs.observed_value, Provenance::generated});
            continue;
        }
        const bool changed = !values_equal(rec->value, obs.observed_value);
        AuditEntry entry{k, "refresh", rec->value, obs.observed_value, rec->provenance};
        if (changed || rec->provenance == Provenance::intent) {
            // A changed value, or an intent that is now realised, becomes generated state.
            rec->provenance = Provenance::generated;
        }
        rec->value = obs.observed_value;
        if (obs.confidence) rec->confidence = *obs.confidence;
        rec->last_refresh = std::max(rec->last_refresh, k);
        entry.provenance = rec->provenance;
        next.append_audit(obs.key, std::move(entry));
    }
    return next;
}

ExternalState merge_chains(std::span<const ChainState> chains) {
    ExternalState out;
    if (chains.empty()) return out;

    struct Winner {
        const VariableRecord* rec;
        const ChainState* chain;
    };
    std::map<std::string, Winner> winners;
    Step step = 0;
    for (const ChainState& cs : chains) {
        step = std::max(step, cs.state.step());
        for (const VariableRecord* rec : cs.state.all_records()) {
            auto [it, inserted] = winners.try_emplace(rec->key, Winner{rec, &cs});
            if (inserted) continue;
            const Winner& cur = it->second;
            // later step, then higher confidence; the chain id breaks exact ties
            auto a = std::make_tuple(rec->last_refresh, rec->confidence);
            auto b = std::make_tuple(cur.rec->last_refresh, cur.rec->confidence);
            if (a > b || (a == b && cs.chain_id < cur.chain->chain_id)) {
                it->second = Winner{rec, &cs};
            }
        }
    }
    out.step_ = step;
    for (const auto& [key, w] : winners) {
        out.mutable_records(w.rec->category).emplace(key, *w.rec);
        out.metadata_[key] = w.chain->state.audit(key);
    }
    return out;
}

// ---- serialization --------------------------------------------------------

Json record_to_json(const VariableRecord& r) {
    Json j;
    j["key"] = r.key;
    j["value"] = r.value;
    j["tag"] = r.tag ? Json(*r.tag) : Json(nullptr);
    j["category"] = to_string(r.category);
    j["provenance"] = to_string(r.provenance);
    j["support"] = r.support;
    j["confidence"] = r.confidence;
    j["last_refresh"] = r.last_refresh;
    return j;
}

VariableRecord record_from_json(const Json& j) {
    require(j.is_object(), ErrorCode::schema, "variable record must be an object");
    VariableRecord r;
    try {
        r.key = j.at("key").get<std::string>();
        r.value = j.at("value").get<std::string>();
        if (j.contains("tag") && !j["tag"].is_null()) r.tag = j["tag"].get<std::string>();
        r.category = category_from_string(j.value("category", std::string("visual")));
        r.provenance = provenance_from_string(j.value("provenance", std::string("anchor")));
        r.support = j.value("support", 0.0);
        r.confidence = j.value("confidence", 1.0);
        r.last_refresh = j.value("last_refresh", Step{0});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::schema, std::string("variable record: ") + e.what());
    }
    return r;
}

Json observation_to_json(const Observation& o) {
    Json j;
    j["key"] = o.key;
    j["observed_value"] = o.observed_value;
    j["verified"] = o.verified;
    j["kind"] = to_string(o.kind);
    j["confidence"] = o.confidence ? Json(*o.confidence) : Json(nullptr);
    return j;
}

Observation observation_from_json(const Json& j) {
    Observation o;
    try {
        o.key = j.at("key").get<std::string>();
        o.observed_value = j.at("observed_value").get<std::string>();
        o.verified = j.value("verified", false);
        o.kind = observation_kind_from_string(j.value("kind", std::string("identity_status")));
        if (j.contains("confidence") && !j["confidence"].is_null()) {
            o.confidence = j["confidence"].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::schema, std::string("observation: ") + e.what());
    }
    return o;
}

Json ExternalState::to_json() const {
    Json doc;
    doc["schema"] = kStateSchema;
    doc["step"] = step_;
    for (Category c : {Category::visual, Category::narrative, Category::transition}) {
        Json arr = Json::array();
        for (const auto& [_, rec] : records(c)) arr.push_back(record_to_json(rec));
        doc[to_string(c)] = std::move(arr);
    }
    Json meta = Json::object();
    for (const auto& [key, trail] : metadata_) {
        Json arr = Json::array();
        for (const auto& e : trail) {
            Json je;
            je["step"] = e.step;
            je["operation"] = e.operation;
            je["old_value"] = e.old_value;
            je["new_value"] = e.new_value;
            je["provenance"] = to_string(e.provenance);
            arr.push_back(std::move(je));
        }
        meta[key] = std::move(arr);
    }
    doc["metadata"] = std::move(meta);
    return doc;
}

ExternalState ExternalState::from_json(const Json& doc) {
    expect_schema(doc, kStateSchema);
    ExternalState s;
    s.step_ = doc.value("step", Step{0});
    require(s.step_ >= 0, ErrorCode::schema, "state step must be non-negative");
    for (Category c : {Category::visual, Category::narrative, Category::transition}) {
        const char* field = to_string(c);
        if (!doc.contains(field)) continue;
        const auto& arr = doc[field];
        require(arr.is_array(), ErrorCode::schema, std::string("/") + field + " must be an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            VariableRecord rec = record_from_json(arr[i]);
            require(rec.category == c, ErrorCode::schema,
                    std::string("/") + field + "/" + std::to_string(i) + ": category mismatch");
            require(!s.contains(rec.key), ErrorCode::schema, "duplicate key \"" + rec.key + "\"");
            if (auto why = validate_record(rec); !why.empty()) fail(ErrorCode::schema, why);
            s.mutable_records(c).emplace(rec.key, std::move(rec));
        }
    }
    if (doc.contains("metadata")) {
        for (const auto& [key, arr] : doc["metadata"].items()) {
            AuditTrail trail;
            for (const auto& je : arr) {
                trail.push_back({je.value("step", Step{0}), je.value("operation", std::string()),
                                 je.value("old_value", std::string()),
                                 je.value("new_value", std::string()),
                                 provenance_from_string(je.value("provenance", std::string("anchor")))});
            }
            s.metadata_[key] = std::move(trail);
        }
    }
    // Snapshots written by older tools may omit trails; keep the invariant.
    for (const VariableRecord* rec : s.all_records()) s.metadata_.try_emplace(rec->key);
    if (auto bad = s.check_invariants(); !bad.empty()) fail(ErrorCode::schema, bad.front());
    return s;
}

}  // namespace reca::state
