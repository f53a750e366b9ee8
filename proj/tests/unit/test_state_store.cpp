// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "state_store.hpp"

using namespace reca;
using namespace reca::state;

namespace {

VariableRecord rec(std::string key, std::string value, Provenance p, double support, Step t_ref = 0,
                   Category c = Category::visual) {
    VariableRecord r;
    r.key = std::move(key);
    r.value = std::move(value);
    r.provenance = p;
    r.support = support;
    r.last_refresh = t_ref;
    r.category = c;
    return r;
}

Observation obs(std::string key, std::string value, bool verified = true,
                ObservationKind kind = ObservationKind::identity_status) {
    Observation o;
    o.key = std::move(key);
    o.observed_value = std::move(value);
    o.verified = verified;
    o.kind = kind;
    return o;
}

}  // namespace

TEST_CASE("freshness reference values") {
    CHECK(freshness(rec("a", "x", Provenance::anchor, 1, 3), 3) == 1.0);
    CHECK(freshness(rec("a", "x", Provenance::anchor, 1, 3), 5) == doctest::Approx(0.449329).epsilon(1e-6));
    CHECK(freshness(rec("a", "x", Provenance::anchor, 1, 0), 10) == doctest::Approx(0.0183156).epsilon(1e-6));
}

TEST_CASE("freshness rejects a step before the last refresh") {
    try {
        freshness(rec("a", "x", Provenance::anchor, 1, 4), 3);
        FAIL("expected a precondition error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::precondition);
    }
}

TEST_CASE("freshness is 1 at zero elapsed steps and strictly decreasing") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> alpha(0.01, 3.0);
    for (int i = 0; i < 200; ++i) {
        const double a = alpha(rng);
        const auto r = rec("a", "x", Provenance::anchor, 1, 0);
        double prev = freshness(r, 0, a);
        CHECK(prev == 1.0);
        for (Step k = 1; k < 20; ++k) {
            const double f = freshness(r, k, a);
            CHECK(f < prev);
            CHECK(f > 0.0);
            prev = f;
        }
    }
}

TEST_CASE("refresh priority reference values") {
    CHECK(refresh_priority(rec("a", "x", Provenance::anchor, 1, 2), 0.9, 2) == 0.0);
    CHECK(refresh_priority(rec("a", "x", Provenance::anchor, 1, 0), 0.75, 2) ==
          doctest::Approx(0.413003).epsilon(1e-6));
    CHECK(refresh_priority(rec("a", "x", Provenance::anchor, 1, 0), 0.0, 9) == 0.0);
    double prev = -1.0;
    for (Step k = 0; k < 10; ++k) {
        const double p = refresh_priority(rec("a", "x", Provenance::anchor, 1, 0), 0.5, k);
        CHECK(p > prev);
        prev = p;
    }
    CHECK(marked_for_reinjection(0.3, 0.25));
    CHECK_FALSE(marked_for_reinjection(0.25, 0.25));
}

TEST_CASE("admission gate is inclusive at epsilon") {
    ExternalState s;
    CHECK(s.admit(rec("coat", "red", Provenance::anchor, 0.5)).status == AdmitStatus::admitted);
    const auto r = s.admit(rec("hair", "black", Provenance::anchor, 0.25));
    CHECK(r.status == AdmitStatus::rejected_unsupported);
    CHECK_FALSE(s.contains("hair"));
}

TEST_CASE("intent candidates are admitted without support but never overwrite anchors") {
    ExternalState s;
    CHECK(s.admit(rec("door", "open", Provenance::intent, 0.0, 0, Category::narrative)).accepted());
    REQUIRE(s.admit(rec("coat", "red", Provenance::anchor, 1.0)).accepted());
    CHECK(s.admit(rec("coat", "blue", Provenance::intent, 0.0)).status == AdmitStatus::rejected_anchor_protected);
    CHECK(s.find("coat")->value == "red");
}

TEST_CASE("generated candidates are refused by admit") {
    ExternalState s;
    CHECK(s.admit(rec("x", "y", Provenance::generated, 1.0)).status == AdmitStatus::rejected_generated);
}

TEST_CASE("admit is idempotent") {
    ExternalState s;
    const auto r = rec("coat", "red", Provenance::anchor, 0.75);
    CHECK(s.admit(r).status == AdmitStatus::admitted);
    CHECK(s.admit(r).status == AdmitStatus::duplicate);
    CHECK(s.size() == 1);
    CHECK(s.audit("coat").size() == 1);
}

TEST_CASE("apply_refresh updates the observed record and appends audit") {
    ExternalState s;
    REQUIRE(s.admit(rec("hero_coat", "red", Provenance::anchor, 1.0)).accepted());
    s.set_step(4);
    const auto before = s.audit("hero_coat").size();
    // hero_coat last refreshed at 3 in the reference trace; step 0 here.
    const std::vector<Observation> o = {obs("hero_coat", "red")};
    const auto next = apply_refresh(s, o, "walk", 5);
    CHECK(next.step() == 5);
    CHECK(next.find("hero_coat")->last_refresh == 5);
    CHECK(next.find("hero_coat")->provenance == Provenance::anchor);
    CHECK(next.audit("hero_coat").size() == before + 1);
}

TEST_CASE("apply_refresh with no observations changes only the step") {
    ExternalState s;
    REQUIRE(s.admit(rec("coat", "red", Provenance::anchor, 1.0)).accepted());
    const auto next = apply_refresh(s, {}, "idle", 1);
    CHECK(next.step() == 1);
    auto copy = next;
    copy.set_step(0);
    CHECK(copy == s);
}

TEST_CASE("a realised intent becomes generated state") {
    ExternalState s;
    REQUIRE(s.admit(rec("hero", "standing", Provenance::anchor, 1.0)).accepted());
    REQUIRE(s.admit(rec("door_opened", "true", Provenance::intent, 0.0, 0, Category::narrative)).accepted());
    s.set_step(1);
    const std::vector<Observation> o = {obs("door_opened", "true", true, ObservationKind::event_completion)};
    const auto next = apply_refresh(s, o, "open the door", 2);
    const auto* r = next.find("door_opened");
    REQUIRE(r);
    CHECK(r->provenance == Provenance::generated);
    CHECK(r->last_refresh == 2);
    CHECK(next.find("hero")->last_refresh == 0);
}

TEST_CASE("apply_refresh discovers verified unknowns and drops unverified ones") {
    ExternalState s;
    std::vector<std::string> notes;
    const std::vector<Observation> o = {obs("lamp", "lit", true, ObservationKind::object_change),
                                        obs("ghost", "?", false)};
    const auto next = apply_refresh(s, o, "g", 1, &notes);
    REQUIRE(next.find("lamp"));
    CHECK(next.find("lamp")->provenance == Provenance::generated);
    CHECK_FALSE(next.contains("ghost"));
    CHECK(notes.size() == 1);
}

TEST_CASE("apply_refresh rejects a step that skips ahead") {
    ExternalState s;
    CHECK_THROWS_AS(apply_refresh(s, {}, "g", 2), Error);
}

TEST_CASE("apply_refresh never drops keys or lowers last_refresh") {
    std::mt19937_64 rng(11);
    ExternalState s;
    for (int i = 0; i < 8; ++i) {
        REQUIRE(s.admit(rec("k" + std::to_string(i), "v0", Provenance::anchor, 1.0)).accepted());
    }
    for (Step k = 1; k <= 30; ++k) {
        std::vector<Observation> o;
        for (int i = 0; i < 8; ++i) {
            if (rng() % 3 == 0) o.push_back(obs("k" + std::to_string(i), "v" + std::to_string(rng() % 3), rng() % 4 != 0));
        }
        const auto next = apply_refresh(s, o, "g", k);
        for (const auto* r : s.all_records()) {
            const auto* n = next.find(r->key);
            REQUIRE(n);
            CHECK(n->last_refresh >= r->last_refresh);
        }
        CHECK(next.check_invariants().empty());
        s = next;
    }
}

TEST_CASE("audit trail is capped per key") {
    ExternalState s;
    REQUIRE(s.admit(rec("k", "v", Provenance::anchor, 1.0)).accepted());
    for (Step k = 1; k <= 300; ++k) {
        const std::vector<Observation> o = {obs("k", "v" + std::to_string(k % 2))};
        s = apply_refresh(s, o, "g", k);
    }
    CHECK(s.audit("k").size() == kAuditCap);
    CHECK(s.audit("k").back().step == 300);
}

TEST_CASE("merge_chains is commutative and prefers the later refresh") {
    ExternalState base;
    REQUIRE(base.admit(rec("a", "0", Provenance::anchor, 1.0)).accepted());
    REQUIRE(base.admit(rec("b", "0", Provenance::anchor, 1.0)).accepted());
    const std::vector<Observation> oa = {obs("a", "1")};
    const std::vector<Observation> ob = {obs("b", "2")};
    const ChainState x{"x", apply_refresh(base, oa, "g", 1)};
    auto y_state = apply_refresh(base, ob, "g", 1);
    y_state = apply_refresh(y_state, ob, "g", 2);
    const ChainState y{"y", y_state};
    const std::vector<ChainState> xy = {x, y};
    const std::vector<ChainState> yx = {y, x};
    const auto m1 = merge_chains(xy);
    const auto m2 = merge_chains(yx);
    CHECK(m1.serialize() == m2.serialize());
    CHECK(m1.find("a")->value == "1");
    CHECK(m1.find("b")->value == "2");
    CHECK(m1.step() == 2);
}

TEST_CASE("state document round-trips byte-stably") {
    ExternalState s;
    auto r = rec("coat", "red", Provenance::anchor, 0.75);
    r.tag = "identity";
    REQUIRE(s.admit(r).accepted());
    REQUIRE(s.admit(rec("goal", "cross", Provenance::intent, 0.0, 0, Category::narrative)).accepted());
    const std::vector<Observation> o = {obs("coat", "blue")};
    s = apply_refresh(s, o, "g", 1);
    const auto doc = s.to_json();
    CHECK(doc.at("schema") == kStateSchema);
    const auto back = ExternalState::from_json(doc);
    CHECK(back == s);
    CHECK(back.serialize() == s.serialize());
}

TEST_CASE("state document with a wrong schema is rejected") {
    Json doc = ExternalState().to_json();
    doc["schema"] = "reca-state/0";
    CHECK_THROWS_AS(ExternalState::from_json(doc), Error);
}
