// Copyright 2026 The ReCA Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "backends.hpp"

using namespace reca;
using namespace reca::backend;

namespace {

CallRequest gen_request(int duration, std::string prompt = "a lantern on a pier") {
    CallRequest r;
    r.kind = RequestKind::generate;
    r.request_id = "s001u01";
    r.model = "mock";
    r.prompt = std::move(prompt);
    r.prompt_tokens = alloc::default_counter().count(r.prompt);
    r.boundary_ref = "anchor";
    r.duration_s = duration;
    r.seed = 7;
    return r;
}

CallRecord scored_call(std::uint64_t seed = 0) {
    MockOptions opt;
    opt.seed = seed;
    MockTransport t({}, opt);
    SimClock clock;
    const GeneratorCapability cap;
    auto out = submit_and_poll(t, gen_request(5), RetryPolicy{}, clock, &cap);
    REQUIRE(out.ok);
    return out.record;
}

}  // namespace

TEST_CASE("over-long request fails locally with no network call") {
    MockTransport inner;
    FaultInjectingTransport t(inner, {});
    SimClock clock;
    const GeneratorCapability cap;
    try {
        submit_and_poll(t, gen_request(7), RetryPolicy{}, clock, &cap);
        FAIL("expected a capability error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::capability);
    }
    CHECK(t.network_calls() == 0);
    CHECK(inner.submissions() == 0);
}

TEST_CASE("over-budget prompt fails the capability gate") {
    GeneratorCapability cap;
    auto r = gen_request(5);
    r.prompt_tokens = cap.b_g + 1;
    CHECK_THROWS_AS(check_capability(r, cap), Error);
    r.prompt_tokens = cap.b_g;
    CHECK_NOTHROW(check_capability(r, cap));
    r.rewriting = true;
    CHECK_THROWS_AS(check_capability(r, cap), Error);
}

TEST_CASE("non-generation kinds bypass the duration gate") {
    CallRequest r;
    r.kind = RequestKind::judge;
    r.duration_s = 0;
    CHECK_NOTHROW(check_capability(r, GeneratorCapability{}));
}

TEST_CASE("mock output is byte-deterministic") {
    const auto a = scored_call();
    const auto b = scored_call();
    CHECK(a.output == b.output);
    CHECK(a.checksum == b.checksum);
    CHECK(a.checksum == sha256_hex(a.output));
    CHECK(a.status == TerminalStatus::scored);
    CHECK(a.request_digest == request_digest(gen_request(5).to_wire()));
}

TEST_CASE("mock seeds give distinct outputs") {
    const auto wire = gen_request(5).to_wire();
    std::set<std::string> seen;
    for (std::uint64_t s = 0; s < 10000; ++s) seen.insert(sha256_hex(mock_generate(wire, s)));
    CHECK(seen.size() == 10000);
}

TEST_CASE("wire digest ignores the parser error field") {
    const auto r = gen_request(5);
    CHECK(request_digest(r.to_wire()) == request_digest(r.to_wire("bad json at 3")));
    CHECK(r.to_wire("bad json at 3").at("parser_error") == "bad json at 3");
    CHECK(r.to_wire().at("schema") == kWireSchema);
}

TEST_CASE("mock latency follows the output duration") {
    MockTransport t;
    SimClock clock;
    const auto out = submit_and_poll(t, gen_request(4), RetryPolicy{}, clock);
    REQUIRE(out.ok);
    CHECK(out.record.finished_ms() - out.record.submission_time_ms == 4000);
    CHECK(out.record.returned_duration == doctest::Approx(4.0));
}

TEST_CASE("empty manifest histogram is zero") {
    const std::vector<CallRecord> none;
    CHECK(histogram(none) == StatusHistogram{});
    CHECK(parse_manifest("").empty());
}

TEST_CASE("histogram counts terminal statuses") {
    std::vector<CallRecord> rs(4);
    rs[0].status = TerminalStatus::scored;
    rs[1].status = TerminalStatus::scored;
    rs[2].status = TerminalStatus::timeout;
    rs[3].status = TerminalStatus::rejected;
    const auto h = histogram(rs);
    CHECK(h.submitted == 4);
    CHECK(h.scored == 2);
    CHECK(h.timeout == 1);
    CHECK(h.rejected == 1);
    CHECK(h.parse_failed == 0);
}

TEST_CASE("manifest records round-trip through JSON and files") {
    const auto rec = scored_call(3);
    const auto j = record_to_json(rec);
    CHECK(j.at("schema") == kManifestSchema);
    const auto back = record_from_json(j);
    CHECK(record_to_json(back).dump() == j.dump());
    CHECK(back.output == rec.output);

    const auto path = (std::filesystem::temp_directory_path() / "reca_unit_manifest.jsonl").string();
    std::filesystem::remove(path);
    {
        FileManifest m(path);
        CHECK(record_manifest(rec, m) == 0);
        CHECK(record_manifest(rec, m) == 1);
    }
    const auto loaded = load_manifest(path);
    REQUIRE(loaded.size() == 2);
    CHECK(record_to_json(loaded[1]).dump() == j.dump());
    std::filesystem::remove(path);
}

TEST_CASE("tampered manifest output is rejected") {
    auto j = record_to_json(scored_call());
    j["output_b64"] = base64_encode("tampered");
    CHECK_THROWS_AS(record_from_json(j), Error);
}

TEST_CASE("replay serves recorded outputs without live calls") {
    const auto rec = scored_call();
    ReplayTransport replay({rec});
    SimClock clock;
    const auto out = submit_and_poll(replay, gen_request(5), RetryPolicy{}, clock);
    REQUIRE(out.ok);
    CHECK(out.payload == rec.output);
    CHECK(replay.hits() == 1);
    CHECK(replay.misses() == 0);
    CHECK(replay.live_calls() == 0);
}

TEST_CASE("replay miss without fallback fails; with fallback goes live") {
    const auto rec = scored_call();
    {
        ReplayTransport replay({rec});
        SimClock clock;
        const auto out = submit_and_poll(replay, gen_request(5, "something else"), RetryPolicy{}, clock);
        CHECK_FALSE(out.ok);
        CHECK(replay.misses() == 1);
    }
    MockTransport live;
    ReplayTransport replay({rec}, &live);
    SimClock clock;
    const auto out = submit_and_poll(replay, gen_request(5, "something else"), RetryPolicy{}, clock);
    CHECK(out.ok);
    CHECK(replay.live_calls() == 1);
}

TEST_CASE("safety rejection is terminal and not retried") {
    MockTransport inner;
    FaultInjectingTransport t(inner, {Fault::safety});
    SimClock clock;
    const auto out = submit_and_poll(t, gen_request(5), RetryPolicy{}, clock);
    CHECK_FALSE(out.ok);
    CHECK(out.record.status == TerminalStatus::rejected);
    CHECK(t.network_calls() == 1);
    CHECK(clock.sleeps().empty());
}

TEST_CASE("rate limits back off then succeed") {
    MockTransport inner;
    FaultInjectingTransport t(inner, {Fault::rate_limited, Fault::transient});
    SimClock clock;
    const auto out = submit_and_poll(t, gen_request(5), RetryPolicy{}, clock);
    CHECK(out.ok);
    CHECK(out.record.attempts == 3);
    const auto s = clock.sleeps();
    REQUIRE(s.size() >= 2);
    CHECK(s[0] == 2000);
    CHECK(s[1] == 8000);
}

TEST_CASE("malformed payload is retried once with the parser error") {
    MockTransport inner;
    FaultInjectingTransport t(inner, {Fault::malformed});
    SimClock clock;
    const ResponseValidator v = [](const std::string& p) { parse_json(p, "payload"); };
    const auto out = submit_and_poll(t, gen_request(5), RetryPolicy{}, clock, nullptr, v);
    CHECK(out.ok);
    CHECK(out.record.parse_retries == 1);
    const auto wires = t.received();
    REQUIRE(wires.size() == 2);
    CHECK_FALSE(wires[0].contains("parser_error"));
    CHECK(wires[1].contains("parser_error"));
}

TEST_CASE("generator adapter enforces capability and returns checksums") {
    MockTransport t;
    TransportGenerator gen(t, {});
    alloc::Selection empty;
    const auto prompt = alloc::compile(empty, "walk", {}, 1000);
    GenerationRequest req;
    req.leaf_id = "s001u01";
    req.prompt = &prompt;
    req.duration = 5;
    const auto r = gen.generate(req);
    CHECK(r.ok);
    CHECK(r.checksum == sha256_hex(r.payload));
    req.duration = 6;
    CHECK_THROWS_AS(gen.generate(req), Error);
}

TEST_CASE("capability validation") {
    GeneratorCapability cap;
    cap.tau_g = 0;
    CHECK_THROWS_AS(validate(cap), Error);
}
