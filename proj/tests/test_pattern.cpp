#include "moheat/pattern.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace moheat;
using moheat::testing::Rng;

namespace {

bool has_violation(const ValidationReport& r, const std::string& field) {
    return std::any_of(r.violations.begin(), r.violations.end(),
                       [&](const Violation& v) { return v.field == field; });
}

DualPattern dual_example() {
    DualPattern d;
    d.cold_intensity = {1.0};
    d.cold_duration_ms = 1000;
    d.hot_intensity = {0.8};
    d.hot_duration_ms = 1000;
    d.gap_ms = 0;
    d.repeats = 2;
    d.start_phase = Phase::cold;
    d.delay_ms = 0;
    return d;
}

std::int64_t delay_of(const StimulusPattern& p) {
    return std::visit([](const auto& v) { return v.delay_ms; }, p);
}

StimulusPattern with_delay(StimulusPattern p, std::int64_t delay) {
    std::visit([&](auto& v) { v.delay_ms = delay; }, p);
    return p;
}

}  // namespace

TEST_CASE("validate_pattern accepts in-range patterns") {
    CHECK(validate_pattern(ColdPattern{{0.5}, 1000, 0}).ok());
    CHECK(validate_pattern(dual_example()).ok());
    CHECK(validate_pattern(HotLevelPattern{{5}, 1, 0}).ok());
}

TEST_CASE("validate_pattern names the offending field") {
    SUBCASE("intensity above one") {
        const auto r = validate_pattern(ColdPattern{{1.2}, 1000, 0});
        REQUIRE_FALSE(r.ok());
        CHECK(r.violations.size() == 1);
        CHECK(r.violations[0].field == "intensity");
    }
    SUBCASE("negative intensity and zero duration together") {
        const auto r = validate_pattern(HotPattern{{-0.1}, 0, -5});
        CHECK(has_violation(r, "intensity"));
        CHECK(has_violation(r, "duration_ms"));
        CHECK(has_violation(r, "delay_ms"));
    }
    SUBCASE("NaN intensity") {
        CHECK(has_violation(validate_pattern(ColdPattern{{std::nan("")}, 10, 0}), "intensity"));
    }
    SUBCASE("level outside 1..5") {
        CHECK(has_violation(validate_pattern(ColdLevelPattern{{0}, 10, 0}), "level"));
        CHECK(has_violation(validate_pattern(HotLevelPattern{{6}, 10, 0}), "level"));
    }
    SUBCASE("dual with zero repeats") {
        auto d = dual_example();
        d.repeats = 0;
        const auto r = validate_pattern(d);
        REQUIRE(r.violations.size() == 1);
        CHECK(r.violations[0].field == "repeats");
    }
    SUBCASE("dual phase lengths and gap") {
        auto d = dual_example();
        d.cold_duration_ms = 0;
        d.hot_duration_ms = 0;
        d.gap_ms = -1;
        const auto r = validate_pattern(d);
        CHECK(has_violation(r, "cold_duration_ms"));
        CHECK(has_violation(r, "hot_duration_ms"));
        CHECK(has_violation(r, "gap_ms"));
    }
    SUBCASE("absurd total length") {
        auto d = dual_example();
        d.repeats = std::int64_t{1} << 62;
        CHECK_FALSE(validate_pattern(d).ok());
    }
}

TEST_CASE("level_to_intensity uses the uniform preset map") {
    CHECK(level_to_intensity({1}).value == 0.2);
    CHECK(level_to_intensity({3}).value == 0.6);
    CHECK(level_to_intensity({5}).value == 1.0);
    for (int l = 1; l < 5; ++l) {
        CHECK(level_to_intensity({l}).value < level_to_intensity({l + 1}).value);
    }
    CHECK_THROWS_AS(level_to_intensity({0}), std::domain_error);
    CHECK_THROWS_AS(level_to_intensity({6}), std::domain_error);
}

TEST_CASE("compile_pattern worked examples") {
    SUBCASE("cold with delay") {
        const auto tl = compile_pattern(ColdPattern{{1.0}, 2000, 500});
        const ActionTimeline expected{{{500, {Action::set_cold(1.0)}}, {2500, {Action::all_off()}}},
                                      2500};
        CHECK(tl == expected);
    }
    SUBCASE("hot level 4") {
        const auto tl = compile_pattern(HotLevelPattern{{4}, 1000, 0});
        const ActionTimeline expected{{{0, {Action::set_hot(0.8)}}, {1000, {Action::all_off()}}},
                                      1000};
        CHECK(tl == expected);
    }
    SUBCASE("cold level compiles like cold") {
        CHECK(compile_pattern(ColdLevelPattern{{2}, 300, 40}) ==
              compile_pattern(ColdPattern{{0.4}, 300, 40}));
    }
    SUBCASE("dual, two cycles, no gap") {
        const auto tl = compile_pattern(dual_example());
        const ActionTimeline expected{
            {
                {0, {Action::set_cold(1.0)}},
                {1000, {Action::set_cold(0.0), Action::set_hot(0.8)}},
                {2000, {Action::set_hot(0.0), Action::set_cold(1.0)}},
                {3000, {Action::set_cold(0.0), Action::set_hot(0.8)}},
                {4000, {Action::all_off()}},
            },
            4000};
        CHECK(tl == expected);
    }
    SUBCASE("dual with gap and hot start") {
        auto d = dual_example();
        d.gap_ms = 250;
        d.repeats = 1;
        d.start_phase = Phase::hot;
        d.delay_ms = 100;
        const auto tl = compile_pattern(d);
        const ActionTimeline expected{
            {
                {100, {Action::set_hot(0.8)}},
                {1100, {Action::all_off()}},
                {1350, {Action::set_hot(0.0), Action::set_cold(1.0)}},
                {2350, {Action::all_off()}},
            },
            2350};
        CHECK(tl == expected);
    }
    SUBCASE("invalid pattern is rejected, never compiled") {
        CHECK_THROWS_AS(compile_pattern(ColdPattern{{1.0}, 0, 0}), ValidationError);
        try {
            compile_pattern(HotPattern{{2.0}, 10, 0});
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(e.report().violations.front().field == "intensity");
        }
    }
}

TEST_CASE("dual total length formula") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const auto d = testing::random_dual(rng);
        const auto tl = compile_pattern(d);
        CHECK(tl.total_ms == d.delay_ms + d.repeats * (d.cold_duration_ms + d.hot_duration_ms) +
                                 (2 * d.repeats - 1) * d.gap_ms);
    }
}

TEST_CASE("property: every valid pattern compiles to a well-formed timeline") {
    Rng rng(20240611);
    for (int i = 0; i < 10000; ++i) {
        const auto p = testing::random_pattern(rng);
        REQUIRE(validate_pattern(p).ok());
        const auto tl = compile_pattern(p);
        const auto problems = check_timeline(tl);
        INFO("case " << i << " type " << pattern_type_name(p));
        REQUIRE(problems.empty());
        const auto& last = tl.entries.back().actions;
        CHECK(std::any_of(last.begin(), last.end(),
                          [](const Action& a) { return a.kind == Action::Kind::all_off; }));
    }
}

TEST_CASE("property: dual compilation matches the millisecond enumerator") {
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const auto d = testing::random_dual(rng, 1500);
        INFO("case " << i);
        REQUIRE(compile_pattern(d) == testing::enumerate_dual(d));
    }
}

TEST_CASE("property: delay shifts every entry") {
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const auto p = testing::random_pattern(rng);
        const auto delay = delay_of(p);
        const auto base = compile_pattern(with_delay(p, 0));
        CHECK(compile_pattern(p) == testing::shifted(base, delay));
    }
}

TEST_CASE("check_timeline flags broken invariants") {
    CHECK_FALSE(check_timeline({}).empty());
    const ActionTimeline no_off{{{0, {Action::set_cold(1.0)}}, {10, {Action::set_cold(0.0)}}}, 10};
    CHECK_FALSE(check_timeline(no_off).empty());
    const ActionTimeline unordered{{{10, {Action::set_cold(1.0)}}, {10, {Action::all_off()}}}, 10};
    CHECK_FALSE(check_timeline(unordered).empty());
    const ActionTimeline activation_first{
        {{0, {Action::set_hot(1.0), Action::set_cold(0.0)}}, {10, {Action::all_off()}}}, 10};
    CHECK_FALSE(check_timeline(activation_first).empty());
    const ActionTimeline wrong_total{{{0, {Action::all_off()}}}, 5};
    CHECK_FALSE(check_timeline(wrong_total).empty());
    const ActionTimeline minimal{{{0, {Action::all_off()}}}, 0};
    CHECK(check_timeline(minimal).empty());
}
