// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "baret/schedule.hpp"

using namespace baret;

namespace {

// Independent oracle: cumulative product evaluated with a straight loop in
// double precision.
double abar_oracle(int train_steps, double beta_start, double beta_end, int t) {
    const double sb0 = std::sqrt(beta_start);
    const double sb1 = std::sqrt(beta_end);
    double prod = 1.0;
    for (int s = 1; s <= t; ++s) {
        const double root = sb0 + double(s - 1) / double(train_steps - 1) * (sb1 - sb0);
        prod *= 1.0 - root * root;
    }
    return prod;
}

}  // namespace

TEST_CASE("make_schedule default configuration") {
    const NoiseSchedule s = make_schedule(1000, 0.00085, 0.012, 50);
    REQUIRE(s.train_steps == 1000);
    REQUIRE(s.alpha_bar.size() == 1001);
    REQUIRE(s.alpha_bar[0] == 1.0);
    REQUIRE(s.timestep_map.size() == 50);

    SECTION("alpha_bar strictly decreasing") {
        for (size_t t = 1; t < s.alpha_bar.size(); ++t) {
            REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
            REQUIRE(s.alpha_bar[t] > 0.0);
        }
    }
    SECTION("timestep map strictly decreasing within range, ending at 1") {
        REQUIRE(s.timestep_map.front() == 981);
        REQUIRE(s.timestep_map.back() == 1);
        for (size_t k = 1; k < s.timestep_map.size(); ++k) {
            REQUIRE(s.timestep_map[k] < s.timestep_map[k - 1]);
            REQUIRE(s.timestep_map[k] >= 1);
            REQUIRE(s.timestep_map[k] <= 1000);
        }
    }
    SECTION("final cumulative product matches the loop oracle") {
        // Frozen from the oracle below; regression pin for the default schedule.
        const double expected = 0.004660098513077236;
        REQUIRE(s.alpha_bar[1000] == Catch::Approx(expected).epsilon(1e-12));
        REQUIRE(abar_oracle(1000, 0.00085, 0.012, 1000) == Catch::Approx(expected).epsilon(1e-14));
    }
    SECTION("abar ladder endpoints") {
        REQUIRE(s.abar_level(50) == 1.0);
        REQUIRE(s.abar_level(0) == s.alpha_bar[981]);
        REQUIRE(s.abar_level(49) == s.alpha_bar[1]);
    }
}

TEST_CASE("make_schedule first beta hits beta_start exactly") {
    const NoiseSchedule s = make_schedule(10, 0.1, 0.2, 10);
    REQUIRE(s.alpha_bar[1] == Catch::Approx(1.0 - 0.1).epsilon(1e-15));
    REQUIRE(s.timestep_map.size() == 10);
    REQUIRE(s.timestep_map.front() == 10);
    REQUIRE(s.timestep_map.back() == 1);
}

TEST_CASE("make_schedule rejects bad parameters") {
    REQUIRE_THROWS_AS(make_schedule(1000, 0.012, 0.00085, 50), ParameterError);
    REQUIRE_THROWS_AS(make_schedule(1000, 0.0, 0.012, 50), ParameterError);
    REQUIRE_THROWS_AS(make_schedule(1000, 0.00085, 1.0, 50), ParameterError);
    REQUIRE_THROWS_AS(make_schedule(10, 0.00085, 0.012, 11), ParameterError);
    REQUIRE_THROWS_AS(make_schedule(10, 0.00085, 0.012, 0), ParameterError);
}

TEST_CASE("schedule monotonicity holds across configurations") {
    const int trains[] = {100, 500, 1000};
    const int infers[] = {1, 10, 50, 100};
    for (int train : trains) {
        for (int infer : infers) {
            if (infer > train) continue;
            const NoiseSchedule s = make_schedule(train, 0.001, 0.02, infer);
            for (size_t t = 1; t < s.alpha_bar.size(); ++t)
                REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
            REQUIRE(int(s.timestep_map.size()) == infer);
            for (size_t k = 1; k < s.timestep_map.size(); ++k)
                REQUIRE(s.timestep_map[k] < s.timestep_map[k - 1]);
            REQUIRE(s.timestep_map.back() == 1);
        }
    }
}
