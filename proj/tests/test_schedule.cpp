#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cmlab/rng.hpp"
#include "cmlab/schedule.hpp"

using namespace cmlab;

static NoiseSchedule ve() { return NoiseSchedule::variance_exploding(0.002, 80.0); }
static NoiseSchedule vp() { return NoiseSchedule::variance_preserving(1e-3, 1.0, 0.1, 20.0); }

TEST_CASE("ve schedule basic coefficients") {
    const NoiseSchedule s = ve();
    CHECK(s.alpha(2.0) == 1.0);
    CHECK(s.sigma(2.0) == 2.0);
    CHECK(s.lambda(2.0) == Catch::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(s.t_min() == 0.002);
    CHECK(s.t_max() == 80.0);
}

TEST_CASE("vp schedule stays normalized") {
    const NoiseSchedule s = vp();
    for (double t : {1e-3, 0.01, 0.1, 0.5, 0.9, 1.0}) {
        const double a = s.alpha(t), sg = s.sigma(t);
        CHECK(a * a + sg * sg == Catch::Approx(1.0).margin(1e-12));
        CHECK(a > 0.0);
        CHECK(sg > 0.0);
    }
}

TEST_CASE("lambda is strictly decreasing and t_of_lambda inverts it") {
    for (const NoiseSchedule& s : {ve(), vp()}) {
        double prev = s.lambda(s.t_min());
        const int n = 200;
        for (int k = 1; k <= n; ++k) {
            const double t =
                s.t_min() + (s.t_max() - s.t_min()) * static_cast<double>(k) / n;
            const double lam = s.lambda(t);
            CHECK(lam < prev);
            prev = lam;
            const double back = s.t_of_lambda(lam);
            CHECK(back == Catch::Approx(t).epsilon(1e-9));
        }
    }
}

TEST_CASE("forward marginal pinned values") {
    const NoiseSchedule s = ve();
    SECTION("scalar substitution") {
        const DiffusedPoint p = forward_marginal(s, {0.5}, {1.0}, 2.0);
        CHECK(p.x_t[0] == 2.5);
        CHECK(p.t == 2.0);
        REQUIRE(p.origin.has_value());
        CHECK(p.origin->x0[0] == 0.5);
        CHECK(p.origin->eps[0] == 1.0);
    }
    SECTION("componentwise") {
        const DiffusedPoint p = forward_marginal(s, {1.0, -1.0}, {0.0, 2.0}, 0.5);
        CHECK(p.x_t[0] == 1.0);
        CHECK(p.x_t[1] == 0.0);
    }
    SECTION("zero noise leaves the data untouched") {
        const DiffusedPoint p = forward_marginal(s, {0.7}, {0.0}, 0.002);
        CHECK(p.x_t[0] == 0.7);
    }
    SECTION("out-of-range time rejected") {
        CHECK_THROWS_AS(forward_marginal(s, {0.0}, {0.0}, 81.0), std::out_of_range);
        CHECK_THROWS_AS(forward_marginal(s, {0.0}, {0.0}, 1e-4), std::out_of_range);
    }
}

TEST_CASE("conditional epsilon round trips and pinned values") {
    const NoiseSchedule s = ve();
    CHECK(conditional_epsilon(s, {2.5}, 2.0, {0.5})[0] == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(conditional_epsilon(s, {1.0}, 1.0, {1.0})[0] == 0.0);  // x_t = alpha x0
    CHECK(conditional_epsilon(s, {0.0}, 1.0, {1.0})[0] == -1.0);
}

TEST_CASE("conditional epsilon exact round trip across both schedules") {
    Rng rng(11);
    for (const NoiseSchedule& s : {ve(), vp()}) {
        for (int i = 0; i < 200; ++i) {
            const double t = std::exp(rng.uniform(std::log(s.t_min()), std::log(s.t_max())));
            const Vec x0 = rng.normal_vec(3);
            const Vec eps = rng.normal_vec(3);
            const DiffusedPoint p = forward_marginal(s, x0, eps, t);
            const Vec back = conditional_epsilon(s, p.x_t, t, x0);
            for (int j = 0; j < 3; ++j) CHECK(back[j] == Catch::Approx(eps[j]).margin(1e-9));
        }
    }
}

TEST_CASE("ddim step pinned values") {
    const NoiseSchedule s = ve();
    SECTION("first-order step is exact under shared origin") {
        const DiffusedPoint p = forward_marginal(s, {0.5}, {1.0}, 2.0);
        const Vec eps = conditional_epsilon(s, p.x_t, 2.0, {0.5});
        const Vec x_r = ddim_step(s, p.x_t, 2.0, 1.0, eps);
        CHECK(x_r[0] == Catch::Approx(1.5).epsilon(1e-15));
    }
    SECTION("zero eps keeps the point still under ve") {
        const Vec x_r = ddim_step(s, {2.5}, 2.0, 1.0, {0.0});
        CHECK(x_r[0] == 2.5);
    }
    SECTION("ordering enforced") {
        CHECK_THROWS_AS(ddim_step(s, {1.0}, 1.0, 1.0, {0.0}), std::invalid_argument);
        CHECK_THROWS_AS(ddim_step(s, {1.0}, 1.0, 2.0, {0.0}), std::invalid_argument);
    }
}

TEST_CASE("ddim step matches closed-form marginal transport on vp") {
    // with the true conditional epsilon the step lands exactly on the shared-
    // noise forward marginal, for any schedule
    const NoiseSchedule s = vp();
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform(0.3, 1.0);
        const double r = rng.uniform(0.01, t - 0.2);
        const Vec x0 = rng.normal_vec(2);
        const Vec eps = rng.normal_vec(2);
        const DiffusedPoint pt = forward_marginal(s, x0, eps, t);
        const DiffusedPoint pr = forward_marginal(s, x0, eps, r);
        const Vec stepped = ddim_step(s, pt.x_t, t, r, conditional_epsilon(s, pt.x_t, t, x0));
        for (int j = 0; j < 2; ++j)
            CHECK(stepped[j] == Catch::Approx(pr.x_t[j]).margin(1e-10));
    }
}

TEST_CASE("reward weight integral pinned values") {
    const NoiseSchedule s = ve();
    CHECK(reward_weight_integral(s, 2.0, 1.0) == -1.0);
    CHECK(reward_weight_integral(s, 1.0, 1.0) == 0.0);
    CHECK(reward_weight_integral(s, 1.0, 0.0) == -1.0);
    CHECK_THROWS_AS(reward_weight_integral(s, 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("reward weight integral is additive") {
    for (const NoiseSchedule& s : {ve(), vp()}) {
        const double hi = s.t_max() * 0.9, mid = s.t_max() * 0.1, lo = s.t_min() * 2.0;
        const double whole = reward_weight_integral(s, hi, lo);
        const double split =
            reward_weight_integral(s, hi, mid) + reward_weight_integral(s, mid, lo);
        CHECK(whole == Catch::Approx(split).epsilon(1e-12));
    }
}

TEST_CASE("noise ratio is monotone in t") {
    for (const NoiseSchedule& s : {ve(), vp()}) {
        double prev = s.noise_ratio(s.t_min());
        for (int k = 1; k <= 100; ++k) {
            const double t = s.t_min() + (s.t_max() - s.t_min()) * k / 100.0;
            const double cur = s.noise_ratio(t);
            CHECK(cur > prev);
            prev = cur;
        }
    }
}

TEST_CASE("schedule factory validation") {
    CHECK_THROWS_AS(NoiseSchedule::variance_exploding(0.0, 80.0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::variance_exploding(1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::variance_preserving(1e-3, 1.0, 20.0, 0.1), ConfigError);
}

TEST_CASE("degenerate sigma rejected in conditional epsilon") {
    // a ve-like schedule evaluated at sigma == 0 cannot define epsilon
    const NoiseSchedule s = ve();
    CHECK_THROWS_AS(conditional_epsilon(s, {1.0}, 0.0, {1.0}), NumericError);
}
