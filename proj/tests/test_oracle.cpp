#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cmlab/oracle.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/schedule.hpp"

using namespace cmlab;

static NoiseSchedule ve() { return NoiseSchedule::variance_exploding(0.002, 80.0); }

static MixtureOracle single_standard() {
    return MixtureOracle({{{0.0}, 1.0, 0, 1.0}}, 1);
}

static MixtureOracle two_point(double stdev) {
    return MixtureOracle({{{-1.0}, stdev, 0, 0.5}, {{1.0}, stdev, 1, 0.5}}, 1);
}

// plain-arithmetic posterior mean, written independently of the library's
// log-domain implementation: direct normal densities, no max subtraction
static Vec brute_posterior_mean(const MixtureOracle& oracle, const NoiseSchedule& sched,
                                const Vec& x_t, double t) {
    const double a = sched.alpha(t), s = sched.sigma(t);
    const int d = oracle.dim();
    double z = 0.0;
    Vec acc(d, 0.0);
    for (const auto& c : oracle.components()) {
        const double v = a * a * c.stdev * c.stdev + s * s;
        double q = 0.0;
        for (int j = 0; j < d; ++j) {
            const double diff = x_t[j] - a * c.mean[j];
            q += diff * diff;
        }
        const double dens = c.weight * std::pow(2.0 * std::numbers::pi * v, -0.5 * d) *
                            std::exp(-0.5 * q / v);
        const double shrink = a * c.stdev * c.stdev / v;
        z += dens;
        for (int j = 0; j < d; ++j)
            acc[j] += dens * (c.mean[j] + shrink * (x_t[j] - a * c.mean[j]));
    }
    for (double& v : acc) v /= z;
    return acc;
}

TEST_CASE("constructor validation") {
    CHECK_THROWS_AS(MixtureOracle({}, 1), ConfigError);
    CHECK_THROWS_AS(MixtureOracle({{{0.0, 0.0}, 1.0, 0, 1.0}}, 1), ConfigError);
    CHECK_THROWS_AS(MixtureOracle({{{0.0}, 0.0, 0, 1.0}}, 1), ConfigError);
    CHECK_THROWS_AS(MixtureOracle({{{0.0}, 1.0, 0, 0.7}}, 1), ConfigError);
}

TEST_CASE("sampling statistics on near-point-mass components") {
    MixtureOracle oracle = two_point(1e-6);
    Rng rng(7);
    const DataBatch b = oracle.sample(10000, rng);
    double mean = 0.0;
    for (const auto& x : b.x) mean += x[0];
    mean /= b.x.size();
    CHECK(std::abs(mean) < 0.05);  // CLT: sd of the mean is ~0.01
}

TEST_CASE("class filter restricts to the selected component") {
    MixtureOracle oracle = two_point(0.1);
    Rng rng(9);
    const DataBatch b = oracle.sample(2000, rng, 1);
    for (std::size_t i = 0; i < b.x.size(); ++i) {
        CHECK(b.labels[i] == 1);
        CHECK(std::abs(b.x[i][0] - 1.0) < 6.0 * 0.1);
    }
}

TEST_CASE("sampling is deterministic per seed") {
    MixtureOracle oracle = two_point(0.2);
    const DataBatch a = sample_data(oracle, 64, 42);
    const DataBatch b = sample_data(oracle, 64, 42);
    REQUIRE(a.x.size() == b.x.size());
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        CHECK(a.x[i] == b.x[i]);
        CHECK(a.labels[i] == b.labels[i]);
    }
}

TEST_CASE("unknown class filter is a config error") {
    MixtureOracle oracle = two_point(0.2);
    Rng rng(1);
    CHECK_THROWS_AS(oracle.sample(1, rng, 5), ConfigError);
}

TEST_CASE("exact epsilon pinned values") {
    const NoiseSchedule s = ve();
    SECTION("single standard gaussian") {
        // marginal at t is N(0, 1 + t^2); eps = t*x/(1+t^2)
        MixtureOracle oracle = single_standard();
        CHECK(oracle.exact_epsilon(s, {2.0}, 1.0)[0] == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("symmetry zeroes the field") {
        MixtureOracle oracle = two_point(1e-6);
        CHECK(oracle.exact_epsilon(s, {0.0}, 1.0)[0] == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("near point mass two-component value") {
        MixtureOracle oracle = two_point(1e-8);
        // softmax weights exp(0), exp(-2) -> posterior mean tanh(1)
        CHECK(oracle.exact_epsilon(s, {1.0}, 1.0)[0] ==
              Catch::Approx(1.0 - std::tanh(1.0)).margin(1e-4));
    }
}

TEST_CASE("posterior mean matches brute-force direct evaluation") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle({{{1.5, -0.5}, 0.3, 0, 0.25},
                          {{-1.0, 1.0}, 0.7, 1, 0.35},
                          {{0.0, 2.0}, 0.2, 2, 0.40}},
                         2);
    Rng rng(13);
    for (int i = 0; i < 300; ++i) {
        const double t = std::exp(rng.uniform(std::log(0.05), std::log(20.0)));
        Vec x_t = rng.normal_vec(2);
        for (double& v : x_t) v *= (1.0 + t);
        const Vec mine = oracle.posterior_x0_mean(s, x_t, t);
        const Vec brute = brute_posterior_mean(oracle, s, x_t, t);
        for (int j = 0; j < 2; ++j) CHECK(mine[j] == Catch::Approx(brute[j]).margin(1e-8));
    }
}

TEST_CASE("log marginal matches direct evaluation") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = two_point(0.25);
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        const double t = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
        const Vec x_t{rng.normal() * (1.0 + t)};
        const double a = s.alpha(t), sg = s.sigma(t);
        double direct = 0.0;
        for (const auto& c : oracle.components()) {
            const double v = a * a * c.stdev * c.stdev + sg * sg;
            const double diff = x_t[0] - a * c.mean[0];
            direct += c.weight / std::sqrt(2.0 * std::numbers::pi * v) *
                      std::exp(-0.5 * diff * diff / v);
        }
        CHECK(oracle.log_marginal(s, x_t, t) == Catch::Approx(std::log(direct)).margin(1e-10));
    }
}

TEST_CASE("reference solve transports the single gaussian analytically") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = single_standard();
    const double x_t = std::sqrt(2.0);
    const ReferenceTrajectory traj =
        solve_reference(oracle, s, {x_t}, {1.0, s.t_min()}, 1024);
    REQUIRE(traj.states.size() == 2);
    // analytic transport x_r = x_t sqrt((1+r^2)/(1+t^2)) -> ~1 at r ~ 0
    CHECK(traj.states.back()[0] == Catch::Approx(1.0).margin(1e-3));
    // oriented reward equals the closed-form value x_t (1 - 1/sqrt(1+t^2))
    CHECK(traj.total_reward[0] == Catch::Approx(std::sqrt(2.0) - 1.0).margin(1e-3));
}

TEST_CASE("single-node grid yields zero reward") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = single_standard();
    const ReferenceTrajectory traj = solve_reference(oracle, s, {1.0}, {1.0}, 16);
    REQUIRE(traj.states.size() == 1);
    CHECK(traj.total_reward[0] == 0.0);
}

TEST_CASE("solver input validation") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = single_standard();
    CHECK_THROWS_AS(solve_reference(oracle, s, {1.0}, {0.5, 1.0}, 16), std::invalid_argument);
    CHECK_THROWS_AS(solve_reference(oracle, s, {1.0}, {1.0, 0.0}, 16), std::out_of_range);
}

TEST_CASE("exact value pinned values") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = single_standard();
    CHECK(exact_value(oracle, s, {3.0}, s.t_min())[0] == 0.0);
    CHECK(exact_value(oracle, s, {std::sqrt(2.0)}, 1.0, 1024)[0] ==
          Catch::Approx(std::sqrt(2.0) - 1.0).margin(1e-3));
}

TEST_CASE("bellman identity holds along reference trajectories") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle({{{0.8}, 0.3, 0, 0.5}, {{-1.2}, 0.5, 1, 0.5}}, 1);
    Rng rng(23);
    for (int i = 0; i < 10; ++i) {
        const double t = rng.uniform(0.5, 4.0);
        const double r = rng.uniform(0.05, 0.4);
        const Vec x_t{rng.normal() * (1.0 + t)};
        const ReferenceTrajectory traj = solve_reference(oracle, s, x_t, {t, r}, 1024);
        const double h_t = exact_value(oracle, s, x_t, t, 1024)[0];
        const double h_r = exact_value(oracle, s, traj.states.back(), r, 1024)[0];
        CHECK(h_t == Catch::Approx(traj.total_reward[0] + h_r).margin(1e-3));
    }
}

TEST_CASE("interval rewards are additive") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = two_point(0.3);
    const Vec x_t{1.7};
    const ReferenceTrajectory split = solve_reference(oracle, s, x_t, {2.0, 0.5, 0.01}, 512);
    const ReferenceTrajectory whole = solve_reference(oracle, s, x_t, {2.0, 0.01}, 1024);
    REQUIRE(split.interval_rewards.size() == 2);
    const double sum = split.interval_rewards[0][0] + split.interval_rewards[1][0];
    CHECK(sum == Catch::Approx(whole.total_reward[0]).margin(2e-3));
}

TEST_CASE("scalar data scale") {
    CHECK(single_standard().sigma_data() == Catch::Approx(1.0).margin(1e-12));
    // ring of 8 gaussians radius 2, stdev 0.2: E||x||^2 = 4 + 2*0.04, mean 0
    std::vector<MixtureComponent> comps;
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 8;
        comps.push_back({{2.0 * std::cos(a), 2.0 * std::sin(a)}, 0.2, k, 0.125});
    }
    MixtureOracle ring(comps, 2);
    CHECK(ring.sigma_data() == Catch::Approx(std::sqrt(2.04)).margin(1e-9));
}

TEST_CASE("oracle model predicts the solver endpoint") {
    const NoiseSchedule s = ve();
    MixtureOracle oracle = two_point(0.3);
    OracleModel model{&oracle, &s, 256};
    const Vec pred = model.predict_x0({1.3}, 2.0);
    const ReferenceTrajectory traj = solve_reference(oracle, s, {1.3}, {2.0, s.t_min()}, 256);
    CHECK(pred[0] == traj.states.back()[0]);
}
