#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cmlab/metrics.hpp"

using namespace cmlab;

namespace {

std::vector<Vec> gaussian_cloud(std::size_t n, std::size_t dim, double mean, double stdev,
                                std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec> out(n, Vec(dim));
    for (auto& v : out)
        for (auto& x : v) x = mean + stdev * rng.normal();
    return out;
}

}  // namespace

TEST_CASE("sliced distance of a set against itself is zero") {
    const auto a = gaussian_cloud(200, 3, 0.0, 1.0, 1);
    CHECK(sliced_wasserstein(a, a, 16, 2) == 0.0);
}

TEST_CASE("sliced distance between two point masses is their separation") {
    const std::vector<Vec> a(50, Vec{0.0});
    const std::vector<Vec> b(50, Vec{1.0});
    CHECK(sliced_wasserstein(a, b, 8, 3) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("sliced distance recovers a pure translation") {
    SECTION("one dimension") {
        const auto a = gaussian_cloud(10000, 1, 0.0, 1.0, 4);
        const auto b = gaussian_cloud(10000, 1, 2.0, 1.0, 5);
        CHECK(sliced_wasserstein(a, b, 128, 6) == Catch::Approx(2.0).margin(0.1));
    }
    SECTION("two dimensions averages the projected shift") {
        auto a = gaussian_cloud(10000, 2, 0.0, 1.0, 7);
        auto b = gaussian_cloud(10000, 2, 0.0, 1.0, 8);
        for (auto& v : b) v[0] += 2.0;
        // E over unit directions of (2 u_x)^2 is 2, so the root-mean value is sqrt(2)
        CHECK(sliced_wasserstein(a, b, 256, 9) ==
              Catch::Approx(std::sqrt(2.0)).margin(0.15));
    }
}

TEST_CASE("sliced distance is symmetric and deterministic") {
    const auto a = gaussian_cloud(300, 2, 0.0, 1.0, 10);
    const auto b = gaussian_cloud(300, 2, 0.5, 1.2, 11);
    const double ab = sliced_wasserstein(a, b, 64, 12);
    CHECK(sliced_wasserstein(b, a, 64, 12) == ab);
    CHECK(sliced_wasserstein(a, b, 64, 12) == ab);
    CHECK(sliced_wasserstein(a, b, 64, 13) != ab);  // seed moves the projections
}

TEST_CASE("unequal set sizes are down-sampled to a one-to-one coupling") {
    const auto a = gaussian_cloud(400, 2, 0.0, 1.0, 14);
    const auto b = gaussian_cloud(150, 2, 0.0, 1.0, 15);
    const double d = sliced_wasserstein(a, b, 64, 16);
    CHECK(std::isfinite(d));
    CHECK(d < 0.5);  // same distribution, modest sample noise
    CHECK(sliced_wasserstein(a, b, 64, 16) == d);
}

TEST_CASE("sliced distance input hygiene") {
    const auto a = gaussian_cloud(10, 2, 0.0, 1.0, 17);
    CHECK_THROWS_AS(sliced_wasserstein({}, a, 8, 0), std::invalid_argument);
    CHECK_THROWS_AS(sliced_wasserstein(a, gaussian_cloud(10, 3, 0.0, 1.0, 18), 8, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(sliced_wasserstein(a, a, 0, 0), std::invalid_argument);
}

TEST_CASE("discrepancy of a set against itself stays in the unbiased band") {
    const auto a = gaussian_cloud(60, 2, 0.0, 1.0, 19);
    const double v = mmd_rbf(a, a, 1.0);
    // with identical sets the U-statistic is confined to [-2/n, 0]
    CHECK(v <= 1e-12);
    CHECK(v >= -2.0 / 60.0 - 1e-12);
}

TEST_CASE("discrepancy of tiny far-apart sets matches hand-computed kernel sums") {
    const std::vector<Vec> a = {{0.0}, {1.0}};
    const std::vector<Vec> b = {{10.0}, {11.0}};
    const double h = 1.0;
    auto k = [&](double x, double y) {
        const double d = x - y;
        return std::exp(-d * d / (2.0 * h * h));
    };
    const double expected = k(0, 1) + k(10, 11) -
                            2.0 * (k(0, 10) + k(0, 11) + k(1, 10) + k(1, 11)) / 4.0;
    CHECK(mmd_rbf(a, b, h) == Catch::Approx(expected).margin(1e-12));
    CHECK(mmd_rbf(a, b, h) > 1.0);  // clearly separated clusters
}

TEST_CASE("discrepancy separates shifted clouds and vanishes for huge bandwidth") {
    const auto a = gaussian_cloud(100, 1, 0.0, 1.0, 20);
    const auto b = gaussian_cloud(100, 1, 3.0, 1.0, 21);
    CHECK(mmd_rbf(a, b, 1.0) > 0.5);
    CHECK(std::abs(mmd_rbf(a, b, 1e9)) < 1e-6);
}

TEST_CASE("median heuristic bandwidth") {
    SECTION("single pair pins the median") {
        const std::vector<Vec> a = {{0.0}};
        const std::vector<Vec> b = {{2.0}};
        CHECK(median_heuristic_bandwidth(a, b, 0) == 2.0);
    }
    SECTION("degenerate pooled set falls back to one") {
        const std::vector<Vec> a = {{1.0}, {1.0}};
        CHECK(median_heuristic_bandwidth(a, a, 0) == 1.0);
    }
    SECTION("heuristic drives the default") {
        const auto a = gaussian_cloud(80, 2, 0.0, 1.0, 22);
        const auto b = gaussian_cloud(80, 2, 0.2, 1.0, 23);
        const double h = median_heuristic_bandwidth(a, b, 7);
        CHECK(mmd_rbf(a, b, 0.0, 7) == Catch::Approx(mmd_rbf(a, b, h)).margin(1e-15));
    }
}

TEST_CASE("discrepancy needs at least two samples per set") {
    const std::vector<Vec> one = {{0.0}};
    const auto a = gaussian_cloud(10, 1, 0.0, 1.0, 24);
    CHECK_THROWS_AS(mmd_rbf(one, a, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(mmd_rbf(a, one, 1.0), std::invalid_argument);
}
