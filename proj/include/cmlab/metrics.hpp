#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlab/rng.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

struct MetricReport {
    std::string name;
    double value = 0.0;
    std::size_t n_a = 0, n_b = 0;
    int projections = 0;      // sliced-Wasserstein only
    double bandwidth = 0.0;   // MMD only
    std::uint64_t seed = 0;
};

namespace detail {

// seeded draw of k distinct indices from [0, n) (partial Fisher-Yates)
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.index(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

inline void check_sets(const std::vector<Vec>& a, const std::vector<Vec>& b, const char* who) {
    if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty sample set");
    if (a[0].size() != b[0].size())
        throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace detail

// Sliced 2-Wasserstein distance between two empirical distributions: project
// both sets onto random unit directions, take the quantile (sorted) coupling
// in 1D, and return the root mean of the squared 1D distances. If the sets
// differ in size the larger one is down-sampled with the given seed so the
// quantile coupling is one-to-one.
inline double sliced_wasserstein(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                 int projections, std::uint64_t seed) {
    detail::check_sets(a, b, "sliced_wasserstein");
    if (projections < 1) throw std::invalid_argument("sliced_wasserstein: projections < 1");
    const std::size_t d = a[0].size();
    Rng rng(mix_seed(seed, 0x51cedULL));

    const std::vector<Vec>* pa = &a;
    const std::vector<Vec>* pb = &b;
    std::vector<Vec> trimmed;
    if (a.size() != b.size()) {
        const bool a_larger = a.size() > b.size();
        const std::vector<Vec>& big = a_larger ? a : b;
        const std::size_t k = a_larger ? b.size() : a.size();
        auto idx = detail::sample_indices(big.size(), k, rng);
        std::sort(idx.begin(), idx.end());
        trimmed.reserve(k);
        for (auto i : idx) trimmed.push_back(big[i]);
        (a_larger ? pa : pb) = &trimmed;
    }
    const std::size_t n = pa->size();

    Vec dir(d), proj_a(n), proj_b(n);
    double mean_sq = 0.0;
    for (int p = 0; p < projections; ++p) {
        double nrm = 0.0;
        do {
            rng.fill_normal(dir);
            nrm = norm(dir);
        } while (nrm < 1e-12);
        for (auto& v : dir) v /= nrm;
        for (std::size_t i = 0; i < n; ++i) {
            proj_a[i] = dot((*pa)[i], dir);
            proj_b[i] = dot((*pb)[i], dir);
        }
        std::sort(proj_a.begin(), proj_a.end());
        std::sort(proj_b.begin(), proj_b.end());
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = proj_a[i] - proj_b[i];
            s += diff * diff;
        }
        mean_sq += s / static_cast<double>(n);
    }
    return std::sqrt(mean_sq / projections);
}

// Median pairwise distance over the pooled sets (sub-sampled for large sets);
// the default bandwidth for the RBF kernel below.
inline double median_heuristic_bandwidth(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                         std::uint64_t seed, std::size_t cap = 512) {
    detail::check_sets(a, b, "median_heuristic_bandwidth");
    Rng rng(mix_seed(seed, 0xba42ULL));
    std::vector<const Vec*> pool;
    pool.reserve(a.size() + b.size());
    for (const auto& v : a) pool.push_back(&v);
    for (const auto& v : b) pool.push_back(&v);
    if (pool.size() > cap) {
        auto idx = detail::sample_indices(pool.size(), cap, rng);
        std::vector<const Vec*> sub;
        sub.reserve(cap);
        for (auto i : idx) sub.push_back(pool[i]);
        pool.swap(sub);
    }
    std::vector<double> d2;
    d2.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j)
            d2.push_back(squared_norm(sub(*pool[i], *pool[j])));
    if (d2.empty()) return 1.0;
    std::nth_element(d2.begin(), d2.begin() + d2.size() / 2, d2.end());
    const double med = d2[d2.size() / 2];
    return med > 0.0 ? std::sqrt(med) : 1.0;
}

// Unbiased (U-statistic) squared maximum mean discrepancy under the RBF kernel
// k(x,y) = exp(-||x-y||^2 / (2 h^2)). bandwidth <= 0 selects the median
// heuristic. The unbiased estimate may legitimately go slightly negative.
inline double mmd_rbf(const std::vector<Vec>& a, const std::vector<Vec>& b,
                      double bandwidth = 0.0, std::uint64_t seed = 0) {
    detail::check_sets(a, b, "mmd_rbf");
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("mmd_rbf: need at least 2 samples per set");
    const double h = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(a, b, seed);
    const double inv2h2 = 1.0 / (2.0 * h * h);
    auto kern = [&](const Vec& x, const Vec& y) { return std::exp(-squared_norm(sub(x, y)) * inv2h2); };

    const std::size_t n = a.size(), m = b.size();
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) kaa += kern(a[i], a[j]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) kbb += kern(b[i], b[j]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) kab += kern(a[i], b[j]);
    const double c_n = static_cast<double>(n) * (n - 1);
    const double c_m = static_cast<double>(m) * (m - 1);
    return 2.0 * kaa / c_n + 2.0 * kbb / c_m - 2.0 * kab / (static_cast<double>(n) * m);
}

}  // namespace cmlab
