#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/oracle.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

enum class TargetMode { OneShot, VarianceReduced, TeacherOracle };

inline const char* target_mode_name(TargetMode m) {
    switch (m) {
        case TargetMode::OneShot: return "one_shot";
        case TargetMode::VarianceReduced: return "variance_reduced";
        case TargetMode::TeacherOracle: return "teacher_oracle";
    }
    return "?";
}

enum class ReferenceSource { InBatch, ExternalPool, FullDataset };

struct ReferenceBatch {
    std::vector<Vec> samples;
    std::vector<int> labels;  // empty when unlabeled
    ReferenceSource source = ReferenceSource::InBatch;
};

struct TargetEstimate {
    Vec eps_hat;
    std::vector<double> weights;  // over the references actually used
    TargetMode mode = TargetMode::OneShot;
    int effective_n = 0;
};

// The plain training target: the very noise that produced x_t.
inline TargetEstimate one_shot_target(const NoiseSchedule& sched, const Vec& x_t, double t,
                                      const Vec& x0) {
    TargetEstimate est;
    est.eps_hat = conditional_epsilon(sched, x_t, t, x0);
    est.weights = {1.0};
    est.mode = TargetMode::OneShot;
    est.effective_n = 1;
    return est;
}

// Posterior-reweighted target over a reference set: weights proportional to
// the forward likelihood P(x_t | x0_i) = N(x_t; alpha x0_i, sigma^2 I),
// self-normalized to sum to 1 and computed in log domain with max-subtraction.
// eps_hat = (x_t - alpha * sum_i w_i x0_i) / sigma. With a single reference
// this reproduces one_shot_target's arithmetic bit for bit.
inline TargetEstimate variance_reduced_target(const NoiseSchedule& sched, const Vec& x_t,
                                              double t, const ReferenceBatch& refs,
                                              int condition = -1) {
    if (refs.samples.empty())
        throw std::invalid_argument("variance_reduced_target: empty reference batch");
    if (condition >= 0 && refs.labels.size() != refs.samples.size())
        throw ConfigError("variance_reduced_target: conditional call on unlabeled references");

    std::vector<std::size_t> idx;
    idx.reserve(refs.samples.size());
    for (std::size_t i = 0; i < refs.samples.size(); ++i)
        if (condition < 0 || refs.labels[i] == condition) idx.push_back(i);
    if (idx.empty())
        throw ConfigError("variance_reduced_target: no reference carries label " +
                          std::to_string(condition));

    const double a = sched.alpha(t);
    const double s = sched.sigma(t);
    if (s == 0.0)
        throw NumericError("variance_reduced_target: degenerate time sigma(t)=0, t=" +
                           std::to_string(t));
    const double inv2s2 = 1.0 / (2.0 * s * s);

    std::vector<double> lw(idx.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Vec& x0 = refs.samples[idx[i]];
        if (x0.size() != x_t.size())
            throw std::invalid_argument("variance_reduced_target: dimension mismatch");
        double q = 0.0;
        for (std::size_t j = 0; j < x_t.size(); ++j) {
            const double diff = x_t[j] - a * x0[j];
            q += diff * diff;
        }
        lw[i] = -q * inv2s2;
        if (lw[i] > best) best = lw[i];
    }
    if (!std::isfinite(best))
        throw NumericError("variance_reduced_target: all reference weights degenerate at t=" +
                           std::to_string(t));

    TargetEstimate est;
    est.mode = TargetMode::VarianceReduced;
    est.effective_n = static_cast<int>(idx.size());
    est.weights.resize(idx.size());
    double wsum = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        est.weights[i] = std::exp(lw[i] - best);
        wsum += est.weights[i];
    }
    Vec x0_mean(x_t.size(), 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        est.weights[i] /= wsum;
        axpy(est.weights[i], refs.samples[idx[i]], x0_mean);
    }
    est.eps_hat.resize(x_t.size());
    for (std::size_t j = 0; j < x_t.size(); ++j)
        est.eps_hat[j] = (x_t[j] - a * x0_mean[j]) / s;
    return est;
}

// Distillation-style target: the oracle's exact epsilon.
inline TargetEstimate teacher_target(const MixtureOracle& oracle, const NoiseSchedule& sched,
                                     const Vec& x_t, double t, int condition = -1) {
    TargetEstimate est;
    est.eps_hat = oracle.exact_epsilon(sched, x_t, t, condition);
    est.mode = TargetMode::TeacherOracle;
    est.effective_n = 0;
    return est;
}

// One row of the estimator-quality study: Monte-Carlo mean squared error of a
// target mode against the exact epsilon, with the standard error of that mean.
struct VarianceRow {
    TargetMode mode = TargetMode::OneShot;
    int n = 1;
    double t = 0.0;
    double mse = 0.0;
    double stderr_ = 0.0;
};

// For each (mode, reference count, t): draw (x0, eps), form x_t, estimate the
// target, and accumulate ||eps_hat - exact_epsilon||^2 over the trials.
// Variance-reduced batches hold the generating x0 plus n-1 fresh draws.
inline std::vector<VarianceRow> estimator_report(const MixtureOracle& oracle,
                                                 const NoiseSchedule& sched,
                                                 const std::vector<TargetMode>& modes,
                                                 const std::vector<int>& n_values,
                                                 const std::vector<double>& t_grid,
                                                 int trials, std::uint64_t seed) {
    if (trials < 2) throw std::invalid_argument("estimator_report: trials < 2");
    std::vector<VarianceRow> rows;
    for (TargetMode mode : modes) {
        const std::vector<int> ns =
            mode == TargetMode::VarianceReduced ? n_values : std::vector<int>{1};
        for (int n : ns) {
            if (n < 1) throw std::invalid_argument("estimator_report: reference count < 1");
            for (double t : t_grid) {
                Rng rng(mix_seed(seed, mix_seed(static_cast<std::uint64_t>(mode),
                                                mix_seed(n, static_cast<std::uint64_t>(t * 4096)))));
                double sum = 0.0, sum_sq = 0.0;
                ReferenceBatch refs;
                for (int trial = 0; trial < trials; ++trial) {
                    const DataBatch d = oracle.sample(1, rng);
                    const Vec eps = rng.normal_vec(d.x[0].size());
                    const DiffusedPoint p = forward_marginal(sched, d.x[0], eps, t);
                    TargetEstimate est;
                    switch (mode) {
                        case TargetMode::OneShot:
                            est = one_shot_target(sched, p.x_t, t, d.x[0]);
                            break;
                        case TargetMode::VarianceReduced: {
                            refs.samples.clear();
                            refs.labels.clear();
                            refs.samples.push_back(d.x[0]);
                            if (n > 1) {
                                DataBatch extra = oracle.sample(n - 1, rng);
                                for (auto& x : extra.x) refs.samples.push_back(std::move(x));
                            }
                            est = variance_reduced_target(sched, p.x_t, t, refs);
                            break;
                        }
                        case TargetMode::TeacherOracle:
                            est = teacher_target(oracle, sched, p.x_t, t);
                            break;
                    }
                    const Vec truth = oracle.exact_epsilon(sched, p.x_t, t);
                    const double err = squared_norm(sub(est.eps_hat, truth));
                    sum += err;
                    sum_sq += err * err;
                }
                VarianceRow row;
                row.mode = mode;
                row.n = mode == TargetMode::VarianceReduced ? n : 1;
                row.t = t;
                row.mse = sum / trials;
                const double var = (sum_sq - sum * sum / trials) / (trials - 1);
                row.stderr_ = std::sqrt(std::max(0.0, var) / trials);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

}  // namespace cmlab
