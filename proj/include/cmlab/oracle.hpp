#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

struct MixtureComponent {
    Vec mean;
    double stdev = 1.0;   // isotropic
    int label = 0;
    double weight = 1.0;
};

struct DataBatch {
    std::vector<Vec> x;
    std::vector<int> labels;
};

// Isotropic Gaussian mixture with exact marginals under any schedule:
// diffusing component k to time t gives N(alpha*mean_k, (alpha^2 s_k^2 + sigma^2) I),
// so posterior component weights, posterior means of x0, and the score are all
// closed-form.
class MixtureOracle {
  public:
    MixtureOracle(std::vector<MixtureComponent> components, int dim)
        : comps_(std::move(components)), dim_(dim) {
        if (dim_ < 1) throw ConfigError("oracle: dimension must be >= 1");
        if (comps_.empty()) throw ConfigError("oracle: needs at least one component");
        double wsum = 0.0;
        for (const auto& c : comps_) {
            if (static_cast<int>(c.mean.size()) != dim_)
                throw ConfigError("oracle: component mean dimension mismatch");
            if (!(c.stdev > 0.0)) throw ConfigError("oracle: component stdev must be > 0");
            if (!(c.weight > 0.0)) throw ConfigError("oracle: component weight must be > 0");
            wsum += c.weight;
        }
        if (std::abs(wsum - 1.0) > 1e-10)
            throw ConfigError("oracle: component weights must sum to 1, got " +
                              std::to_string(wsum));
    }

    int dim() const { return dim_; }
    const std::vector<MixtureComponent>& components() const { return comps_; }

    bool has_label(int label) const {
        for (const auto& c : comps_)
            if (c.label == label) return true;
        return false;
    }

    // scalar data scale: sqrt(mean per-dimension variance of the mixture)
    double sigma_data() const {
        Vec mean(dim_, 0.0);
        for (const auto& c : comps_) axpy(c.weight, c.mean, mean);
        double e2 = 0.0;  // E||x||^2 / d
        for (const auto& c : comps_)
            e2 += c.weight * (squared_norm(c.mean) / dim_ + c.stdev * c.stdev);
        return std::sqrt(e2 - squared_norm(mean) / dim_);
    }

    DataBatch sample(std::size_t n, Rng& rng, int class_filter = -1) const {
        const auto idx = filtered_indices(class_filter, "oracle.sample");
        std::vector<double> cum;
        cum.reserve(idx.size());
        double acc = 0.0;
        for (auto k : idx) {
            acc += comps_[k].weight;
            cum.push_back(acc);
        }
        DataBatch batch;
        batch.x.reserve(n);
        batch.labels.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = rng.uniform() * acc;
            std::size_t pick = 0;
            while (pick + 1 < cum.size() && u > cum[pick]) ++pick;
            const auto& c = comps_[idx[pick]];
            Vec x(dim_);
            for (int j = 0; j < dim_; ++j) x[j] = c.mean[j] + c.stdev * rng.normal();
            batch.x.push_back(std::move(x));
            batch.labels.push_back(c.label);
        }
        return batch;
    }

    // log density of the diffused marginal at (x_t, t), optionally class-restricted
    double log_marginal(const NoiseSchedule& sched, const Vec& x_t, double t,
                        int class_filter = -1) const {
        const auto idx = filtered_indices(class_filter, "oracle.log_marginal");
        const double a = sched.alpha(t), s = sched.sigma(t);
        double wnorm = 0.0;
        for (auto k : idx) wnorm += comps_[k].weight;
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> lw(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto& c = comps_[idx[i]];
            const double v = a * a * c.stdev * c.stdev + s * s;
            double q = 0.0;
            for (int j = 0; j < dim_; ++j) {
                const double diff = x_t[j] - a * c.mean[j];
                q += diff * diff;
            }
            lw[i] = std::log(c.weight / wnorm) -
                    0.5 * dim_ * std::log(2.0 * std::numbers::pi * v) - 0.5 * q / v;
            best = std::max(best, lw[i]);
        }
        double acc = 0.0;
        for (double l : lw) acc += std::exp(l - best);
        return best + std::log(acc);
    }

    // posterior mean E[x0 | x_t] under the diffused mixture
    Vec posterior_x0_mean(const NoiseSchedule& sched, const Vec& x_t, double t,
                          int class_filter = -1) const {
        if (static_cast<int>(x_t.size()) != dim_)
            throw std::invalid_argument("oracle: x_t dimension mismatch");
        const auto idx = filtered_indices(class_filter, "oracle.posterior_x0_mean");
        const double a = sched.alpha(t), s = sched.sigma(t);
        std::vector<double> lw(idx.size());
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto& c = comps_[idx[i]];
            const double v = a * a * c.stdev * c.stdev + s * s;
            double q = 0.0;
            for (int j = 0; j < dim_; ++j) {
                const double diff = x_t[j] - a * c.mean[j];
                q += diff * diff;
            }
            lw[i] = std::log(c.weight) - 0.5 * dim_ * std::log(v) - 0.5 * q / v;
            best = std::max(best, lw[i]);
        }
        double wsum = 0.0;
        Vec mean(dim_, 0.0);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double w = std::exp(lw[i] - best);
            wsum += w;
            const auto& c = comps_[idx[i]];
            const double v = a * a * c.stdev * c.stdev + s * s;
            const double shrink = a * c.stdev * c.stdev / v;  // dE[x0|x_t,k]/dx_t
            for (int j = 0; j < dim_; ++j)
                mean[j] += w * (c.mean[j] + shrink * (x_t[j] - a * c.mean[j]));
        }
        for (auto& m : mean) m /= wsum;
        return mean;
    }

    // ground-truth noise direction: eps = (x_t - alpha E[x0|x_t]) / sigma,
    // equal to -sigma * grad log P_t(x_t)
    Vec exact_epsilon(const NoiseSchedule& sched, const Vec& x_t, double t,
                      int class_filter = -1) const {
        const Vec mean = posterior_x0_mean(sched, x_t, t, class_filter);
        const double a = sched.alpha(t), s = sched.sigma(t);
        if (s == 0.0)
            throw NumericError("oracle.exact_epsilon: degenerate time sigma(t)=0, t=" +
                               std::to_string(t));
        Vec e(dim_);
        for (int j = 0; j < dim_; ++j) e[j] = (x_t[j] - a * mean[j]) / s;
        return e;
    }

  private:
    std::vector<std::size_t> filtered_indices(int class_filter, const char* who) const {
        std::vector<std::size_t> idx;
        for (std::size_t k = 0; k < comps_.size(); ++k)
            if (class_filter < 0 || comps_[k].label == class_filter) idx.push_back(k);
        if (idx.empty())
            throw ConfigError(std::string(who) + ": no component carries label " +
                              std::to_string(class_filter));
        return idx;
    }

    std::vector<MixtureComponent> comps_;
    int dim_;
};

inline DataBatch sample_data(const MixtureOracle& oracle, std::size_t n, std::uint64_t seed,
                             int class_filter = -1) {
    Rng rng(seed);
    return oracle.sample(n, rng, class_filter);
}

// Reference trajectory of the probability-flow ODE through the requested
// times, with the lambda-weighted noise integral of each interval accumulated
// alongside (these interval rewards stack into the value function).
struct ReferenceTrajectory {
    std::vector<double> times;                // as requested, descending
    std::vector<Vec> states;                  // same length as times
    std::vector<Vec> interval_rewards;        // one per interval
    Vec total_reward;                         // sum of the interval rewards
};

// Integrates the flow with the exact mixture epsilon on a uniform-in-lambda
// internal sub-grid, one Heun (trapezoidal exponential-integrator) update per
// sub-step; interval rewards use trapezoidal quadrature of e^{-lambda} eps
// over the same nodes.
inline ReferenceTrajectory solve_reference(const MixtureOracle& oracle,
                                           const NoiseSchedule& sched, const Vec& x_start,
                                           const std::vector<double>& times,
                                           int substeps_per_interval = 256,
                                           int class_filter = -1) {
    if (times.size() < 1) throw std::invalid_argument("solve_reference: empty time grid");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] > times[i + 1]))
            throw std::invalid_argument("solve_reference: times must be strictly descending");
    sched.require_in_range(times.front(), "solve_reference");
    sched.require_in_range(times.back(), "solve_reference");
    if (substeps_per_interval < 1)
        throw std::invalid_argument("solve_reference: substeps_per_interval < 1");

    ReferenceTrajectory traj;
    traj.times = times;
    traj.states.reserve(times.size());
    traj.states.push_back(x_start);
    traj.total_reward.assign(x_start.size(), 0.0);

    Vec x = x_start;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double t_hi = times[i], t_lo = times[i + 1];
        const double lam_hi = sched.lambda(t_hi), lam_lo = sched.lambda(t_lo);
        const int m = substeps_per_interval;
        Vec reward(x.size(), 0.0);
        Vec e0 = oracle.exact_epsilon(sched, x, t_hi, class_filter);
        double t_a = t_hi, lam_a = lam_hi;
        for (int k = 1; k <= m; ++k) {
            const double lam_b = lam_hi + (lam_lo - lam_hi) * k / m;
            const double t_b = k == m ? t_lo : sched.t_of_lambda(lam_b);
            const double dlam = lam_b - lam_a;  // > 0 while denoising
            const double wa = sched.noise_ratio(t_a), wb = sched.noise_ratio(t_b);
            // predictor: first-order step holding eps fixed
            Vec xp = ddim_step(sched, x, t_a, t_b, e0);
            Vec ep = oracle.exact_epsilon(sched, xp, t_b, class_filter);
            // corrector: trapezoidal weight on the integral term
            const double ratio = sched.alpha(t_b) / sched.alpha(t_a);
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] = ratio * x[j] - sched.alpha(t_b) * 0.5 * dlam * (wa * e0[j] + wb * ep[j]);
            Vec e1 = oracle.exact_epsilon(sched, x, t_b, class_filter);
            for (std::size_t j = 0; j < x.size(); ++j)
                reward[j] += 0.5 * dlam * (wa * e0[j] + wb * e1[j]);
            e0 = std::move(e1);
            t_a = t_b;
            lam_a = lam_b;
        }
        traj.states.push_back(x);
        axpy(1.0, reward, traj.total_reward);
        traj.interval_rewards.push_back(std::move(reward));
    }
    return traj;
}

// Remaining lambda-weighted noise integral from t down to the schedule floor:
//   h(x_t, t) = x_t/alpha_t - x0_solution(x_t, t)
inline Vec exact_value(const MixtureOracle& oracle, const NoiseSchedule& sched, const Vec& x_t,
                       double t, int substeps = 256, int class_filter = -1) {
    if (t <= sched.t_min()) return Vec(x_t.size(), 0.0);
    const auto traj =
        solve_reference(oracle, sched, x_t, {t, sched.t_min()}, substeps, class_filter);
    const double a = sched.alpha(t);
    Vec h(x_t.size());
    for (std::size_t j = 0; j < x_t.size(); ++j) h[j] = x_t[j] / a - traj.states.back()[j];
    return h;
}

// Perfect-prediction stand-in for a trained net: predict_x0 solves the flow to
// the schedule floor with the exact epsilon. Interchangeable with the learned
// model anywhere a predictor is expected.
struct OracleModel {
    const MixtureOracle* oracle = nullptr;
    const NoiseSchedule* sched = nullptr;
    int substeps = 256;

    Vec predict_x0(const Vec& x, double t, int label = -1) const {
        if (t <= sched->t_min()) return x;
        const auto traj = solve_reference(*oracle, *sched, x, {t, sched->t_min()}, substeps, label);
        return traj.states.back();
    }
};

}  // namespace cmlab
