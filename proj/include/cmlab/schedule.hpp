#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "cmlab/errors.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

enum class ScheduleKind { VarianceExploding, VariancePreserving };

// Forward-process coefficient family for x_t = alpha(t)*x0 + sigma(t)*eps.
//
//   variance-exploding:  alpha = 1, sigma = t on [0.002, 80]
//   variance-preserving: alpha = exp(-B(t)/2), sigma = sqrt(1 - exp(-B(t)))
//                        with B(t) = beta_min*t + (beta_max-beta_min)*t^2/2
//                        on a normalized [~0, 1] range, so x_1 is near pure noise
//
// lambda(t) = ln(alpha/sigma) is the log signal-to-noise ratio; it is strictly
// decreasing in t and invertible in closed form for both kinds.
class NoiseSchedule {
  public:
    static NoiseSchedule variance_exploding(double t_min = 0.002, double t_max = 80.0) {
        return NoiseSchedule(ScheduleKind::VarianceExploding, t_min, t_max, 0.0, 0.0);
    }

    static NoiseSchedule variance_preserving(double t_min = 1e-3, double t_max = 1.0,
                                             double beta_min = 0.1, double beta_max = 20.0) {
        if (beta_min <= 0.0 || beta_max <= beta_min)
            throw ConfigError("schedule: need 0 < beta_min < beta_max");
        return NoiseSchedule(ScheduleKind::VariancePreserving, t_min, t_max, beta_min, beta_max);
    }

    ScheduleKind kind() const { return kind_; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }

    double alpha(double t) const {
        if (kind_ == ScheduleKind::VarianceExploding) return 1.0;
        return std::exp(-0.5 * big_b(t));
    }

    double sigma(double t) const {
        if (kind_ == ScheduleKind::VarianceExploding) return t;
        return std::sqrt(-std::expm1(-big_b(t)));
    }

    // log-SNR
    double lambda(double t) const {
        if (kind_ == ScheduleKind::VarianceExploding) return -std::log(t);
        const double b = big_b(t);
        // 0.5*ln(e^{-b} / (1 - e^{-b}))
        return -0.5 * (b + std::log(-std::expm1(-b)));
    }

    double t_of_lambda(double l) const {
        if (kind_ == ScheduleKind::VarianceExploding) return std::exp(-l);
        // invert B = ln(1 + e^{-2l}), then the quadratic in t
        const double m2l = -2.0 * l;
        const double b = m2l > 0.0 ? m2l + std::log1p(std::exp(-m2l))
                                   : std::log1p(std::exp(m2l));
        const double ba = beta_max_ - beta_min_;
        return (-beta_min_ + std::sqrt(beta_min_ * beta_min_ + 2.0 * ba * b)) / ba;
    }

    // drift coefficient d ln alpha / dt
    double f(double t) const {
        if (kind_ == ScheduleKind::VarianceExploding) return 0.0;
        return -0.5 * beta(t);
    }

    // diffusion coefficient g^2 = d sigma^2/dt - 2 (d ln alpha/dt) sigma^2
    double g_squared(double t) const {
        if (kind_ == ScheduleKind::VarianceExploding) return 2.0 * t;
        return beta(t);
    }

    // sigma/alpha = e^{-lambda}; handy for exponential-integrator steps
    double noise_ratio(double t) const { return sigma(t) / alpha(t); }

    void require_in_range(double t, const char* who) const {
        if (!(t >= t_min_ && t <= t_max_))
            throw std::out_of_range(std::string(who) + ": t=" + std::to_string(t) +
                                    " outside [" + std::to_string(t_min_) + ", " +
                                    std::to_string(t_max_) + "]");
    }

  private:
    NoiseSchedule(ScheduleKind k, double t_min, double t_max, double bmin, double bmax)
        : kind_(k), t_min_(t_min), t_max_(t_max), beta_min_(bmin), beta_max_(bmax) {
        if (!(t_min > 0.0) || !(t_max > t_min))
            throw ConfigError("schedule: need 0 < t_min < t_max");
    }

    double beta(double t) const { return beta_min_ + t * (beta_max_ - beta_min_); }
    double big_b(double t) const { return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t; }

    ScheduleKind kind_;
    double t_min_, t_max_;
    double beta_min_, beta_max_;
};

// A noised point, optionally remembering the (x0, eps) pair that produced it.
struct DiffusedPoint {
    Vec x_t;
    double t = 0.0;
    struct Origin {
        Vec x0;
        Vec eps;
    };
    std::optional<Origin> origin;
};

inline DiffusedPoint forward_marginal(const NoiseSchedule& sched, const Vec& x0, const Vec& eps,
                                      double t) {
    sched.require_in_range(t, "forward_marginal");
    if (x0.size() != eps.size())
        throw std::invalid_argument("forward_marginal: x0/eps dimension mismatch");
    const double a = sched.alpha(t);
    const double s = sched.sigma(t);
    DiffusedPoint p;
    p.t = t;
    p.x_t.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) p.x_t[i] = a * x0[i] + s * eps[i];
    p.origin = DiffusedPoint::Origin{x0, eps};
    return p;
}

// eps consistent with a known clean point: (x_t - alpha*x0)/sigma
inline Vec conditional_epsilon(const NoiseSchedule& sched, const Vec& x_t, double t,
                               const Vec& x0) {
    if (x_t.size() != x0.size())
        throw std::invalid_argument("conditional_epsilon: dimension mismatch");
    const double s = sched.sigma(t);
    if (s == 0.0)
        throw NumericError("conditional_epsilon: degenerate time with sigma(t)=0, t=" +
                           std::to_string(t));
    const double a = sched.alpha(t);
    Vec e(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) e[i] = (x_t[i] - a * x0[i]) / s;
    return e;
}

// One deterministic denoising step t -> r holding eps_hat fixed. Equivalent to
// the first-order exponential-integrator step in lambda:
//   xhat0 = (x_t - sigma_t*eps)/alpha_t;  x_r = alpha_r*xhat0 + sigma_r*eps
inline Vec ddim_step(const NoiseSchedule& sched, const Vec& x_t, double t, double r,
                     const Vec& eps_hat) {
    if (!(r < t)) throw std::invalid_argument("ddim_step: need r < t");
    sched.require_in_range(t, "ddim_step");
    sched.require_in_range(r, "ddim_step");
    if (x_t.size() != eps_hat.size())
        throw std::invalid_argument("ddim_step: dimension mismatch");
    const double at = sched.alpha(t), st = sched.sigma(t);
    const double ar = sched.alpha(r), sr = sched.sigma(r);
    Vec x(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double xhat0 = (x_t[i] - st * eps_hat[i]) / at;
        x[i] = ar * xhat0 + sr * eps_hat[i];
    }
    return x;
}

// Signed weight factor e^{-lambda_r} - e^{-lambda_t} = sigma_r/alpha_r - sigma_t/alpha_t.
// For the variance-exploding kind this is r - t (negative when denoising).
inline double reward_weight_integral(const NoiseSchedule& sched, double t, double r) {
    if (!(r <= t)) throw std::invalid_argument("reward_weight_integral: need r <= t");
    if (r == t) return 0.0;
    return sched.noise_ratio(r) - sched.noise_ratio(t);
}

}  // namespace cmlab
