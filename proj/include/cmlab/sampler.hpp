#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cmlab/rng.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

// How multistep generation walks the time axis.
enum class SamplerKind { OneStep, StochasticMultistep, PhasedDeterministic };

struct SamplePlan {
    SamplerKind kind = SamplerKind::OneStep;
    std::vector<double> times;  // stochastic multistep: intermediate times, descending
    std::vector<double> edges;  // phased: t_max = s_1 > ... > s_n = t_min
    double eta = 1.0;           // edge-skipping scale in (0, 1]
    double guidance_omega = 1.0;
    int n_samples = 10000;

    void validate(const NoiseSchedule& sched) const {
        for (std::size_t i = 0; i + 1 < times.size(); ++i)
            if (!(times[i] > times[i + 1]))
                throw ConfigError("sample plan: times must be strictly descending");
        for (double t : times)
            if (!(t >= sched.t_min() && t < sched.t_max()))
                throw ConfigError("sample plan: intermediate times must lie in [t_min, t_max)");
        for (std::size_t i = 0; i + 1 < edges.size(); ++i)
            if (!(edges[i] > edges[i + 1]))
                throw ConfigError("sample plan: edges must be strictly descending");
        if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("sample plan: eta must be in (0, 1]");
        if (!(guidance_omega >= 0.0)) throw ConfigError("sample plan: omega must be >= 0");
        if (n_samples < 1) throw ConfigError("sample plan: n_samples < 1");
    }
};

// Single prediction from the top of the schedule.
template <class Model>
Vec one_step(const Model& model, const NoiseSchedule& sched, const Vec& x_T, int label = -1) {
    return model.predict_x0(x_T, sched.t_max(), label);
}

// Predict, re-noise to each intermediate time with fresh noise, predict again.
// An empty time list degenerates to one_step.
template <class Model>
Vec stochastic_multistep(const Model& model, const NoiseSchedule& sched, const Vec& x_T,
                         const std::vector<double>& times, Rng& rng, int label = -1) {
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] > times[i + 1]))
            throw std::invalid_argument("stochastic_multistep: times must be strictly descending");
    if (!times.empty() && !(times.front() < sched.t_max()))
        throw std::invalid_argument("stochastic_multistep: times must start below t_max");
    Vec x0 = model.predict_x0(x_T, sched.t_max(), label);
    for (double tau : times) {
        sched.require_in_range(tau, "stochastic_multistep");
        const double a = sched.alpha(tau), s = sched.sigma(tau);
        Vec x(x0.size());
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = a * x0[j] + s * rng.normal();
        x0 = model.predict_x0(x, tau, label);
    }
    return x0;
}

// One deterministic step of the prediction-anchored Euler form:
//   x_s = D + (s/t) * (x_t - D), with D = predict_x0(x_t, t).
// s = 0 lands exactly on the prediction; s = t is the identity.
template <class Model>
Vec phased_step(const Model& model, const NoiseSchedule& sched, const Vec& x_t, double t,
                double s, int label = -1) {
    (void)sched;
    if (!(s >= 0.0 && s <= t)) throw std::invalid_argument("phased_step: need 0 <= s <= t");
    if (s == t) return x_t;
    const Vec d = model.predict_x0(x_t, t, label);
    const double ratio = s / t;
    Vec x(x_t.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = d[j] + ratio * (x_t[j] - d[j]);
    return x;
}

// Walk the edge list s_1 -> eta*s_2 -> ... -> s_n with phased Euler steps.
// Intermediate edges are scaled by eta (the first is never scaled, the final
// edge is visited as-is so the walk ends at the schedule floor); eta = 1
// reproduces the unscaled walk bit for bit.
template <class Model>
Vec phased_sample(const Model& model, const NoiseSchedule& sched, const Vec& x_T,
                  const std::vector<double>& edges, double eta, int label = -1,
                  std::vector<double>* visited = nullptr) {
    if (edges.size() < 2) throw std::invalid_argument("phased_sample: need at least two edges");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        if (!(edges[i] > edges[i + 1]))
            throw std::invalid_argument("phased_sample: edges must be strictly descending");
    if (!(edges.back() >= 0.0)) throw std::invalid_argument("phased_sample: negative edge");
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::invalid_argument("phased_sample: eta must be in (0, 1]");

    Vec x = x_T;
    double cur = edges.front();
    if (visited) {
        visited->clear();
        visited->push_back(cur);
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        const bool last = i + 1 == edges.size();
        const double target = last ? edges[i] : eta * edges[i];
        x = phased_step(model, sched, x, cur, target, label);
        cur = target;
        if (visited) visited->push_back(cur);
    }
    return x;
}

// Prediction-space guidance against a deliberately weaker predictor:
//   D_guided = omega * D - (omega - 1) * D_weak.
// omega = 1 is exactly the unguided prediction; the blend is affine in omega.
template <class Model, class WeakModel>
Vec guided_predict(const Model& model, const WeakModel& weak, const Vec& x, double t,
                   double omega, int label = -1) {
    const Vec d = model.predict_x0(x, t, label);
    const Vec dw = weak.predict_x0(x, t, label);
    Vec out(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) out[j] = omega * d[j] - (omega - 1.0) * dw[j];
    return out;
}

// Two predictors fused into one guided predictor; drops into any sampler.
template <class Model, class WeakModel>
struct GuidedModel {
    const Model& model;
    const WeakModel& weak;
    double omega = 1.0;
    Vec predict_x0(const Vec& x, double t, int label = -1) const {
        return guided_predict(model, weak, x, t, omega, label);
    }
};

// n_edges points from t_max down to t_min, spaced uniformly in t or in lambda.
inline std::vector<double> make_edges(const NoiseSchedule& sched, int n_edges,
                                      bool uniform_lambda = false) {
    if (n_edges < 2) throw std::invalid_argument("make_edges: need at least two edges");
    std::vector<double> edges(n_edges);
    edges.front() = sched.t_max();
    edges.back() = sched.t_min();
    for (int i = 1; i + 1 < n_edges; ++i) {
        const double frac = static_cast<double>(i) / (n_edges - 1);
        if (uniform_lambda) {
            const double l =
                sched.lambda(sched.t_max()) + frac * (sched.lambda(sched.t_min()) - sched.lambda(sched.t_max()));
            edges[i] = sched.t_of_lambda(l);
        } else {
            edges[i] = sched.t_max() + frac * (sched.t_min() - sched.t_max());
        }
    }
    return edges;
}

// Noise draw at the top of the schedule: x_T ~ N(0, sigma(t_max)^2 I).
inline Vec top_noise(const NoiseSchedule& sched, std::size_t dim, Rng& rng) {
    Vec x(dim);
    const double s = sched.sigma(sched.t_max());
    for (auto& v : x) v = s * rng.normal();
    return x;
}

}  // namespace cmlab
