#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cmlab/oracle.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/target.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

// Deterministic-policy view of the denoising flow: states are (x, t), the
// transition is a solver step, and the per-step vector reward is the
// lambda-weighted noise mass ε̂ · (σ_t/α_t − σ_r/α_r) crossed by the step.
// Rewards stack: the value of a state is the remaining weighted noise
// integral, value(x_t, t) = x_t/α_t − predict_x0(x_t, t).
struct MdpState {
    Vec x;
    double t = 0.0;
};

struct MdpTransition {
    MdpState state;
    Vec next_x;
    double next_t = 0.0;
    Vec reward_estimate;
    TargetMode mode = TargetMode::OneShot;
};

// Any callable (x, t) -> TargetEstimate works as the epsilon source; wrap the
// estimators or the oracle as needed.
using EpsSource = std::function<TargetEstimate(const Vec&, double)>;

inline EpsSource teacher_eps_source(const MixtureOracle& oracle, const NoiseSchedule& sched,
                                    int condition = -1) {
    return [&oracle, &sched, condition](const Vec& x, double t) {
        return teacher_target(oracle, sched, x, t, condition);
    };
}

inline MdpTransition step(const NoiseSchedule& sched, const MdpState& state, double next_t,
                          const EpsSource& eps_source) {
    if (next_t > state.t) throw std::invalid_argument("mdp.step: need next_t <= t");
    MdpTransition tr;
    tr.state = state;
    tr.next_t = next_t;
    if (next_t == state.t) {  // degenerate zero-length step
        tr.next_x = state.x;
        tr.reward_estimate.assign(state.x.size(), 0.0);
        return tr;
    }
    const TargetEstimate est = eps_source(state.x, state.t);
    tr.mode = est.mode;
    tr.next_x = ddim_step(sched, state.x, state.t, next_t, est.eps_hat);
    // oriented integral of e^{-lambda} from lambda_t up to lambda_r is
    // sigma_t/alpha_t - sigma_r/alpha_r, i.e. minus the signed weight factor
    const double w = -reward_weight_integral(sched, state.t, next_t);
    tr.reward_estimate = scaled(est.eps_hat, w);
    return tr;
}

struct Rollout {
    std::vector<MdpTransition> transitions;
    Vec total_reward;
    MdpState final_state;
};

inline Rollout n_step_rollout(const NoiseSchedule& sched, const MdpState& start,
                              const std::vector<double>& times, const EpsSource& eps_source) {
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] > times[i + 1]))
            throw std::invalid_argument("mdp.n_step_rollout: times must be strictly descending");
    if (!times.empty() && times.front() > start.t)
        throw std::invalid_argument("mdp.n_step_rollout: times exceed the start time");
    Rollout roll;
    roll.total_reward.assign(start.x.size(), 0.0);
    MdpState cur = start;
    for (double next_t : times) {
        MdpTransition tr = step(sched, cur, next_t, eps_source);
        axpy(1.0, tr.reward_estimate, roll.total_reward);
        cur = MdpState{tr.next_x, tr.next_t};
        roll.transitions.push_back(std::move(tr));
    }
    roll.final_state = cur;
    return roll;
}

// uniform-in-lambda time grid strictly below t, ending at t_end
inline std::vector<double> rollout_times(const NoiseSchedule& sched, double t, double t_end,
                                         int n) {
    if (!(t_end < t)) throw std::invalid_argument("rollout_times: need t_end < t");
    const double lt = sched.lambda(t), le = sched.lambda(t_end);
    std::vector<double> times(n);
    for (int k = 1; k <= n; ++k)
        times[k - 1] = k == n ? t_end : sched.t_of_lambda(lt + (le - lt) * k / n);
    return times;
}

// value(x, t) = x/alpha_t - predict_x0(x, t): the model's estimate of the
// remaining weighted noise integral. Zero at the boundary by construction.
template <class Model>
Vec value_of(const Model& model, const NoiseSchedule& sched, const MdpState& state,
             int label = -1) {
    const Vec pred = model.predict_x0(state.x, state.t, label);
    const double a = sched.alpha(state.t);
    Vec v(state.x.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = state.x[j] / a - pred[j];
    return v;
}

// Mean ||value(x_t,t) - reward(t->r) - value(x_r,r)|| over points drawn from
// the diffused data distribution at t, with x_r and the interval reward taken
// from the reference solver.
template <class Model>
double bellman_residual(const Model& model, const NoiseSchedule& sched,
                        const MixtureOracle& oracle, double t, double r, int n_points,
                        std::uint64_t seed, int solver_substeps = 256, int label = -1) {
    if (!(r < t)) throw std::invalid_argument("mdp.bellman_residual: need r < t");
    if (n_points < 1) throw std::invalid_argument("mdp.bellman_residual: n_points < 1");
    Rng rng(mix_seed(seed, 0xbe11ULL));
    double acc = 0.0;
    for (int i = 0; i < n_points; ++i) {
        const DataBatch d = oracle.sample(1, rng, label);
        const Vec eps = rng.normal_vec(d.x[0].size());
        const DiffusedPoint p = forward_marginal(sched, d.x[0], eps, t);
        const auto traj = solve_reference(oracle, sched, p.x_t, {t, r}, solver_substeps, label);
        const Vec v_t = value_of(model, sched, MdpState{p.x_t, t}, label);
        const Vec v_r = value_of(model, sched, MdpState{traj.states.back(), r}, label);
        double sq = 0.0;
        for (std::size_t j = 0; j < v_t.size(); ++j) {
            const double res = v_t[j] - traj.interval_rewards[0][j] - v_r[j];
            sq += res * res;
        }
        acc += std::sqrt(sq);
    }
    return acc / n_points;
}

}  // namespace cmlab
