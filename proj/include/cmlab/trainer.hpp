#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/mdp.hpp"
#include "cmlab/metrics.hpp"
#include "cmlab/net.hpp"
#include "cmlab/optim.hpp"
#include "cmlab/oracle.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/sampler.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/target.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

enum class ThetaMinusMode { StopGradient, Ema };
enum class RMapMode { Progressive, FixedPartition };
enum class XrMode { DdimTargetEps, SharedNoise };
enum class LossKind { PseudoHuber, SquaredL2 };

// Everything that maps a sampled t to its training partner r, plus the target
// and loss options. `iter` is the schedule clock: the t->r gap opens as
// r = relu(1 - n(t)/q^floor(iter/d)) * (t - s) + s, where s is the greatest
// phase edge strictly below t (the schedule floor when no edges are set).
struct TrainPlan {
    double p_mean = -1.1;  // ln t ~ N(p_mean, p_std^2)
    double p_std = 2.0;
    double q = 1.25;
    int d = 200;
    std::function<double(double)> n_fn;  // monotone map t -> (0,1]; default 1
    double delta = 1e-4;                 // loss weight 1/(t - r + delta)
    std::vector<double> edges;           // phased training; empty = continuous
    std::int64_t iter = 0;

    TargetMode target_mode = TargetMode::VarianceReduced;
    ThetaMinusMode theta_minus = ThetaMinusMode::StopGradient;
    RMapMode r_map = RMapMode::Progressive;
    int partition_k = 256;  // fixed partition r = t (1 - 1/k)
    XrMode xr_mode = XrMode::DdimTargetEps;
    ReferenceSource ref_source = ReferenceSource::InBatch;
    int pool_size = 64;
    LossKind loss = LossKind::PseudoHuber;
    double huber_c_scale = 0.03;  // c = scale * sqrt(dim)
    bool conditional = false;

    double n_of(double t) const { return n_fn ? n_fn(t) : 1.0; }

    void validate(const NoiseSchedule& sched) const {
        if (!(p_std >= 0.0)) throw ConfigError("train plan: p_std must be >= 0");
        if (!(q > 1.0)) throw ConfigError("train plan: q must be > 1");
        if (d < 1) throw ConfigError("train plan: d must be >= 1");
        if (!(delta > 0.0)) throw ConfigError("train plan: delta must be > 0");
        if (partition_k < 1) throw ConfigError("train plan: partition_k must be >= 1");
        if (pool_size < 1) throw ConfigError("train plan: pool_size must be >= 1");
        if (!(huber_c_scale >= 0.0)) throw ConfigError("train plan: huber_c_scale must be >= 0");
        for (std::size_t i = 0; i + 1 < edges.size(); ++i)
            if (!(edges[i] > edges[i + 1]))
                throw ConfigError("train plan: edges must be strictly descending");
        if (!edges.empty() &&
            (!(edges.front() <= sched.t_max()) || !(edges.back() >= sched.t_min())))
            throw ConfigError("train plan: edges must lie within the schedule range");
    }

    // greatest edge strictly below t; the schedule floor in continuous mode
    double phase_floor(const NoiseSchedule& sched, double t) const {
        double floor = sched.t_min();
        for (double e : edges)
            if (e < t && e > floor) floor = e;
        return floor;
    }
};

// seed stream used for fresh parameter initialization inside train()
inline std::uint64_t train_init_seed(std::uint64_t seed) { return mix_seed(seed, 0x1218ULL); }

// ln t ~ N(p_mean, p_std^2), clamped into the schedule range.
inline double sample_t(const TrainPlan& plan, const NoiseSchedule& sched, Rng& rng) {
    const double t = std::exp(plan.p_mean + plan.p_std * rng.normal());
    return std::min(sched.t_max(), std::max(sched.t_min(), t));
}

// Progressive gap map. Early in training r sits at the schedule floor (phase
// edge in phased mode, t_min otherwise); as iter grows, q^floor(iter/d) blows
// up and r closes in on t from below. Continuous mode uses the bare product
// form shrink*t so the closed gap is exact; phased mode shifts it onto the
// phase edge s: shrink*(t - s) + s.
inline double r_of(const TrainPlan& plan, const NoiseSchedule& sched, double t,
                   std::int64_t iter) {
    sched.require_in_range(t, "r_of");
    if (iter < 0) throw std::invalid_argument("r_of: negative iter");
    const double n_t = plan.n_of(t);
    if (!(n_t > 0.0 && n_t <= 1.0))
        throw NumericError("r_of: n(t) must lie in (0,1], got " + std::to_string(n_t));
    const double decay = std::pow(plan.q, static_cast<double>(iter / plan.d));
    const double shrink = std::max(0.0, 1.0 - n_t / decay);
    if (plan.edges.empty()) return std::max(sched.t_min(), std::min(t, shrink * t));
    const double floor = plan.phase_floor(sched, t);
    const double r = shrink * (t - floor) + floor;
    return std::max(floor, std::min(t, r));
}

// Fixed gap r = t (1 - 1/k), clamped to the phase floor.
inline double fixed_partition_r(const TrainPlan& plan, const NoiseSchedule& sched, double t,
                                int k) {
    sched.require_in_range(t, "fixed_partition_r");
    if (k < 1) throw std::invalid_argument("fixed_partition_r: k must be >= 1");
    const double r = t * (1.0 - 1.0 / k);
    const double floor = plan.phase_floor(sched, t);
    return std::max(floor, std::min(t, r));
}

inline double mapped_r(const TrainPlan& plan, const NoiseSchedule& sched, double t,
                       std::int64_t iter) {
    return plan.r_map == RMapMode::FixedPartition ? fixed_partition_r(plan, sched, t, plan.partition_k)
                                                  : r_of(plan, sched, t, iter);
}

// 1/(t - r + delta): the 1/t x 1/(1-alpha) decomposition of the gap weight,
// capped at 1/delta.
inline double train_weight(const TrainPlan& plan, double t, double r) {
    if (r > t) throw std::invalid_argument("train_weight: r > t");
    return 1.0 / (t - r + plan.delta);
}

struct TrainBatch {
    std::vector<Vec> x0;
    std::vector<int> labels;
    // external references (pool / dataset); empty means in-batch
    std::vector<Vec> ref_x0;
    std::vector<int> ref_labels;
    bool refs_include_generator = true;  // false for pools: append generating x0 per sample
};

struct TrainStepReport {
    std::int64_t iter = 0;
    double t = 0.0;       // batch mean of sampled t
    double r = 0.0;       // batch mean of mapped r
    double loss = 0.0;
    double weight = 0.0;  // batch mean gap weight
    double grad_norm = 0.0;
    TargetMode mode = TargetMode::OneShot;
};

// Optional per-sample capture for tests and debugging.
struct LossTrace {
    std::vector<double> t, r;
    std::vector<Vec> x_t, x_r;
};

struct LossOut {
    double loss = 0.0;
    TrainStepReport report;
};

// One batch of the consistency objective. Per sample: draw (t, eps), noise x0,
// estimate the target epsilon, step x_t -> x_r with it, and penalize the gap
// between the student prediction at (x_t, t) and the frozen-parameter
// prediction at (x_r, r) under the gap weight. Gradients flow only through
// the student; `target_params` is whatever theta-minus policy supplies.
inline LossOut loss_and_grad(const ConsistencyNet& net, const Vec& target_params,
                             const NoiseSchedule& sched, const TrainPlan& plan,
                             const TrainBatch& batch, std::uint64_t seed, Vec& grad,
                             const MixtureOracle* teacher = nullptr,
                             LossTrace* trace = nullptr) {
    const std::size_t B = batch.x0.size();
    if (B == 0) throw std::invalid_argument("loss_and_grad: empty batch");
    const NetSpec& spec = net.spec();
    if (plan.target_mode == TargetMode::TeacherOracle && teacher == nullptr)
        throw std::invalid_argument("loss_and_grad: teacher mode needs an oracle");
    if (plan.conditional && batch.labels.size() != B)
        throw ConfigError("loss_and_grad: conditional training on unlabeled batch");

    grad.assign(net.params().size(), 0.0);
    const double c_huber = plan.huber_c_scale * std::sqrt(static_cast<double>(spec.dim));

    // shared references for in-batch / dataset modes
    ReferenceBatch shared_refs;
    if (plan.target_mode == TargetMode::VarianceReduced) {
        if (plan.ref_source == ReferenceSource::InBatch) {
            shared_refs.samples = batch.x0;
            shared_refs.labels = batch.labels;
            shared_refs.source = ReferenceSource::InBatch;
        } else {
            shared_refs.samples = batch.ref_x0;
            shared_refs.labels = batch.ref_labels;
            shared_refs.source = plan.ref_source;
            if (shared_refs.samples.empty())
                throw std::invalid_argument("loss_and_grad: external reference set is empty");
        }
    }

    Rng rng(mix_seed(seed, 0x106aULL));
    NetWorkspace ws_student, ws_target;
    Vec eps(spec.dim), upstream(spec.dim);
    double loss_sum = 0.0, t_sum = 0.0, r_sum = 0.0, w_sum = 0.0;

    for (std::size_t i = 0; i < B; ++i) {
        const Vec& x0 = batch.x0[i];
        const int label = plan.conditional ? batch.labels[i] : -1;
        const double t = sample_t(plan, sched, rng);
        rng.fill_normal(eps);
        const DiffusedPoint p = forward_marginal(sched, x0, eps, t);
        const double r = mapped_r(plan, sched, t, plan.iter);

        TargetEstimate est;
        switch (plan.target_mode) {
            case TargetMode::OneShot:
                est = one_shot_target(sched, p.x_t, t, x0);
                break;
            case TargetMode::VarianceReduced: {
                if (plan.ref_source == ReferenceSource::ExternalPool &&
                    !batch.refs_include_generator) {
                    ReferenceBatch own = shared_refs;
                    own.samples.push_back(x0);
                    if (!own.labels.empty()) own.labels.push_back(plan.conditional ? label : 0);
                    est = variance_reduced_target(sched, p.x_t, t, own, label);
                } else {
                    est = variance_reduced_target(sched, p.x_t, t, shared_refs, label);
                }
                break;
            }
            case TargetMode::TeacherOracle:
                est = teacher_target(*teacher, sched, p.x_t, t, label);
                break;
        }

        Vec x_r;
        if (r == t) {
            x_r = p.x_t;  // fully closed gap: degenerate pair
        } else if (plan.xr_mode == XrMode::SharedNoise) {
            x_r = forward_marginal(sched, x0, eps, r).x_t;
        } else {
            x_r = ddim_step(sched, p.x_t, t, r, est.eps_hat);
        }

        const Vec& student = ConsistencyNet::forward(spec, net.params(), p.x_t, t, label, ws_student);
        const Vec& target = ConsistencyNet::forward(spec, target_params, x_r, r, label, ws_target);

        double sq = 0.0;
        for (int j = 0; j < spec.dim; ++j) {
            const double diff = student[j] - target[j];
            upstream[j] = diff;
            sq += diff * diff;
        }
        const double w = train_weight(plan, t, r);
        if (!std::isfinite(sq) || !std::isfinite(w))
            throw NumericError("trainer.loss_and_grad: non-finite loss at t=" +
                               std::to_string(t) + ", r=" + std::to_string(r));
        double dval, dscale;  // distance value and its derivative w.r.t. diff, per unit diff
        if (plan.loss == LossKind::PseudoHuber) {
            // sqrt(sq + c^2) - c, written as sq/(root + c) so d(a, a) is exactly 0
            const double root = std::sqrt(sq + c_huber * c_huber);
            dval = root > 0.0 ? sq / (root + c_huber) : 0.0;
            dscale = root > 0.0 ? 1.0 / root : 0.0;
        } else {
            dval = sq;
            dscale = 2.0;
        }
        loss_sum += w * dval;
        t_sum += t;
        r_sum += r;
        w_sum += w;

        const double scale = w * dscale / static_cast<double>(B);
        for (int j = 0; j < spec.dim; ++j) upstream[j] *= scale;
        ConsistencyNet::backward(spec, net.params(), t, label, upstream, ws_student, grad);

        if (trace) {
            trace->t.push_back(t);
            trace->r.push_back(r);
            trace->x_t.push_back(p.x_t);
            trace->x_r.push_back(x_r);
        }
    }

    LossOut out;
    out.loss = loss_sum / B;
    out.report.iter = plan.iter;
    out.report.t = t_sum / B;
    out.report.r = r_sum / B;
    out.report.loss = out.loss;
    out.report.weight = w_sum / B;
    out.report.grad_norm = norm(grad);
    out.report.mode = plan.target_mode;
    if (!std::isfinite(out.report.grad_norm))
        throw NumericError("trainer.loss_and_grad: non-finite gradient norm at iter=" +
                           std::to_string(plan.iter));
    return out;
}

struct EvalSnapshot {
    std::int64_t iter = 0;
    double sw_1step = 0.0;
    double sw_2step = 0.0;
    double bellman_residual = 0.0;
};

struct TrainSink {
    std::function<void(const TrainStepReport&)> on_step;
    std::function<void(const EvalSnapshot&)> on_snapshot;
};

struct TrainConfig {
    std::int64_t iters = 20000;
    int batch_size = 256;
    double lr = 1e-3;
    int warmup = 100;
    double ema_beta = 0.999;
    int eval_every = 500;          // 0 disables snapshots
    int eval_samples = 2048;
    int eval_projections = 64;
    double eval_bellman_t = 1.0;   // snapshot residual pair
    double eval_bellman_r = 0.25;
    int eval_bellman_points = 8;
    int eval_bellman_substeps = 96;
    int dataset_size = 4096;       // full-dataset reference mode

    void validate() const {
        if (iters < 0) throw ConfigError("train: iters must be >= 0");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
        if (warmup < 0) throw ConfigError("train: warmup must be >= 0");
        if (!(ema_beta >= 0.0 && ema_beta <= 1.0))
            throw ConfigError("train: ema_beta must be in [0, 1]");
        if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
        if (eval_samples < 2) throw ConfigError("train: eval_samples must be >= 2");
        if (eval_projections < 1) throw ConfigError("train: eval_projections must be >= 1");
        if (dataset_size < 1) throw ConfigError("train: dataset_size must be >= 1");
    }
};

struct TrainResult {
    ConsistencyNet net;
    EmaShadow shadow;
    Vec half_params;        // raw parameters at the halfway point
    EmaShadow half_shadow;  // EMA state at the halfway point (the weak predictor)
    std::int64_t iters_run = 0;

    ConsistencyNet ema_net() const {
        ConsistencyNet n(net.spec());
        n.params() = shadow.params;
        return n;
    }
    // the retained weaker predictor used for guidance
    ConsistencyNet halfway_ema_net() const {
        ConsistencyNet n(net.spec());
        n.params() = half_shadow.params;
        return n;
    }
};

// Evaluation helper shared by training snapshots and reports: one-step and
// re-noised two-step sliced-Wasserstein against fresh oracle draws.
template <class Model>
double sampler_sw(const Model& model, const NoiseSchedule& sched, const MixtureOracle& oracle,
                  int steps, int n_samples, int projections, std::uint64_t seed,
                  bool conditional = false) {
    Rng rng(mix_seed(seed, 0x5a3eULL));
    std::vector<double> times;
    if (steps > 1) {
        // interior times at uniform lambda between the range ends
        const double l_hi = sched.lambda(sched.t_max()), l_lo = sched.lambda(sched.t_min());
        for (int k = 1; k < steps; ++k)
            times.push_back(sched.t_of_lambda(l_hi + (l_lo - l_hi) * k / steps));
    }
    std::vector<Vec> generated;
    generated.reserve(n_samples);
    DataBatch ref = oracle.sample(static_cast<std::size_t>(n_samples), rng);
    for (int i = 0; i < n_samples; ++i) {
        const int label = conditional ? ref.labels[i] : -1;
        Vec x_T = top_noise(sched, static_cast<std::size_t>(oracle.dim()), rng);
        generated.push_back(times.empty() ? one_step(model, sched, x_T, label)
                                          : stochastic_multistep(model, sched, x_T, times, rng, label));
    }
    return sliced_wasserstein(generated, ref.x, projections, mix_seed(seed, 0x55ULL));
}

// Full training loop: Adam on the consistency objective with the plan's gap
// schedule, an EMA shadow, periodic evaluation snapshots, and a retained
// halfway checkpoint. Bit-reproducible for a fixed (config, seed).
inline TrainResult train(const NetSpec& net_spec, const MixtureOracle& oracle,
                         const NoiseSchedule& sched, TrainPlan plan, const TrainConfig& cfg,
                         std::uint64_t seed, const TrainSink& sink = {}) {
    cfg.validate();
    plan.validate(sched);

    ConsistencyNet net(net_spec);
    net.init_params(train_init_seed(seed));
    EmaShadow shadow = make_shadow(net, cfg.ema_beta);

    TrainResult result{std::move(net), std::move(shadow), {}, {}, 0};
    result.half_params = result.net.params();
    result.half_shadow = result.shadow;

    AdamOptimizer opt;
    opt.lr = cfg.lr;
    opt.warmup = cfg.warmup;

    Rng data_rng(mix_seed(seed, 0xda7aULL));
    Rng eval_rng(mix_seed(seed, 0xe7a1ULL));

    DataBatch dataset;
    if (plan.target_mode == TargetMode::VarianceReduced &&
        plan.ref_source == ReferenceSource::FullDataset)
        dataset = oracle.sample(static_cast<std::size_t>(cfg.dataset_size), data_rng);

    Vec grad(result.net.params().size());
    Vec target_params_copy;
    const std::int64_t half = cfg.iters / 2;

    for (std::int64_t it = 0; it < cfg.iters; ++it) {
        plan.iter = it;
        TrainBatch batch;
        batch.x0.reserve(cfg.batch_size);
        batch.labels.reserve(cfg.batch_size);
        if (plan.target_mode == TargetMode::VarianceReduced &&
            plan.ref_source == ReferenceSource::FullDataset) {
            for (int b = 0; b < cfg.batch_size; ++b) {
                const std::size_t k = data_rng.index(dataset.x.size());
                batch.x0.push_back(dataset.x[k]);
                batch.labels.push_back(dataset.labels[k]);
            }
            batch.ref_x0 = dataset.x;
            batch.ref_labels = dataset.labels;
            batch.refs_include_generator = true;
        } else {
            DataBatch fresh = oracle.sample(static_cast<std::size_t>(cfg.batch_size), data_rng);
            batch.x0 = std::move(fresh.x);
            batch.labels = std::move(fresh.labels);
            if (plan.target_mode == TargetMode::VarianceReduced &&
                plan.ref_source == ReferenceSource::ExternalPool) {
                DataBatch pool = oracle.sample(static_cast<std::size_t>(plan.pool_size), data_rng);
                batch.ref_x0 = std::move(pool.x);
                batch.ref_labels = std::move(pool.labels);
                batch.refs_include_generator = false;
            }
        }

        const Vec* target_params = &result.net.params();
        if (plan.theta_minus == ThetaMinusMode::Ema) {
            target_params = &result.shadow.params;
        } else {
            target_params_copy = result.net.params();  // frozen copy, no gradient path
            target_params = &target_params_copy;
        }

        const std::uint64_t step_seed = mix_seed(seed, 0xb000ULL + static_cast<std::uint64_t>(it));
        LossOut out = loss_and_grad(result.net, *target_params, sched, plan, batch, step_seed,
                                    grad, &oracle);
        opt.step(result.net.params(), grad);
        ema_update(result.shadow, result.net);
        if (sink.on_step) sink.on_step(out.report);

        if (it + 1 == half && cfg.iters >= 2) {
            result.half_params = result.net.params();
            result.half_shadow = result.shadow;
        }

        if (cfg.eval_every > 0 &&
            ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iters)) {
            // snapshots track the EMA model — the same weights the final
            // evaluation and the samplers use; the raw net oscillates too much
            // under Adam for its metrics to be a useful progress signal
            const ConsistencyNet snap_net = result.ema_net();
            EvalSnapshot snap;
            snap.iter = it + 1;
            const std::uint64_t eseed = eval_rng.next_u64();
            snap.sw_1step = sampler_sw(snap_net, sched, oracle, 1, cfg.eval_samples,
                                       cfg.eval_projections, eseed, plan.conditional);
            snap.sw_2step = sampler_sw(snap_net, sched, oracle, 2, cfg.eval_samples,
                                       cfg.eval_projections, mix_seed(eseed, 2), plan.conditional);
            snap.bellman_residual = bellman_residual(
                snap_net, sched, oracle, cfg.eval_bellman_t, cfg.eval_bellman_r,
                cfg.eval_bellman_points, mix_seed(eseed, 3), cfg.eval_bellman_substeps);
            if (sink.on_snapshot) sink.on_snapshot(snap);
        }
        result.iters_run = it + 1;
    }
    return result;
}

}  // namespace cmlab
