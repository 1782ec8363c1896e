#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmlab/errors.hpp"
#include "cmlab/net.hpp"
#include "cmlab/oracle.hpp"
#include "cmlab/sampler.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/trainer.hpp"

namespace cmlab {

using json = nlohmann::json;

// ----- enum <-> string maps (the config vocabulary) -----

inline std::string enum_err(const std::string& key, const std::string& got,
                            const std::string& allowed) {
    return "config: " + key + " must be one of {" + allowed + "}, got \"" + got + "\"";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "ve") return ScheduleKind::VarianceExploding;
    if (s == "vp") return ScheduleKind::VariancePreserving;
    throw ConfigError(enum_err("schedule.kind", s, "ve, vp"));
}
inline std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::VarianceExploding ? "ve" : "vp";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "silu") return Activation::SiLU;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError(enum_err("net.act", s, "silu, tanh"));
}
inline std::string to_string(Activation a) { return a == Activation::SiLU ? "silu" : "tanh"; }

inline TargetMode parse_target_mode(const std::string& s) {
    if (s == "one_shot") return TargetMode::OneShot;
    if (s == "variance_reduced") return TargetMode::VarianceReduced;
    if (s == "teacher_oracle") return TargetMode::TeacherOracle;
    throw ConfigError(enum_err("plan.target_mode", s, "one_shot, variance_reduced, teacher_oracle"));
}

inline ThetaMinusMode parse_theta_minus(const std::string& s) {
    if (s == "stop_gradient") return ThetaMinusMode::StopGradient;
    if (s == "ema") return ThetaMinusMode::Ema;
    throw ConfigError(enum_err("plan.theta_minus", s, "stop_gradient, ema"));
}
inline std::string to_string(ThetaMinusMode m) {
    return m == ThetaMinusMode::StopGradient ? "stop_gradient" : "ema";
}

inline RMapMode parse_r_map(const std::string& s) {
    if (s == "progressive") return RMapMode::Progressive;
    if (s == "fixed_partition") return RMapMode::FixedPartition;
    throw ConfigError(enum_err("plan.r_map", s, "progressive, fixed_partition"));
}
inline std::string to_string(RMapMode m) {
    return m == RMapMode::Progressive ? "progressive" : "fixed_partition";
}

inline XrMode parse_xr_mode(const std::string& s) {
    if (s == "ddim") return XrMode::DdimTargetEps;
    if (s == "shared_noise") return XrMode::SharedNoise;
    throw ConfigError(enum_err("plan.xr_mode", s, "ddim, shared_noise"));
}
inline std::string to_string(XrMode m) {
    return m == XrMode::DdimTargetEps ? "ddim" : "shared_noise";
}

inline ReferenceSource parse_ref_source(const std::string& s) {
    if (s == "in_batch") return ReferenceSource::InBatch;
    if (s == "pool") return ReferenceSource::ExternalPool;
    if (s == "dataset") return ReferenceSource::FullDataset;
    throw ConfigError(enum_err("plan.ref_source", s, "in_batch, pool, dataset"));
}
inline std::string to_string(ReferenceSource s) {
    switch (s) {
        case ReferenceSource::InBatch: return "in_batch";
        case ReferenceSource::ExternalPool: return "pool";
        default: return "dataset";
    }
}

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "pseudo_huber") return LossKind::PseudoHuber;
    if (s == "squared_l2") return LossKind::SquaredL2;
    throw ConfigError(enum_err("plan.loss", s, "pseudo_huber, squared_l2"));
}
inline std::string to_string(LossKind k) {
    return k == LossKind::PseudoHuber ? "pseudo_huber" : "squared_l2";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
    if (s == "one_step") return SamplerKind::OneStep;
    if (s == "multistep") return SamplerKind::StochasticMultistep;
    if (s == "phased") return SamplerKind::PhasedDeterministic;
    throw ConfigError(enum_err("sample.kind", s, "one_step, multistep, phased"));
}
inline std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::OneStep: return "one_step";
        case SamplerKind::StochasticMultistep: return "multistep";
        default: return "phased";
    }
}

// ----- schema helpers -----

inline void reject_unknown_keys(const json& j, const std::string& section,
                                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config: section \"" + section + "\" must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok)
            throw ConfigError("config: unknown key \"" +
                              (section.empty() ? it.key() : section + "." + it.key()) + "\"");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for \"") + key + "\": " + e.what());
    }
}

// ----- sections -----

struct ScheduleSection {
    ScheduleKind kind = ScheduleKind::VarianceExploding;
    double t_min = 0.002;
    double t_max = 80.0;
    double beta_min = 0.1;  // vp only
    double beta_max = 20.0;

    NoiseSchedule build() const {
        return kind == ScheduleKind::VarianceExploding
                   ? NoiseSchedule::variance_exploding(t_min, t_max)
                   : NoiseSchedule::variance_preserving(t_min, t_max, beta_min, beta_max);
    }
    static ScheduleSection parse(const json& j) {
        reject_unknown_keys(j, "schedule", {"kind", "t_min", "t_max", "beta_min", "beta_max"});
        ScheduleSection s;
        s.kind = parse_schedule_kind(get_or<std::string>(j, "kind", "ve"));
        const double def_tmin = s.kind == ScheduleKind::VarianceExploding ? 0.002 : 1e-3;
        const double def_tmax = s.kind == ScheduleKind::VarianceExploding ? 80.0 : 1.0;
        s.t_min = get_or(j, "t_min", def_tmin);
        s.t_max = get_or(j, "t_max", def_tmax);
        s.beta_min = get_or(j, "beta_min", 0.1);
        s.beta_max = get_or(j, "beta_max", 20.0);
        return s;
    }
    json to_json() const {
        json j{{"kind", to_string(kind)}, {"t_min", t_min}, {"t_max", t_max}};
        if (kind == ScheduleKind::VariancePreserving) {
            j["beta_min"] = beta_min;
            j["beta_max"] = beta_max;
        }
        return j;
    }
};

struct OracleSection {
    int dim = 2;
    std::vector<MixtureComponent> components;  // empty -> ring preset

    // eight equally weighted Gaussians on a circle: the standard toy task
    static std::vector<MixtureComponent> ring(int n, double radius, double stdev) {
        std::vector<MixtureComponent> out;
        for (int k = 0; k < n; ++k) {
            const double a = 2.0 * std::numbers::pi * k / n;
            out.push_back({{radius * std::cos(a), radius * std::sin(a)}, stdev, k, 1.0 / n});
        }
        return out;
    }

    MixtureOracle build() const {
        return MixtureOracle(components.empty() ? ring(8, 2.0, 0.2) : components, dim);
    }
    static OracleSection parse(const json& j) {
        reject_unknown_keys(j, "oracle", {"dim", "components"});
        OracleSection s;
        s.dim = get_or(j, "dim", 2);
        if (j.contains("components")) {
            const json& arr = j.at("components");
            if (!arr.is_array()) throw ConfigError("config: oracle.components must be an array");
            int idx = 0;
            for (const json& c : arr) {
                reject_unknown_keys(c, "oracle.components[" + std::to_string(idx) + "]",
                                    {"mean", "stdev", "weight", "label"});
                MixtureComponent mc;
                mc.mean = get_or<std::vector<double>>(c, "mean", {});
                mc.stdev = get_or(c, "stdev", 0.2);
                mc.weight = get_or(c, "weight", 1.0);
                mc.label = get_or(c, "label", idx);
                s.components.push_back(std::move(mc));
                ++idx;
            }
        }
        return s;
    }
    json to_json() const {
        json comps = json::array();
        for (const auto& c : components.empty() ? ring(8, 2.0, 0.2) : components)
            comps.push_back({{"mean", c.mean}, {"stdev", c.stdev}, {"weight", c.weight},
                             {"label", c.label}});
        return json{{"dim", dim}, {"components", comps}};
    }
};

struct NetSection {
    std::vector<int> hidden{64, 64, 64};
    Activation act = Activation::SiLU;
    int time_freqs = 16;
    int class_embed_dim = 0;   // >0 enables class conditioning
    double sigma_data = -1.0;  // <=0: use the oracle's data scale

    NetSpec build(const MixtureOracle& oracle, const NoiseSchedule& sched,
                  bool conditional) const {
        NetSpec spec;
        spec.dim = oracle.dim();
        spec.hidden = hidden;
        spec.act = act;
        spec.time_freqs = time_freqs;
        spec.n_classes = conditional ? static_cast<int>(oracle.components().size()) : 0;
        spec.class_embed_dim = conditional ? (class_embed_dim > 0 ? class_embed_dim : 8) : 0;
        spec.sigma_data = sigma_data > 0.0 ? sigma_data : oracle.sigma_data();
        spec.t_min = sched.t_min();
        spec.validate();
        return spec;
    }
    static NetSection parse(const json& j) {
        reject_unknown_keys(j, "net",
                            {"hidden", "act", "time_freqs", "class_embed_dim", "sigma_data"});
        NetSection s;
        s.hidden = get_or(j, "hidden", s.hidden);
        s.act = parse_activation(get_or<std::string>(j, "act", "silu"));
        s.time_freqs = get_or(j, "time_freqs", 16);
        s.class_embed_dim = get_or(j, "class_embed_dim", 0);
        s.sigma_data = get_or(j, "sigma_data", -1.0);
        return s;
    }
    json to_json() const {
        return json{{"hidden", hidden}, {"act", to_string(act)}, {"time_freqs", time_freqs},
                    {"class_embed_dim", class_embed_dim}, {"sigma_data", sigma_data}};
    }
};

struct PlanSection {
    TrainPlan plan;

    static PlanSection parse(const json& j) {
        reject_unknown_keys(j, "plan",
                            {"p_mean", "p_std", "q", "d", "delta", "edges", "target_mode",
                             "theta_minus", "r_map", "partition_k", "xr_mode", "ref_source",
                             "pool_size", "loss", "huber_c_scale", "conditional"});
        PlanSection s;
        TrainPlan& p = s.plan;
        p.p_mean = get_or(j, "p_mean", p.p_mean);
        p.p_std = get_or(j, "p_std", p.p_std);
        p.q = get_or(j, "q", p.q);
        p.d = get_or(j, "d", p.d);
        p.delta = get_or(j, "delta", p.delta);
        p.edges = get_or(j, "edges", p.edges);
        p.target_mode = parse_target_mode(get_or<std::string>(j, "target_mode", "variance_reduced"));
        p.theta_minus = parse_theta_minus(get_or<std::string>(j, "theta_minus", "stop_gradient"));
        p.r_map = parse_r_map(get_or<std::string>(j, "r_map", "progressive"));
        p.partition_k = get_or(j, "partition_k", p.partition_k);
        p.xr_mode = parse_xr_mode(get_or<std::string>(j, "xr_mode", "ddim"));
        p.ref_source = parse_ref_source(get_or<std::string>(j, "ref_source", "in_batch"));
        p.pool_size = get_or(j, "pool_size", p.pool_size);
        p.loss = parse_loss_kind(get_or<std::string>(j, "loss", "pseudo_huber"));
        p.huber_c_scale = get_or(j, "huber_c_scale", p.huber_c_scale);
        p.conditional = get_or(j, "conditional", false);
        return s;
    }
    json to_json() const {
        const TrainPlan& p = plan;
        return json{{"p_mean", p.p_mean},
                    {"p_std", p.p_std},
                    {"q", p.q},
                    {"d", p.d},
                    {"delta", p.delta},
                    {"edges", p.edges},
                    {"target_mode", target_mode_name(p.target_mode)},
                    {"theta_minus", to_string(p.theta_minus)},
                    {"r_map", to_string(p.r_map)},
                    {"partition_k", p.partition_k},
                    {"xr_mode", to_string(p.xr_mode)},
                    {"ref_source", to_string(p.ref_source)},
                    {"pool_size", p.pool_size},
                    {"loss", to_string(p.loss)},
                    {"huber_c_scale", p.huber_c_scale},
                    {"conditional", p.conditional}};
    }
};

struct TrainSection {
    TrainConfig cfg;

    static TrainSection parse(const json& j) {
        reject_unknown_keys(j, "train",
                            {"iters", "batch_size", "lr", "warmup", "ema_beta", "eval_every",
                             "eval_samples", "eval_projections", "eval_bellman_t",
                             "eval_bellman_r", "eval_bellman_points", "eval_bellman_substeps",
                             "dataset_size"});
        TrainSection s;
        TrainConfig& c = s.cfg;
        c.iters = get_or<std::int64_t>(j, "iters", c.iters);
        c.batch_size = get_or(j, "batch_size", c.batch_size);
        c.lr = get_or(j, "lr", c.lr);
        c.warmup = get_or(j, "warmup", c.warmup);
        c.ema_beta = get_or(j, "ema_beta", c.ema_beta);
        c.eval_every = get_or(j, "eval_every", c.eval_every);
        c.eval_samples = get_or(j, "eval_samples", c.eval_samples);
        c.eval_projections = get_or(j, "eval_projections", c.eval_projections);
        c.eval_bellman_t = get_or(j, "eval_bellman_t", c.eval_bellman_t);
        c.eval_bellman_r = get_or(j, "eval_bellman_r", c.eval_bellman_r);
        c.eval_bellman_points = get_or(j, "eval_bellman_points", c.eval_bellman_points);
        c.eval_bellman_substeps = get_or(j, "eval_bellman_substeps", c.eval_bellman_substeps);
        c.dataset_size = get_or(j, "dataset_size", c.dataset_size);
        return s;
    }
    json to_json() const {
        const TrainConfig& c = cfg;
        return json{{"iters", c.iters},
                    {"batch_size", c.batch_size},
                    {"lr", c.lr},
                    {"warmup", c.warmup},
                    {"ema_beta", c.ema_beta},
                    {"eval_every", c.eval_every},
                    {"eval_samples", c.eval_samples},
                    {"eval_projections", c.eval_projections},
                    {"eval_bellman_t", c.eval_bellman_t},
                    {"eval_bellman_r", c.eval_bellman_r},
                    {"eval_bellman_points", c.eval_bellman_points},
                    {"eval_bellman_substeps", c.eval_bellman_substeps},
                    {"dataset_size", c.dataset_size}};
    }
};

struct SampleSection {
    SamplerKind kind = SamplerKind::OneStep;
    std::vector<double> times;  // multistep intermediates
    std::vector<double> edges;  // phased edges; empty -> n_edges uniform-lambda
    int n_edges = 4;
    double eta = 1.0;
    double omega = 1.0;
    int n_samples = 2048;
    int label = -1;
    bool use_ema = true;
    std::string checkpoint;
    std::string weak_checkpoint;  // guidance source; empty = no guidance

    static SampleSection parse(const json& j) {
        reject_unknown_keys(j, "sample",
                            {"kind", "times", "edges", "n_edges", "eta", "omega", "n_samples",
                             "label", "use_ema", "checkpoint", "weak_checkpoint"});
        SampleSection s;
        s.kind = parse_sampler_kind(get_or<std::string>(j, "kind", "one_step"));
        s.times = get_or(j, "times", s.times);
        s.edges = get_or(j, "edges", s.edges);
        s.n_edges = get_or(j, "n_edges", s.n_edges);
        s.eta = get_or(j, "eta", s.eta);
        s.omega = get_or(j, "omega", s.omega);
        s.n_samples = get_or(j, "n_samples", s.n_samples);
        s.label = get_or(j, "label", s.label);
        s.use_ema = get_or(j, "use_ema", s.use_ema);
        s.checkpoint = get_or<std::string>(j, "checkpoint", "");
        s.weak_checkpoint = get_or<std::string>(j, "weak_checkpoint", "");
        return s;
    }
    json to_json() const {
        return json{{"kind", to_string(kind)}, {"times", times}, {"edges", edges},
                    {"n_edges", n_edges}, {"eta", eta}, {"omega", omega},
                    {"n_samples", n_samples}, {"label", label}, {"use_ema", use_ema},
                    {"checkpoint", checkpoint}, {"weak_checkpoint", weak_checkpoint}};
    }
};

struct EvalSection {
    int n_samples = 2048;
    int projections = 128;
    bool mmd = false;
    int steps = 1;
    bool use_ema = true;
    std::string checkpoint;

    static EvalSection parse(const json& j) {
        reject_unknown_keys(j, "eval",
                            {"n_samples", "projections", "mmd", "steps", "use_ema", "checkpoint"});
        EvalSection s;
        s.n_samples = get_or(j, "n_samples", s.n_samples);
        s.projections = get_or(j, "projections", s.projections);
        s.mmd = get_or(j, "mmd", s.mmd);
        s.steps = get_or(j, "steps", s.steps);
        s.use_ema = get_or(j, "use_ema", s.use_ema);
        s.checkpoint = get_or<std::string>(j, "checkpoint", "");
        return s;
    }
    json to_json() const {
        return json{{"n_samples", n_samples}, {"projections", projections}, {"mmd", mmd},
                    {"steps", steps}, {"use_ema", use_ema}, {"checkpoint", checkpoint}};
    }
};

struct ReportSection {
    std::vector<std::string> modes{"one_shot", "variance_reduced"};
    std::vector<int> ns{1, 4, 16, 64};
    std::vector<double> ts{0.25, 1.0, 4.0, 16.0, 64.0};
    int trials = 2000;

    static ReportSection parse(const json& j) {
        reject_unknown_keys(j, "report", {"modes", "ns", "ts", "trials"});
        ReportSection s;
        s.modes = get_or(j, "modes", s.modes);
        s.ns = get_or(j, "ns", s.ns);
        s.ts = get_or(j, "ts", s.ts);
        s.trials = get_or(j, "trials", s.trials);
        for (const std::string& m : s.modes) parse_target_mode(m);  // vocabulary check
        return s;
    }
    json to_json() const {
        return json{{"modes", modes}, {"ns", ns}, {"ts", ts}, {"trials", trials}};
    }
};

struct BellmanSection {
    double t = 1.0;
    double r = 0.25;
    int points = 16;
    int substeps = 256;
    std::vector<int> rollout_ns{8, 16, 32, 64};
    bool use_ema = true;
    std::string checkpoint;  // empty: check the oracle model against itself

    static BellmanSection parse(const json& j) {
        reject_unknown_keys(j, "bellman",
                            {"t", "r", "points", "substeps", "rollout_ns", "use_ema", "checkpoint"});
        BellmanSection s;
        s.t = get_or(j, "t", s.t);
        s.r = get_or(j, "r", s.r);
        s.points = get_or(j, "points", s.points);
        s.substeps = get_or(j, "substeps", s.substeps);
        s.rollout_ns = get_or(j, "rollout_ns", s.rollout_ns);
        s.use_ema = get_or(j, "use_ema", s.use_ema);
        s.checkpoint = get_or<std::string>(j, "checkpoint", "");
        return s;
    }
    json to_json() const {
        return json{{"t", t}, {"r", r}, {"points", points}, {"substeps", substeps},
                    {"rollout_ns", rollout_ns}, {"use_ema", use_ema}, {"checkpoint", checkpoint}};
    }
};

struct SweepSection {
    std::vector<double> etas{0.8, 0.9, 1.0};
    std::vector<double> omegas{1.0, 1.5, 2.0, 3.0};
    std::vector<double> edges;  // empty -> n_edges uniform-lambda
    int n_edges = 4;
    int n_samples = 2048;
    int projections = 128;
    int label = -1;
    bool use_ema = true;
    std::string checkpoint;
    std::string weak_checkpoint;  // cfg sweep; empty = train-run halfway shadow

    static SweepSection parse(const json& j) {
        reject_unknown_keys(j, "sweep",
                            {"etas", "omegas", "edges", "n_edges", "n_samples", "projections",
                             "label", "use_ema", "checkpoint", "weak_checkpoint"});
        SweepSection s;
        s.etas = get_or(j, "etas", s.etas);
        s.omegas = get_or(j, "omegas", s.omegas);
        s.edges = get_or(j, "edges", s.edges);
        s.n_edges = get_or(j, "n_edges", s.n_edges);
        s.n_samples = get_or(j, "n_samples", s.n_samples);
        s.projections = get_or(j, "projections", s.projections);
        s.label = get_or(j, "label", s.label);
        s.use_ema = get_or(j, "use_ema", s.use_ema);
        s.checkpoint = get_or<std::string>(j, "checkpoint", "");
        s.weak_checkpoint = get_or<std::string>(j, "weak_checkpoint", "");
        return s;
    }
    json to_json() const {
        return json{{"etas", etas}, {"omegas", omegas}, {"edges", edges},
                    {"n_edges", n_edges}, {"n_samples", n_samples}, {"projections", projections},
                    {"label", label}, {"use_ema", use_ema}, {"checkpoint", checkpoint},
                    {"weak_checkpoint", weak_checkpoint}};
    }
};

struct DumpSection {
    std::vector<double> ts{0.01, 0.1, 1.0, 10.0, 80.0};
    std::vector<std::int64_t> iters{0, 200, 1000, 5000, 20000};

    static DumpSection parse(const json& j) {
        reject_unknown_keys(j, "dump", {"ts", "iters"});
        DumpSection s;
        s.ts = get_or(j, "ts", s.ts);
        s.iters = get_or(j, "iters", s.iters);
        return s;
    }
    json to_json() const { return json{{"ts", ts}, {"iters", iters}}; }
};

struct ExperimentConfig {
    ScheduleSection schedule;
    OracleSection oracle;
    NetSection net;
    PlanSection plan;
    TrainSection train;
    SampleSection sample;
    EvalSection eval;
    ReportSection report;
    BellmanSection bellman;
    SweepSection sweep;
    DumpSection dump;
    std::uint64_t seed = 0;
    std::string out;  // output root; flag/env may override

    static ExperimentConfig parse(const json& j) {
        reject_unknown_keys(j, "",
                            {"schedule", "oracle", "net", "plan", "train", "sample", "eval",
                             "report", "bellman", "sweep", "dump", "seed", "out"});
        ExperimentConfig c;
        const json empty = json::object();
        c.schedule = ScheduleSection::parse(j.contains("schedule") ? j.at("schedule") : empty);
        c.oracle = OracleSection::parse(j.contains("oracle") ? j.at("oracle") : empty);
        c.net = NetSection::parse(j.contains("net") ? j.at("net") : empty);
        c.plan = PlanSection::parse(j.contains("plan") ? j.at("plan") : empty);
        c.train = TrainSection::parse(j.contains("train") ? j.at("train") : empty);
        c.sample = SampleSection::parse(j.contains("sample") ? j.at("sample") : empty);
        c.eval = EvalSection::parse(j.contains("eval") ? j.at("eval") : empty);
        c.report = ReportSection::parse(j.contains("report") ? j.at("report") : empty);
        c.bellman = BellmanSection::parse(j.contains("bellman") ? j.at("bellman") : empty);
        c.sweep = SweepSection::parse(j.contains("sweep") ? j.at("sweep") : empty);
        c.dump = DumpSection::parse(j.contains("dump") ? j.at("dump") : empty);
        c.seed = get_or<std::uint64_t>(j, "seed", 0);
        c.out = get_or<std::string>(j, "out", "");
        return c;
    }

    json to_json() const {
        return json{{"schedule", schedule.to_json()}, {"oracle", oracle.to_json()},
                    {"net", net.to_json()},           {"plan", plan.to_json()},
                    {"train", train.to_json()},       {"sample", sample.to_json()},
                    {"eval", eval.to_json()},         {"report", report.to_json()},
                    {"bellman", bellman.to_json()},   {"sweep", sweep.to_json()},
                    {"dump", dump.to_json()},         {"seed", seed},
                    {"out", out}};
    }

    // Build every object the config describes so all numeric ranges are
    // checked before any artifact is written. Range violations surface as
    // config errors regardless of which builder raised them.
    void validate() const {
        try {
            validate_impl();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

  private:
    void validate_impl() const {
        const NoiseSchedule sched = schedule.build();
        const MixtureOracle orc = oracle.build();
        net.build(orc, sched, plan.plan.conditional);
        plan.plan.validate(sched);
        train.cfg.validate();
        if (sample.n_samples < 1) throw ConfigError("config: sample.n_samples must be >= 1");
        if (sample.n_edges < 2) throw ConfigError("config: sample.n_edges must be >= 2");
        if (!(sample.eta > 0.0 && sample.eta <= 1.0))
            throw ConfigError("config: sample.eta must be in (0, 1]");
        if (eval.n_samples < 2) throw ConfigError("config: eval.n_samples must be >= 2");
        if (eval.projections < 1) throw ConfigError("config: eval.projections must be >= 1");
        if (eval.steps < 1) throw ConfigError("config: eval.steps must be >= 1");
        if (report.trials < 2) throw ConfigError("config: report.trials must be >= 2");
        for (int n : report.ns)
            if (n < 1) throw ConfigError("config: report.ns entries must be >= 1");
        for (double t : report.ts) sched.require_in_range(t, "config.report.ts");
        if (!(bellman.r < bellman.t)) throw ConfigError("config: bellman requires r < t");
        sched.require_in_range(bellman.t, "config.bellman.t");
        sched.require_in_range(bellman.r, "config.bellman.r");
        if (bellman.points < 1) throw ConfigError("config: bellman.points must be >= 1");
        if (bellman.substeps < 1) throw ConfigError("config: bellman.substeps must be >= 1");
        for (int n : bellman.rollout_ns)
            if (n < 1) throw ConfigError("config: bellman.rollout_ns entries must be >= 1");
        for (double e : sweep.etas)
            if (!(e > 0.0 && e <= 1.0)) throw ConfigError("config: sweep.etas must be in (0, 1]");
        if (sweep.n_edges < 2) throw ConfigError("config: sweep.n_edges must be >= 2");
        if (sweep.n_samples < 2) throw ConfigError("config: sweep.n_samples must be >= 2");
        if (sweep.projections < 1) throw ConfigError("config: sweep.projections must be >= 1");
        for (double t : dump.ts) sched.require_in_range(t, "config.dump.ts");
        for (std::int64_t it : dump.iters)
            if (it < 0) throw ConfigError("config: dump.iters entries must be >= 0");
    }
};

// ----- file loading and overrides -----

inline json load_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: " + path + " must contain a JSON object");
    return j;
}

// "a.b.c=VALUE" — VALUE parsed as JSON when possible, else taken as a string.
inline void apply_override(json& j, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: override must look like key.path=value, got \"" + kv + "\"");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // unquoted strings like target_mode=one_shot
    }
    json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("config: empty segment in override path \"" + path + "\"");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key)) (*cur)[key] = json::object();
        cur = &(*cur)[key];
        if (!cur->is_object())
            throw ConfigError("config: override path \"" + path + "\" descends into a non-object");
        start = dot + 1;
    }
}

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Hash of the effective config: canonical dump (sorted keys) -> FNV-1a hex.
inline std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = cfg.to_json().dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canon.data(), canon.size())));
    return buf;
}

}  // namespace cmlab
