#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cmlab/checkpoint.hpp"
#include "cmlab/config.hpp"
#include "cmlab/errors.hpp"
#include "cmlab/mdp.hpp"
#include "cmlab/metrics.hpp"
#include "cmlab/reports.hpp"
#include "cmlab/trainer.hpp"
#include "cmlab/version.hpp"

namespace cmlab {

// --out flag > config "out" > CMLAB_OUT env > ./runs
inline std::string resolve_out_dir(const std::string& flag_out, const ExperimentConfig& cfg) {
    if (!flag_out.empty()) return flag_out;
    if (!cfg.out.empty()) return cfg.out;
    if (const char* env = std::getenv("CMLAB_OUT"); env && *env) return env;
    return "runs";
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("run: cannot open " + path + " for writing");
    f << content;
    if (!f) throw ConfigError("run: short write to " + path);
}

// Deterministic run manifest: effective config, its hash, seed, code version,
// artifact names, checkpoint content ids. No timestamps, ever.
inline void write_manifest(const std::string& dir, const ExperimentConfig& cfg,
                           std::uint64_t seed, const std::vector<std::string>& artifacts,
                           const std::map<std::string, std::string>& checkpoint_ids) {
    json m;
    m["version"] = CMLAB_VERSION;
    m["config_hash"] = config_hash(cfg);
    m["seed"] = seed;
    m["config"] = cfg.to_json();
    m["artifacts"] = artifacts;
    m["checkpoints"] = checkpoint_ids;
    write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

inline ConsistencyNet model_from_checkpoint(const std::string& path, bool use_ema) {
    if (path.empty()) throw ConfigError("run: this subcommand requires a checkpoint path");
    Checkpoint ck = load_checkpoint(path);
    if (use_ema && !ck.shadows.empty()) ck.net.params() = ck.shadows.front().params;
    return std::move(ck.net);
}

inline std::vector<double> resolve_edges(const NoiseSchedule& sched,
                                         const std::vector<double>& explicit_edges, int n_edges) {
    return explicit_edges.empty() ? make_edges(sched, n_edges, /*uniform_lambda=*/true)
                                  : explicit_edges;
}

// ----- subcommands (config is already validated; dir already exists) -----

inline void run_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    const NetSpec spec = cfg.net.build(oracle, sched, cfg.plan.plan.conditional);

    CsvTable log;
    log.header = {"iter", "t", "r", "loss", "weight", "grad_norm"};
    CsvTable snaps;
    snaps.header = {"iter", "sw_1step", "sw_2step", "bellman_residual"};
    TrainSink sink;
    sink.on_step = [&log](const TrainStepReport& s) {
        log.add_row({std::to_string(s.iter), format_double(s.t), format_double(s.r),
                     format_double(s.loss), format_double(s.weight),
                     format_double(s.grad_norm)});
    };
    sink.on_snapshot = [&snaps](const EvalSnapshot& s) {
        snaps.add_row({std::to_string(s.iter), format_double(s.sw_1step),
                       format_double(s.sw_2step), format_double(s.bellman_residual)});
    };

    TrainResult result = train(spec, oracle, sched, cfg.plan.plan, cfg.train.cfg, seed, sink);

    log.write(dir + "/train_log.csv");
    snaps.write(dir + "/snapshots.csv");
    save_checkpoint(result.net, {result.shadow}, dir + "/model.ckpt");
    ConsistencyNet weak(result.net.spec());
    weak.params() = result.half_params;
    save_checkpoint(weak, {result.half_shadow}, dir + "/weak.ckpt");

    std::map<std::string, std::string> ids;
    ids["model.ckpt"] = checkpoint_id(result.net, {result.shadow});
    ids["weak.ckpt"] = checkpoint_id(weak, {result.half_shadow});
    write_manifest(dir, cfg, seed,
                   {"model.ckpt", "snapshots.csv", "train_log.csv", "weak.ckpt"}, ids);
}

inline void run_sample(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    const SampleSection& sc = cfg.sample;

    ConsistencyNet net = model_from_checkpoint(sc.checkpoint, sc.use_ema);
    const bool guided = !sc.weak_checkpoint.empty();
    ConsistencyNet weak = guided ? model_from_checkpoint(sc.weak_checkpoint, sc.use_ema)
                                 : ConsistencyNet(net.spec());
    GuidedModel<ConsistencyNet, ConsistencyNet> guided_model{net, weak, sc.omega};

    const bool conditional = net.spec().n_classes > 0;
    Rng rng(mix_seed(seed, 0x5a3dULL));
    const std::vector<double> edges = resolve_edges(sched, sc.edges, sc.n_edges);

    CsvTable table;
    for (int d = 0; d < net.spec().dim; ++d) table.header.push_back("x" + std::to_string(d));
    table.header.push_back("label");

    auto generate = [&](const auto& model) {
        for (int i = 0; i < sc.n_samples; ++i) {
            int label = -1;
            if (conditional)
                label = sc.label >= 0 ? sc.label
                                      : oracle.sample(1, rng).labels[0];  // draw by mixture weight
            Vec x_T = top_noise(sched, static_cast<std::size_t>(net.spec().dim), rng);
            Vec x;
            switch (sc.kind) {
                case SamplerKind::OneStep:
                    x = one_step(model, sched, x_T, label);
                    break;
                case SamplerKind::StochasticMultistep:
                    x = stochastic_multistep(model, sched, x_T, sc.times, rng, label);
                    break;
                case SamplerKind::PhasedDeterministic:
                    x = phased_sample(model, sched, x_T, edges, sc.eta, label);
                    break;
            }
            std::vector<std::string> row;
            for (double v : x) row.push_back(format_double(v));
            row.push_back(std::to_string(label));
            table.add_row(std::move(row));
        }
    };
    if (guided)
        generate(guided_model);
    else
        generate(net);

    table.write(dir + "/samples.csv");
    std::map<std::string, std::string> ids;
    ids["model.ckpt"] = checkpoint_id(net, {});
    if (guided) ids["weak.ckpt"] = checkpoint_id(weak, {});
    write_manifest(dir, cfg, seed, {"samples.csv"}, ids);
}

inline void run_eval(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    const EvalSection& ev = cfg.eval;
    ConsistencyNet net = model_from_checkpoint(ev.checkpoint, ev.use_ema);
    const bool conditional = net.spec().n_classes > 0;

    const double sw = sampler_sw(net, sched, oracle, ev.steps, ev.n_samples, ev.projections,
                                 mix_seed(seed, 0xe7a1ULL), conditional);
    CsvTable table;
    table.header = {"metric", "value"};
    table.add_row({"sw_" + std::to_string(ev.steps) + "step", format_double(sw)});

    if (ev.mmd) {
        Rng rng(mix_seed(seed, 0x33dULL));
        DataBatch ref = oracle.sample(static_cast<std::size_t>(ev.n_samples), rng);
        std::vector<Vec> gen;
        gen.reserve(ev.n_samples);
        for (int i = 0; i < ev.n_samples; ++i) {
            const int label = conditional ? ref.labels[i] : -1;
            gen.push_back(one_step(net, sched, top_noise(sched, ref.x[0].size(), rng), label));
        }
        table.add_row({"mmd_rbf", format_double(mmd_rbf(gen, ref.x))});
    }
    table.write(dir + "/metrics.csv");
    write_manifest(dir, cfg, seed, {"metrics.csv"}, {{"model.ckpt", checkpoint_id(net, {})}});
}

inline void run_variance_report(const ExperimentConfig& cfg, std::uint64_t seed,
                                const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    std::vector<TargetMode> modes;
    for (const std::string& m : cfg.report.modes) modes.push_back(parse_target_mode(m));
    const auto rows = estimator_report(oracle, sched, modes, cfg.report.ns, cfg.report.ts,
                                       cfg.report.trials, seed);
    variance_report_table(rows).write(dir + "/variance_report.csv");
    write_manifest(dir, cfg, seed, {"variance_report.csv"}, {});
}

inline void run_bellman_check(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    const BellmanSection& bc = cfg.bellman;

    CsvTable table;
    table.header = {"quantity", "n", "value"};

    double residual;
    if (bc.checkpoint.empty()) {
        OracleModel om{&oracle, &sched, bc.substeps};
        residual = bellman_residual(om, sched, oracle, bc.t, bc.r, bc.points,
                                    mix_seed(seed, 1), bc.substeps);
    } else {
        ConsistencyNet net = model_from_checkpoint(bc.checkpoint, bc.use_ema);
        residual = bellman_residual(net, sched, oracle, bc.t, bc.r, bc.points,
                                    mix_seed(seed, 1), bc.substeps);
    }
    table.add_row({"residual", "0", format_double(residual)});

    // mean gap between the n-step rollout reward and the quadrature reward
    const EpsSource src = teacher_eps_source(oracle, sched);
    Rng rng(mix_seed(seed, 2));
    for (int n : bc.rollout_ns) {
        double gap = 0.0;
        Rng draw_rng(mix_seed(seed, 3));  // same draws for every n
        for (int i = 0; i < bc.points; ++i) {
            const DataBatch d = oracle.sample(1, draw_rng);
            Vec eps = draw_rng.normal_vec(d.x[0].size());
            const DiffusedPoint p = forward_marginal(sched, d.x[0], eps, bc.t);
            const ReferenceTrajectory traj =
                solve_reference(oracle, sched, p.x_t, {bc.t, bc.r}, bc.substeps);
            const Rollout roll =
                n_step_rollout(sched, MdpState{p.x_t, bc.t}, rollout_times(sched, bc.t, bc.r, n), src);
            Vec diff = sub(roll.total_reward, traj.total_reward);
            gap += norm(diff);
        }
        table.add_row({"rollout_gap", std::to_string(n), format_double(gap / bc.points)});
    }
    (void)rng;

    table.write(dir + "/bellman.csv");
    write_manifest(dir, cfg, seed, {"bellman.csv"}, {});
}

inline void run_schedule_dump(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    schedule_dump_table(cfg.plan.plan, sched, cfg.dump.ts, cfg.dump.iters)
        .write(dir + "/schedule.csv");
    write_manifest(dir, cfg, seed, {"schedule.csv"}, {});
}

inline void run_eta_sweep(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    const SweepSection& sw = cfg.sweep;
    ConsistencyNet net = model_from_checkpoint(sw.checkpoint, sw.use_ema);
    const std::vector<double> edges = resolve_edges(sched, sw.edges, sw.n_edges);
    const auto points = eta_sweep(net, sched, oracle, edges, sw.etas, sw.n_samples,
                                  sw.projections, seed);
    knob_table(points, "eta").write(dir + "/eta_sweep.csv");
    write_manifest(dir, cfg, seed, {"eta_sweep.csv"}, {{"model.ckpt", checkpoint_id(net, {})}});
}

inline void run_cfg_sweep(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::string& dir) {
    const NoiseSchedule sched = cfg.schedule.build();
    const MixtureOracle oracle = cfg.oracle.build();
    const SweepSection& sw = cfg.sweep;
    ConsistencyNet net = model_from_checkpoint(sw.checkpoint, sw.use_ema);
    if (sw.weak_checkpoint.empty())
        throw ConfigError("run: cfg-sweep requires sweep.weak_checkpoint");
    ConsistencyNet weak = model_from_checkpoint(sw.weak_checkpoint, sw.use_ema);
    const auto points = cfg_sweep(net, weak, sched, oracle, sw.omegas, sw.n_samples,
                                  sw.projections, seed, sw.label);
    knob_table(points, "omega").write(dir + "/cfg_sweep.csv");
    std::map<std::string, std::string> ids;
    ids["model.ckpt"] = checkpoint_id(net, {});
    ids["weak.ckpt"] = checkpoint_id(weak, {});
    write_manifest(dir, cfg, seed, {"cfg_sweep.csv"}, ids);
}

// Parse + validate first; only then create the output directory and dispatch.
// Returns the artifact directory used.
inline std::string run_subcommand(const std::string& name, const ExperimentConfig& cfg,
                                  std::uint64_t seed, const std::string& flag_out) {
    cfg.validate();
    const std::string dir = resolve_out_dir(flag_out, cfg);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("run: cannot create output directory " + dir + ": " + ec.message());

    if (name == "train") run_train(cfg, seed, dir);
    else if (name == "sample") run_sample(cfg, seed, dir);
    else if (name == "eval") run_eval(cfg, seed, dir);
    else if (name == "variance-report") run_variance_report(cfg, seed, dir);
    else if (name == "bellman-check") run_bellman_check(cfg, seed, dir);
    else if (name == "schedule-dump") run_schedule_dump(cfg, seed, dir);
    else if (name == "eta-sweep") run_eta_sweep(cfg, seed, dir);
    else if (name == "cfg-sweep") run_cfg_sweep(cfg, seed, dir);
    else throw ConfigError("run: unknown subcommand " + name);
    return dir;
}

}  // namespace cmlab
