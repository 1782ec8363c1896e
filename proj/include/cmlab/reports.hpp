#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/oracle.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/sampler.hpp"
#include "cmlab/schedule.hpp"
#include "cmlab/trainer.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

// Shortest-round-trip formatting so CSVs are bit-stable across runs.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != header.size())
            throw std::invalid_argument("csv: row width does not match header");
        rows.push_back(std::move(row));
    }
    std::string to_string() const {
        std::string out;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out += ',';
            out += header[i];
        }
        out += '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out += ',';
                out += row[i];
            }
            out += '\n';
        }
        return out;
    }
    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("csv: cannot open " + path + " for writing");
        f << to_string();
        if (!f) throw ConfigError("csv: short write to " + path);
    }
};

// x,y scatter rows with a series tag; the generic plot-data format.
inline CsvTable plot_table(const std::vector<Vec>& points, const std::string& series) {
    CsvTable t;
    t.header = {"x", "y", "series"};
    for (const Vec& p : points) {
        const double x = p.empty() ? 0.0 : p[0];
        const double y = p.size() > 1 ? p[1] : 0.0;
        t.add_row({format_double(x), format_double(y), series});
    }
    return t;
}

// How the t -> r gap opens over training: rows of (t, iter, r).
inline CsvTable schedule_dump_table(const TrainPlan& plan, const NoiseSchedule& sched,
                                    const std::vector<double>& ts,
                                    const std::vector<std::int64_t>& iters) {
    CsvTable t;
    t.header = {"t", "iter", "r"};
    for (double tv : ts)
        for (std::int64_t it : iters)
            t.add_row({format_double(tv), std::to_string(it),
                       format_double(mapped_r(plan, sched, tv, it))});
    return t;
}

inline CsvTable variance_report_table(const std::vector<VarianceRow>& rows) {
    CsvTable t;
    t.header = {"mode", "n", "t", "mse", "stderr"};
    for (const auto& r : rows)
        t.add_row({target_mode_name(r.mode), std::to_string(r.n), format_double(r.t),
                   format_double(r.mse), format_double(r.stderr_)});
    return t;
}

struct KnobPoint {
    double knob = 0.0;
    double sw = 0.0;
};

// Quality across the eta knob of the phased sampler. Every knob value reuses
// the same top-level noise draws and the same reference batch so rows are
// directly comparable.
template <class Model>
std::vector<KnobPoint> eta_sweep(const Model& model, const NoiseSchedule& sched,
                                 const MixtureOracle& oracle, const std::vector<double>& edges,
                                 const std::vector<double>& etas, int n_samples, int projections,
                                 std::uint64_t seed) {
    Rng data_rng(mix_seed(seed, 0xda7aULL));
    DataBatch ref = oracle.sample(static_cast<std::size_t>(n_samples), data_rng);
    std::vector<Vec> noise(n_samples);
    for (auto& v : noise) v = top_noise(sched, static_cast<std::size_t>(oracle.dim()), data_rng);

    std::vector<KnobPoint> out;
    for (double eta : etas) {
        std::vector<Vec> gen;
        gen.reserve(n_samples);
        for (int i = 0; i < n_samples; ++i)
            gen.push_back(phased_sample(model, sched, noise[i], edges, eta));
        out.push_back({eta, sliced_wasserstein(gen, ref.x, projections, mix_seed(seed, 0x55ULL))});
    }
    return out;
}

// guidance-strength sweep for the self-guided sampler (one-step)
template <class Model, class WeakModel>
std::vector<KnobPoint> cfg_sweep(const Model& model, const WeakModel& weak,
                                 const NoiseSchedule& sched, const MixtureOracle& oracle,
                                 const std::vector<double>& omegas, int n_samples,
                                 int projections, std::uint64_t seed, int label = -1) {
    Rng data_rng(mix_seed(seed, 0xda7aULL));
    DataBatch ref = oracle.sample(static_cast<std::size_t>(n_samples), data_rng,
                                  label >= 0 ? label : -1);
    std::vector<Vec> noise(n_samples);
    for (auto& v : noise) v = top_noise(sched, static_cast<std::size_t>(oracle.dim()), data_rng);

    std::vector<KnobPoint> out;
    for (double omega : omegas) {
        GuidedModel<Model, WeakModel> guided{model, weak, omega};
        std::vector<Vec> gen;
        gen.reserve(n_samples);
        for (int i = 0; i < n_samples; ++i)
            gen.push_back(one_step(guided, sched, noise[i], label));
        out.push_back(
            {omega, sliced_wasserstein(gen, ref.x, projections, mix_seed(seed, 0x55ULL))});
    }
    return out;
}

inline CsvTable knob_table(const std::vector<KnobPoint>& points, const std::string& knob_name) {
    CsvTable t;
    t.header = {knob_name, "sw"};
    for (const auto& p : points) t.add_row({format_double(p.knob), format_double(p.sw)});
    return t;
}

}  // namespace cmlab
