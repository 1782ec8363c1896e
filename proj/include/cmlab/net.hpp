#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/rng.hpp"
#include "cmlab/vec.hpp"

namespace cmlab {

enum class Activation { SiLU, Tanh };

// Architecture of the solution-point predictor. The raw MLP sees
// [x, sinusoidal features of ln t, optional class embedding] and its output is
// blended with the input through the skip/output scales below, which pin the
// prediction to the identity at the boundary time exactly.
struct NetSpec {
    int dim = 2;
    std::vector<int> hidden{128, 128, 128};
    Activation act = Activation::SiLU;
    int time_freqs = 16;
    int n_classes = 0;        // 0 = unconditional
    int class_embed_dim = 0;  // used when n_classes > 0
    double sigma_data = 0.5;
    double t_min = 0.002;

    int embed_width() const { return 2 * time_freqs; }
    int class_width() const { return n_classes > 0 ? class_embed_dim : 0; }
    int input_width() const { return dim + embed_width() + class_width(); }

    // (in, out) of every affine layer, ending with the linear output layer
    std::vector<std::pair<int, int>> layer_dims() const {
        std::vector<std::pair<int, int>> dims;
        int in = input_width();
        for (int h : hidden) {
            dims.emplace_back(in, h);
            in = h;
        }
        dims.emplace_back(in, dim);
        return dims;
    }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (auto [in, out] : layer_dims()) n += static_cast<std::int64_t>(in) * out + out;
        n += static_cast<std::int64_t>(n_classes) * class_width();
        return n;
    }

    void validate() const {
        if (dim < 1) throw ConfigError("net: dim must be >= 1");
        if (time_freqs < 1) throw ConfigError("net: time_freqs must be >= 1");
        for (int h : hidden)
            if (h < 1) throw ConfigError("net: hidden width must be >= 1");
        if (n_classes > 0 && class_embed_dim < 1)
            throw ConfigError("net: conditional arch needs class_embed_dim >= 1");
        if (!(sigma_data > 0.0)) throw ConfigError("net: sigma_data must be > 0");
        if (!(t_min > 0.0)) throw ConfigError("net: t_min must be > 0");
    }

    // geometric ladder of angular frequencies applied to ln t
    double frequency(int k) const {
        const double lo = 0.25, hi = 8.0;
        if (time_freqs == 1) return lo;
        return lo * std::pow(hi / lo, static_cast<double>(k) / (time_freqs - 1));
    }
};

// Scratch buffers for one forward/backward pass; reuse across calls to avoid
// per-sample allocation in the training loop.
struct NetWorkspace {
    std::vector<Vec> a;  // a[0] = assembled input, a[l+1] = activation after layer l
    std::vector<Vec> z;  // pre-activations per affine layer
    std::vector<Vec> g;  // backward buffers, same shapes as z
    Vec ga0;             // gradient w.r.t. the assembled input (conditional nets)
    Vec out;
};

namespace detail {

inline double act_forward(Activation act, double z) {
    if (act == Activation::SiLU) return z / (1.0 + std::exp(-z));
    return std::tanh(z);
}

inline double act_backward(Activation act, double z, double a) {
    if (act == Activation::SiLU) {
        const double s = 1.0 / (1.0 + std::exp(-z));
        return s * (1.0 + z * (1.0 - s));
    }
    return 1.0 - a * a;  // a = tanh(z)
}

}  // namespace detail

class ConsistencyNet {
  public:
    explicit ConsistencyNet(NetSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        params_.assign(static_cast<std::size_t>(spec_.param_count()), 0.0);
    }

    const NetSpec& spec() const { return spec_; }
    Vec& params() { return params_; }
    const Vec& params() const { return params_; }

    // scaled-normal init; identical seeds give identical parameters
    void init_params(std::uint64_t seed) {
        Rng rng(mix_seed(seed, 0x11e7ULL));
        const auto dims = spec_.layer_dims();
        std::size_t off = 0;
        for (std::size_t l = 0; l < dims.size(); ++l) {
            const auto [in, out] = dims[l];
            const bool last = l + 1 == dims.size();
            const double scale = (last ? 0.1 : 1.0) / std::sqrt(static_cast<double>(in));
            for (int i = 0; i < in * out; ++i) params_[off++] = scale * rng.normal();
            for (int i = 0; i < out; ++i) params_[off++] = 0.0;
        }
        for (int i = 0; i < spec_.n_classes * spec_.class_width(); ++i)
            params_[off++] = 0.1 * rng.normal();
    }

    double c_skip(double t) const {
        const double sd2 = spec_.sigma_data * spec_.sigma_data;
        const double dt = t - spec_.t_min;
        return sd2 / (dt * dt + sd2);
    }

    double c_out(double t) const {
        const double sd2 = spec_.sigma_data * spec_.sigma_data;
        return spec_.sigma_data * (t - spec_.t_min) / std::sqrt(sd2 + t * t);
    }

    const Vec& predict_x0_ws(const Vec& x, double t, int label, NetWorkspace& ws) const {
        return forward(spec_, params_, x, t, label, ws);
    }

    Vec predict_x0(const Vec& x, double t, int label = -1) const {
        NetWorkspace ws;
        return forward(spec_, params_, x, t, label, ws);
    }

    // Accumulates d(upstream . prediction)/d(params) into grad (+=). Runs its
    // own forward pass through the given workspace.
    void backprop_ws(const Vec& x, double t, int label, const Vec& upstream, NetWorkspace& ws,
                     Vec& grad) const {
        forward(spec_, params_, x, t, label, ws);
        backward(spec_, params_, t, label, upstream, ws, grad);
    }

    Vec backprop(const Vec& x, double t, int label, const Vec& upstream) const {
        NetWorkspace ws;
        Vec grad(params_.size(), 0.0);
        backprop_ws(x, t, label, upstream, ws, grad);
        return grad;
    }

    // Forward pass with an explicit parameter vector of the same architecture;
    // lets EMA shadows and frozen target copies share the arithmetic.
    static const Vec& forward(const NetSpec& spec, const Vec& params, const Vec& x, double t,
                              int label, NetWorkspace& ws) {
        if (static_cast<int>(x.size()) != spec.dim)
            throw std::invalid_argument("net.predict_x0: input dimension mismatch");
        if (!(t >= spec.t_min) || !std::isfinite(t))
            throw std::out_of_range("net.predict_x0: t=" + std::to_string(t) +
                                    " below boundary t_min=" + std::to_string(spec.t_min));
        if (params.size() != static_cast<std::size_t>(spec.param_count()))
            throw std::invalid_argument("net.predict_x0: parameter vector size mismatch");

        const auto dims = spec.layer_dims();
        ws.a.resize(dims.size() + 1);
        ws.z.resize(dims.size());
        ws.a[0].resize(spec.input_width());

        // assembled input: data coords, sin/cos of scaled ln t, class row
        Vec& a0 = ws.a[0];
        for (int j = 0; j < spec.dim; ++j) a0[j] = x[j];
        const double u = std::log(t);
        for (int k = 0; k < spec.time_freqs; ++k) {
            const double w = spec.frequency(k) * u;
            a0[spec.dim + 2 * k] = std::sin(w);
            a0[spec.dim + 2 * k + 1] = std::cos(w);
        }
        if (spec.n_classes > 0) {
            if (label < 0 || label >= spec.n_classes)
                throw std::invalid_argument("net.predict_x0: label " + std::to_string(label) +
                                            " outside [0, " + std::to_string(spec.n_classes) +
                                            ") for conditional net");
            const std::size_t row = class_table_offset(spec) +
                                    static_cast<std::size_t>(label) * spec.class_width();
            for (int j = 0; j < spec.class_width(); ++j)
                a0[spec.dim + spec.embed_width() + j] = params[row + j];
        }

        std::size_t off = 0;
        for (std::size_t l = 0; l < dims.size(); ++l) {
            const auto [in, out] = dims[l];
            const Vec& ain = ws.a[l];
            Vec& z = ws.z[l];
            z.resize(out);
            const double* W = params.data() + off;
            const double* b = params.data() + off + static_cast<std::size_t>(in) * out;
            for (int r = 0; r < out; ++r) {
                const double* Wr = W + static_cast<std::size_t>(r) * in;
                double s = b[r];
                for (int c = 0; c < in; ++c) s += Wr[c] * ain[c];
                z[r] = s;
            }
            off += static_cast<std::size_t>(in) * out + out;
            Vec& aout = ws.a[l + 1];
            aout.resize(out);
            if (l + 1 == dims.size()) {
                for (int r = 0; r < out; ++r) aout[r] = z[r];  // linear output
            } else {
                for (int r = 0; r < out; ++r) aout[r] = detail::act_forward(spec.act, z[r]);
            }
        }

        const double sd2 = spec.sigma_data * spec.sigma_data;
        const double dt = t - spec.t_min;
        const double cs = sd2 / (dt * dt + sd2);
        const double co = spec.sigma_data * dt / std::sqrt(sd2 + t * t);
        const Vec& raw = ws.a[dims.size()];
        ws.out.resize(spec.dim);
        for (int j = 0; j < spec.dim; ++j) ws.out[j] = cs * x[j] + co * raw[j];
        return ws.out;
    }

    // Reverse pass over the workspace filled by forward(); accumulates into grad.
    static void backward(const NetSpec& spec, const Vec& params, double t, int label,
                         const Vec& upstream, NetWorkspace& ws, Vec& grad) {
        if (upstream.size() != static_cast<std::size_t>(spec.dim))
            throw std::invalid_argument("net.backprop: upstream dimension mismatch");
        if (grad.size() != params.size())
            throw std::invalid_argument("net.backprop: gradient buffer size mismatch");
        const auto dims = spec.layer_dims();
        ws.g.resize(dims.size());

        const double sd2 = spec.sigma_data * spec.sigma_data;
        const double dt = t - spec.t_min;
        const double co = spec.sigma_data * dt / std::sqrt(sd2 + t * t);
        Vec& gtop = ws.g[dims.size() - 1];
        gtop.resize(spec.dim);
        for (int j = 0; j < spec.dim; ++j) gtop[j] = co * upstream[j];

        // parameter offsets per layer
        std::vector<std::size_t> offs(dims.size());
        std::size_t off = 0;
        for (std::size_t l = 0; l < dims.size(); ++l) {
            offs[l] = off;
            off += static_cast<std::size_t>(dims[l].first) * dims[l].second + dims[l].second;
        }

        const bool need_input_grad = spec.n_classes > 0;
        for (std::size_t li = dims.size(); li-- > 0;) {
            const auto [in, out] = dims[li];
            const Vec& ain = ws.a[li];
            Vec& gz = ws.g[li];
            const double* W = params.data() + offs[li];
            double* gW = grad.data() + offs[li];
            double* gb = gW + static_cast<std::size_t>(in) * out;
            for (int r = 0; r < out; ++r) {
                const double gr = gz[r];
                gb[r] += gr;
                double* gWr = gW + static_cast<std::size_t>(r) * in;
                for (int c = 0; c < in; ++c) gWr[c] += gr * ain[c];
            }
            if (li > 0 || need_input_grad) {
                Vec& ga = li > 0 ? ws.g[li - 1] : ws.ga0;
                ga.assign(in, 0.0);
                for (int r = 0; r < out; ++r) {
                    const double gr = gz[r];
                    const double* Wr = W + static_cast<std::size_t>(r) * in;
                    for (int c = 0; c < in; ++c) ga[c] += gr * Wr[c];
                }
                if (li > 0) {
                    const Vec& z = ws.z[li - 1];
                    const Vec& a = ws.a[li];
                    for (int c = 0; c < in; ++c)
                        ga[c] *= detail::act_backward(spec.act, z[c], a[c]);
                }
            }
        }
        if (need_input_grad) {
            const std::size_t row =
                class_table_offset(spec) + static_cast<std::size_t>(label) * spec.class_width();
            for (int j = 0; j < spec.class_width(); ++j)
                grad[row + j] += ws.ga0[spec.dim + spec.embed_width() + j];
        }
    }

    static std::size_t class_table_offset(const NetSpec& spec) {
        std::size_t off = 0;
        for (auto [in, out] : spec.layer_dims())
            off += static_cast<std::size_t>(in) * out + out;
        return off;
    }

  private:
    NetSpec spec_;
    Vec params_;
};

// Exponential moving average of the parameters: shadow <- beta*shadow + (1-beta)*theta.
struct EmaShadow {
    double beta = 0.999;
    Vec params;
    std::int64_t updates = 0;
};

inline EmaShadow make_shadow(const ConsistencyNet& net, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("ema: beta must be in [0, 1]");
    return EmaShadow{beta, net.params(), 0};
}

inline void ema_update(EmaShadow& shadow, const ConsistencyNet& net) {
    const Vec& p = net.params();
    if (shadow.params.size() != p.size())
        throw std::invalid_argument("ema_update: parameter size mismatch");
    const double b = shadow.beta;
    for (std::size_t i = 0; i < p.size(); ++i)
        shadow.params[i] = b * shadow.params[i] + (1.0 - b) * p[i];
    ++shadow.updates;
}

}  // namespace cmlab
