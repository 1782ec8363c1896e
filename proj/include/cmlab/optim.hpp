#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "cmlab/vec.hpp"

namespace cmlab {

// Adam with linear learning-rate warmup over the first `warmup` steps.
struct AdamOptimizer {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup = 100;

    Vec m, v;
    std::int64_t steps = 0;

    void step(Vec& params, const Vec& grad) {
        if (params.size() != grad.size())
            throw std::invalid_argument("adam: parameter/gradient size mismatch");
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        ++steps;
        const double ramp =
            warmup > 0 ? std::min(1.0, static_cast<double>(steps) / warmup) : 1.0;
        const double lr_t = lr * ramp;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            params[i] -= lr_t * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace cmlab
