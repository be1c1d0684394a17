#pragma once

// Momentum SGD with stepwise learning-rate decay.

#include <cmath>

#include "placefuse/nn/tensor.hpp"

namespace placefuse::nn {

struct SgdConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.001;
    double decay_factor = 0.5;
    int decay_every_epochs = 5;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("SgdConfig: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("SgdConfig: momentum must be in [0,1)");
        if (!(decay_factor > 0.0 && decay_factor <= 1.0))
            throw std::invalid_argument("SgdConfig: decay_factor must be in (0,1]");
        if (decay_every_epochs <= 0)
            throw std::invalid_argument("SgdConfig: decay_every_epochs must be positive");
    }
};

inline double effective_lr(const SgdConfig& cfg, int epoch) {
    return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every_epochs));
}

// buffer <- momentum*buffer + (grad + wd*w); w <- w - lr_eff*buffer.
// Gradients are zeroed after the update.
inline void sgd_step(const std::vector<ParameterPtr>& params, const SgdConfig& cfg, int epoch) {
    cfg.validate();
    const double lr = effective_lr(cfg, epoch);
    for (const auto& p : params) {
        auto& t = *p->tensor;
        if (t.grad.empty())
            throw std::runtime_error("sgd_step: parameter '" + p->name + "' has no gradient");
        if (p->momentum.empty()) p->momentum.assign(t.data.size(), 0.0);
        const double wd = p->weight_decay_exempt ? 0.0 : cfg.weight_decay;
        for (size_t i = 0; i < t.data.size(); ++i) {
            const double g = t.grad[i] + wd * t.data[i];
            p->momentum[i] = cfg.momentum * p->momentum[i] + g;
            t.data[i] -= lr * p->momentum[i];
        }
        t.zero_grad();
    }
}

}  // namespace placefuse::nn
