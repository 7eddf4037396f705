#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "phvc/losses.hpp"
#include "phvc/model.hpp"

namespace phvc {

class GradientAbortError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.8;
    double beta2 = 0.99;
    double weight_decay = 0.01;
    std::size_t batch_size = 16;
    std::size_t steps = 500;
    std::uint64_t seed = 0;
    LossWeights weights;
    double adam_eps = 1e-8;
    double grad_clip = 10.0;

    void validate() const {
        if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("TrainConfig: bad optimizer constants");
        if (weight_decay < 0.0 || adam_eps <= 0.0)
            throw std::invalid_argument("TrainConfig: bad weight_decay/adam_eps");
        if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        weights.validate();
    }
};

struct OptState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static OptState for_params(const ParamSet& p) {
        OptState s;
        for (const Tensor& t : p.tensors()) {
            s.m.emplace_back(t.size(), 0.0);
            s.v.emplace_back(t.size(), 0.0);
        }
        return s;
    }
};

// Decoupled AdamW update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
inline void adamw_step(ParamSet& p, OptState& state, const TrainConfig& cfg) {
    if (state.m.size() != p.tensors().size())
        throw std::invalid_argument("adamw_step: state does not match parameter set");
    for (const Tensor& t : p.tensors())
        for (double g : t.grad)
            if (!std::isfinite(g))
                throw GradientAbortError("adamw_step: non-finite gradient in tensor " + t.name);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (std::size_t i = 0; i < p.tensors().size(); ++i) {
        Tensor& t = p.tensors()[i];
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        if (m.size() != t.size())
            throw std::invalid_argument("adamw_step: state shape mismatch for " + t.name);
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double g = t.grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            t.value[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                    cfg.weight_decay * t.value[j]);
        }
    }
}

// Global-norm gradient clip; returns the pre-clip norm.
inline double clip_grad_norm(ParamSet& p, double max_norm) {
    const double norm = p.grad_norm();
    if (max_norm > 0.0 && norm > max_norm) p.scale_grads(max_norm / norm);
    return norm;
}

} // namespace phvc
