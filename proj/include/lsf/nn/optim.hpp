#pragma once

#include "lsf/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace lsf::nn {

template <typename T>
struct LossResult {
    double value = 0;
    Tensor<T> grad; // d loss / d pred
};

/// Mean absolute error with subgradient sign(pred - target) / N (zero at ties).
template <typename T>
LossResult<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target)
{
    pred.require_same(target, "l1_loss");
    LossResult<T> r{0.0, Tensor<T>(pred.shape())};
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        r.value += std::abs(d);
        r.grad[i] = static_cast<T>(d > 0 ? inv_n : d < 0 ? -inv_n : 0.0);
    }
    r.value *= inv_n;
    return r;
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Learning rate halves every time the epoch counter crosses this many epochs.
    int halve_every_epochs = 100;
};

/// Step-decay schedule: lr * 0.5^(floor(epoch / halve_every)).
inline double scheduled_lr(const AdamConfig& cfg, int epoch)
{
    if (cfg.halve_every_epochs <= 0) return cfg.lr;
    return cfg.lr * std::pow(0.5, epoch / cfg.halve_every_epochs);
}

/// One bias-corrected ADAM update of a single parameter tensor. `step` is the
/// 1-based index of this update.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::int64_t step, double lr,
                 const AdamConfig& cfg)
{
    param.require_same(grad, "adam_update");
    param.require_same(m, "adam_update");
    param.require_same(v, "adam_update");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
        const double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        param[i] = static_cast<T>(param[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
}

/// Optimiser state shaped like a model: first and second moments plus the step counter.
template <typename Model>
struct AdamState {
    Model m, v;
    std::int64_t step = 0;

    static AdamState for_model(const Model& model) { return {model.zeros_like(), model.zeros_like(), 0}; }
};

/// Applies one ADAM step to every parameter of `model`. Model must expose
/// `visit(f)` enumerating (name, Tensor&) in a fixed order.
template <typename Model>
void adam_step(Model& model, Model& grads, AdamState<Model>& state, double lr, const AdamConfig& cfg)
{
    using T = typename Model::value_type;
    std::vector<Tensor<T>*> p, g, m, v;
    model.visit([&](const std::string&, Tensor<T>& t) { p.push_back(&t); });
    grads.visit([&](const std::string&, Tensor<T>& t) { g.push_back(&t); });
    state.m.visit([&](const std::string&, Tensor<T>& t) { m.push_back(&t); });
    state.v.visit([&](const std::string&, Tensor<T>& t) { v.push_back(&t); });
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw DimensionError("adam_step: parameter sets differ in structure");
    ++state.step;
    for (std::size_t i = 0; i < p.size(); ++i) adam_update(*p[i], *g[i], *m[i], *v[i], state.step, lr, cfg);
}

} // namespace lsf::nn
