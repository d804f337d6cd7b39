#include "hhflow/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hhflow {

AdamState make_adam_state(const ParameterSet& params, double lr) {
    if (!(lr > 0.0)) throw Error("Adam learning rate must be positive");
    AdamState s;
    s.lr = lr;
    for (const auto& [name, value] : params) {
        s.m.emplace(name, Tensor(value.shape()));
        s.v.emplace(name, Tensor(value.shape()));
    }
    return s;
}

void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state) {
    for (const auto& [name, value] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) throw Error("adam_step: missing gradient for " + name);
        if (it->second.shape() != value.shape()) throw ShapeError("adam_step: gradient shape mismatch for " + name);
        if (!it->second.all_finite()) throw NumericError("adam_step: non-finite gradient in parameter block " + name);
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, theta] : params) {
        const Tensor& g = grads.at(name);
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            theta[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
        }
    }
}

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Tensor w(Shape{fan_in, fan_out});
    for (double& x : w.data()) x = uniform(rng);
    return w;
}

double warmup_beta(std::uint32_t epoch, std::uint32_t warmup_epochs) {
    if (epoch < 1) throw Error("warmup_beta: epochs are 1-based");
    if (warmup_epochs == 0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

StopDecision early_stop_update(EarlyStopState& state, double validation_elbo, std::uint32_t epoch,
                               const ParameterSet& params) {
    if (!std::isfinite(validation_elbo)) throw NumericError("early_stop_update: non-finite validation ELBO");
    if (validation_elbo >= state.best_validation_elbo + kEarlyStopMinImprovement) {
        state.best_validation_elbo = validation_elbo;
        state.best_epoch = epoch;
        state.epochs_since_improvement = 0;
        state.best_parameters = params;
    } else {
        state.epochs_since_improvement += 1;
    }
    if (state.epochs_since_improvement >= state.lookahead || epoch >= state.max_epochs) return StopDecision::stop;
    return StopDecision::proceed;
}

}  // namespace hhflow
