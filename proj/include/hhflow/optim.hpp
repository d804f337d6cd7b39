#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "hhflow/model.hpp"
#include "hhflow/rng.hpp"

namespace hhflow {

/// Adam with bias-corrected moments.
struct AdamState {
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;

    bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const ParameterSet& params, double lr);

/// One update of every parameter. Throws NumericError naming the parameter
/// block when a gradient is non-finite; nothing is modified in that case.
void adam_step(ParameterSet& params, const GradientMap& grads, AdamState& state);

/// Uniform draws in +/- sqrt(6 / (fan_in + fan_out)), shape fan_in x fan_out.
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Linear KL warm-up: min(1, epoch / warmup_epochs), epoch is 1-based.
double warmup_beta(std::uint32_t epoch, std::uint32_t warmup_epochs = 200);

inline constexpr double kEarlyStopMinImprovement = 1e-4;

struct EarlyStopState {
    double best_validation_elbo = -std::numeric_limits<double>::infinity();
    std::uint32_t best_epoch = 0;
    std::uint32_t epochs_since_improvement = 0;
    std::uint32_t lookahead = 100;
    std::uint32_t max_epochs = 5000;
    ParameterSet best_parameters;

    bool operator==(const EarlyStopState&) const = default;
};

enum class StopDecision { proceed, stop };

/// Record one validation score. An improvement of at least
/// kEarlyStopMinImprovement nats snapshots `params` and resets the counter.
/// Training stops once the counter reaches the look-ahead or `epoch` reaches
/// max_epochs.
StopDecision early_stop_update(EarlyStopState& state, double validation_elbo, std::uint32_t epoch,
                               const ParameterSet& params);

}  // namespace hhflow
