#pragma once

#include <optional>
#include <string_view>

#include "hhflow/autodiff.hpp"

namespace hhflow {

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;
/// Decoder means are clamped to [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// q(z|x) = N(mu, diag(exp(log_var))). Both nodes are B x M (or length M).
struct DiagGaussian {
    Var mu;
    Var log_var;
};

enum class LikelihoodKind { bernoulli, bounded_gaussian };

std::string_view likelihood_name(LikelihoodKind kind);
LikelihoodKind parse_likelihood(std::string_view name);

/// Decoder output p(x|z). `log_var` is present only for bounded_gaussian and
/// has the same shape as `mean`.
struct Likelihood {
    LikelihoodKind kind = LikelihoodKind::bernoulli;
    Var mean;
    std::optional<Var> log_var;
};

/// z = mu + exp(log_var / 2) * eps.
Var sample_reparam(Tape& tape, const DiagGaussian& q, Var eps);

// The *_terms variants return the elementwise log-density (same shape as z or
// x); the plain variants sum it to a scalar node.

Var log_prob_diag_gaussian_terms(Tape& tape, Var z, const DiagGaussian& q);
Var log_prob_diag_gaussian(Tape& tape, Var z, const DiagGaussian& q);

Var log_prob_std_normal_terms(Tape& tape, Var z);
Var log_prob_std_normal(Tape& tape, Var z);

/// Closed-form KL(q || N(0, I)) summed over all elements.
Var kl_diag_vs_std(Tape& tape, const DiagGaussian& q);

/// Requires x in {0, 1}; mean is expected inside [kProbEps, 1 - kProbEps].
Var bernoulli_log_prob_terms(Tape& tape, Var x, Var mean);
Var bernoulli_log_prob(Tape& tape, Var x, Var mean);

/// Diagonal Gaussian density of intensities x in [0, 1].
Var bounded_gaussian_log_prob_terms(Tape& tape, Var x, Var mean, Var log_var);
Var bounded_gaussian_log_prob(Tape& tape, Var x, Var mean, Var log_var);

Var likelihood_log_prob_terms(Tape& tape, Var x, const Likelihood& lik);

}  // namespace hhflow
