#include "hhflow/distributions.hpp"

#include <string>

namespace hhflow {

namespace {

void require_same_shape(const Tape& tape, Var a, Var b, const char* what) {
    if (tape.value(a).shape() != tape.value(b).shape()) {
        throw ShapeError(std::string(what) + ": length mismatch " + tape.value(a).shape().str() + " vs " +
                         tape.value(b).shape().str());
    }
}

}  // namespace

std::string_view likelihood_name(LikelihoodKind kind) {
    return kind == LikelihoodKind::bernoulli ? "bernoulli" : "bounded-gaussian";
}

LikelihoodKind parse_likelihood(std::string_view name) {
    if (name == "bernoulli") return LikelihoodKind::bernoulli;
    if (name == "bounded-gaussian") return LikelihoodKind::bounded_gaussian;
    throw Error("unknown likelihood kind: " + std::string(name));
}

Var sample_reparam(Tape& tape, const DiagGaussian& q, Var eps) {
    require_same_shape(tape, q.mu, q.log_var, "sample_reparam");
    require_same_shape(tape, q.mu, eps, "sample_reparam");
    Var sigma = tape.exp(tape.scale(q.log_var, 0.5));
    return tape.add(q.mu, tape.hadamard(sigma, eps));
}

Var log_prob_diag_gaussian_terms(Tape& tape, Var z, const DiagGaussian& q) {
    require_same_shape(tape, z, q.mu, "log_prob_diag_gaussian");
    require_same_shape(tape, z, q.log_var, "log_prob_diag_gaussian");
    // -1/2 ln 2pi - 1/2 log_var - (z - mu)^2 / (2 exp(log_var))
    Var sq = tape.square(tape.subtract(z, q.mu));
    Var inv_var = tape.exp(tape.scale(q.log_var, -1.0));
    Var quad = tape.scale(tape.hadamard(sq, inv_var), -0.5);
    return tape.add_scalar(tape.add(tape.scale(q.log_var, -0.5), quad), -kHalfLog2Pi);
}

Var log_prob_diag_gaussian(Tape& tape, Var z, const DiagGaussian& q) {
    return tape.reduce_sum(log_prob_diag_gaussian_terms(tape, z, q));
}

Var log_prob_std_normal_terms(Tape& tape, Var z) {
    return tape.add_scalar(tape.scale(tape.square(z), -0.5), -kHalfLog2Pi);
}

Var log_prob_std_normal(Tape& tape, Var z) { return tape.reduce_sum(log_prob_std_normal_terms(tape, z)); }

Var kl_diag_vs_std(Tape& tape, const DiagGaussian& q) {
    require_same_shape(tape, q.mu, q.log_var, "kl_diag_vs_std");
    // 1/2 sum(exp(log_var) + mu^2 - 1 - log_var)
    Var t = tape.subtract(tape.add(tape.exp(q.log_var), tape.square(q.mu)), q.log_var);
    return tape.scale(tape.reduce_sum(tape.add_scalar(t, -1.0)), 0.5);
}

Var bernoulli_log_prob_terms(Tape& tape, Var x, Var mean) {
    require_same_shape(tape, x, mean, "bernoulli_log_prob");
    for (double v : tape.value(x).data()) {
        if (v != 0.0 && v != 1.0) throw Error("bernoulli_log_prob: observation " + std::to_string(v) + " is not binary");
    }
    // x ln m + (1 - x) ln(1 - m)
    Var one_minus_x = tape.add_scalar(tape.scale(x, -1.0), 1.0);
    Var one_minus_m = tape.add_scalar(tape.scale(mean, -1.0), 1.0);
    return tape.add(tape.hadamard(x, tape.log(mean)), tape.hadamard(one_minus_x, tape.log(one_minus_m)));
}

Var bernoulli_log_prob(Tape& tape, Var x, Var mean) {
    return tape.reduce_sum(bernoulli_log_prob_terms(tape, x, mean));
}

Var bounded_gaussian_log_prob_terms(Tape& tape, Var x, Var mean, Var log_var) {
    require_same_shape(tape, x, mean, "bounded_gaussian_log_prob");
    require_same_shape(tape, x, log_var, "bounded_gaussian_log_prob");
    for (double v : tape.value(x).data()) {
        if (v < 0.0 || v > 1.0)
            throw Error("bounded_gaussian_log_prob: observation " + std::to_string(v) + " outside [0, 1]");
    }
    return log_prob_diag_gaussian_terms(tape, x, DiagGaussian{mean, log_var});
}

Var bounded_gaussian_log_prob(Tape& tape, Var x, Var mean, Var log_var) {
    return tape.reduce_sum(bounded_gaussian_log_prob_terms(tape, x, mean, log_var));
}

Var likelihood_log_prob_terms(Tape& tape, Var x, const Likelihood& lik) {
    if (lik.kind == LikelihoodKind::bernoulli) return bernoulli_log_prob_terms(tape, x, lik.mean);
    if (!lik.log_var) throw Error("bounded-gaussian likelihood requires a log-variance");
    return bounded_gaussian_log_prob_terms(tape, x, lik.mean, *lik.log_var);
}

}  // namespace hhflow
