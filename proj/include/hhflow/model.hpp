#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hhflow/autodiff.hpp"
#include "hhflow/distributions.hpp"
#include "hhflow/flows.hpp"
#include "hhflow/rng.hpp"

namespace hhflow {

/// Named parameter tensors. Iteration order is by name, which fixes the
/// serialization and optimizer order.
class ParameterSet {
public:
    void add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    std::size_t size() const { return tensors_.size(); }
    /// Total number of scalars.
    std::size_t count() const;

    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }
    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }

    bool operator==(const ParameterSet&) const = default;

private:
    std::map<std::string, Tensor> tensors_;
};

using GradientMap = std::map<std::string, Tensor>;

struct ModelConfig {
    std::size_t input_dim = 784;
    std::size_t latent_dim = 40;
    std::size_t hidden = 300;
    std::size_t flow_length = 0;
    LikelihoodKind likelihood = LikelihoodKind::bernoulli;
};

/// Glorot-uniform weights, zero biases.
///
/// Layout (weights are stored input-major, so a batch H (B x in) maps to H W):
///   enc.l1.{W,b,V,c}, enc.l2.{W,b,V,c}     gated trunk D -> H -> H
///   enc.mu.{W,b}, enc.logvar.{W,b}         H -> M
///   enc.v1.{W,b}                           H -> M            (T >= 1)
///   enc.flow.<t>.{A,a}                     M -> M, t = 2..T
///   dec.l1.{W,b,V,c}, dec.l2.{W,b,V,c}     gated trunk M -> H -> H
///   dec.mean.{W,b}                         H -> D
///   dec.logvar                             length D          (bounded-gaussian)
ParameterSet init_parameters(const ModelConfig& config, Rng& rng);

/// Parameters registered as differentiable leaves of one tape.
class BoundParameters {
public:
    Var operator[](const std::string& name) const;
    void bind(const std::string& name, Var v) { vars_[name] = v; }
    const std::map<std::string, Var>& vars() const { return vars_; }

private:
    std::map<std::string, Var> vars_;
};

BoundParameters bind_parameters(Tape& tape, const ParameterSet& params);

/// Map leaf adjoints back onto parameter names; parameters the root did not
/// depend on get zeros.
GradientMap collect_gradients(const Gradients& grads, const BoundParameters& bound, const ParameterSet& params);

struct GatedLayerVars {
    Var W, b, V, c;
};

GatedLayerVars gated_layer_vars(const BoundParameters& bound, const std::string& prefix);

/// (h W + b) * sigmoid(h V + c), row-wise over a batch.
Var gated_layer(Tape& tape, Var h, const GatedLayerVars& layer);

struct EncoderOutput {
    DiagGaussian posterior;
    /// First Householder vector; unset when T = 0.
    std::optional<Var> v1;
    /// Last hidden layer.
    Var h;
};

EncoderOutput encode(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var x);

/// v_1 ... v_T with v_t = v_{t-1} A_t + a_t.
std::vector<Var> flow_vectors(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var v1,
                              std::size_t flow_length);

Likelihood decode(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var z);

/// Per-datum (or batch-mean) decomposition of the flow-augmented bound.
/// elbo = re - beta * kl + logdet.
struct ElboBreakdown {
    double re = 0.0;
    double kl = 0.0;
    double logdet = 0.0;
    double beta = 1.0;
    double elbo = 0.0;
};

/// Tape nodes of a batched single-sample ELBO estimate. The *_terms nodes are
/// elementwise (B x D for the likelihood, B x M for the latent densities);
/// re, kl, logdet and elbo are sums over the batch.
struct ElboGraph {
    EncoderOutput encoder;
    std::vector<Var> vectors;
    FlowChain flow;
    Var re_terms, log_q_terms, log_p_terms;
    Var re, kl, logdet, elbo;
};

/// x is B x D, eps is B x M. kl = ln q(z0|x) - ln p(zT) per sample.
ElboGraph build_elbo(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var x, Var eps,
                     double beta);

ElboBreakdown elbo_single_sample(const ModelConfig& config, const ParameterSet& params, const Tensor& x,
                                 const Tensor& eps, double beta);

struct BatchObjective {
    ElboBreakdown mean;
    /// Gradients of the negative mean ELBO.
    GradientMap gradients;
};

BatchObjective batch_objective(const ModelConfig& config, const ParameterSet& params, const Tensor& batch,
                               const Tensor& eps, double beta);
/// Draws one eps row per datum from `rng`.
BatchObjective batch_objective(const ModelConfig& config, const ParameterSet& params, const Tensor& batch,
                               Rng& rng, double beta);

/// Forward-only per-datum breakdown, used for validation and evaluation.
std::vector<ElboBreakdown> evaluate_elbo(const ModelConfig& config, const ParameterSet& params,
                                         const Tensor& batch, const Tensor& eps, double beta);

struct ParameterCount {
    std::size_t total = 0;
    /// Output width of all encoder heads: mu, log-variance and the T flow vectors.
    std::size_t encoder_head_outputs = 0;
};

ParameterCount count_parameters(const ModelConfig& config);

}  // namespace hhflow
