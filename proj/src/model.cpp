#include "hhflow/model.hpp"

#include <numeric>

#include "hhflow/optim.hpp"

namespace hhflow {

namespace {

std::string flow_prefix(std::size_t t) { return "enc.flow." + std::to_string(t); }

void add_gated(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    params.add(prefix + ".W", glorot_init(in, out, rng));
    params.add(prefix + ".b", Tensor(Shape{out}));
    params.add(prefix + ".V", glorot_init(in, out, rng));
    params.add(prefix + ".c", Tensor(Shape{out}));
}

void add_linear(ParameterSet& params, const std::string& weight, const std::string& bias, std::size_t in,
                std::size_t out, Rng& rng) {
    params.add(weight, glorot_init(in, out, rng));
    params.add(bias, Tensor(Shape{out}));
}

Var linear(Tape& tape, Var h, Var w, Var b) { return tape.add_bias(tape.matmul(h, w), b); }

void check_config(const ModelConfig& c) {
    if (c.input_dim == 0 || c.latent_dim == 0 || c.hidden == 0)
        throw Error("model dimensions must be positive");
}

}  // namespace

void ParameterSet::add(const std::string& name, Tensor value) {
    if (!tensors_.emplace(name, std::move(value)).second) throw Error("duplicate parameter " + name);
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown parameter " + name);
    return it->second;
}

Tensor& ParameterSet::get(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown parameter " + name);
    return it->second;
}

std::size_t ParameterSet::count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
}

ParameterSet init_parameters(const ModelConfig& config, Rng& rng) {
    check_config(config);
    const std::size_t d = config.input_dim;
    const std::size_t m = config.latent_dim;
    const std::size_t h = config.hidden;
    ParameterSet p;
    add_gated(p, "enc.l1", d, h, rng);
    add_gated(p, "enc.l2", h, h, rng);
    add_linear(p, "enc.mu.W", "enc.mu.b", h, m, rng);
    add_linear(p, "enc.logvar.W", "enc.logvar.b", h, m, rng);
    if (config.flow_length >= 1) add_linear(p, "enc.v1.W", "enc.v1.b", h, m, rng);
    for (std::size_t t = 2; t <= config.flow_length; ++t)
        add_linear(p, flow_prefix(t) + ".A", flow_prefix(t) + ".a", m, m, rng);
    add_gated(p, "dec.l1", m, h, rng);
    add_gated(p, "dec.l2", h, h, rng);
    add_linear(p, "dec.mean.W", "dec.mean.b", h, d, rng);
    if (config.likelihood == LikelihoodKind::bounded_gaussian) p.add("dec.logvar", Tensor(Shape{d}));
    return p;
}

Var BoundParameters::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw Error("parameter " + name + " is not bound");
    return it->second;
}

BoundParameters bind_parameters(Tape& tape, const ParameterSet& params) {
    BoundParameters bound;
    for (const auto& [name, value] : params) bound.bind(name, tape.leaf(value));
    return bound;
}

GradientMap collect_gradients(const Gradients& grads, const BoundParameters& bound, const ParameterSet& params) {
    GradientMap out;
    for (const auto& [name, value] : params) out.emplace(name, grads.get(bound[name], value.shape()));
    return out;
}

GatedLayerVars gated_layer_vars(const BoundParameters& bound, const std::string& prefix) {
    return {bound[prefix + ".W"], bound[prefix + ".b"], bound[prefix + ".V"], bound[prefix + ".c"]};
}

Var gated_layer(Tape& tape, Var h, const GatedLayerVars& layer) {
    Var lin = linear(tape, h, layer.W, layer.b);
    Var gate = tape.sigmoid(linear(tape, h, layer.V, layer.c));
    return tape.hadamard(lin, gate);
}

EncoderOutput encode(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var x) {
    const Shape& xs = tape.value(x).shape();
    if (xs.rank() != 2 || xs.cols() != config.input_dim)
        throw ShapeError("encode: expected B x " + std::to_string(config.input_dim) + " input, got " + xs.str());
    Var h = gated_layer(tape, x, gated_layer_vars(bound, "enc.l1"));
    h = gated_layer(tape, h, gated_layer_vars(bound, "enc.l2"));
    EncoderOutput out;
    out.h = h;
    out.posterior.mu = linear(tape, h, bound["enc.mu.W"], bound["enc.mu.b"]);
    out.posterior.log_var =
        tape.clamp(linear(tape, h, bound["enc.logvar.W"], bound["enc.logvar.b"]), kLogVarMin, kLogVarMax);
    if (config.flow_length >= 1) out.v1 = linear(tape, h, bound["enc.v1.W"], bound["enc.v1.b"]);
    return out;
}

std::vector<Var> flow_vectors(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var v1,
                              std::size_t flow_length) {
    if (flow_length < 1) throw Error("flow_vectors: flow length must be at least 1");
    if (flow_length > config.flow_length) {
        throw Error("flow_vectors: requested " + std::to_string(flow_length) +
                    " vectors but the model is configured for " + std::to_string(config.flow_length));
    }
    std::vector<Var> vs{v1};
    for (std::size_t t = 2; t <= flow_length; ++t) {
        const std::string p = flow_prefix(t);
        vs.push_back(linear(tape, vs.back(), bound[p + ".A"], bound[p + ".a"]));
    }
    return vs;
}

Likelihood decode(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var z) {
    const Shape& zs = tape.value(z).shape();
    if (zs.rank() != 2 || zs.cols() != config.latent_dim)
        throw ShapeError("decode: expected B x " + std::to_string(config.latent_dim) + " latent, got " + zs.str());
    Var h = gated_layer(tape, z, gated_layer_vars(bound, "dec.l1"));
    h = gated_layer(tape, h, gated_layer_vars(bound, "dec.l2"));
    Likelihood lik;
    lik.kind = config.likelihood;
    lik.mean = tape.clamp(tape.sigmoid(linear(tape, h, bound["dec.mean.W"], bound["dec.mean.b"])), kProbEps,
                          1.0 - kProbEps);
    if (config.likelihood == LikelihoodKind::bounded_gaussian) {
        Var zeros = tape.constant(Tensor(tape.value(lik.mean).shape()));
        lik.log_var = tape.clamp(tape.add_bias(zeros, bound["dec.logvar"]), kLogVarMin, kLogVarMax);
    }
    return lik;
}

ElboGraph build_elbo(Tape& tape, const ModelConfig& config, const BoundParameters& bound, Var x, Var eps,
                     double beta) {
    ElboGraph g;
    g.encoder = encode(tape, config, bound, x);
    Var z0 = sample_reparam(tape, g.encoder.posterior, eps);
    if (config.flow_length > 0) g.vectors = flow_vectors(tape, config, bound, *g.encoder.v1, config.flow_length);
    g.flow = flow_forward(tape, z0, g.vectors);
    const Likelihood lik = decode(tape, config, bound, g.flow.output());

    g.re_terms = likelihood_log_prob_terms(tape, x, lik);
    g.log_q_terms = log_prob_diag_gaussian_terms(tape, z0, g.encoder.posterior);
    g.log_p_terms = log_prob_std_normal_terms(tape, g.flow.output());
    g.re = tape.reduce_sum(g.re_terms);
    g.kl = tape.subtract(tape.reduce_sum(g.log_q_terms), tape.reduce_sum(g.log_p_terms));
    g.logdet = flow_log_det(tape, g.flow);
    g.elbo = tape.add(tape.subtract(g.re, tape.scale(g.kl, beta)), g.logdet);
    return g;
}

ElboBreakdown elbo_single_sample(const ModelConfig& config, const ParameterSet& params, const Tensor& x,
                                 const Tensor& eps, double beta) {
    if (x.size() != config.input_dim || eps.size() != config.latent_dim)
        throw ShapeError("elbo_single_sample: x must have length D and eps length M");
    return evaluate_elbo(config, params, Tensor(Shape{1, x.size()}, {x.data().begin(), x.data().end()}),
                         Tensor(Shape{1, eps.size()}, {eps.data().begin(), eps.data().end()}), beta)
        .front();
}

BatchObjective batch_objective(const ModelConfig& config, const ParameterSet& params, const Tensor& batch,
                               const Tensor& eps, double beta) {
    if (batch.shape().rank() != 2 || batch.rows() == 0) throw Error("batch_objective: empty minibatch");
    Tape tape;
    const BoundParameters bound = bind_parameters(tape, params);
    const Var x = tape.constant(batch);
    const ElboGraph g = build_elbo(tape, config, bound, x, tape.constant(eps), beta);
    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    const Var loss = tape.scale(g.elbo, -inv_b);

    BatchObjective out;
    out.mean.re = tape.value(g.re).item() * inv_b;
    out.mean.kl = tape.value(g.kl).item() * inv_b;
    out.mean.logdet = tape.value(g.logdet).item() * inv_b;
    out.mean.beta = beta;
    out.mean.elbo = tape.value(g.elbo).item() * inv_b;
    out.gradients = collect_gradients(tape.backward(loss), bound, params);
    return out;
}

BatchObjective batch_objective(const ModelConfig& config, const ParameterSet& params, const Tensor& batch,
                               Rng& rng, double beta) {
    if (batch.shape().rank() != 2 || batch.rows() == 0) throw Error("batch_objective: empty minibatch");
    return batch_objective(config, params, batch, standard_normal(rng, batch.rows(), config.latent_dim), beta);
}

std::vector<ElboBreakdown> evaluate_elbo(const ModelConfig& config, const ParameterSet& params,
                                         const Tensor& batch, const Tensor& eps, double beta) {
    Tape tape;
    const BoundParameters bound = bind_parameters(tape, params);
    const ElboGraph g = build_elbo(tape, config, bound, tape.constant(batch), tape.constant(eps), beta);
    const Tensor& re = tape.value(g.re_terms);
    const Tensor& lq = tape.value(g.log_q_terms);
    const Tensor& lp = tape.value(g.log_p_terms);
    std::vector<ElboBreakdown> out(batch.rows());
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto rr = re.row(r);
        auto qr = lq.row(r);
        auto pr = lp.row(r);
        ElboBreakdown& e = out[r];
        e.re = std::accumulate(rr.begin(), rr.end(), 0.0);
        e.kl = std::accumulate(qr.begin(), qr.end(), 0.0) - std::accumulate(pr.begin(), pr.end(), 0.0);
        e.logdet = 0.0;
        for (std::size_t t = 0; t < g.flow.length(); ++t) e.logdet += jacobian_log_det_contribution();
        e.beta = beta;
        e.elbo = e.re - beta * e.kl + e.logdet;
    }
    return out;
}

ParameterCount count_parameters(const ModelConfig& config) {
    Rng rng(0);
    ParameterCount c;
    const ParameterSet params = init_parameters(config, rng);
    c.total = params.count();
    // Every encoder head ends in a bias whose length is the head's output width.
    for (const auto& [name, value] : params) {
        const bool head_bias = name == "enc.mu.b" || name == "enc.logvar.b" || name == "enc.v1.b" ||
                               (name.starts_with("enc.flow.") && name.ends_with(".a"));
        if (head_bias) c.encoder_head_outputs += value.size();
    }
    return c;
}

}  // namespace hhflow
