#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hhflow/model.hpp"
#include "support/checks.hpp"

using namespace hhflow;

namespace {

ModelConfig toy(std::size_t d, std::size_t m, std::size_t hidden, std::size_t t,
                LikelihoodKind kind = LikelihoodKind::bernoulli) {
    ModelConfig c;
    c.input_dim = d;
    c.latent_dim = m;
    c.hidden = hidden;
    c.flow_length = t;
    c.likelihood = kind;
    return c;
}

ParameterSet zeros_like(const ModelConfig& c) {
    Rng rng(0);
    ParameterSet p = init_parameters(c, rng);
    for (auto& [name, t] : p)
        for (double& x : t.data()) x = 0.0;
    return p;
}

GatedLayerVars constant_layer(Tape& t, Tensor w, Tensor b, Tensor v, Tensor c) {
    return {t.constant(std::move(w)), t.constant(std::move(b)), t.constant(std::move(v)), t.constant(std::move(c))};
}

}  // namespace

TEST(GatedLayer, ClosedGateHalvesTheLinearPart) {
    Rng rng(1);
    Tape t;
    const Tensor w = support::uniform_tensor(Shape{3, 2}, rng), b = support::uniform_tensor(Shape{2}, rng);
    const Tensor h = support::uniform_tensor(Shape{1, 3}, rng);
    const Var out = gated_layer(t, t.constant(h), constant_layer(t, w, b, Tensor(Shape{3, 2}), Tensor(Shape{2})));
    for (std::size_t j = 0; j < 2; ++j) {
        double lin = b[j];
        for (std::size_t i = 0; i < 3; ++i) lin += h[i] * w.at(i, j);
        EXPECT_NEAR(t.value(out)[j], 0.5 * lin, 1e-15);
    }
}

TEST(GatedLayer, SaturatedGatePassesLinearPart) {
    Tape t;
    const Tensor w = Tensor::matrix(2, 2, {0.5, -1.0, 2.0, 0.25});
    const Tensor b = Tensor::vector({0.1, -0.2});
    const Tensor h = Tensor::matrix(1, 2, {0.3, -0.4});
    const Var out = gated_layer(t, t.constant(h), constant_layer(t, w, b, Tensor(Shape{2, 2}), Tensor(Shape{2}, 30.0)));
    EXPECT_NEAR(t.value(out)[0], 0.1 + 0.3 * 0.5 - 0.4 * 2.0, 1e-10);
    EXPECT_NEAR(t.value(out)[1], -0.2 - 0.3 * 1.0 - 0.4 * 0.25, 1e-10);
}

TEST(GatedLayer, IdentityWeightsGiveSigmoidGates) {
    Tape t;
    const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const Var out =
        gated_layer(t, t.constant(Tensor::matrix(1, 2, {1, -1})), constant_layer(t, eye, Tensor(Shape{2}), eye, Tensor(Shape{2})));
    EXPECT_NEAR(t.value(out)[0], 0.7310586, 1e-7);
    EXPECT_NEAR(t.value(out)[1], -0.2689414, 1e-7);
}

TEST(Encode, ZeroParametersGivePriorLikeOutputs) {
    const ModelConfig c = toy(5, 3, 4, 2);
    const ParameterSet p = zeros_like(c);
    Tape t;
    const BoundParameters bound = bind_parameters(t, p);
    Rng rng(2);
    const EncoderOutput e = encode(t, c, bound, t.constant(support::uniform_tensor(Shape{2, 5}, rng, 0, 1)));
    EXPECT_EQ(t.value(e.posterior.mu), Tensor(Shape{2, 3}, 0.0));
    EXPECT_EQ(t.value(e.posterior.log_var), Tensor(Shape{2, 3}, 0.0));
    ASSERT_TRUE(e.v1);
    EXPECT_EQ(t.value(*e.v1), Tensor(Shape{2, 3}, 0.0));
}

TEST(Encode, DeterministicAndShapeChecked) {
    const ModelConfig c = toy(5, 3, 4, 0);
    Rng rng(3);
    const ParameterSet p = init_parameters(c, rng);
    const Tensor x = support::uniform_tensor(Shape{2, 5}, rng, 0, 1);
    Tape a, b;
    const EncoderOutput ea = encode(a, c, bind_parameters(a, p), a.constant(x));
    const EncoderOutput eb = encode(b, c, bind_parameters(b, p), b.constant(x));
    EXPECT_EQ(a.value(ea.posterior.mu), b.value(eb.posterior.mu));
    EXPECT_EQ(a.value(ea.posterior.log_var), b.value(eb.posterior.log_var));
    EXPECT_FALSE(ea.v1);
    Tape bad;
    EXPECT_THROW(encode(bad, c, bind_parameters(bad, p), bad.constant(Tensor(Shape{2, 4}))), ShapeError);
}

TEST(Encode, LogVarianceIsClamped) {
    const ModelConfig c = toy(3, 2, 4, 0);
    ParameterSet p = zeros_like(c);
    p.get("enc.logvar.b") = Tensor::vector({50.0, -50.0});
    Tape t;
    const EncoderOutput e = encode(t, c, bind_parameters(t, p), t.constant(Tensor(Shape{1, 3}, 0.5)));
    EXPECT_EQ(t.value(e.posterior.log_var), Tensor::matrix(1, 2, {kLogVarMax, kLogVarMin}));
}

TEST(Encode, MeanGradientMatchesFiniteDifferences) {
    const ModelConfig c = toy(4, 3, 5, 0);
    Rng rng(4);
    const ParameterSet p = support::small_parameters(c, rng);
    const Tensor x = support::uniform_tensor(Shape{2, 4}, rng, 0, 1);
    Tape t;
    const BoundParameters bound = bind_parameters(t, p);
    const Var root = t.reduce_sum(encode(t, c, bound, t.constant(x)).posterior.mu);
    const Tensor an = t.backward(root).get(bound["enc.l1.W"], p.get("enc.l1.W").shape());
    const Tensor fd = finite_difference_gradient(
        [&](const Tensor& w) {
            ParameterSet q = p;
            q.get("enc.l1.W") = w;
            Tape t2;
            return t2.value(t2.reduce_sum(encode(t2, c, bind_parameters(t2, q), t2.constant(x)).posterior.mu)).item();
        },
        p.get("enc.l1.W"), 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_TRUE(support::close(an[i], fd[i])) << i;
}

TEST(FlowVectors, ChainOfLinearMaps) {
    const ModelConfig c = toy(4, 3, 5, 3);
    Rng rng(5);
    ParameterSet p = init_parameters(c, rng);
    Tape t;
    const BoundParameters bound = bind_parameters(t, p);
    const Tensor v1 = support::uniform_tensor(Shape{2, 3}, rng);
    const Var v1v = t.constant(v1);

    EXPECT_EQ(flow_vectors(t, c, bound, v1v, 1).size(), 1u);
    EXPECT_THROW(flow_vectors(t, c, bound, v1v, 4), Error);
    EXPECT_THROW(flow_vectors(t, c, bound, v1v, 0), Error);

    const auto vs = flow_vectors(t, c, bound, v1v, 3);
    ASSERT_EQ(vs.size(), 3u);
    Eigen::MatrixXd cur = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(v1.data().data(), 2, 3);
    for (int step = 2; step <= 3; ++step) {
        const Tensor& a = p.get("enc.flow." + std::to_string(step) + ".A");
        const Tensor& bias = p.get("enc.flow." + std::to_string(step) + ".a");
        const Eigen::MatrixXd am = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(a.data().data(), 3, 3);
        const Eigen::RowVectorXd bm = Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), 3);
        cur = (cur * am).rowwise() + bm;
        const Tensor& got = t.value(vs[step - 1]);
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got.at(r, k), cur(r, k), 1e-12);
    }
}

TEST(FlowVectors, IdentityMapsRepeatFirstVector) {
    const ModelConfig c = toy(4, 3, 5, 4);
    Rng rng(6);
    ParameterSet p = init_parameters(c, rng);
    for (int step = 2; step <= 4; ++step) {
        p.get("enc.flow." + std::to_string(step) + ".A") = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        p.get("enc.flow." + std::to_string(step) + ".a") = Tensor(Shape{3}, 0.0);
    }
    Tape t;
    const Var v1 = t.constant(support::uniform_tensor(Shape{1, 3}, rng));
    for (Var v : flow_vectors(t, c, bind_parameters(t, p), v1, 4)) EXPECT_EQ(t.value(v), t.value(v1));
}

TEST(Decode, ZeroParametersGiveHalf) {
    for (auto kind : {LikelihoodKind::bernoulli, LikelihoodKind::bounded_gaussian}) {
        const ModelConfig c = toy(6, 2, 4, 0, kind);
        Tape t;
        const Likelihood lik = decode(t, c, bind_parameters(t, zeros_like(c)), t.constant(Tensor(Shape{3, 2}, 0.7)));
        EXPECT_EQ(t.value(lik.mean), Tensor(Shape{3, 6}, 0.5));
        EXPECT_EQ(lik.log_var.has_value(), kind == LikelihoodKind::bounded_gaussian);
        if (lik.log_var) {
            EXPECT_EQ(t.value(*lik.log_var), Tensor(Shape{3, 6}, 0.0));
        }
    }
}

TEST(Decode, HeadBiasIsMonotone) {
    const ModelConfig c = toy(4, 2, 3, 0);
    Rng rng(7);
    ParameterSet p = init_parameters(c, rng);
    const Tensor z = support::uniform_tensor(Shape{1, 2}, rng);
    double prev = -1.0;
    for (double b : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
        p.get("dec.mean.b")[2] = b;
        Tape t;
        const double m = t.value(decode(t, c, bind_parameters(t, p), t.constant(z)).mean)[2];
        EXPECT_GT(m, prev);
        prev = m;
    }
}

TEST(Decode, MeanIsClamped) {
    const ModelConfig c = toy(2, 2, 3, 0);
    ParameterSet p = zeros_like(c);
    p.get("dec.mean.b") = Tensor::vector({40.0, -40.0});
    Tape t;
    const Tensor& m = t.value(decode(t, c, bind_parameters(t, p), t.constant(Tensor(Shape{1, 2}))).mean);
    EXPECT_EQ(m[0], 1.0 - kProbEps);
    EXPECT_EQ(m[1], kProbEps);
}

TEST(Elbo, BetaZeroLeavesReconstructionOnly) {
    const ModelConfig c = toy(6, 3, 8, 2);
    Rng rng(8);
    const ParameterSet p = init_parameters(c, rng);
    const Tensor x = support::binary_batch(1, 6, rng);
    const Tensor eps = standard_normal(rng, 1, 3);
    const ElboBreakdown e = elbo_single_sample(c, p, Tensor::vector({x.data().begin(), x.data().end()}),
                                               Tensor::vector({eps.data().begin(), eps.data().end()}), 0.0);
    EXPECT_EQ(e.elbo, e.re);
    EXPECT_EQ(e.logdet, 0.0);
    EXPECT_EQ(e.beta, 0.0);
}

TEST(Elbo, KlIsTheSameAtEitherEndOfTheFlow) {
    Rng rng(9);
    for (std::size_t T : {1u, 3u, 10u}) {
        const ModelConfig c = toy(6, 3, 8, T);
        const ParameterSet p = init_parameters(c, rng);
        Tape t;
        const BoundParameters bound = bind_parameters(t, p);
        const ElboGraph g = build_elbo(t, c, bound, t.constant(support::binary_batch(4, 6, rng)),
                                       t.constant(standard_normal(rng, 4, 3)), 1.0);
        const double at_end = t.value(g.kl).item();
        const double at_start = t.value(t.reduce_sum(g.log_q_terms)).item() -
                                t.value(log_prob_std_normal(t, g.flow.input())).item();
        EXPECT_NEAR(at_end, at_start, 1e-10);
        EXPECT_EQ(t.value(g.logdet).item(), 0.0);
    }
}

TEST(Elbo, VanillaBoundHasNoFlowTerms) {
    const ModelConfig c = toy(6, 3, 8, 0);
    Rng rng(10);
    const ParameterSet p = init_parameters(c, rng);
    EXPECT_FALSE(p.contains("enc.v1.W"));
    const Tensor x = support::binary_batch(3, 6, rng), eps = standard_normal(rng, 3, 3);
    for (const auto& e : evaluate_elbo(c, p, x, eps, 0.3)) {
        EXPECT_EQ(e.logdet, 0.0);
        EXPECT_NEAR(e.elbo, e.re - 0.3 * e.kl, 1e-12);
    }
}

TEST(Elbo, SingleSampleKlConvergesToAnalytic) {
    const ModelConfig c = toy(6, 3, 8, 0);
    Rng rng(11);
    const ParameterSet p = support::small_parameters(c, rng);
    const Tensor x = support::binary_batch(1, 6, rng);
    Tape t;
    const EncoderOutput e = encode(t, c, bind_parameters(t, p), t.constant(x));
    const double analytic = t.value(kl_diag_vs_std(t, e.posterior)).item();

    const std::size_t n = 100000;
    Tensor xs(Shape{n, 6});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 6; ++j) xs.at(i, j) = x[j];
    const auto rows = evaluate_elbo(c, p, xs, standard_normal(rng, n, 3), 1.0);
    double s = 0, s2 = 0;
    for (const auto& r : rows) s += r.kl, s2 += r.kl * r.kl;
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_LT(std::abs(mean - analytic), 3 * se);
}

TEST(BatchObjective, IdenticalRowsMatchSingleSample) {
    const ModelConfig c = toy(6, 3, 8, 2);
    Rng rng(12);
    const ParameterSet p = init_parameters(c, rng);
    const Tensor x = support::binary_batch(1, 6, rng), eps = standard_normal(rng, 1, 3);
    Tensor xs(Shape{4, 6}), es(Shape{4, 3});
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t j = 0; j < 6; ++j) xs.at(r, j) = x[j];
        for (std::size_t j = 0; j < 3; ++j) es.at(r, j) = eps[j];
    }
    const BatchObjective b = batch_objective(c, p, xs, es, 0.7);
    const ElboBreakdown one = evaluate_elbo(c, p, x, eps, 0.7).front();
    EXPECT_NEAR(b.mean.elbo, one.elbo, 1e-12);
    EXPECT_NEAR(b.mean.re, one.re, 1e-12);
    EXPECT_NEAR(b.mean.kl, one.kl, 1e-12);
}

TEST(BatchObjective, EmptyBatchThrows) {
    const ModelConfig c = toy(6, 3, 8, 0);
    Rng rng(13);
    EXPECT_THROW(batch_objective(c, init_parameters(c, rng), Tensor(), Tensor(), 1.0), Error);
}

TEST(BatchObjective, GradientsMatchFiniteDifferences) {
    Rng rng(14);
    for (auto kind : {LikelihoodKind::bernoulli, LikelihoodKind::bounded_gaussian}) {
        for (std::size_t T : {0u, 1u, 2u}) {
            const ModelConfig c = toy(2, 2, 3, T, kind);
            const ParameterSet p = support::small_parameters(c, rng);
            const Tensor x = kind == LikelihoodKind::bernoulli ? support::binary_batch(2, 2, rng)
                                                               : support::uniform_tensor(Shape{2, 2}, rng, 0, 1);
            const auto r = support::check_elbo_gradients(c, p, x, standard_normal(rng, 2, 2), 0.6);
            EXPECT_EQ(r.failed, 0u) << likelihood_name(kind) << " T=" << T << " worst " << r.worst_name << " rel "
                                    << r.worst_rel;
        }
    }
}

TEST(BatchObjective, RngOverloadDrawsOneRowPerDatum) {
    const ModelConfig c = toy(6, 3, 8, 1);
    Rng rng(15);
    const ParameterSet p = init_parameters(c, rng);
    const Tensor x = support::binary_batch(5, 6, rng);
    Rng a(99), b(99);
    const BatchObjective viaRng = batch_objective(c, p, x, a, 1.0);
    const BatchObjective viaEps = batch_objective(c, p, x, standard_normal(b, 5, 3), 1.0);
    EXPECT_EQ(viaRng.mean.elbo, viaEps.mean.elbo);
}

TEST(ParameterCount, FlowAddsTTimesMHeadOutputs) {
    const ModelConfig base = toy(784, 40, 300, 0);
    const std::size_t vanilla = count_parameters(base).encoder_head_outputs;
    EXPECT_EQ(vanilla, 80u);
    for (std::size_t T : {1u, 10u, 20u}) {
        ModelConfig c = base;
        c.flow_length = T;
        EXPECT_EQ(count_parameters(c).encoder_head_outputs - vanilla, T * 40);
    }
}

TEST(ParameterCount, LayoutAndTotals) {
    const ModelConfig c = toy(784, 40, 300, 1);
    Rng rng(16);
    const ParameterSet p = init_parameters(c, rng);
    EXPECT_EQ(p.get("enc.l1.W").shape(), (Shape{784, 300}));
    EXPECT_EQ(p.get("enc.v1.W").shape(), (Shape{300, 40}));
    EXPECT_EQ(p.get("dec.mean.W").shape(), (Shape{300, 784}));
    EXPECT_FALSE(p.contains("dec.logvar"));
    EXPECT_EQ(count_parameters(c).total, p.count());
    for (const auto& [name, t] : p) {
        if (name.ends_with(".b") || name.ends_with(".c")) {
            for (double x : t.data()) EXPECT_EQ(x, 0.0) << name;
        }
    }
}
