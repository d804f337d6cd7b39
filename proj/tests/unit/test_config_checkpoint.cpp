#include <gtest/gtest.h>

#include "hhflow/checkpoint.hpp"
#include "support/checks.hpp"
#include "support/fixtures.hpp"

using namespace hhflow;

TEST(Config, RoundTripsLosslessly) {
    RunConfig c;
    c.dataset = DatasetKind::patches;
    c.data_dir = "/data/tissue";
    c.patient_splits = "train=a,b;validation=c;test=d";
    c.flow_length = 10;
    c.likelihood = LikelihoodKind::bounded_gaussian;
    c.lr = 3e-4;
    c.lr_grid = {0.1, 1.0 / 3.0};
    c.seed = 18446744073709551615ull;
    c.out_dir = "runs/x y";
    EXPECT_EQ(parse_config(serialize_config(c)), c);
    EXPECT_EQ(parse_config(serialize_config(RunConfig{})), RunConfig{});
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(parse_config("dataset = mnist\n"), Error);
    EXPECT_THROW(parse_config("format_version = 2\n"), Error);
    EXPECT_THROW(parse_config("format_version = 1\nbogus = 3\n"), Error);
    EXPECT_THROW(parse_config("format_version = 1\nseed = 1\nseed = 2\n"), Error);
    EXPECT_THROW(parse_config("format_version = 1\nhidden = many\n"), Error);
    EXPECT_THROW(parse_config("format_version = 1\nlikelihood = poisson\n"), Error);
    const RunConfig c = parse_config("# comment\nformat_version = 1\n\nhidden = 64\n");
    EXPECT_EQ(c.hidden, 64u);
}

TEST(Config, Validation) {
    RunConfig c;
    EXPECT_NO_THROW(validate_config(c));
    c.batch_size = 0;
    EXPECT_THROW(validate_config(c), Error);
    c = RunConfig{};
    c.lr = 0.0;
    c.lr_grid.clear();
    EXPECT_THROW(validate_config(c), Error);
    c = RunConfig{};
    c.dataset = DatasetKind::patches;
    EXPECT_THROW(validate_config(c), Error);
    c.patient_splits = "train=a;validation=b;test=c";
    EXPECT_NO_THROW(validate_config(c));
    EXPECT_EQ(resolved_likelihood(c), LikelihoodKind::bounded_gaussian);
    EXPECT_EQ(resolved_likelihood(RunConfig{}), LikelihoodKind::bernoulli);
}

TEST(Config, PatientSplits) {
    const auto m = parse_patient_splits("train=1,2, 3;validation=4;test=5,6");
    EXPECT_EQ(m.size(), 6u);
    EXPECT_EQ(m.at("3"), Split::train);
    EXPECT_EQ(m.at("6"), Split::test);
    EXPECT_THROW(parse_patient_splits("train=1;test=1"), Error);
    EXPECT_THROW(parse_patient_splits("holdout=1"), Error);
}

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.config.flow_length = 2;
    c.config.seed = 42;
    c.epoch = 7;
    ModelConfig m;
    m.input_dim = 5;
    m.latent_dim = 3;
    m.hidden = 4;
    m.flow_length = 2;
    Rng rng(1);
    c.params = init_parameters(m, rng);
    c.adam = make_adam_state(c.params, 1e-3);
    c.adam.step = 12;
    for (auto& [name, t] : c.adam.v)
        for (double& x : t.data()) x = 0.25;
    c.early_stop.best_validation_elbo = -123.456;
    c.early_stop.best_epoch = 5;
    c.early_stop.epochs_since_improvement = 2;
    c.early_stop.best_parameters = c.params;
    Rng s = make_stream(42, "eps");
    s.discard(17);
    c.rng_states["eps"] = serialize_rng(s);
    return c;
}

}  // namespace

TEST(Checkpoint, ReserializationIsByteIdentical) {
    const Checkpoint c = sample_checkpoint();
    const std::vector<char> bytes = serialize_checkpoint(c);
    const Checkpoint back = parse_checkpoint(bytes);
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    Rng restored = deserialize_rng(back.rng_states.at("eps"));
    Rng expect = make_stream(42, "eps");
    expect.discard(17);
    EXPECT_EQ(restored(), expect());
}

TEST(Checkpoint, FileRoundTrip) {
    const auto dir = support::scratch_dir("ckpt");
    const Checkpoint c = sample_checkpoint();
    save_checkpoint(dir / "a.ckpt", c);
    EXPECT_EQ(load_checkpoint(dir / "a.ckpt"), c);
    EXPECT_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
}

TEST(Checkpoint, CorruptionIsReported) {
    std::vector<char> bytes = serialize_checkpoint(sample_checkpoint());
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(parse_checkpoint(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    try {
        parse_checkpoint(bad_version);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(parse_checkpoint(truncated), FormatError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(parse_checkpoint(trailing), FormatError);
    EXPECT_THROW(parse_checkpoint({}), FormatError);
}
