#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hhflow/data.hpp"
#include "hhflow/distributions.hpp"
#include "hhflow/model.hpp"

namespace hhflow {

enum class DatasetKind { mnist, patches };

std::string_view dataset_name(DatasetKind kind);
DatasetKind parse_dataset(std::string_view name);

inline constexpr std::uint32_t kRunConfigVersion = 1;

/// Everything that determines a training run. Serialized as flat
/// `key = value` lines; `format_version` must come first.
struct RunConfig {
    DatasetKind dataset = DatasetKind::mnist;
    /// MNIST: directory with the four IDX files. Patches: image directory.
    std::string data_dir = "data/mnist-subset";
    /// MNIST only: images carved from the end of the shuffled training file.
    std::size_t validation_count = 10000;
    /// Keep only the first n training items (0 keeps all).
    std::size_t train_limit = 0;
    /// Patches only: "train=a,b;validation=c;test=d".
    std::string patient_splits;

    std::size_t latent_dim = 40;
    std::size_t hidden = 300;
    std::size_t flow_length = 0;
    /// Unset picks bernoulli for MNIST and bounded-gaussian for patches.
    std::optional<LikelihoodKind> likelihood;

    /// Fixed learning rate; 0 selects one from `lr_grid` by a probe run.
    double lr = 0.0;
    std::vector<double> lr_grid = {1e-3, 3e-4, 1e-4};
    std::uint32_t lr_probe_epochs = 5;

    std::size_t batch_size = 100;
    std::uint32_t max_epochs = 5000;
    std::uint32_t warmup_epochs = 200;
    std::uint32_t lookahead = 100;
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
    /// Write last.ckpt every n epochs (0: only when training ends).
    std::uint32_t checkpoint_every = 0;

    bool operator==(const RunConfig&) const = default;
};

std::string serialize_config(const RunConfig& config);
/// Unknown keys, malformed values and missing/unsupported versions throw.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// Throws with a description of the first invalid field.
void validate_config(const RunConfig& config);

LikelihoodKind resolved_likelihood(const RunConfig& config);
ModelConfig model_config(const RunConfig& config, std::size_t input_dim);
std::map<std::string, Split> parse_patient_splits(std::string_view text);

}  // namespace hhflow
