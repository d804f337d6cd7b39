#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hhflow/checkpoint.hpp"
#include "hhflow/config.hpp"
#include "hhflow/data.hpp"
#include "hhflow/model.hpp"

namespace hhflow {

/// One line of metrics.jsonl. Wall-clock time goes to timing.jsonl instead so
/// that the metrics stream is a pure function of (build, config, seed).
struct MetricsRecord {
    std::uint32_t epoch = 0;
    Split split = Split::train;
    double elbo = 0.0;
    double re = 0.0;
    double kl = 0.0;
    double beta = 1.0;

    bool operator==(const MetricsRecord&) const = default;
};

std::string format_metrics(const MetricsRecord& record);
MetricsRecord parse_metrics(const std::string& line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// Fixed seed for evaluation binarization and noise, shared by every run so
/// that models are scored on identical binarized inputs.
inline constexpr std::uint64_t kEvalSeed = 0x5eed;

DatasetSplits load_datasets(const RunConfig& config);

struct EvalReport {
    Split split = Split::test;
    std::size_t count = 0;
    std::size_t samples_per_datum = 1;
    double elbo = 0.0, elbo_se = 0.0;
    double re = 0.0, re_se = 0.0;
    double kl = 0.0, kl_se = 0.0;
};

/// Mean single-sample ELBO (beta = 1) over `dataset`; each datum's value is
/// the average of `samples` independent draws. Bernoulli models see a
/// binarization drawn from kEvalSeed.
EvalReport evaluate(const ModelConfig& model, const ParameterSet& params, const ImageDataset& dataset,
                    std::size_t samples = 1, std::size_t batch_size = 500);

std::string format_eval_report(const EvalReport& report);

struct TrainOptions {
    /// Continue from this checkpoint instead of initializing.
    std::optional<std::filesystem::path> resume;
    /// Resume only: output directory (default: the checkpoint's directory)
    /// and a new epoch budget.
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint32_t> max_epochs;
    /// Write last.ckpt and return after this epoch unless training ended.
    std::optional<std::uint32_t> stop_at_epoch;
    /// Per-epoch progress lines; null for silence.
    std::ostream* log = nullptr;
};

struct TrainResult {
    std::uint32_t epochs = 0;
    std::uint32_t best_epoch = 0;
    double best_validation_elbo = 0.0;
    double lr = 0.0;
    ModelConfig model;
    ParameterSet best_parameters;
    std::filesystem::path metrics_path;
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
};

/// Full training loop: shuffle, binarize (MNIST), batch objective, Adam,
/// per-epoch validation, warm-up and early stopping. Writes metrics.jsonl,
/// timing.jsonl, config.txt, best.ckpt and last.ckpt into config.out_dir.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// Same loop on already-loaded data. With options.resume set, `config` is
/// ignored in favour of the checkpoint's.
TrainResult train_on(const RunConfig& config, const DatasetSplits& data, const TrainOptions& options = {});

struct FlowInspection {
    std::vector<double> mu;
    std::vector<double> sigma2;
    std::vector<std::vector<double>> vectors;
    /// Row-major M x M matrix U diag(sigma2) U^T.
    std::vector<double> covariance;
    /// Ascending.
    std::vector<double> eigenvalues;
};

FlowInspection inspect_flow(const ModelConfig& model, const ParameterSet& params, std::span<const double> x);
std::string format_flow_inspection(const FlowInspection& inspection);

/// ELBO / RE / KL curves per split as a standalone SVG document.
std::string render_metrics_svg(const std::vector<MetricsRecord>& records);

}  // namespace hhflow
