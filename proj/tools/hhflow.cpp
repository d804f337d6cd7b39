// hhflow: train, evaluate and inspect VAEs with a Householder-flow posterior.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "hhflow/trainer.hpp"

using namespace hhflow;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational auto-encoder with a Householder-flow posterior"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string config_path, resume_path, out_dir, dataset, data_dir;
    std::optional<std::size_t> flow_length;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<std::uint32_t> max_epochs, stop_at;
    bool quiet = false;
    train_cmd->add_option("--config", config_path, "run configuration file");
    train_cmd->add_option("--resume", resume_path, "continue from last.ckpt of an unfinished run");
    train_cmd->add_option("--T", flow_length, "number of Householder reflections");
    train_cmd->add_option("--seed", seed, "global seed");
    train_cmd->add_option("--lr", lr, "learning rate (0 selects from the grid)");
    train_cmd->add_option("--dataset", dataset, "mnist or patches")->check(CLI::IsMember({"mnist", "patches"}));
    train_cmd->add_option("--data-dir", data_dir, "dataset directory");
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--max-epochs", max_epochs, "epoch budget");
    train_cmd->add_option("--stop-at", stop_at, "checkpoint and exit after this epoch");
    train_cmd->add_flag("--quiet", quiet, "no per-epoch log");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one split");
    std::string ckpt_path, split = "test", report_path, eval_data_dir;
    std::size_t samples = 1;
    eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--split", split, "train, validation or test")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    eval_cmd->add_option("--samples", samples, "posterior samples per datum")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--data-dir", eval_data_dir, "dataset directory (default: from the checkpoint)");
    eval_cmd->add_option("--out", report_path, "also write the report here");

    // inspect-flow
    auto* inspect_cmd = app.add_subcommand("inspect-flow", "posterior covariance implied by the flow");
    std::string inspect_ckpt, inspect_split = "test", inspect_out, inspect_data_dir;
    std::size_t index = 0;
    inspect_cmd->add_option("--checkpoint", inspect_ckpt, "checkpoint file")->required();
    inspect_cmd->add_option("--index", index, "item index within the split")->required();
    inspect_cmd->add_option("--split", inspect_split, "train, validation or test")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    inspect_cmd->add_option("--data-dir", inspect_data_dir, "dataset directory (default: from the checkpoint)");
    inspect_cmd->add_option("--out", inspect_out, "also write the report here");

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "render ELBO / RE / KL curves as SVG");
    std::string metrics_path, svg_path;
    plot_cmd->add_option("--metrics", metrics_path, "metrics.jsonl")->required();
    plot_cmd->add_option("--out", svg_path, "SVG file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            TrainOptions options;
            if (!quiet) options.log = &std::cerr;
            options.stop_at_epoch = stop_at;
            RunConfig config;
            if (!resume_path.empty()) {
                if (!config_path.empty() || flow_length || seed || lr || !dataset.empty() || !data_dir.empty())
                    throw Error("--resume takes its configuration from the checkpoint; only --out, --max-epochs "
                                "and --stop-at may be combined with it");
                options.resume = resume_path;
                if (!out_dir.empty()) options.out_dir = out_dir;
                options.max_epochs = max_epochs;
            } else {
                if (!config_path.empty()) config = load_config(config_path);
                if (flow_length) config.flow_length = *flow_length;
                if (seed) config.seed = *seed;
                if (lr) config.lr = *lr;
                if (!dataset.empty()) config.dataset = parse_dataset(dataset);
                if (!data_dir.empty()) config.data_dir = data_dir;
                if (!out_dir.empty()) config.out_dir = out_dir;
                if (max_epochs) config.max_epochs = *max_epochs;
            }
            const TrainResult r = train(config, options);
            std::cout << "epochs " << r.epochs << ", best validation elbo " << r.best_validation_elbo << " at epoch "
                      << r.best_epoch << ", lr " << r.lr << "\n";
            if (!r.best_checkpoint.empty()) std::cout << "best checkpoint " << r.best_checkpoint.string() << "\n";
            else std::cout << "paused; resume with --resume " << r.last_checkpoint.string() << "\n";
        } else if (*eval_cmd) {
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            RunConfig config = ckpt.config;
            if (!eval_data_dir.empty()) config.data_dir = eval_data_dir;
            const DatasetSplits data = load_datasets(config);
            const ImageDataset& ds = data.get(parse_split(split));
            const EvalReport report = evaluate(model_config(config, ds.dim), ckpt.params, ds, samples);
            const std::string text = format_eval_report(report);
            std::cout << text << "\n";
            if (!report_path.empty()) write_text(report_path, text + "\n");
        } else if (*inspect_cmd) {
            const Checkpoint ckpt = load_checkpoint(inspect_ckpt);
            RunConfig config = ckpt.config;
            if (!inspect_data_dir.empty()) config.data_dir = inspect_data_dir;
            const ModelConfig model = model_config(config, ckpt.params.get("dec.mean.b").shape().numel());
            if (model.flow_length == 0) inspect_flow(model, ckpt.params, {});
            const DatasetSplits data = load_datasets(config);
            const ImageDataset& ds = data.get(parse_split(inspect_split));
            if (index >= ds.size())
                throw Error("index " + std::to_string(index) + " out of range for the " + inspect_split + " split (" +
                            std::to_string(ds.size()) + " items)");
            const std::string text = format_flow_inspection(inspect_flow(model, ckpt.params, ds.item(index)));
            std::cout << text << "\n";
            if (!inspect_out.empty()) write_text(inspect_out, text + "\n");
        } else if (*plot_cmd) {
            write_text(svg_path, render_metrics_svg(read_metrics(metrics_path)));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
