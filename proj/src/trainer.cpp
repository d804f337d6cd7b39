#include "hhflow/trainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hhflow/flow_oracle.hpp"
#include "hhflow/optim.hpp"

namespace hhflow {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------- metrics

std::string format_metrics(const MetricsRecord& r) {
    ojson j;
    j["epoch"] = r.epoch;
    j["split"] = std::string(split_name(r.split));
    j["elbo"] = r.elbo;
    j["re"] = r.re;
    j["kl"] = r.kl;
    j["beta"] = r.beta;
    return j.dump();
}

MetricsRecord parse_metrics(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        MetricsRecord r;
        r.epoch = j.at("epoch").get<std::uint32_t>();
        r.split = parse_split(j.at("split").get<std::string>());
        r.elbo = j.at("elbo").get<double>();
        r.re = j.at("re").get<double>();
        r.kl = j.at("kl").get<double>();
        r.beta = j.at("beta").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("metrics record: " + std::string(e.what()));
    }
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open metrics " + path.string());
    std::vector<MetricsRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(parse_metrics(line));
    }
    return out;
}

// ---------------------------------------------------------------- data

DatasetSplits load_datasets(const RunConfig& config) {
    DatasetSplits data;
    if (config.dataset == DatasetKind::mnist) {
        data = load_mnist(config.data_dir, config.validation_count, config.seed);
    } else {
        const PatchCorpus corpus = load_patch_corpus(config.data_dir);
        data = split_by_patient(corpus, parse_patient_splits(config.patient_splits));
    }
    if (config.train_limit > 0 && config.train_limit < data.train.size()) data.train.truncate(config.train_limit);
    return data;
}

// ---------------------------------------------------------------- evaluation

namespace {

struct Moments {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;

    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double se() const {
        if (n < 2) return 0.0;
        const double m = mean();
        const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
        return std::sqrt(var / static_cast<double>(n));
    }
};

}  // namespace

EvalReport evaluate(const ModelConfig& model, const ParameterSet& params, const ImageDataset& dataset,
                    std::size_t samples, std::size_t batch_size) {
    if (samples == 0) throw Error("evaluate: samples per datum must be positive");
    if (batch_size == 0) throw Error("evaluate: batch size must be positive");
    if (dataset.size() == 0) throw Error("evaluate: empty " + std::string(split_name(dataset.split)) + " split");
    if (dataset.dim != model.input_dim)
        throw ShapeError("evaluate: dataset dim " + std::to_string(dataset.dim) + " does not match model input " +
                         std::to_string(model.input_dim));

    Rng binarize = make_stream(kEvalSeed, "binarize");
    Rng eps_rng = make_stream(kEvalSeed, "eps");
    Moments elbo, re, kl;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        const std::size_t end = std::min(dataset.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = dataset.batch(idx);
        if (model.likelihood == LikelihoodKind::bernoulli) x = dynamic_binarize(x, binarize);

        std::vector<ElboBreakdown> acc(idx.size());
        for (std::size_t s = 0; s < samples; ++s) {
            const Tensor eps = standard_normal(eps_rng, idx.size(), model.latent_dim);
            const auto rows = evaluate_elbo(model, params, x, eps, 1.0);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                acc[i].re += rows[i].re;
                acc[i].kl += rows[i].kl;
            }
        }
        const double k = static_cast<double>(samples);
        for (const auto& a : acc) {
            re.add(a.re / k);
            kl.add(a.kl / k);
            elbo.add(a.re / k - a.kl / k);
        }
    }

    EvalReport r;
    r.split = dataset.split;
    r.count = dataset.size();
    r.samples_per_datum = samples;
    r.elbo = elbo.mean();
    r.elbo_se = elbo.se();
    r.re = re.mean();
    r.re_se = re.se();
    r.kl = kl.mean();
    r.kl_se = kl.se();
    return r;
}

std::string format_eval_report(const EvalReport& r) {
    ojson j;
    j["split"] = std::string(split_name(r.split));
    j["count"] = r.count;
    j["samples"] = r.samples_per_datum;
    j["elbo"] = r.elbo;
    j["elbo_se"] = r.elbo_se;
    j["re"] = r.re;
    j["re_se"] = r.re_se;
    j["kl"] = r.kl;
    j["kl_se"] = r.kl_se;
    return j.dump();
}

// ---------------------------------------------------------------- training

namespace {

constexpr const char* kStreams[] = {"shuffle", "binarize", "eps"};

struct Streams {
    Rng shuffle, binarize, eps;

    std::map<std::string, std::string> save() const {
        return {{"shuffle", serialize_rng(shuffle)}, {"binarize", serialize_rng(binarize)}, {"eps", serialize_rng(eps)}};
    }
};

Streams fresh_streams(std::uint64_t seed) {
    return {make_stream(seed, "shuffle"), make_stream(seed, "binarize"), make_stream(seed, "eps")};
}

Streams restore_streams(const std::map<std::string, std::string>& states) {
    for (const char* name : kStreams) {
        if (!states.count(name)) throw FormatError(std::string("checkpoint lacks rng stream ") + name);
    }
    return {deserialize_rng(states.at("shuffle")), deserialize_rng(states.at("binarize")),
            deserialize_rng(states.at("eps"))};
}

struct EpochStats {
    double re = 0.0, kl = 0.0;
};

EpochStats run_epoch(const ModelConfig& model, const RunConfig& config, const ImageDataset& train, double beta,
                     ParameterSet& params, AdamState& adam, Streams& streams) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), streams.shuffle);

    double re = 0.0, kl = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        Tensor x = train.batch(idx);
        if (model.likelihood == LikelihoodKind::bernoulli) x = dynamic_binarize(x, streams.binarize);
        const BatchObjective obj = batch_objective(model, params, x, streams.eps, beta);
        adam_step(params, obj.gradients, adam);
        const double b = static_cast<double>(idx.size());
        re += obj.mean.re * b;
        kl += obj.mean.kl * b;
    }
    const double n = static_cast<double>(train.size());
    return {re / n, kl / n};
}

double select_learning_rate(const RunConfig& config, const DatasetSplits& data, std::ostream* log) {
    double best_lr = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (double lr : config.lr_grid) {
        RunConfig probe = config;
        probe.lr = lr;
        probe.max_epochs = config.lr_probe_epochs;
        const ModelConfig model = model_config(probe, data.train.dim);
        Rng init = make_stream(probe.seed, "init");
        ParameterSet params = init_parameters(model, init);
        AdamState adam = make_adam_state(params, lr);
        Streams streams = fresh_streams(probe.seed);
        double val = -std::numeric_limits<double>::infinity();
        for (std::uint32_t epoch = 1; epoch <= probe.max_epochs; ++epoch) {
            run_epoch(model, probe, data.train, warmup_beta(epoch, probe.warmup_epochs), params, adam, streams);
            val = std::max(val, evaluate(model, params, data.validation).elbo);
        }
        if (log) *log << "lr probe " << lr << ": validation elbo " << val << "\n";
        if (val > best) {
            best = val;
            best_lr = lr;
        }
    }
    return best_lr;
}

// Keep only records up to `epoch` so a resumed run rewrites the same stream.
void truncate_metrics(const fs::path& path, std::uint32_t epoch) {
    if (!fs::exists(path)) return;
    std::vector<std::string> keep;
    {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            if (j.at("epoch").get<std::uint32_t>() <= epoch) keep.push_back(line);
        }
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

}  // namespace

TrainResult train(const RunConfig& config, const TrainOptions& options) {
    RunConfig effective = config;
    if (options.resume) effective = load_checkpoint(*options.resume).config;
    validate_config(effective);
    const DatasetSplits data = load_datasets(effective);
    return train_on(effective, data, options);
}

TrainResult train_on(const RunConfig& requested, const DatasetSplits& data, const TrainOptions& options) {
    Checkpoint state;
    if (options.resume) {
        state = load_checkpoint(*options.resume);
        if (state.finished) throw Error("checkpoint " + options.resume->string() + " is from a finished run");
        state.config.out_dir = options.out_dir ? options.out_dir->string() : options.resume->parent_path().string();
        if (options.max_epochs) state.config.max_epochs = *options.max_epochs;
        state.early_stop.max_epochs = state.config.max_epochs;
    } else {
        state.config = requested;
        validate_config(state.config);
    }
    const fs::path out_dir = state.config.out_dir.empty() ? fs::path(".") : fs::path(state.config.out_dir);
    fs::create_directories(out_dir);
    const fs::path metrics_path = out_dir / "metrics.jsonl";
    const fs::path timing_path = out_dir / "timing.jsonl";
    const fs::path best_path = out_dir / "best.ckpt";
    const fs::path last_path = out_dir / "last.ckpt";

    Streams streams;
    if (options.resume) {
        streams = restore_streams(state.rng_states);
        truncate_metrics(metrics_path, state.epoch);
        truncate_metrics(timing_path, state.epoch);
    } else {
        if (state.config.lr == 0.0) state.config.lr = select_learning_rate(state.config, data, options.log);
        const ModelConfig model = model_config(state.config, data.train.dim);
        Rng init = make_stream(state.config.seed, "init");
        state.params = init_parameters(model, init);
        state.adam = make_adam_state(state.params, state.config.lr);
        state.early_stop.lookahead = state.config.lookahead;
        state.early_stop.max_epochs = state.config.max_epochs;
        streams = fresh_streams(state.config.seed);
        fs::remove(metrics_path);
        fs::remove(timing_path);
        save_config(out_dir / "config.txt", state.config);
    }
    const RunConfig& config = state.config;
    const ModelConfig model = model_config(config, data.train.dim);
    if (data.train.size() == 0) throw Error("training split is empty");
    if (data.validation.size() == 0) throw Error("validation split is empty");

    std::ofstream metrics(metrics_path, std::ios::app);
    std::ofstream timing(timing_path, std::ios::app);
    if (!metrics || !timing) throw Error("cannot write metrics into " + out_dir.string());

    auto write_last = [&] {
        state.rng_states = streams.save();
        save_checkpoint(last_path, state);
    };

    bool stop = state.epoch >= config.max_epochs;
    while (!stop) {
        const std::uint32_t epoch = state.epoch + 1;
        const auto t0 = std::chrono::steady_clock::now();
        const double beta = warmup_beta(epoch, config.warmup_epochs);
        const EpochStats st = run_epoch(model, config, data.train, beta, state.params, state.adam, streams);
        const EvalReport val = evaluate(model, state.params, data.validation);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        metrics << format_metrics({epoch, Split::train, st.re - beta * st.kl, st.re, st.kl, beta}) << "\n";
        metrics << format_metrics({epoch, Split::validation, val.re - val.kl, val.re, val.kl, 1.0}) << "\n";
        metrics.flush();
        timing << ojson{{"epoch", epoch}, {"seconds", seconds}}.dump() << "\n";
        timing.flush();

        stop = early_stop_update(state.early_stop, val.elbo, epoch, state.params) == StopDecision::stop;
        state.epoch = epoch;
        if (options.log) {
            *options.log << "epoch " << epoch << "  beta " << beta << "  train " << st.re - beta * st.kl
                         << "  validation " << val.elbo << "  best " << state.early_stop.best_validation_elbo
                         << " @" << state.early_stop.best_epoch << "  " << std::fixed << std::setprecision(1)
                         << seconds << "s" << std::defaultfloat << std::setprecision(6) << "\n";
        }
        const bool pause = options.stop_at_epoch && epoch >= *options.stop_at_epoch && !stop;
        if (pause) {
            write_last();
            break;
        }
        if (!stop && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) write_last();
    }

    TrainResult result;
    result.epochs = state.epoch;
    result.best_epoch = state.early_stop.best_epoch;
    result.best_validation_elbo = state.early_stop.best_validation_elbo;
    result.lr = config.lr;
    result.model = model;
    result.metrics_path = metrics_path;
    result.last_checkpoint = last_path;
    if (!stop) return result;

    state.finished = true;
    write_last();
    Checkpoint best = state;
    best.params = state.early_stop.best_parameters;
    best.epoch = state.early_stop.best_epoch;
    best.early_stop.best_parameters = ParameterSet{};
    best.adam.m.clear();
    best.adam.v.clear();
    save_checkpoint(best_path, best);
    result.best_parameters = std::move(best.params);
    result.best_checkpoint = best_path;
    return result;
}

// ---------------------------------------------------------------- flow inspection

FlowInspection inspect_flow(const ModelConfig& model, const ParameterSet& params, std::span<const double> x) {
    if (model.flow_length == 0)
        throw Error("inspect-flow: the checkpoint has no Householder flow (T = 0); its posterior covariance is "
                    "already diagonal");
    if (x.size() != model.input_dim)
        throw ShapeError("inspect-flow: input has " + std::to_string(x.size()) + " values, model expects " +
                         std::to_string(model.input_dim));

    Tape tape;
    const BoundParameters bound = bind_parameters(tape, params);
    const Var xv = tape.constant(Tensor(Shape({1, x.size()}), std::vector<double>(x.begin(), x.end())));
    const EncoderOutput enc = encode(tape, model, bound, xv);
    const std::vector<Var> vs = flow_vectors(tape, model, bound, *enc.v1, model.flow_length);

    FlowInspection out;
    const Tensor& mu = tape.value(enc.posterior.mu);
    const Tensor& lv = tape.value(enc.posterior.log_var);
    out.mu.assign(mu.data().begin(), mu.data().end());
    for (double l : lv.data()) out.sigma2.push_back(std::exp(l));
    for (Var v : vs) {
        const Tensor& t = tape.value(v);
        out.vectors.emplace_back(t.data().begin(), t.data().end());
    }

    const std::size_t m = model.latent_dim;
    oracle::HouseholderVectors usable = out.vectors;
    Eigen::MatrixXd cov;
    if (usable.size() <= m) {
        cov = oracle::covariance_transport_check(out.sigma2, usable);
    } else {
        Eigen::MatrixXd U = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (const auto& v : usable) U = oracle::householder_matrix(v) * U;
        const Eigen::VectorXd s2 = Eigen::Map<const Eigen::VectorXd>(out.sigma2.data(), static_cast<Eigen::Index>(m));
        cov = U * s2.asDiagonal() * U.transpose();
    }
    out.covariance.resize(m * m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c)
            out.covariance[r * m + c] = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    out.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    return out;
}

std::string format_flow_inspection(const FlowInspection& f) {
    ojson j;
    j["mu"] = f.mu;
    j["sigma2"] = f.sigma2;
    j["vectors"] = f.vectors;
    const std::size_t m = f.mu.size();
    ojson rows = ojson::array();
    for (std::size_t r = 0; r < m; ++r)
        rows.push_back(std::vector<double>(f.covariance.begin() + static_cast<std::ptrdiff_t>(r * m),
                                           f.covariance.begin() + static_cast<std::ptrdiff_t>((r + 1) * m)));
    j["covariance"] = rows;
    j["eigenvalues"] = f.eigenvalues;
    return j.dump(2);
}

// ---------------------------------------------------------------- plot

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << x;
    return os.str();
}

std::string label(double x) {
    std::ostringstream os;
    os << std::setprecision(4) << x;
    return os.str();
}

}  // namespace

std::string render_metrics_svg(const std::vector<MetricsRecord>& records) {
    constexpr double kPanelW = 420, kPanelH = 260, kPad = 50;
    const char* titles[] = {"ELBO", "RE", "KL"};
    auto value = [](const MetricsRecord& r, int k) { return k == 0 ? r.elbo : k == 1 ? r.re : r.kl; };
    const std::pair<Split, const char*> series[] = {{Split::train, "#1f77b4"}, {Split::validation, "#d62728"}};

    std::ostringstream svg;
    const double width = 3 * (kPanelW + kPad) + kPad;
    const double height = kPanelH + 2 * kPad + 20;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (int k = 0; k < 3; ++k) {
        const double x0 = kPad + k * (kPanelW + kPad);
        const double y0 = kPad;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::uint32_t emax = 1;
        for (const auto& r : records) {
            lo = std::min(lo, value(r, k));
            hi = std::max(hi, value(r, k));
            emax = std::max(emax, r.epoch);
        }
        if (records.empty()) lo = 0, hi = 1;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
        auto px = [&](double e) { return x0 + (e - 1) / std::max(1.0, double(emax) - 1) * kPanelW; };
        auto py = [&](double v) { return y0 + (hi - v) / (hi - lo) * kPanelH; };

        svg << "<g>\n<text x=\"" << fmt(x0 + kPanelW / 2) << "\" y=\"" << fmt(y0 - 15)
            << "\" text-anchor=\"middle\" font-size=\"14\">" << titles[k] << "</text>\n";
        svg << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(kPanelW) << "\" height=\""
            << fmt(kPanelH) << "\" fill=\"none\" stroke=\"#888\"/>\n";
        svg << "<text x=\"" << fmt(x0 - 4) << "\" y=\"" << fmt(y0 + 4) << "\" text-anchor=\"end\">" << label(hi)
            << "</text>\n";
        svg << "<text x=\"" << fmt(x0 - 4) << "\" y=\"" << fmt(y0 + kPanelH) << "\" text-anchor=\"end\">"
            << label(lo) << "</text>\n";
        svg << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 + kPanelH + 16) << "\">1</text>\n";
        svg << "<text x=\"" << fmt(x0 + kPanelW) << "\" y=\"" << fmt(y0 + kPanelH + 16)
            << "\" text-anchor=\"end\">" << emax << "</text>\n";
        svg << "<text x=\"" << fmt(x0 + kPanelW / 2) << "\" y=\"" << fmt(y0 + kPanelH + 30)
            << "\" text-anchor=\"middle\">epoch</text>\n";
        for (const auto& [split, color] : series) {
            std::ostringstream pts;
            for (const auto& r : records) {
                if (r.split == split) pts << fmt(px(r.epoch)) << "," << fmt(py(value(r, k))) << " ";
            }
            if (pts.str().empty()) continue;
            svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
                << "\"/>\n";
        }
        svg << "</g>\n";
    }
    double lx = kPad;
    for (const auto& [split, color] : series) {
        svg << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(height - 22) << "\" width=\"12\" height=\"12\" fill=\""
            << color << "\"/><text x=\"" << fmt(lx + 16) << "\" y=\"" << fmt(height - 12) << "\">"
            << split_name(split) << "</text>\n";
        lx += 110;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace hhflow
