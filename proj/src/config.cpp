#include "hhflow/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace hhflow {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || end != value.data() + value.size())
        throw Error("config: invalid value '" + value + "' for " + key);
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::string_view dataset_name(DatasetKind kind) { return kind == DatasetKind::mnist ? "mnist" : "patches"; }

DatasetKind parse_dataset(std::string_view name) {
    if (name == "mnist") return DatasetKind::mnist;
    if (name == "patches") return DatasetKind::patches;
    throw Error("unknown dataset: " + std::string(name));
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "format_version = " << kRunConfigVersion << "\n";
    os << "dataset = " << dataset_name(c.dataset) << "\n";
    os << "data_dir = " << c.data_dir << "\n";
    os << "validation_count = " << c.validation_count << "\n";
    os << "train_limit = " << c.train_limit << "\n";
    os << "patient_splits = " << c.patient_splits << "\n";
    os << "latent_dim = " << c.latent_dim << "\n";
    os << "hidden = " << c.hidden << "\n";
    os << "flow_length = " << c.flow_length << "\n";
    os << "likelihood = " << (c.likelihood ? likelihood_name(*c.likelihood) : "auto") << "\n";
    os << "lr = " << format_double(c.lr) << "\n";
    os << "lr_grid = ";
    for (std::size_t i = 0; i < c.lr_grid.size(); ++i) os << (i ? "," : "") << format_double(c.lr_grid[i]);
    os << "\n";
    os << "lr_probe_epochs = " << c.lr_probe_epochs << "\n";
    os << "batch_size = " << c.batch_size << "\n";
    os << "max_epochs = " << c.max_epochs << "\n";
    os << "warmup_epochs = " << c.warmup_epochs << "\n";
    os << "lookahead = " << c.lookahead << "\n";
    os << "seed = " << c.seed << "\n";
    os << "out_dir = " << c.out_dir << "\n";
    os << "checkpoint_every = " << c.checkpoint_every << "\n";
    return os.str();
}

RunConfig parse_config(std::string_view text) {
    RunConfig c;
    bool saw_version = false;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (!seen.insert(key).second) throw Error("config: duplicate key " + key);
        if (!saw_version && key != "format_version") throw Error("config: format_version must be the first key");

        if (key == "format_version") {
            const auto v = parse_number<std::uint32_t>(key, value);
            if (v != kRunConfigVersion) throw Error("config: unsupported format_version " + value);
            saw_version = true;
        } else if (key == "dataset") {
            c.dataset = parse_dataset(value);
        } else if (key == "data_dir") {
            c.data_dir = value;
        } else if (key == "validation_count") {
            c.validation_count = parse_number<std::size_t>(key, value);
        } else if (key == "train_limit") {
            c.train_limit = parse_number<std::size_t>(key, value);
        } else if (key == "patient_splits") {
            c.patient_splits = value;
        } else if (key == "latent_dim") {
            c.latent_dim = parse_number<std::size_t>(key, value);
        } else if (key == "hidden") {
            c.hidden = parse_number<std::size_t>(key, value);
        } else if (key == "flow_length") {
            c.flow_length = parse_number<std::size_t>(key, value);
        } else if (key == "likelihood") {
            if (value == "auto") {
                c.likelihood.reset();
            } else {
                c.likelihood = parse_likelihood(value);
            }
        } else if (key == "lr") {
            c.lr = parse_number<double>(key, value);
        } else if (key == "lr_grid") {
            c.lr_grid.clear();
            if (!value.empty()) {
                for (const auto& item : split(value, ',')) c.lr_grid.push_back(parse_number<double>(key, item));
            }
        } else if (key == "lr_probe_epochs") {
            c.lr_probe_epochs = parse_number<std::uint32_t>(key, value);
        } else if (key == "batch_size") {
            c.batch_size = parse_number<std::size_t>(key, value);
        } else if (key == "max_epochs") {
            c.max_epochs = parse_number<std::uint32_t>(key, value);
        } else if (key == "warmup_epochs") {
            c.warmup_epochs = parse_number<std::uint32_t>(key, value);
        } else if (key == "lookahead") {
            c.lookahead = parse_number<std::uint32_t>(key, value);
        } else if (key == "seed") {
            c.seed = parse_number<std::uint64_t>(key, value);
        } else if (key == "out_dir") {
            c.out_dir = value;
        } else if (key == "checkpoint_every") {
            c.checkpoint_every = parse_number<std::uint32_t>(key, value);
        } else {
            throw Error("config: unknown key " + key);
        }
    }
    if (!saw_version) throw Error("config: missing format_version");
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config(os.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write config " + path.string());
    out << serialize_config(config);
}

void validate_config(const RunConfig& c) {
    if (c.latent_dim == 0) throw Error("config: latent_dim must be positive");
    if (c.hidden == 0) throw Error("config: hidden must be positive");
    if (c.batch_size == 0) throw Error("config: batch_size must be positive");
    if (c.max_epochs == 0) throw Error("config: max_epochs must be positive");
    if (c.lookahead == 0) throw Error("config: lookahead must be positive");
    if (c.lr < 0.0) throw Error("config: lr must be non-negative");
    if (c.lr == 0.0) {
        if (c.lr_grid.empty()) throw Error("config: lr is 0 and lr_grid is empty");
        if (c.lr_probe_epochs == 0) throw Error("config: lr_probe_epochs must be positive");
        for (double lr : c.lr_grid) {
            if (!(lr > 0.0)) throw Error("config: lr_grid entries must be positive");
        }
    }
    if (c.data_dir.empty()) throw Error("config: data_dir is required");
    if (c.dataset == DatasetKind::patches) parse_patient_splits(c.patient_splits);
}

LikelihoodKind resolved_likelihood(const RunConfig& c) {
    if (c.likelihood) return *c.likelihood;
    return c.dataset == DatasetKind::mnist ? LikelihoodKind::bernoulli : LikelihoodKind::bounded_gaussian;
}

ModelConfig model_config(const RunConfig& c, std::size_t input_dim) {
    ModelConfig m;
    m.input_dim = input_dim;
    m.latent_dim = c.latent_dim;
    m.hidden = c.hidden;
    m.flow_length = c.flow_length;
    m.likelihood = resolved_likelihood(c);
    return m;
}

std::map<std::string, Split> parse_patient_splits(std::string_view text) {
    std::map<std::string, Split> out;
    if (trim(text).empty()) throw Error("config: patient_splits is required for the patches dataset");
    for (const auto& group : split(text, ';')) {
        if (group.empty()) continue;
        const auto eq = group.find('=');
        if (eq == std::string::npos) throw Error("patient_splits: expected split=id,id,... in '" + group + "'");
        const Split s = parse_split(trim(std::string_view(group).substr(0, eq)));
        for (const auto& id : split(std::string_view(group).substr(eq + 1), ',')) {
            if (id.empty()) continue;
            if (!out.emplace(id, s).second) throw Error("patient_splits: patient " + id + " assigned twice");
        }
    }
    return out;
}

}  // namespace hhflow
