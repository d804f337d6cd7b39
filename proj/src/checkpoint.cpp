#include "hhflow/checkpoint.hpp"

#include "hhflow/binary_io.hpp"

namespace hhflow {

namespace {

constexpr std::string_view kMagic = "HHFC";

void write_tensor(BinaryWriter& w, const std::string& name, const Tensor& t) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape().rank()));
    for (std::size_t d : t.shape().dims()) w.u64(d);
    for (double x : t.data()) w.f64(x);
}

}  // namespace

std::vector<char> serialize_checkpoint(const Checkpoint& c) {
    BinaryWriter w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    w.str(serialize_config(c.config));
    w.u32(c.epoch);
    w.u32(c.finished ? 1 : 0);

    w.f64(c.early_stop.best_validation_elbo);
    w.u32(c.early_stop.best_epoch);
    w.u32(c.early_stop.epochs_since_improvement);
    w.u32(c.early_stop.lookahead);
    w.u32(c.early_stop.max_epochs);

    w.u64(c.adam.step);
    w.f64(c.adam.lr);
    w.f64(c.adam.beta1);
    w.f64(c.adam.beta2);
    w.f64(c.adam.eps_hat);

    w.u32(static_cast<std::uint32_t>(c.rng_states.size()));
    for (const auto& [name, state] : c.rng_states) {
        w.str(name);
        w.str(state);
    }

    const std::size_t n = c.params.size() + c.adam.m.size() + c.adam.v.size() + c.early_stop.best_parameters.size();
    w.u32(static_cast<std::uint32_t>(n));
    for (const auto& [name, t] : c.params) write_tensor(w, "param/" + name, t);
    for (const auto& [name, t] : c.adam.m) write_tensor(w, "adam.m/" + name, t);
    for (const auto& [name, t] : c.adam.v) write_tensor(w, "adam.v/" + name, t);
    for (const auto& [name, t] : c.early_stop.best_parameters) write_tensor(w, "best/" + name, t);
    return w.buffer();
}

Checkpoint parse_checkpoint(const std::vector<char>& bytes, const std::string& what) {
    BinaryReader r(bytes, what);
    if (bytes.size() < 4 || r.bytes(4) != kMagic) throw FormatError(what + ": bad checkpoint magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError(what + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.config = parse_config(r.str());
    c.epoch = r.u32();
    c.finished = r.u32() != 0;

    c.early_stop.best_validation_elbo = r.f64();
    c.early_stop.best_epoch = r.u32();
    c.early_stop.epochs_since_improvement = r.u32();
    c.early_stop.lookahead = r.u32();
    c.early_stop.max_epochs = r.u32();

    c.adam.step = r.u64();
    c.adam.lr = r.f64();
    c.adam.beta1 = r.f64();
    c.adam.beta2 = r.f64();
    c.adam.eps_hat = r.f64();

    const std::uint32_t n_rng = r.u32();
    for (std::uint32_t i = 0; i < n_rng; ++i) {
        std::string name = r.str();
        c.rng_states[name] = r.str();
    }

    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 2) throw FormatError(what + ": bad tensor rank for " + name);
        std::vector<std::size_t> dims(rank);
        std::size_t numel = 1;
        for (auto& d : dims) {
            d = r.u64();
            if (d == 0) throw FormatError(what + ": zero extent for " + name);
            numel *= d;
        }
        if (numel * 8 > r.remaining()) throw FormatError(what + ": truncated payload for " + name);
        std::vector<double> data(numel);
        for (double& x : data) x = r.f64();
        Tensor t(Shape(std::move(dims)), std::move(data));

        const auto slash = name.find('/');
        const std::string group = name.substr(0, slash);
        const std::string key = slash == std::string::npos ? std::string() : name.substr(slash + 1);
        if (group == "param") {
            c.params.add(key, std::move(t));
        } else if (group == "adam.m") {
            c.adam.m.emplace(key, std::move(t));
        } else if (group == "adam.v") {
            c.adam.v.emplace(key, std::move(t));
        } else if (group == "best") {
            c.early_stop.best_parameters.add(key, std::move(t));
        } else {
            throw FormatError(what + ": unknown record " + name);
        }
    }
    if (!r.at_end()) throw FormatError(what + ": trailing bytes");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    // Atomic replace via rename.
    const std::filesystem::path tmp = path.string() + ".tmp";
    write_file(tmp.string(), serialize_checkpoint(ckpt));
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path.string()), path.string());
}

}  // namespace hhflow
