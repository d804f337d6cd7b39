#include "hhflow/data.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace hhflow {

namespace fs = std::filesystem;

namespace {

std::uint32_t read_be32(const std::vector<char>& buf, std::size_t offset, const std::string& what) {
    if (buf.size() < offset + 4) throw FormatError(what + ": truncated header");
    std::uint32_t x = 0;
    for (std::size_t i = 0; i < 4; ++i) x = (x << 8) | static_cast<unsigned char>(buf[offset + i]);
    return x;
}

std::string hex(std::uint32_t x) {
    char out[11];
    std::snprintf(out, sizeof out, "0x%08x", x);
    return out;
}

GrayImage read_pgm(const fs::path& path) {
    const std::vector<char> buf = read_file(path.string());
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < buf.size()) {
            if (buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) tok += buf[pos++];
        if (tok.empty()) throw FormatError(path.string() + ": truncated PGM header");
        return tok;
    };
    if (next_token() != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
    GrayImage img;
    img.width = std::stoul(next_token());
    img.height = std::stoul(next_token());
    const unsigned long maxval = std::stoul(next_token());
    if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": only 8-bit PGM is supported");
    ++pos;  // single whitespace after maxval
    const std::size_t n = img.width * img.height;
    if (buf.size() < pos + n) throw FormatError(path.string() + ": truncated PGM pixel data");
    img.pixels.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        img.pixels[i] = static_cast<double>(static_cast<unsigned char>(buf[pos + i])) / static_cast<double>(maxval);
    return img;
}

GrayImage read_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw FormatError(path.string() + ": " + image.message);
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> raw(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
        png_image_free(&image);
        throw FormatError(path.string() + ": " + image.message);
    }
    GrayImage img;
    img.width = image.width;
    img.height = image.height;
    img.pixels.resize(img.width * img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = color ? rgb_to_gray(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) : raw[i] / 255.0;
    }
    return img;
}

}  // namespace

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<char>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for " + path);
}

std::string_view split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    throw Error("unknown split: " + std::string(name));
}

Tensor ImageDataset::batch(std::span<const std::size_t> indices) const {
    Tensor out(Shape{indices.size(), dim});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= size()) throw Error("dataset index out of range");
        auto src = item(indices[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

void ImageDataset::truncate(std::size_t count) {
    if (count >= size()) return;
    pixels.resize(count * dim);
    if (!labels.empty()) labels.resize(count);
    if (!patient_ids.empty()) patient_ids.resize(count);
}

const ImageDataset& DatasetSplits::get(Split s) const {
    switch (s) {
        case Split::train: return train;
        case Split::validation: return validation;
        case Split::test: return test;
    }
    return train;
}

IdxImages read_idx_images(const fs::path& path) {
    const std::string what = path.string();
    const std::vector<char> buf = read_file(what);
    const std::uint32_t magic = read_be32(buf, 0, what);
    if (magic != kIdxImageMagic)
        throw FormatError(what + ": bad IDX image magic " + hex(magic) + " (expected " + hex(kIdxImageMagic) + ")");
    IdxImages out;
    out.count = read_be32(buf, 4, what);
    out.rows = read_be32(buf, 8, what);
    out.cols = read_be32(buf, 12, what);
    const std::size_t n = out.count * out.rows * out.cols;
    if (buf.size() != 16 + n) {
        throw FormatError(what + ": expected " + std::to_string(n) + " pixel bytes, found " +
                          std::to_string(buf.size() < 16 ? 0 : buf.size() - 16));
    }
    out.pixels.assign(buf.begin() + 16, buf.end());
    return out;
}

std::vector<std::uint8_t> read_idx_labels(const fs::path& path) {
    const std::string what = path.string();
    const std::vector<char> buf = read_file(what);
    const std::uint32_t magic = read_be32(buf, 0, what);
    if (magic != kIdxLabelMagic)
        throw FormatError(what + ": bad IDX label magic " + hex(magic) + " (expected " + hex(kIdxLabelMagic) + ")");
    const std::size_t n = read_be32(buf, 4, what);
    if (buf.size() != 8 + n)
        throw FormatError(what + ": expected " + std::to_string(n) + " labels, found " + std::to_string(buf.size() - 8));
    return {buf.begin() + 8, buf.end()};
}

ImageDataset load_mnist_idx(const fs::path& images, const fs::path& labels, Split split) {
    const IdxImages img = read_idx_images(images);
    const std::vector<std::uint8_t> lab = read_idx_labels(labels);
    if (lab.size() != img.count) {
        throw FormatError("count mismatch: " + std::to_string(img.count) + " images vs " +
                          std::to_string(lab.size()) + " labels");
    }
    ImageDataset ds;
    ds.split = split;
    ds.dim = img.rows * img.cols;
    ds.pixels.resize(img.pixels.size());
    std::transform(img.pixels.begin(), img.pixels.end(), ds.pixels.begin(),
                   [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
    ds.labels.assign(lab.begin(), lab.end());
    return ds;
}

DatasetSplits load_mnist(const fs::path& dir, std::size_t validation_count, std::uint64_t seed) {
    const ImageDataset full = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    if (validation_count >= full.size()) {
        throw Error("validation carve-out of " + std::to_string(validation_count) + " leaves no training images (" +
                    std::to_string(full.size()) + " available)");
    }
    std::vector<std::size_t> order(full.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_stream(seed, "split");
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplits out;
    const std::size_t n_train = full.size() - validation_count;
    auto take = [&](std::size_t begin, std::size_t end, Split split) {
        ImageDataset ds;
        ds.dim = full.dim;
        ds.split = split;
        for (std::size_t k = begin; k < end; ++k) {
            auto src = full.item(order[k]);
            ds.pixels.insert(ds.pixels.end(), src.begin(), src.end());
            ds.labels.push_back(full.labels[order[k]]);
        }
        return ds;
    };
    out.train = take(0, n_train, Split::train);
    out.validation = take(n_train, full.size(), Split::validation);
    out.test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::test);
    return out;
}

Tensor dynamic_binarize(const Tensor& probabilities, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Tensor out(probabilities.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double p = probabilities[i];
        if (!(p >= 0.0 && p <= 1.0)) throw Error("dynamic_binarize: pixel " + std::to_string(p) + " outside [0, 1]");
        out[i] = uniform(rng) < p ? 1.0 : 0.0;
    }
    return out;
}

double rgb_to_gray(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    // Integer numerator keeps white exactly 1 and pure channels exactly at their weight.
    const long num = 299L * r + 587L * g + 114L * b;
    return static_cast<double>(num) / 255000.0;
}

GrayImage read_image(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw FormatError(path.string() + ": unsupported image format");
}

void write_pgm(const fs::path& path, const GrayImage& image) {
    std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<char> out(header.begin(), header.end());
    for (double p : image.pixels) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0))));
    write_file(path.string(), out);
}

std::vector<std::vector<double>> extract_patches(const GrayImage& image, std::size_t patch) {
    if (patch == 0) throw Error("extract_patches: patch size must be positive");
    if (image.width < patch || image.height < patch) {
        throw Error("extract_patches: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " is smaller than the " + std::to_string(patch) + "x" + std::to_string(patch) + " patch");
    }
    std::vector<std::vector<double>> out;
    for (std::size_t py = 0; py + patch <= image.height; py += patch) {
        for (std::size_t px = 0; px + patch <= image.width; px += patch) {
            std::vector<double> p;
            p.reserve(patch * patch);
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x) p.push_back(image.at(px + x, py + y));
            out.push_back(std::move(p));
        }
    }
    return out;
}

PatchCorpus load_patch_corpus(const fs::path& dir, std::size_t patch) {
    if (!fs::is_directory(dir)) throw Error("patch corpus directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (entry.is_regular_file() && (ext == ".png" || ext == ".pgm")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    PatchCorpus corpus;
    corpus.dim = patch * patch;
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        const auto underscore = stem.rfind('_');
        if (underscore == std::string::npos || underscore == 0)
            throw FormatError(f.string() + ": expected <patientid>_<index> file name");
        const std::string patient = stem.substr(0, underscore);
        for (auto& p : extract_patches(read_image(f), patch)) {
            corpus.patches.push_back(std::move(p));
            corpus.patient_ids.push_back(patient);
        }
    }
    if (corpus.patches.empty()) throw Error("no images found in " + dir.string());
    return corpus;
}

DatasetSplits split_by_patient(const PatchCorpus& corpus, const std::map<std::string, Split>& assignment) {
    if (corpus.patient_ids.size() != corpus.patches.size())
        throw Error("split_by_patient: every patch needs a patient id");
    DatasetSplits out;
    out.train.split = Split::train;
    out.validation.split = Split::validation;
    out.test.split = Split::test;
    for (ImageDataset* ds : {&out.train, &out.validation, &out.test}) ds->dim = corpus.dim;
    for (std::size_t i = 0; i < corpus.patches.size(); ++i) {
        const std::string& id = corpus.patient_ids[i];
        auto it = assignment.find(id);
        if (it == assignment.end()) throw Error("split_by_patient: patient " + id + " has no split assignment");
        ImageDataset& ds = it->second == Split::train        ? out.train
                           : it->second == Split::validation ? out.validation
                                                             : out.test;
        ds.pixels.insert(ds.pixels.end(), corpus.patches[i].begin(), corpus.patches[i].end());
        ds.patient_ids.push_back(id);
    }
    for (const ImageDataset* ds : {&out.train, &out.validation, &out.test}) {
        if (ds->size() == 0)
            throw Error("split_by_patient: split " + std::string(split_name(ds->split)) + " is empty");
    }
    return out;
}

void write_dataset_cache(const fs::path& path, const ImageDataset& dataset) {
    BinaryWriter w;
    w.bytes("HHFD");
    w.u32(kDatasetCacheVersion);
    w.u32(static_cast<std::uint32_t>(dataset.size()));
    w.u32(static_cast<std::uint32_t>(dataset.dim));
    for (double p : dataset.pixels) w.f64(p);
    const std::uint32_t flags = (dataset.labels.empty() ? 0u : 1u) | (dataset.patient_ids.empty() ? 0u : 2u);
    w.u32(flags);
    w.u32(static_cast<std::uint32_t>(dataset.split));
    for (std::int32_t l : dataset.labels) w.i32(l);
    for (const auto& id : dataset.patient_ids) w.str(id);
    write_file(path.string(), w.buffer());
}

ImageDataset read_dataset_cache(const fs::path& path) {
    const std::vector<char> buf = read_file(path.string());
    BinaryReader r(buf, path.string());
    if (r.bytes(4) != "HHFD") throw FormatError(path.string() + ": bad dataset cache magic");
    const std::uint32_t version = r.u32();
    if (version != kDatasetCacheVersion)
        throw FormatError(path.string() + ": unsupported dataset cache version " + std::to_string(version));
    ImageDataset ds;
    const std::uint32_t count = r.u32();
    ds.dim = r.u32();
    if (ds.dim == 0) throw FormatError(path.string() + ": zero item dimension");
    ds.pixels.resize(static_cast<std::size_t>(count) * ds.dim);
    for (double& p : ds.pixels) p = r.f64();
    if (r.at_end()) return ds;
    const std::uint32_t flags = r.u32();
    const std::uint32_t split = r.u32();
    if (split > 2) throw FormatError(path.string() + ": bad split tag");
    ds.split = static_cast<Split>(split);
    if (flags & 1u) {
        ds.labels.resize(count);
        for (auto& l : ds.labels) l = r.i32();
    }
    if (flags & 2u) {
        ds.patient_ids.resize(count);
        for (auto& id : ds.patient_ids) id = r.str();
    }
    if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after metadata");
    return ds;
}

}  // namespace hhflow
