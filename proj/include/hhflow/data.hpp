#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hhflow/binary_io.hpp"
#include "hhflow/rng.hpp"
#include "hhflow/tensor.hpp"

namespace hhflow {

enum class Split { train, validation, test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

/// Flattened images with intensities in [0, 1].
struct ImageDataset {
    std::size_t dim = 784;
    std::vector<double> pixels;
    /// Empty, or one entry per item.
    std::vector<std::int32_t> labels;
    /// Empty, or one entry per item.
    std::vector<std::string> patient_ids;
    Split split = Split::train;

    std::size_t size() const { return dim == 0 ? 0 : pixels.size() / dim; }
    std::span<const double> item(std::size_t i) const { return {pixels.data() + i * dim, dim}; }
    /// Rows `indices` stacked into a B x dim tensor.
    Tensor batch(std::span<const std::size_t> indices) const;
    /// Keep the first `count` items.
    void truncate(std::size_t count);
};

struct DatasetSplits {
    ImageDataset train;
    ImageDataset validation;
    ImageDataset test;

    const ImageDataset& get(Split s) const;
};

// IDX (big-endian, standard MNIST layout).

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

/// One IDX image/label pair as a dataset; pixels are byte / 255.
ImageDataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                            Split split = Split::train);

/// Standard MNIST directory (train-images-idx3-ubyte, train-labels-idx1-ubyte,
/// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte). The training file is
/// shuffled with `seed` and its last `validation_count` items become the
/// validation split.
DatasetSplits load_mnist(const std::filesystem::path& dir, std::size_t validation_count, std::uint64_t seed);

/// Independent Bernoulli(pixel) draw per entry.
Tensor dynamic_binarize(const Tensor& probabilities, Rng& rng);

/// (0.299 r + 0.587 g + 0.114 b) / 255.
double rgb_to_gray(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Row-major grayscale image with intensities in [0, 1].
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels;

    double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// 8-bit PGM (P5) or 8-bit PNG (RGB or grayscale); RGB goes through rgb_to_gray.
GrayImage read_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Non-overlapping patch x patch tiles from the top-left corner in row-major
/// order; right and bottom remainders are dropped.
std::vector<std::vector<double>> extract_patches(const GrayImage& image, std::size_t patch = 28);

struct PatchCorpus {
    std::size_t dim = 784;
    std::vector<std::vector<double>> patches;
    std::vector<std::string> patient_ids;
};

/// Every `<patientid>_<index>.{png,pgm}` file in `dir`, in filename order.
PatchCorpus load_patch_corpus(const std::filesystem::path& dir, std::size_t patch = 28);

/// Route each patch to the split of its patient. Every patient must be
/// assigned and every split must end up non-empty.
DatasetSplits split_by_patient(const PatchCorpus& corpus, const std::map<std::string, Split>& assignment);

// Dataset cache: "HHFD", u32 version, u32 count, u32 dim, f64 pixels, then a
// metadata block (u32 flags, u32 split, labels, patient ids).

inline constexpr std::uint32_t kDatasetCacheVersion = 1;

void write_dataset_cache(const std::filesystem::path& path, const ImageDataset& dataset);
ImageDataset read_dataset_cache(const std::filesystem::path& path);

}  // namespace hhflow
