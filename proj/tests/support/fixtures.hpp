#pragma once

// Synthetic on-disk datasets for tests.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hhflow/tensor.hpp"

namespace hhflow::support {

inline void put_be32(std::ofstream& out, std::uint32_t x) {
    const char b[4] = {char(x >> 24), char(x >> 16), char(x >> 8), char(x)};
    out.write(b, 4);
}

inline void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                             std::uint32_t count, std::uint32_t rows = 28, std::uint32_t cols = 28,
                             std::uint32_t magic = 0x803) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    put_be32(out, magic);
    put_be32(out, count);
    put_be32(out, rows);
    put_be32(out, cols);
    out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                             std::uint32_t magic = 0x801) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    put_be32(out, magic);
    put_be32(out, std::uint32_t(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

/// Strokes-on-black 28x28 images: each class is a bar at a class-specific
/// angle, blurred, with random thickness and offset.
inline std::vector<std::uint8_t> synthetic_digits(std::size_t count, std::mt19937_64& rng,
                                                  std::vector<std::uint8_t>* labels) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::uint8_t> px(count * 784);
    for (std::size_t n = 0; n < count; ++n) {
        const int label = int(rng() % 10);
        if (labels) labels->push_back(std::uint8_t(label));
        const double angle = label * 0.314 + 0.1 * u(rng);
        const double cx = 14 + 2 * u(rng), cy = 14 + 2 * u(rng), width = 1.6 + 0.6 * u(rng);
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double along = dx * std::cos(angle) + dy * std::sin(angle);
                const double across = -dx * std::sin(angle) + dy * std::cos(angle);
                const double v = std::abs(along) < 9 ? std::exp(-across * across / (2 * width * width)) : 0.0;
                px[n * 784 + std::size_t(y * 28 + x)] = std::uint8_t(std::lround(255 * v));
            }
    }
    return px;
}

/// Four IDX files in `dir`.
inline void write_synthetic_mnist(const std::filesystem::path& dir, std::size_t train, std::size_t test,
                                  std::uint64_t seed = 1) {
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> labels;
    auto px = synthetic_digits(train, rng, &labels);
    write_idx_images(dir / "train-images-idx3-ubyte", px, std::uint32_t(train));
    write_idx_labels(dir / "train-labels-idx1-ubyte", labels);
    labels.clear();
    px = synthetic_digits(test, rng, &labels);
    write_idx_images(dir / "t10k-images-idx3-ubyte", px, std::uint32_t(test));
    write_idx_labels(dir / "t10k-labels-idx1-ubyte", labels);
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("hhflow-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace hhflow::support
