#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "hhflow/tensor.hpp"

namespace hhflow {

using Rng = std::mt19937_64;

/// Seed for the named sub-stream `name` of a global run seed. Each component
/// (init, binarize, eps, shuffle, ...) owns one stream, so adding draws to one
/// component never shifts the others.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

inline Rng make_stream(std::uint64_t seed, std::string_view name) { return Rng(derive_seed(seed, name)); }

/// rows x cols standard-normal draws. A fresh distribution object is used per
/// call so the engine state alone determines the stream position.
Tensor standard_normal(Rng& rng, std::size_t rows, std::size_t cols);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace hhflow
