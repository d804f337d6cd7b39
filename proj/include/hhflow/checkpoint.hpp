#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hhflow/config.hpp"
#include "hhflow/model.hpp"
#include "hhflow/optim.hpp"

namespace hhflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Full training state. Layout:
///   "HHFC", u32 version, str config, u32 epoch, u32 finished,
///   early-stop block (f64 best, u32 best_epoch, u32 since, u32 lookahead, u32 max_epochs),
///   Adam block (u64 step, f64 lr, f64 beta1, f64 beta2, f64 eps_hat),
///   u32 n, n x (str stream, str engine state),
///   u32 n, n x (str name, u32 rank, u64 dims..., f64 payload)
/// Strings are u32-length prefixed; integers and reals are little-endian.
/// Tensor records are named param/<p>, adam.m/<p>, adam.v/<p>, best/<p>.
struct Checkpoint {
    RunConfig config;
    std::uint32_t epoch = 0;
    bool finished = false;
    ParameterSet params;
    AdamState adam;
    EarlyStopState early_stop;
    std::map<std::string, std::string> rng_states;

    bool operator==(const Checkpoint&) const = default;
};

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::vector<char>& bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hhflow
