#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "remaster/nn/adam.hpp"
#include "remaster/nn/params.hpp"

namespace remaster {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: magic "RMKTCKPT", u32 version, u64 header length, JSON
// header, then for every tensor listed in the header its raw doubles in
// little-endian order. Nothing time-dependent is stored, so saving the same
// state twice yields identical bytes.
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
  std::map<std::string, std::vector<double>> tensors;

  std::uint64_t config_hash() const;
};

std::uint64_t config_hash(const nlohmann::json& config);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Rejects bad magic, other format versions, a `kind` different from
/// `expected_kind` (when non-empty) and a config whose hash differs from
/// `expected_config_hash` (when given).
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "",
                           std::optional<std::uint64_t> expected_config_hash = std::nullopt);

/// Copies parameters and buffers into `ckpt.tensors` under `prefix`.
void store_params(const nn::ParamSet& params, const std::string& prefix, Checkpoint& ckpt);
/// Overwrites parameters and buffers from `ckpt`; every entry must exist with matching size.
void restore_params(nn::ParamSet& params, const std::string& prefix, const Checkpoint& ckpt);

void store_adam(const nn::Adam& adam, const std::string& prefix, Checkpoint& ckpt);
void restore_adam(nn::Adam& adam, const std::string& prefix, const Checkpoint& ckpt);

}  // namespace remaster
