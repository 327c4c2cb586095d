#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "remaster/audio.hpp"
#include "remaster/nn/params.hpp"
#include "remaster/resample.hpp"

namespace remaster {

struct ClonerConfig {
  std::size_t num_levels = 6;
  std::size_t base_channels = 32;  // level l has base_channels * (l + 1) channels
  std::size_t down_kernel = 15;
  std::size_t up_kernel = 5;
  double leaky_slope = 0.2;
  std::size_t condition_dim = 2048;
  FilterSpec resampler;

  static ClonerConfig canonical() { return {}; }
  static ClonerConfig tiny() {
    ClonerConfig c;
    c.num_levels = 3;
    c.base_channels = 8;
    c.condition_dim = 64;
    return c;
  }
  static ClonerConfig preset(const std::string& name);

  void validate() const;
  std::size_t channels(std::size_t level) const { return base_channels * (level + 1); }
  /// Input lengths must be multiples of this.
  std::size_t length_multiple() const { return std::size_t{1} << num_levels; }
};

void to_json(nlohmann::json& j, const ClonerConfig& c);
void from_json(const nlohmann::json& j, ClonerConfig& c);

// Where each decoder block takes its skip input from, for structural checks.
struct ClonerLayout {
  std::size_t first_layer_stride = 1;
  bool first_layer_skip = false;
  std::vector<std::string> skip_sources;               // decoder order (deepest first)
  std::vector<std::size_t> decoder_input_channels;     // after concatenation
  std::vector<std::size_t> decoder_input_lengths;
  std::size_t bottleneck_length = 0;
};

/// Upsample by 2, leaky ReLU, downsample by 2 (time length preserved).
nn::Tensor alias_free_act(const nn::Tensor& x, double slope, const Resampler2& resampler);

// Mastering cloner: Wave-U-Net with a stride-1 skipless input layer,
// anti-aliased resampling between levels, FiLM at the end of every decoder
// block and a 1x1 output head clamped to [-1, 1].
class Cloner {
 public:
  explicit Cloner(const ClonerConfig& config, std::uint64_t seed = 0);
  Cloner(const Cloner&) = delete;
  Cloner& operator=(const Cloner&) = delete;

  const ClonerConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  /// x [B, 2, T], condition [B, condition_dim] -> [B, 2, T].
  nn::Tensor forward(const nn::Tensor& x, const nn::Tensor& condition) const;
  StereoWaveform clone(const StereoWaveform& a1, std::span<const double> condition) const;

  ClonerLayout layout(std::size_t length) const;

  /// FiLM producer of decoder block `level`; weight [2C, cond], bias [2C] with scale first.
  const nn::Linear& film_producer(std::size_t level) const { return film_[level]; }

 private:
  void check_input(const nn::Tensor& x, const nn::Tensor& condition) const;

  ClonerConfig config_;
  Resampler2 resampler_;
  nn::ParamSet params_;
  nn::Conv1d first_;
  std::vector<nn::Conv1d> down_;
  nn::Conv1d bottleneck_;
  std::vector<nn::Conv1d> up_;  // indexed by level
  std::vector<nn::Linear> film_;
  nn::Conv1d head_;
};

}  // namespace remaster
