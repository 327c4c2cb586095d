#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "remaster/audio.hpp"
#include "remaster/nn/params.hpp"
#include "remaster/stft.hpp"

namespace remaster {

struct DiscriminatorConfig {
  std::vector<std::size_t> block_channels{32, 64, 128, 256, 512, 1024};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t condition_dim = 2048;
  std::size_t projected_dim = 1024;
  std::size_t fft_size = 2048;
  std::size_t hop = 512;
  double log_eps = 1e-7;

  static DiscriminatorConfig canonical() { return {}; }
  static DiscriminatorConfig tiny() {
    DiscriminatorConfig c;
    c.block_channels = {8, 16, 32};
    c.condition_dim = 64;
    c.projected_dim = 32;
    return c;
  }
  static DiscriminatorConfig preset(const std::string& name);

  void validate() const;
  StftSpec stft_spec() const { return {fft_size, hop, WindowType::hamming}; }
  /// Parameter count of the residual-free architecture.
  std::size_t expected_parameter_count() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Stereo log-magnitude spectrogram laid out [2, bins, frames]: log(|S| + eps),
/// Hamming window, no centring.
nn::Tensor spectrogram(const StereoWaveform& wf, const DiscriminatorConfig& config = {});

// Projection discriminator over stereo log-magnitude spectrograms.
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& config, std::uint64_t seed = 0);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  const DiscriminatorConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  /// Pooled conv features phi [B, projected_dim] from spectrograms [B, 2, bins, frames].
  nn::Tensor features(const nn::Tensor& spectrograms, bool training) const;
  /// MLP(condition) [B, projected_dim].
  nn::Tensor embed_condition(const nn::Tensor& condition) const;
  /// w . phi + b + <phi, projected>.
  nn::Tensor score_from_features(const nn::Tensor& phi, const nn::Tensor& projected) const;
  /// Scores [B] for waveforms [B, 2, T].
  nn::Tensor forward(const nn::Tensor& waveforms, const nn::Tensor& condition, bool training) const;

 private:
  struct Block {
    nn::Conv2d conv1;
    nn::BatchNorm norm1;
    nn::Conv2d conv2;
    nn::BatchNorm norm2;
  };
  DiscriminatorConfig config_;
  nn::ParamSet params_;
  std::vector<Block> blocks_;
  nn::Linear out_;
  nn::Linear mlp1_;
  nn::Linear mlp2_;
};

}  // namespace remaster
