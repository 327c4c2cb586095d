#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "remaster/audio.hpp"
#include "remaster/nn/params.hpp"

namespace remaster {

struct EncoderConfig {
  std::vector<std::size_t> block_channels{32, 64, 128, 256, 512, 1024, 2048};
  std::size_t kernel_size = 5;
  std::size_t block_stride = 4;
  std::size_t embedding_dim = 2048;
  std::size_t projection_dim = 512;

  static EncoderConfig canonical() { return {}; }
  static EncoderConfig tiny() { return {{8, 16, 64}, 5, 4, 64, 32}; }
  static EncoderConfig preset(const std::string& name);

  void validate() const;
  /// Shortest input that still spans one full stride at the deepest block.
  std::size_t min_length() const;
  bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Music effects encoder: strided residual 1-D conv blocks over the stereo
// waveform, global average pooling over time, plus a linear projection head
// used only by the contrastive objective.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& config, std::uint64_t seed = 0);
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;

  const EncoderConfig& config() const { return config_; }
  /// Backbone and projection head, head entries prefixed "head.".
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  /// Embeddings [B, embedding_dim] for a batch of [1, 2, T_i] inputs whose
  /// lengths may differ. Batch norm pools statistics over all examples.
  nn::Tensor forward(const std::vector<nn::Tensor>& inputs, bool training) const;
  nn::Tensor project(const nn::Tensor& embeddings) const;

  /// Inference-mode embedding of one waveform.
  std::vector<double> encode(const StereoWaveform& wf) const;

 private:
  struct Block {
    nn::Conv1d conv1;
    nn::BatchNorm norm1;
    nn::Conv1d conv2;
    nn::BatchNorm norm2;
    nn::Conv1d shortcut;
    bool has_shortcut = false;
  };

  EncoderConfig config_;
  nn::ParamSet params_;
  std::vector<Block> blocks_;
  nn::Linear head_;
};

/// [1, 2, T] tensor holding the two channels of `wf`.
nn::Tensor waveform_tensor(const StereoWaveform& wf);
/// [B, 2, T] tensor from equal-length waveforms.
nn::Tensor batch_tensor(const std::vector<const StereoWaveform*>& batch);

/// NT-Xent over 2B projections: rows [0, B) are first views, row i + B is the
/// positive of row i. Cosine similarity scaled by 1/temperature.
nn::Tensor nt_xent_loss(const nn::Tensor& projections, double temperature);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace remaster
