#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "remaster/audio.hpp"
#include "remaster/cloner.hpp"
#include "remaster/encoder.hpp"

namespace remaster {

inline constexpr const char* kEncoderKind = "encoder";
inline constexpr const char* kClonerKind = "cloner";

// Frozen encoder and trained cloner loaded from their checkpoints.
struct RemasterModels {
  std::unique_ptr<Encoder> encoder;
  std::unique_ptr<Cloner> cloner;
  std::size_t window = 0;  // cloner training length in samples
  std::uint64_t encoder_hash = 0;
  std::uint64_t cloner_hash = 0;
};

std::unique_ptr<Encoder> load_encoder(const std::filesystem::path& path);
/// Throws when the cloner's condition size differs from the encoder's embedding size.
RemasterModels load_models(const std::filesystem::path& encoder_path, const std::filesystem::path& cloner_path);

/// Runs the cloner over `input` in windows of `window` samples with 50%
/// overlap, blending with normalized sin^2 weights. Output length equals the
/// input length; the tail is zero-padded internally.
StereoWaveform remaster_windowed(const Cloner& cloner, std::span<const double> condition,
                                 const StereoWaveform& input, std::size_t window);

/// Encodes `reference` and remasters `input` to its style.
StereoWaveform remaster(const RemasterModels& models, const StereoWaveform& input, const StereoWaveform& reference);

}  // namespace remaster
