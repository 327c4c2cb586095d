#pragma once

#include <cstdint>
#include <filesystem>

#include "remaster/audio.hpp"
#include "remaster/error.hpp"

namespace remaster {

enum class WavErrorKind { missing_file, unsupported_format, truncated, unwritable };

class WavError : public IoError {
 public:
  WavError(WavErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  WavErrorKind kind() const { return kind_; }

 private:
  WavErrorKind kind_;
};

enum class BitDepth { pcm16, pcm24, float32 };

struct WavInfo {
  std::uint16_t channels = 0;
  std::uint16_t bits_per_sample = 0;
  bool is_float = false;
  double sample_rate = 0.0;
  std::size_t frames = 0;

  double duration_seconds() const { return static_cast<double>(frames) / sample_rate; }
};

/// Reads only the header chunks.
WavInfo probe_wav(const std::filesystem::path& path);

/// Mono files are duplicated to both channels; integer PCM is scaled by
/// 2^-(bits-1) so full-scale codes land in [-1, 1).
StereoWaveform load_wav(const std::filesystem::path& path);

/// Integer depths clamp to the representable range (no wrap-around).
void save_wav(const StereoWaveform& wf, const std::filesystem::path& path,
              BitDepth depth = BitDepth::float32);

BitDepth parse_bit_depth(const std::string& text);

}  // namespace remaster
