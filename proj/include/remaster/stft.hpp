#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace remaster {

enum class WindowType { hann, hamming };

/// Periodic window of length n.
std::vector<double> make_window(WindowType type, std::size_t n);

// Frames start at 0 with no centring or end padding, so a signal of length
// L yields 1 + (L - fft_size) / hop frames.
struct StftSpec {
  std::size_t fft_size = 2048;
  std::size_t hop = 512;
  WindowType window = WindowType::hann;
};

std::size_t stft_frames(std::size_t length, const StftSpec& spec);

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> values;  // frame-major

  std::complex<double> at(std::size_t frame, std::size_t bin) const { return values[frame * bins + bin]; }
  std::vector<double> magnitude() const;
};

Spectrogram stft(std::span<const double> x, const StftSpec& spec);

/// Accumulates dL/dx given dL/d|X| (frame-major, same layout as `s`).
/// Bins with zero magnitude receive no gradient.
void stft_magnitude_backward(const Spectrogram& s, std::span<const double> grad_magnitude,
                             const StftSpec& spec, std::span<double> grad_x);

}  // namespace remaster
