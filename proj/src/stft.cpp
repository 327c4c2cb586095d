#include "remaster/stft.hpp"

#include <cmath>

#include "remaster/error.hpp"
#include "remaster/fft.hpp"

namespace remaster {

std::vector<double> make_window(WindowType type, std::size_t n) {
  std::vector<double> w(n);
  const double a0 = type == WindowType::hann ? 0.5 : 0.54;
  const double a1 = 1.0 - a0;
  for (std::size_t i = 0; i < n; ++i)
    w[i] = a0 - a1 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

std::size_t stft_frames(std::size_t length, const StftSpec& spec) {
  if (length < spec.fft_size) return 0;
  return 1 + (length - spec.fft_size) / spec.hop;
}

std::vector<double> Spectrogram::magnitude() const {
  std::vector<double> m(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m[i] = std::abs(values[i]);
  return m;
}

Spectrogram stft(std::span<const double> x, const StftSpec& spec) {
  if (spec.hop == 0) throw InvalidArgument("stft hop must be positive");
  const std::size_t frames = stft_frames(x.size(), spec);
  if (frames == 0)
    throw InvalidArgument("signal of " + std::to_string(x.size()) + " samples is shorter than the " +
                          std::to_string(spec.fft_size) + "-sample analysis window");
  const auto window = make_window(spec.window, spec.fft_size);
  RealFft& fft = fft_for(spec.fft_size);
  Spectrogram s;
  s.frames = frames;
  s.bins = fft.bins();
  s.values.resize(frames * s.bins);
  std::vector<double> buf(spec.fft_size);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * spec.hop;
    for (std::size_t i = 0; i < spec.fft_size; ++i) buf[i] = x[start + i] * window[i];
    fft.forward(buf, std::span(s.values).subspan(f * s.bins, s.bins));
  }
  return s;
}

// dL/dx[n] = w[n] Re(sum_k Z_k e^{+2 pi i k n / N}), Z_k = g_k X_k / |X_k|, summed
// over the one-sided bins. The unnormalized c2r transform doubles interior
// bins, so DC and Nyquist are doubled up front and the result halved.
void stft_magnitude_backward(const Spectrogram& s, std::span<const double> grad_magnitude,
                             const StftSpec& spec, std::span<double> grad_x) {
  if (grad_magnitude.size() != s.values.size()) throw InvalidArgument("gradient/spectrogram size mismatch");
  const auto window = make_window(spec.window, spec.fft_size);
  RealFft& fft = fft_for(spec.fft_size);
  std::vector<std::complex<double>> z(s.bins);
  std::vector<double> frame(spec.fft_size);
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t k = 0; k < s.bins; ++k) {
      const auto x = s.values[f * s.bins + k];
      const double mag = std::abs(x);
      z[k] = mag > 0.0 ? grad_magnitude[f * s.bins + k] * x / mag : std::complex<double>{};
    }
    z.front() *= 2.0;
    if (spec.fft_size % 2 == 0) z.back() *= 2.0;
    fft.inverse(z, frame);
    const std::size_t start = f * spec.hop;
    for (std::size_t i = 0; i < spec.fft_size; ++i) grad_x[start + i] += 0.5 * window[i] * frame[i];
  }
}

}  // namespace remaster
