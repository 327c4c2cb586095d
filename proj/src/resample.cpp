#include "remaster/resample.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>
#include <string>

#include "remaster/error.hpp"

namespace remaster {

void FilterSpec::validate() const {
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw InvalidArgument("filter cutoff must lie in (0, 1)");
  if (taps < 15 || taps % 2 == 0) throw InvalidArgument("filter taps must be odd and >= 15");
  if (!(beta >= 0.0)) throw InvalidArgument("kaiser beta must be non-negative");
}

std::vector<double> design_lowpass(const FilterSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::ptrdiff_t>(spec.taps);
  const std::ptrdiff_t centre = n / 2;
  const double i0_beta = std::cyl_bessel_i(0.0, spec.beta);
  std::vector<double> h(spec.taps);
  double sum = 0.0;
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k - centre);
    const double arg = spec.cutoff * t;
    double sinc;
    if (k == centre) {
      sinc = 1.0;
    } else if (arg == std::round(arg)) {
      sinc = 0.0;  // exact zero crossing
    } else {
      sinc = std::sin(M_PI * arg) / (M_PI * arg);
    }
    const double r = t / static_cast<double>(centre);
    const double window = std::cyl_bessel_i(0.0, spec.beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(k)] = spec.cutoff * sinc * window;
    sum += h[static_cast<std::size_t>(k)];
  }
  for (double& v : h) v /= sum;
  return h;
}

Resampler2::Resampler2(const FilterSpec& spec) : spec_(spec), taps_(design_lowpass(spec)) {
  const auto centre = static_cast<std::ptrdiff_t>(taps_.size() / 2);
  for (std::size_t k = 0; k < taps_.size(); ++k)
    if (taps_[k] != 0.0) sparse_.emplace_back(static_cast<std::ptrdiff_t>(k) - centre, taps_[k]);
}

// The high-rate signal is handled as two phases, even and odd samples, so
// every tap becomes a contiguous shifted multiply-add. A tap at offset
// 2e (+1) couples the even (odd) phase with a shift of e.
namespace {

struct Phase {
  int parity;
  std::ptrdiff_t shift;
};

Phase phase_of(std::ptrdiff_t off) {
  const std::ptrdiff_t e = off >= 0 ? off / 2 : -((-off + 1) / 2);
  return {static_cast<int>(off - 2 * e), e};
}

// dst[m + shift] += g * src[m] over the overlap of both ranges
void shifted_axpy(const double* src, double* dst, std::ptrdiff_t n, std::ptrdiff_t shift, double g) {
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
  for (std::ptrdiff_t m = lo; m < hi; ++m) dst[m + shift] += g * src[m];
}

std::vector<double>& scratch(int which, std::size_t n) {
  thread_local std::vector<double> buffers[2];
  buffers[which].assign(n, 0.0);
  return buffers[which];
}

}  // namespace

// up: y[2i + off] += 2 c x[i]
void Resampler2::upsample(std::span<const double> in, std::span<double> out) const {
  const auto t = static_cast<std::ptrdiff_t>(in.size());
  if (out.size() != 2 * in.size()) throw InvalidArgument("upsample output must be twice the input length");
  auto& even = scratch(0, in.size());
  auto& odd = scratch(1, in.size());
  for (const auto& [off, c] : sparse_) {
    const Phase ph = phase_of(off);
    shifted_axpy(in.data(), ph.parity == 0 ? even.data() : odd.data(), t, ph.shift, 2.0 * c);
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[2 * i] = even[i];
    out[2 * i + 1] = odd[i];
  }
}

void Resampler2::upsample_adjoint(std::span<const double> grad_out, std::span<double> grad_in) const {
  const auto t = static_cast<std::ptrdiff_t>(grad_in.size());
  if (grad_out.size() != 2 * grad_in.size()) throw InvalidArgument("upsample adjoint length mismatch");
  auto& even = scratch(0, grad_in.size());
  auto& odd = scratch(1, grad_in.size());
  for (std::size_t i = 0; i < grad_in.size(); ++i) {
    even[i] = grad_out[2 * i];
    odd[i] = grad_out[2 * i + 1];
  }
  for (const auto& [off, c] : sparse_) {
    const Phase ph = phase_of(off);
    const double* src = ph.parity == 0 ? even.data() : odd.data();
    // grad_in[i] += 2c * phase[i + shift]
    shifted_axpy(src, grad_in.data(), t, -ph.shift, 2.0 * c);
  }
}

// down: y[n] = sum c x[2n - off]
void Resampler2::downsample(std::span<const double> in, std::span<double> out) const {
  if (in.size() % 2 != 0) throw InvalidArgument("downsample requires an even-length input");
  if (out.size() * 2 != in.size()) throw InvalidArgument("downsample output must be half the input length");
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  auto& even = scratch(0, out.size());
  auto& odd = scratch(1, out.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    even[m] = in[2 * m];
    odd[m] = in[2 * m + 1];
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& [off, c] : sparse_) {
    // x[2n - off] is even[n - e] for off = 2e and odd[n - e - 1] for off = 2e + 1
    const Phase ph = phase_of(off);
    const std::ptrdiff_t lag = ph.shift + ph.parity;
    shifted_axpy(ph.parity == 0 ? even.data() : odd.data(), out.data(), n, lag, c);
  }
}

void Resampler2::downsample_adjoint(std::span<const double> grad_out, std::span<double> grad_in) const {
  if (grad_out.size() * 2 != grad_in.size()) throw InvalidArgument("downsample adjoint length mismatch");
  const auto n = static_cast<std::ptrdiff_t>(grad_out.size());
  auto& even = scratch(0, grad_out.size());
  auto& odd = scratch(1, grad_out.size());
  for (const auto& [off, c] : sparse_) {
    const Phase ph = phase_of(off);
    const std::ptrdiff_t lag = ph.shift + ph.parity;
    shifted_axpy(grad_out.data(), ph.parity == 0 ? even.data() : odd.data(), n, -lag, c);
  }
  for (std::size_t m = 0; m < grad_out.size(); ++m) {
    grad_in[2 * m] += even[m];
    grad_in[2 * m + 1] += odd[m];
  }
}

std::vector<double> resample2(std::span<const double> x, ResampleDirection direction,
                              const FilterSpec& spec) {
  const Resampler2 r(spec);
  if (direction == ResampleDirection::up) {
    std::vector<double> out(2 * x.size());
    r.upsample(x, out);
    return out;
  }
  if (x.size() % 2 != 0)
    throw InvalidArgument("downsampling needs an even-length input, got " + std::to_string(x.size()));
  std::vector<double> out(x.size() / 2);
  r.downsample(x, out);
  return out;
}

const Resampler2& default_resampler() {
  static const Resampler2 instance{FilterSpec{}};
  return instance;
}

}  // namespace remaster
