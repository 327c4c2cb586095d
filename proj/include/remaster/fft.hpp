#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace remaster {

// Real-input FFT of a fixed size backed by FFTW. Not thread-safe per
// instance; use fft_for() to get a per-thread cached instance.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  /// `in` holds up to n samples (zero padded), `out` receives n/2+1 bins.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Unnormalized inverse of a Hermitian half-spectrum.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* spectrum_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

RealFft& fft_for(std::size_t n);

}  // namespace remaster
