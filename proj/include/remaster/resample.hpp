#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace remaster {

enum class FilterKind { low_pass };
enum class WindowKind { kaiser };

// Windowed-sinc FIR design parameters. `cutoff` is a fraction of the Nyquist
// frequency of the rate the filter runs at.
struct FilterSpec {
  FilterKind kind = FilterKind::low_pass;
  double cutoff = 0.5;
  std::size_t taps = 127;
  WindowKind window = WindowKind::kaiser;
  double beta = 8.0;

  void validate() const;
};

/// Linear-phase low-pass taps normalized to unit DC gain.
std::vector<double> design_lowpass(const FilterSpec& spec);

enum class ResampleDirection { up, down };

// Factor-2 resampler running at the high rate. Filtering uses zero padding
// and is centred (group delay taps/2 removed) so outputs stay time-aligned.
//   up:   zero-stuff, low-pass, gain 2        (T -> 2T)
//   down: low-pass, keep even samples         (2T -> T)
// The adjoint methods accumulate the transposed operator into `grad_in`;
// they back the differentiable feature-map resampling used by the networks.
class Resampler2 {
 public:
  explicit Resampler2(const FilterSpec& spec = {});

  const FilterSpec& spec() const { return spec_; }
  std::span<const double> taps() const { return taps_; }

  void upsample(std::span<const double> in, std::span<double> out) const;
  void downsample(std::span<const double> in, std::span<double> out) const;
  void upsample_adjoint(std::span<const double> grad_out, std::span<double> grad_in) const;
  void downsample_adjoint(std::span<const double> grad_out, std::span<double> grad_in) const;

 private:
  FilterSpec spec_;
  std::vector<double> taps_;
  // (offset from centre, coefficient) for every non-zero tap
  std::vector<std::pair<std::ptrdiff_t, double>> sparse_;
};

std::vector<double> resample2(std::span<const double> x, ResampleDirection direction,
                              const FilterSpec& spec = {});

/// Shared default instance.
const Resampler2& default_resampler();

}  // namespace remaster
