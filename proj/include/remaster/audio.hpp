#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace remaster {

inline constexpr double kCanonicalSampleRate = 44100.0;

// Stereo PCM signal. Channels always have equal, non-zero length and hold
// finite samples; the constructor enforces this.
class StereoWaveform {
 public:
  StereoWaveform(std::vector<double> left, std::vector<double> right, double sample_rate);

  static StereoWaveform silence(std::size_t length, double sample_rate = kCanonicalSampleRate);
  static StereoWaveform mono(std::vector<double> samples, double sample_rate);

  std::size_t size() const { return left_.size(); }
  double sample_rate() const { return sample_rate_; }
  std::span<const double> left() const { return left_; }
  std::span<const double> right() const { return right_; }
  std::span<const double> channel(std::size_t index) const { return index == 0 ? left() : right(); }

  /// Both channels laid out back to back (left first).
  std::vector<double> interleaved_planar() const;

  bool operator==(const StereoWaveform&) const = default;

 private:
  std::vector<double> left_;
  std::vector<double> right_;
  double sample_rate_;
};

struct MidSideWaveform {
  std::vector<double> mid;
  std::vector<double> side;
  double sample_rate;
};

/// mid = (L+R)/2, side = (L-R)/2.
MidSideWaveform to_mid_side(const StereoWaveform& wf);
/// L = mid+side, R = mid-side.
StereoWaveform from_mid_side(const MidSideWaveform& ms);

double rms(std::span<const double> x);
/// RMS pooled over all samples of both channels.
double rms(const StereoWaveform& wf);
double peak(const StereoWaveform& wf);

StereoWaveform segment(const StereoWaveform& wf, std::size_t start, std::size_t length);

double db_to_gain(double db);
double gain_to_db(double gain);

}  // namespace remaster
