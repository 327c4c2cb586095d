#include "remaster/audio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "remaster/error.hpp"
#include "remaster/rng.hpp"

namespace remaster {

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the pair
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::log_uniform(double lo, double hi) {
  return std::exp(uniform(std::log(lo), std::log(hi)));
}

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  if (hi <= lo) return lo;
  const std::uint64_t span = hi - lo;
  if (span == ~0ULL) return next_u64();
  const std::uint64_t range = span + 1;
  const std::uint64_t limit = ~0ULL - (~0ULL % range);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return lo + v % range;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

StereoWaveform::StereoWaveform(std::vector<double> left, std::vector<double> right,
                               double sample_rate)
    : left_(std::move(left)), right_(std::move(right)), sample_rate_(sample_rate) {
  if (left_.empty()) throw InvalidArgument("waveform must hold at least one sample");
  if (left_.size() != right_.size())
    throw InvalidArgument("channel lengths differ: " + std::to_string(left_.size()) + " vs " +
                          std::to_string(right_.size()));
  if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_))
    throw InvalidArgument("sample rate must be positive");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(left_.begin(), left_.end(), finite) ||
      !std::all_of(right_.begin(), right_.end(), finite))
    throw InvalidArgument("waveform contains non-finite samples");
}

StereoWaveform StereoWaveform::silence(std::size_t length, double sample_rate) {
  return StereoWaveform(std::vector<double>(length, 0.0), std::vector<double>(length, 0.0),
                        sample_rate);
}

StereoWaveform StereoWaveform::mono(std::vector<double> samples, double sample_rate) {
  std::vector<double> copy = samples;
  return StereoWaveform(std::move(samples), std::move(copy), sample_rate);
}

std::vector<double> StereoWaveform::interleaved_planar() const {
  std::vector<double> out;
  out.reserve(2 * size());
  out.insert(out.end(), left_.begin(), left_.end());
  out.insert(out.end(), right_.begin(), right_.end());
  return out;
}

MidSideWaveform to_mid_side(const StereoWaveform& wf) {
  MidSideWaveform ms{std::vector<double>(wf.size()), std::vector<double>(wf.size()),
                     wf.sample_rate()};
  const auto l = wf.left();
  const auto r = wf.right();
  for (std::size_t i = 0; i < wf.size(); ++i) {
    ms.mid[i] = 0.5 * (l[i] + r[i]);
    ms.side[i] = 0.5 * (l[i] - r[i]);
  }
  return ms;
}

StereoWaveform from_mid_side(const MidSideWaveform& ms) {
  if (ms.mid.size() != ms.side.size()) throw InvalidArgument("mid/side lengths differ");
  std::vector<double> l(ms.mid.size()), r(ms.mid.size());
  for (std::size_t i = 0; i < ms.mid.size(); ++i) {
    l[i] = ms.mid[i] + ms.side[i];
    r[i] = ms.mid[i] - ms.side[i];
  }
  return StereoWaveform(std::move(l), std::move(r), ms.sample_rate);
}

double rms(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("rms of empty signal");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double rms(const StereoWaveform& wf) {
  double acc = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
    for (double v : wf.channel(c)) acc += v * v;
  return std::sqrt(acc / static_cast<double>(2 * wf.size()));
}

double peak(const StereoWaveform& wf) {
  double p = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
    for (double v : wf.channel(c)) p = std::max(p, std::abs(v));
  return p;
}

StereoWaveform segment(const StereoWaveform& wf, std::size_t start, std::size_t length) {
  if (length == 0) throw InvalidArgument("segment length must be at least one sample");
  if (start > wf.size() || length > wf.size() - start)
    throw InvalidArgument("segment [" + std::to_string(start) + ", " +
                          std::to_string(start + length) + ") exceeds waveform of " +
                          std::to_string(wf.size()) + " samples");
  auto slice = [&](std::span<const double> ch) {
    return std::vector<double>(ch.begin() + static_cast<std::ptrdiff_t>(start),
                               ch.begin() + static_cast<std::ptrdiff_t>(start + length));
  };
  return StereoWaveform(slice(wf.left()), slice(wf.right()), wf.sample_rate());
}

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }
double gain_to_db(double gain) { return 20.0 * std::log10(gain); }

}  // namespace remaster
