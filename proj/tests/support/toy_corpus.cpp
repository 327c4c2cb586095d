#include "toy_corpus.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "remaster/rng.hpp"
#include "remaster/wav.hpp"

namespace remaster::testing {

StereoWaveform toy_song(std::uint64_t seed, double seconds, double fs) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(seconds * fs);
  // song-wide colour
  const double loudness = rng.uniform(0.08, 0.35);
  const double tilt = rng.uniform(0.02, 0.6);  // one-pole smoothing coefficient
  const double width = rng.uniform(0.0, 0.9);
  const double noise_level = rng.uniform(0.0, 0.5);
  const double root = 110.0 * std::pow(2.0, rng.uniform(0.0, 2.0));
  const double note_len = rng.uniform(0.15, 0.5);

  std::vector<double> mid(n), side(n);
  std::vector<double> partials(3);
  double phase[3] = {0, 0, 0};
  const auto note_samples = static_cast<std::size_t>(note_len * fs);
  double hit = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t % note_samples == 0) {
      const int degree = static_cast<int>(rng.uniform_int(0, 7));
      static constexpr int kScale[8] = {0, 2, 4, 5, 7, 9, 11, 12};
      const double f = root * std::pow(2.0, kScale[degree] / 12.0);
      partials = {f, f * 1.5, f * 2.0};
      hit = 1.0;
    }
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      phase[k] += 2.0 * std::numbers::pi * partials[static_cast<std::size_t>(k)] / fs;
      s += std::sin(phase[k]) / (1.0 + k);
    }
    const double env = std::exp(-3.0 * static_cast<double>(t % note_samples) / static_cast<double>(note_samples));
    hit *= 0.9995;
    const double noise = rng.uniform(-1.0, 1.0);
    mid[t] = 0.6 * env * s + noise_level * hit * noise;
    side[t] = width * (0.3 * env * std::sin(phase[1] * 1.003) + 0.5 * noise_level * hit * rng.uniform(-1.0, 1.0));
  }
  // tilt: blend of the raw signal and a one-pole low-pass
  double lm = 0.0, ls = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    lm += tilt * (mid[t] - lm);
    ls += tilt * (side[t] - ls);
    mid[t] = 0.5 * mid[t] + 1.5 * lm;
    side[t] = 0.5 * side[t] + 1.5 * ls;
  }
  MidSideWaveform ms{std::move(mid), std::move(side), fs};
  StereoWaveform wf = from_mid_side(ms);
  const double scale = loudness / std::max(rms(wf), 1e-9);
  std::vector<double> l(wf.left().begin(), wf.left().end()), r(wf.right().begin(), wf.right().end());
  for (auto& v : l) v = std::clamp(v * scale, -0.99, 0.99);
  for (auto& v : r) v = std::clamp(v * scale, -0.99, 0.99);
  return StereoWaveform(std::move(l), std::move(r), fs);
}

std::vector<std::filesystem::path> write_toy_corpus(const std::filesystem::path& dir, std::size_t songs,
                                                    double seconds, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < songs; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "song_%02zu.wav", i);
    const auto path = dir / name;
    save_wav(toy_song(Rng::mix(seed, i), seconds), path, BitDepth::float32);
    paths.push_back(path);
  }
  return paths;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("remasterkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<double> white_noise(std::size_t n, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = amplitude * rng.uniform(-1.0, 1.0);
  return x;
}

std::vector<double> sine(std::size_t n, double freq, double amplitude, double fs) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / fs);
  return x;
}

}  // namespace remaster::testing
