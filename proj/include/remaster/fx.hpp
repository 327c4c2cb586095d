#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "remaster/audio.hpp"
#include "remaster/rng.hpp"

namespace remaster {

// Normalized second-order section (a0 == 1) with RBJ cookbook constructors.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

  static Biquad low_pass(double freq, double sample_rate, double q);
  static Biquad high_pass(double freq, double sample_rate, double q);
  static Biquad all_pass(double freq, double sample_rate, double q);
  static Biquad peak(double freq, double sample_rate, double gain_db, double q);
  static Biquad low_shelf(double freq, double sample_rate, double gain_db, double q);
  static Biquad high_shelf(double freq, double sample_rate, double gain_db, double q);

  std::complex<double> response(double freq, double sample_rate) const;
  /// Filters in place from zero state (transposed direct form II).
  void process(std::span<double> x) const;
};

enum class EqShape { low_shelf, peak, high_shelf };

struct EqBand {
  EqShape shape = EqShape::peak;
  double freq = 1000.0;
  double gain_db = 0.0;
  double q = 0.707;

  void validate() const;
  Biquad biquad(double sample_rate) const;
  bool operator==(const EqBand&) const = default;
};

// Four-band stereo width: crossovers split low / low-mid / mid / high.
struct ImagerParams {
  std::array<double, 3> crossover_freqs{300.0, 1500.0, 5100.0};
  std::array<double, 4> widths{1.0, 1.0, 1.0, 1.0};

  void validate() const;
  bool operator==(const ImagerParams&) const = default;
};

struct MaximizerParams {
  double pre_gain_db = 0.0;
  double ceiling_db = -0.1;
  double release_ms = 60.0;
  double lookahead_ms = 5.0;

  void validate() const;
  bool operator==(const MaximizerParams&) const = default;
};

struct FxParams {
  double gain_db = 0.0;
  std::vector<EqBand> eq_bands;
  ImagerParams imager;
  MaximizerParams maximizer;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const FxParams&) const = default;
};

struct Range {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const Range&) const = default;
};

// Sampling ranges for one manipulation. Frequencies and Q of peak bands are
// drawn log-uniformly, everything else uniformly.
struct FxRanges {
  Range gain_db{-6.0, 6.0};
  Range eq_gain_db{-10.0, 10.0};
  Range low_shelf_freq{30.0, 200.0};
  std::size_t num_peaks = 4;
  Range peak_freq{200.0, 10000.0};
  Range peak_q{0.3, 3.0};
  Range high_shelf_freq{4000.0, 16000.0};
  double shelf_q = 0.707;
  std::array<double, 3> crossover_freqs{300.0, 1500.0, 5100.0};
  Range width{0.0, 2.0};
  Range pre_gain_db{0.0, 12.0};
  Range ceiling_db{-1.0, -0.1};
  Range release_ms{60.0, 60.0};
  Range lookahead_ms{5.0, 5.0};

  void validate() const;
  /// Every draw is a no-op chain apart from the crossover all-pass.
  static FxRanges identity();
};

FxParams sample_fx_params(Rng& rng, const FxRanges& ranges);
/// Seeds a fresh stream with `seed` and records it in the result.
FxParams sample_fx_params(std::uint64_t seed, const FxRanges& ranges);

StereoWaveform apply_gain(const StereoWaveform& wf, double gain_db);
StereoWaveform apply_eq(const StereoWaveform& wf, std::span<const EqBand> bands);
/// LR4 four-band split; the bands sum to an all-pass of the input.
std::array<StereoWaveform, 4> crossover_split(const StereoWaveform& wf,
                                              const std::array<double, 3>& freqs);
StereoWaveform apply_stereo_imager(const StereoWaveform& wf, const ImagerParams& p);
StereoWaveform apply_maximizer(const StereoWaveform& wf, const MaximizerParams& p);
/// gain -> EQ -> stereo imager -> maximizer.
StereoWaveform apply_chain(const StereoWaveform& wf, const FxParams& p);

void to_json(nlohmann::json& j, const EqBand& b);
void from_json(const nlohmann::json& j, EqBand& b);
void to_json(nlohmann::json& j, const ImagerParams& p);
void from_json(const nlohmann::json& j, ImagerParams& p);
void to_json(nlohmann::json& j, const MaximizerParams& p);
void from_json(const nlohmann::json& j, MaximizerParams& p);
void to_json(nlohmann::json& j, const FxParams& p);
void from_json(const nlohmann::json& j, FxParams& p);

FxParams load_fx_params(const std::filesystem::path& path);
void save_fx_params(const FxParams& p, const std::filesystem::path& path);

}  // namespace remaster
