#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "remaster/error.hpp"
#include "remaster/fft.hpp"
#include "remaster/fx.hpp"
#include "toy_corpus.hpp"

using namespace remaster;

namespace {

constexpr double kFs = 44100.0;
constexpr std::size_t kIrLength = 1 << 16;

StereoWaveform impulse(std::size_t n = kIrLength) {
  std::vector<double> x(n, 0.0);
  x[0] = 1.0;
  return StereoWaveform(x, x, kFs);
}

// |H| in dB at the bins of a long impulse response.
std::vector<double> response_db(std::span<const double> ir) {
  RealFft fft(ir.size());
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(ir, spec);
  std::vector<double> db(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) db[k] = 20.0 * std::log10(std::abs(spec[k]));
  return db;
}

std::size_t bin_of(double hz, std::size_t n = kIrLength) { return static_cast<std::size_t>(std::lround(hz * n / kFs)); }

// Peaking EQ written out from the cookbook formulas, evaluated on the unit circle.
double analytic_peak_db(double f0, double gain_db, double q, double f) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * std::numbers::pi * f0 / kFs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double b0 = 1 + alpha * a, b1 = -2 * std::cos(w0), b2 = 1 - alpha * a;
  const double a0 = 1 + alpha / a, a1 = -2 * std::cos(w0), a2 = 1 - alpha / a;
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / kFs);
  const auto h = (b0 + b1 * z1 + b2 * z1 * z1) / (a0 + a1 * z1 + a2 * z1 * z1);
  return 20.0 * std::log10(std::abs(h));
}

double mean_square(std::span<const double> x, std::size_t from) {
  double s = 0.0;
  for (std::size_t i = from; i < x.size(); ++i) s += x[i] * x[i];
  return s / static_cast<double>(x.size() - from);
}

StereoWaveform stereo_sine(double freq, double amp, double seconds, double right_scale = 1.0) {
  const auto n = static_cast<std::size_t>(seconds * kFs);
  auto l = testing::sine(n, freq, amp, kFs);
  auto r = l;
  for (double& v : r) v *= right_scale;
  return StereoWaveform(std::move(l), std::move(r), kFs);
}

}  // namespace

TEST_CASE("sample_fx_params is deterministic per seed") {
  const auto a = sample_fx_params(42, FxRanges{});
  const auto b = sample_fx_params(42, FxRanges{});
  CHECK(a == b);
  CHECK(a.seed == 42);
  CHECK_FALSE(sample_fx_params(43, FxRanges{}) == a);
}

TEST_CASE("degenerate ranges return exactly their value") {
  FxRanges r;
  r.gain_db = {2.5, 2.5};
  r.eq_gain_db = {-3.0, -3.0};
  r.peak_freq = {800.0, 800.0};
  r.peak_q = {1.2, 1.2};
  r.width = {0.4, 0.4};
  r.pre_gain_db = {5.0, 5.0};
  r.ceiling_db = {-0.5, -0.5};
  const auto p = sample_fx_params(7, r);
  CHECK(p.gain_db == 2.5);
  for (const auto& band : p.eq_bands) CHECK(band.gain_db == -3.0);
  CHECK(p.eq_bands[1].freq == 800.0);
  CHECK(p.eq_bands[1].q == 1.2);
  for (double w : p.imager.widths) CHECK(w == 0.4);
  CHECK(p.maximizer.pre_gain_db == 5.0);
  CHECK(p.maximizer.ceiling_db == -0.5);
}

TEST_CASE("default ranges stay in bounds over 10000 draws") {
  const FxRanges r;
  Rng rng(1234);
  for (int i = 0; i < 10000; ++i) {
    const auto p = sample_fx_params(rng, r);
    REQUIRE(p.eq_bands.size() == r.num_peaks + 2);
    for (double w : p.imager.widths) REQUIRE((w >= 0.0 && w <= 2.0));
    REQUIRE(std::abs(p.gain_db) <= 6.0);
    for (const auto& b : p.eq_bands) {
      REQUIRE(std::abs(b.gain_db) <= 10.0);
      REQUIRE((b.freq >= 20.0 && b.freq <= 20000.0));
    }
    REQUIRE(p.maximizer.ceiling_db <= -0.1);
    REQUIRE(p.maximizer.ceiling_db >= -1.0);
    REQUIRE_NOTHROW(p.validate());
  }
}

TEST_CASE("invalid parameters are rejected") {
  EqBand bad{EqShape::peak, 10.0, 0.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  ImagerParams im;
  im.widths[2] = 2.5;
  CHECK_THROWS_AS(im.validate(), InvalidArgument);
  im = {};
  im.crossover_freqs = {1500.0, 300.0, 5100.0};
  CHECK_THROWS_AS(im.validate(), InvalidArgument);
  MaximizerParams mx;
  mx.ceiling_db = 0.5;
  CHECK_THROWS_AS(mx.validate(), InvalidArgument);
}

TEST_CASE("flat EQ is a no-op") {
  const auto wf = testing::toy_song(2, 0.5);
  const std::vector<EqBand> bands{{EqShape::low_shelf, 100.0, 0.0, 0.707},
                                  {EqShape::peak, 1000.0, 0.0, 1.0},
                                  {EqShape::high_shelf, 8000.0, 0.0, 0.707}};
  const auto out = apply_eq(wf, bands);
  for (std::size_t i = 0; i < wf.size(); ++i) REQUIRE(std::abs(out.left()[i] - wf.left()[i]) <= 1e-9);
}

TEST_CASE("peak band matches the analytic cookbook response") {
  const std::vector<EqBand> bands{{EqShape::peak, 1000.0, 6.0, 1.0}};
  const auto ir = apply_eq(impulse(), bands);
  const auto db = response_db(ir.left());
  const double at_centre = db[bin_of(1000.0)];
  const double f_bin = static_cast<double>(bin_of(1000.0)) * kFs / kIrLength;
  CHECK(std::abs(at_centre - analytic_peak_db(1000.0, 6.0, 1.0, f_bin)) <= 0.05);
  CHECK(std::abs(db[bin_of(20.0)]) <= 0.1);
  // Biquad::response agrees with the measured response too
  const auto bq = bands[0].biquad(kFs);
  CHECK(std::abs(20.0 * std::log10(std::abs(bq.response(1000.0, kFs))) - 6.0) <= 0.05);
}

TEST_CASE("EQ at band centres matches the analytic biquad over random bands") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const double f0 = rng.log_uniform(50.0, 15000.0);
    const double g = rng.uniform(-12.0, 12.0);
    const double q = rng.log_uniform(0.3, 4.0);
    const std::vector<EqBand> bands{{EqShape::peak, f0, g, q}};
    const auto db = response_db(apply_eq(impulse(), bands).left());
    const auto k = bin_of(f0);
    const double f_bin = static_cast<double>(k) * kFs / kIrLength;
    CHECK(std::abs(db[k] - analytic_peak_db(f0, g, q, f_bin)) <= 0.05);
  }
}

TEST_CASE("shelves reach their gain far from the corner") {
  const std::vector<EqBand> low{{EqShape::low_shelf, 200.0, -8.0, 0.707}};
  const auto dbl = response_db(apply_eq(impulse(), low).left());
  CHECK(dbl[bin_of(20.0)] == doctest::Approx(-8.0).epsilon(0.01));
  CHECK(std::abs(dbl[bin_of(15000.0)]) <= 0.05);
  const std::vector<EqBand> high{{EqShape::high_shelf, 4000.0, 5.0, 0.707}};
  const auto dbh = response_db(apply_eq(impulse(), high).left());
  CHECK(dbh[bin_of(20000.0)] == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("LR4 band sum is flat over the audio band") {
  const auto bands = crossover_split(impulse(), {300.0, 1500.0, 5100.0});
  std::vector<double> sum(kIrLength, 0.0);
  for (const auto& b : bands)
    for (std::size_t i = 0; i < kIrLength; ++i) sum[i] += b.left()[i];
  const auto db = response_db(sum);
  double worst = 0.0;
  for (std::size_t k = bin_of(20.0); k <= bin_of(20000.0); ++k) worst = std::max(worst, std::abs(db[k]));
  CHECK(worst <= 0.1);
}

TEST_CASE("crossover of silence is silence") {
  const auto bands = crossover_split(StereoWaveform::silence(1000), {300.0, 1500.0, 5100.0});
  for (const auto& b : bands) CHECK(peak(b) == 0.0);
}

TEST_CASE("LR4 slope isolates a tone ten times above the first split") {
  const auto tone = stereo_sine(3000.0, 0.5, 1.0);
  const auto bands = crossover_split(tone, {300.0, 1500.0, 5100.0});
  const std::size_t settle = 22050;
  const double low = mean_square(bands[0].left(), settle);
  const double home = mean_square(bands[2].left(), settle);
  CHECK(10.0 * std::log10(home / low) >= 70.0);
}

TEST_CASE("stereo imager") {
  const auto wf = testing::toy_song(4, 0.5);
  SUBCASE("zero width folds to mono") {
    ImagerParams p;
    p.widths = {0.0, 0.0, 0.0, 0.0};
    const auto out = apply_stereo_imager(wf, p);
    const auto side = to_mid_side(out).side;
    CHECK(20.0 * std::log10(rms(side) + 1e-300) <= -80.0);
  }
  SUBCASE("unit width equals the all-pass sum") {
    const ImagerParams p;
    const auto out = apply_stereo_imager(wf, p);
    const auto bands = crossover_split(wf, p.crossover_freqs);
    for (std::size_t i = 0; i < wf.size(); ++i) {
      double l = 0.0;
      for (const auto& b : bands) l += b.left()[i];
      REQUIRE(std::abs(out.left()[i] - l) <= 1e-6);
    }
  }
  SUBCASE("mono stays mono for any widths") {
    const StereoWaveform mono(std::vector<double>(wf.left().begin(), wf.left().end()),
                              std::vector<double>(wf.left().begin(), wf.left().end()), kFs);
    ImagerParams p;
    p.widths = {2.0, 0.3, 1.7, 0.0};
    const auto out = apply_stereo_imager(mono, p);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out.left()[i] == out.right()[i]);
  }
}

TEST_CASE("maximizer leaves quiet input alone") {
  const auto wf = stereo_sine(440.0, db_to_gain(-40.0), 0.5, 0.7);
  const auto out = apply_maximizer(wf, MaximizerParams{});
  for (std::size_t i = 0; i < wf.size(); ++i) REQUIRE(std::abs(out.left()[i] - wf.left()[i]) <= 1e-6);
}

TEST_CASE("maximizer holds the ceiling on a full-scale square") {
  const std::size_t n = 44100;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (i / 50) % 2 == 0 ? 1.0 : -1.0;
  MaximizerParams p;
  p.ceiling_db = -0.3;
  const auto out = apply_maximizer(StereoWaveform(sq, sq, kFs), p);
  CHECK(peak(out) <= db_to_gain(-0.3) + 1e-9);
}

TEST_CASE("maximizer pushes a sine to the ceiling and raises loudness") {
  const auto wf = stereo_sine(440.0, db_to_gain(-6.0), 1.0);
  MaximizerParams p;
  p.pre_gain_db = 12.0;
  p.ceiling_db = -0.1;
  const auto out = apply_maximizer(wf, p);
  CHECK(std::abs(gain_to_db(peak(out)) - (-0.1)) <= 0.05);
  CHECK(rms(out) > rms(wf));
}

TEST_CASE("maximizer ceiling holds over random draws") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    MaximizerParams p;
    p.pre_gain_db = rng.uniform(0.0, 24.0);
    p.ceiling_db = rng.uniform(-3.0, 0.0);
    p.release_ms = rng.uniform(5.0, 300.0);
    p.lookahead_ms = rng.uniform(0.0, 10.0);
    const auto wf = testing::toy_song(rng.next_u64(), 0.25);
    const auto out = apply_maximizer(wf, p);
    REQUIRE(peak(out) <= db_to_gain(p.ceiling_db) + 1e-4);
  }
}

TEST_CASE("identity chain is an all-pass with a flat response") {
  const auto p = sample_fx_params(3, FxRanges::identity());
  const auto ir = apply_chain(impulse(), p);
  const auto db = response_db(ir.left());
  double worst = 0.0;
  for (std::size_t k = bin_of(20.0); k <= bin_of(20000.0); ++k) worst = std::max(worst, std::abs(db[k]));
  CHECK(worst <= 0.1);
}

TEST_CASE("apply_chain is deterministic and composes stages") {
  const auto wf = testing::toy_song(8, 0.5);
  auto p = sample_fx_params(99, FxRanges{});
  const auto a = apply_chain(wf, p);
  const auto b = apply_chain(wf, p);
  CHECK(a == b);
  p.imager.widths = {0.0, 0.0, 0.0, 0.0};
  const auto mono = apply_chain(wf, p);
  for (std::size_t i = 0; i < mono.size(); ++i) REQUIRE(std::abs(mono.left()[i] - mono.right()[i]) <= 1e-12);
}

TEST_CASE("FxParams JSON round trip and strict keys") {
  const auto p = sample_fx_params(5, FxRanges{});
  nlohmann::json j = p;
  CHECK(j.get<FxParams>() == p);
  const auto dir = testing::scratch_dir("fx_json");
  save_fx_params(p, dir / "p.json");
  CHECK(load_fx_params(dir / "p.json") == p);
  j["unexpected"] = 1;
  CHECK_THROWS_AS(j.get<FxParams>(), InvalidArgument);
}
