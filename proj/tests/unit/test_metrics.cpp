#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "remaster/dataset.hpp"
#include "remaster/error.hpp"
#include "remaster/metrics.hpp"
#include "remaster/wav.hpp"
#include "toy_corpus.hpp"

using namespace remaster;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEps = 2.220446049250313e-16;

// |DFT| of the first nfft/2+1 bins of a zero-padded frame, computed directly.
std::vector<double> naive_power(const std::vector<double>& frame, std::size_t nfft) {
  std::vector<double> p(nfft / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < frame.size(); ++n) {
      const double a = 2.0 * kPi * static_cast<double>((k * n) % nfft) / static_cast<double>(nfft);
      re += frame[n] * std::cos(a);
      im -= frame[n] * std::sin(a);
    }
    p[k] = re * re + im * im;
  }
  return p;
}

std::vector<double> hann_interior(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * (i + 1.0) / (n + 1.0)));
  return w;
}

// STOI re-derived from Taal et al. at a native 10 kHz rate.
double stoi_oracle(std::vector<double> x, std::vector<double> y) {
  const std::size_t N = 256, hop = 128, nfft = 512, J = 15, M = 30;
  const auto w = hann_interior(N);

  // silent frame removal
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + N <= x.size(); s += hop) starts.push_back(s);
  std::vector<double> energy;
  for (std::size_t s : starts) {
    double e = 0.0;
    for (std::size_t i = 0; i < N; ++i) e += std::pow(w[i] * x[s + i], 2);
    energy.push_back(20.0 * std::log10(std::sqrt(e) + kEps));
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<double> xs, ys;
  std::size_t kept = 0;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    if (energy[f] <= top - 40.0) continue;
    xs.resize(kept * hop + N, 0.0);
    ys.resize(kept * hop + N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      xs[kept * hop + i] += w[i] * x[starts[f] + i];
      ys[kept * hop + i] += w[i] * y[starts[f] + i];
    }
    ++kept;
  }

  // one-third octave bands on the FFT grid
  std::vector<std::size_t> lo(J), hi(J);
  for (std::size_t j = 0; j < J; ++j) {
    auto nearest = [&](double f) {
      return static_cast<std::size_t>(std::lround(f / (10000.0 / nfft)));
    };
    lo[j] = nearest(150.0 * std::pow(2.0, (2.0 * j - 1.0) / 6.0));
    hi[j] = nearest(150.0 * std::pow(2.0, (2.0 * j + 1.0) / 6.0));
  }
  auto envelopes = [&](const std::vector<double>& s) {
    std::vector<std::vector<double>> env(J);
    for (std::size_t start = 0; start < s.size() - N; start += hop) {
      std::vector<double> frame(N);
      for (std::size_t i = 0; i < N; ++i) frame[i] = w[i] * s[start + i];
      const auto p = naive_power(frame, nfft);
      for (std::size_t j = 0; j < J; ++j) {
        double e = 0.0;
        for (std::size_t k = lo[j]; k < hi[j]; ++k) e += p[k];
        env[j].push_back(std::sqrt(e));
      }
    }
    return env;
  };
  const auto X = envelopes(xs), Y = envelopes(ys);
  const std::size_t T = X[0].size();
  REQUIRE(T >= M);

  const double c = std::pow(10.0, 15.0 / 20.0);
  double d = 0.0;
  std::size_t count = 0;
  for (std::size_t m = M; m <= T; ++m)
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<double> a(X[j].begin() + (m - M), X[j].begin() + m);
      std::vector<double> b(Y[j].begin() + (m - M), Y[j].begin() + m);
      double na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      const double alpha = std::sqrt(na) / (std::sqrt(nb) + kEps);
      for (std::size_t i = 0; i < M; ++i) b[i] = std::min(alpha * b[i], (1.0 + c) * a[i]);
      const double ma = std::accumulate(a.begin(), a.end(), 0.0) / M;
      const double mb = std::accumulate(b.begin(), b.end(), 0.0) / M;
      double saa = 0.0, sbb = 0.0, sab = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
      }
      d += sab / ((std::sqrt(saa) + kEps) * (std::sqrt(sbb) + kEps));
      ++count;
    }
  return d / static_cast<double>(count);
}

// Frequency-weighted segmental SNR after Hu and Loizou's formulation.
double fw_snr_oracle(const std::vector<double>& clean, const std::vector<double>& proc, double fs) {
  const double cent[25] = {50.0,    120.0,   190.0,   260.0,   330.0,   400.0,   470.0,   540.0,   617.372,
                           703.378, 798.717, 904.128, 1020.38, 1148.30, 1288.72, 1442.54, 1610.70, 1794.16,
                           1993.93, 2211.08, 2446.71, 2701.97, 2978.04, 3276.17, 3597.63};
  const double bandw[25] = {70.0,    70.0,    70.0,    70.0,    70.0,    70.0,    70.0,    77.3724, 86.0056,
                            95.3398, 105.411, 116.256, 127.914, 140.423, 153.823, 168.154, 183.457, 199.776,
                            217.153, 235.631, 255.255, 276.072, 298.126, 321.465, 346.136};
  const std::size_t win = static_cast<std::size_t>(std::lround(0.025 * fs));
  const std::size_t skip = win / 2;
  const std::size_t nfft = static_cast<std::size_t>(std::pow(2.0, std::ceil(std::log2(2.0 * win))));
  const std::size_t half = nfft / 2;
  const double min_factor = std::exp(-30.0 / (2.0 * 2.303));

  std::vector<std::vector<double>> crit(25, std::vector<double>(half));
  for (std::size_t i = 0; i < 25; ++i) {
    const double f0 = std::floor(cent[i] / (fs / 2) * half);
    const double bw = bandw[i] / (fs / 2) * half;
    for (std::size_t j = 0; j < half; ++j) {
      const double v = std::exp(-11.0 * std::pow((j - f0) / bw, 2) + std::log(70.0) - std::log(bandw[i]));
      crit[i][j] = v > min_factor ? v : 0.0;
    }
  }
  const auto w = hann_interior(win);
  const std::size_t frames = (clean.size() - win) / skip;
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> a(win), b(win);
    for (std::size_t i = 0; i < win; ++i) {
      a[i] = w[i] * clean[f * skip + i];
      b[i] = w[i] * proc[f * skip + i];
    }
    auto ma = naive_power(a, nfft), mb = naive_power(b, nfft);
    double sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < half; ++j) {
      ma[j] = std::sqrt(ma[j]);
      mb[j] = std::sqrt(mb[j]);
      sa += ma[j];
      sb += mb[j];
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 25; ++i) {
      double ea = 0.0, eb = 0.0;
      for (std::size_t j = 0; j < half; ++j) {
        ea += crit[i][j] * ma[j] / sa;
        eb += crit[i][j] * mb[j] / sb;
      }
      const double snr = std::clamp(10.0 * std::log10(ea * ea / ((ea - eb) * (ea - eb))), -10.0, 35.0);
      num += std::pow(ea, 0.2) * snr;
      den += std::pow(ea, 0.2);
    }
    total += num / den;
  }
  return total / static_cast<double>(frames);
}

// Noise with a slow on/off envelope, so silence removal has work to do.
std::vector<double> bursty(std::size_t n, double rate, std::uint64_t seed) {
  auto v = testing::white_noise(n, 0.5, seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double env = std::sin(2.0 * kPi * (1.3 + 0.1 * seed) * t);
    v[i] *= env > -0.3 ? 0.2 + std::abs(env) : 1e-4;
  }
  return v;
}

std::vector<double> blend(std::span<const double> a, std::span<const double> b, double wa, double wb) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

StereoWaveform stereo(const std::vector<double>& v, double rate = kCanonicalSampleRate) { return {v, v, rate}; }

}  // namespace

TEST_CASE("delta_rms examples") {
  const auto a = StereoWaveform(std::vector<double>(100, 0.5), std::vector<double>(100, 0.5), 44100.0);
  const auto b = StereoWaveform(std::vector<double>(100, 0.3), std::vector<double>(100, 0.3), 44100.0);
  CHECK(delta_rms(a, a) == 0.0);
  CHECK(delta_rms(a, b) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(delta_rms(b, a) == delta_rms(a, b));
  CHECK(delta_rms_side(a, b) == 0.0);
  // output with side channel RMS 0.1: L = m + s, R = m - s
  std::vector<double> l(100), r(100);
  for (std::size_t i = 0; i < 100; ++i) {
    const double s = (i % 2 ? 0.1 : -0.1);
    l[i] = 0.3 + s;
    r[i] = 0.3 - s;
  }
  const StereoWaveform wide(l, r, 44100.0);
  CHECK(delta_rms_side(b, wide) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(delta_rms_side(wide, b) == delta_rms_side(b, wide));
  CHECK_THROWS_AS(delta_rms(a, StereoWaveform::silence(99)), InvalidArgument);
}

TEST_CASE("fw-SNR of identical signals hits the ceiling") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto song = testing::toy_song(seed, 0.5);
    CHECK(fw_snr(song, song) == 35.0);
  }
}

TEST_CASE("fw-SNR is magnitude based, so polarity inversion is invisible") {
  const auto x = testing::white_noise(22050, 0.3, 5);
  auto inv = x;
  for (double& v : inv) v = -v;
  CHECK(fw_snr_channel(x, inv, 44100.0) == 35.0);
}

TEST_CASE("fw-SNR rejects silent targets and short input") {
  const std::vector<double> zero(4000, 0.0);
  const auto noise = testing::white_noise(4000, 0.3, 1);
  CHECK_THROWS_AS(fw_snr_channel(zero, noise, 44100.0), InvalidArgument);
  CHECK_THROWS_AS(fw_snr_channel(std::vector<double>(100, 0.1), std::vector<double>(100, 0.1), 44100.0),
                  InvalidArgument);
}

TEST_CASE("fw-SNR matches a direct re-derivation") {
  const double fs = 8000.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = bursty(8000, fs, seed);
    const auto b = blend(a, testing::white_noise(8000, 0.5, 100 + seed), 0.8, 0.1 * (seed % 4));
    const double want = fw_snr_oracle(a, b, fs);
    CHECK(std::abs(fw_snr_channel(a, b, fs) - want) <= 1e-3);
  }
}

TEST_CASE("STOI of identical signals is one") {
  const auto song = testing::toy_song(3, 1.0);
  CHECK(stoi(song, song) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(stoi(song, song, StoiDownmix::mono) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("STOI against independent noise is near chance") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const StereoWaveform target(testing::white_noise(44100, 0.3, seed), testing::white_noise(44100, 0.3, 30 + seed),
                                44100.0);
    const StereoWaveform noise(testing::white_noise(44100, 0.3, 10 + seed), testing::white_noise(44100, 0.3, 20 + seed),
                               44100.0);
    const double s = stoi(target, noise);
    CHECK(s < 0.2);
    CHECK(s >= -1.0);
  }
  // strongly modulated targets pick up some correlation from the clipping
  // step, so music against noise sits higher but far from a match
  const auto song = testing::toy_song(1, 1.0);
  const StereoWaveform noise(testing::white_noise(44100, 0.3, 7), testing::white_noise(44100, 0.3, 8), 44100.0);
  CHECK(stoi(song, noise) < 0.5);
}

TEST_CASE("STOI matches a direct re-derivation at 10 kHz") {
  const double fs = 10000.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = bursty(10000, fs, seed);
    const auto b = blend(a, testing::white_noise(10000, 0.5, 200 + seed), 1.0, 0.15 * (seed % 5));
    CHECK(std::abs(stoi_channel(a, b, fs) - stoi_oracle(a, b)) <= 1e-3);
  }
}

TEST_CASE("STOI needs 30 frames and a non-silent target") {
  const std::vector<double> zero(20000, 0.0);
  const auto noise = testing::white_noise(20000, 0.3, 2);
  CHECK_THROWS_AS(stoi_channel(zero, noise, 10000.0), InvalidArgument);
  const auto short_x = testing::white_noise(3000, 0.3, 3);
  CHECK_THROWS_AS(stoi_channel(short_x, short_x, 10000.0), InvalidArgument);
}

TEST_CASE("white noise at -20 dBFS lowers both metrics") {
  const double amp = std::pow(10.0, -20.0 / 20.0) * std::sqrt(3.0);  // uniform noise with -20 dBFS RMS
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const auto target = testing::toy_song(trial + 1, 1.0);
    auto noisy = target;
    const auto nl = testing::white_noise(target.size(), amp, 50 + trial);
    const auto nr = testing::white_noise(target.size(), amp, 60 + trial);
    noisy = StereoWaveform(blend(target.left(), nl, 1.0, 1.0), blend(target.right(), nr, 1.0, 1.0), 44100.0);
    CHECK(fw_snr(target, noisy) < fw_snr(target, target));
    CHECK(stoi(target, noisy) < stoi(target, target));
  }
}

TEST_CASE("rational resampling keeps tones and sets the length") {
  const auto x = testing::sine(44100, 1000.0, 0.5);
  const auto y = resample_rational(x, 44100.0, 10000.0);
  CHECK(y.size() == 10000);
  double worst = 0.0;
  for (std::size_t i = 200; i + 200 < y.size(); ++i)
    worst = std::max(worst, std::abs(y[i] - 0.5 * std::sin(2.0 * kPi * 1000.0 * i / 10000.0)));
  CHECK(worst < 1e-2);
  const auto same = resample_rational(x, 10000.0, 10000.0);
  CHECK(same == x);
}

TEST_CASE("evaluate_pairs reports") {
  const auto dir = testing::scratch_dir("metrics_eval");
  SUBCASE("empty index") {
    std::ofstream(dir / "index.jsonl").flush();
    const auto report = evaluate_pairs(dir / "index.jsonl", {});
    CHECK(report.records.empty());
    CHECK_FALSE(report.aggregate.has_value());
    CHECK(to_json(report)["aggregate"].is_null());
    CHECK(report.checkpoint_id == "none");
  }
  SUBCASE("oracle injection scores a perfect match") {
    const auto song = testing::toy_song(4, 1.0);
    save_wav(song, dir / "t.wav");
    TripletRecord r;
    r.song_id = "s";
    r.a1_path = r.a2_path = r.b2_path = "t.wav";
    r.output_path = "t.wav";
    {
      std::ofstream idx(dir / "index.jsonl");
      idx << to_json(r).dump() << '\n' << to_json(r).dump() << '\n';
    }
    EvaluateOptions opt;
    opt.generated_at = "fixed";
    opt.dataset_seed = 9;
    const auto report = evaluate_pairs(dir / "index.jsonl", opt);
    REQUIRE(report.records.size() == 2);
    CHECK(report.records[0].delta_rms == 0.0);
    CHECK(report.records[0].delta_rms_side == 0.0);
    CHECK(report.records[0].stoi == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(report.records[0].fw_snr_db == 35.0);
    REQUIRE(report.aggregate.has_value());
    CHECK(report.aggregate->stoi == doctest::Approx(1.0).epsilon(1e-6));

    write_report(report, dir / "a.json");
    write_report(evaluate_pairs(dir / "index.jsonl", opt), dir / "b.json");
    auto slurp = [](const std::filesystem::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    const auto j = nlohmann::json::parse(slurp(dir / "a.json"));
    CHECK(j["metadata"]["dataset_seed"] == 9);
    CHECK(j["records"][1]["pair_id"] == "1");
    for (const char* key : {"delta_rms", "delta_rms_side", "fw_snr_db", "stoi"}) CHECK(j["aggregate"].contains(key));
  }
  SUBCASE("model-driven pairs need checkpoints") {
    TripletRecord r;
    r.song_id = "s";
    r.a1_path = r.a2_path = r.b2_path = "missing.wav";
    {
      std::ofstream idx(dir / "index.jsonl");
      idx << to_json(r).dump() << '\n';
    }
    CHECK_THROWS_AS(evaluate_pairs(dir / "index.jsonl", {}), InvalidArgument);
  }
}
