#include <doctest.h>

#include <cmath>
#include <complex>

#include "remaster/cloner.hpp"
#include "remaster/error.hpp"
#include "remaster/fft.hpp"
#include "toy_corpus.hpp"

using namespace remaster;
using nn::Tensor;

namespace {

std::vector<double> random_condition(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(n);
  for (double& v : c) v = rng.normal();
  return c;
}

double l2(const StereoWaveform& a, const StereoWaveform& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::pow(a.left()[i] - b.left()[i], 2) + std::pow(a.right()[i] - b.right()[i], 2);
  return std::sqrt(s);
}

void set_film_identity(Cloner& c) {
  for (const auto& p : c.params().parameters()) {
    if (p.name.rfind("film", 0) != 0) continue;
    auto t = p.tensor;
    auto v = t.mutable_values();
    if (p.name.ends_with(".weight")) {
      std::fill(v.begin(), v.end(), 0.0);
    } else {
      const std::size_t half = v.size() / 2;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = i < half ? 1.0 : 0.0;
    }
  }
}

// Energy in bins 5 .. 0.9 * Nyquist, excluding +-3 bins around `skip_bin`.
double band_energy(std::span<const double> x, std::size_t skip_bin) {
  RealFft fft(x.size());
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    w[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(x.size())));
  fft.forward(w, spec);
  double e = 0.0;
  const std::size_t top = spec.size() * 9 / 10;
  for (std::size_t k = 5; k < top; ++k)
    if (k + 3 < skip_bin || k > skip_bin + 3) e += std::norm(spec[k]);
  return e;
}

}  // namespace

TEST_CASE("random-init cloner preserves length and stays in range") {
  const Cloner c(ClonerConfig::tiny(), 1);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto wf = testing::toy_song(seed, 0.2);
    wf = segment(wf, 0, 8192);
    const auto out = c.clone(wf, random_condition(64, seed));
    CHECK(out.size() == wf.size());
    CHECK(peak(out) <= 1.0);
  }
  // a loud input still lands in [-1, 1]
  std::vector<double> loud(1024, 0.0);
  for (std::size_t i = 0; i < loud.size(); ++i) loud[i] = (i % 7 < 3) ? 1.0 : -1.0;
  auto cfg = ClonerConfig::tiny();
  Cloner hot(cfg, 9);
  for (const auto& p : hot.params().parameters()) {
    auto t = p.tensor;
    for (double& v : t.mutable_values()) v *= 20.0;
  }
  const auto out = hot.clone(StereoWaveform(loud, loud, 44100.0), random_condition(64, 4));
  CHECK(peak(out) <= 1.0);
  CHECK(peak(out) == 1.0);
}

TEST_CASE("distinct conditions give distinct outputs at random init") {
  const Cloner c(ClonerConfig::tiny(), 2);
  const auto wf = segment(testing::toy_song(5, 0.2), 0, 4096);
  const auto a = c.clone(wf, random_condition(64, 10));
  const auto b = c.clone(wf, random_condition(64, 11));
  CHECK(l2(a, b) > 0.0);
}

TEST_CASE("identity FiLM makes the output ignore the condition") {
  Cloner c(ClonerConfig::tiny(), 3);
  set_film_identity(c);
  const auto wf = segment(testing::toy_song(6, 0.2), 0, 4096);
  const auto a = c.clone(wf, random_condition(64, 10));
  const auto b = c.clone(wf, random_condition(64, 11));
  CHECK(a == b);
}

TEST_CASE("FiLM producers start near identity") {
  const Cloner c(ClonerConfig::tiny(), 4);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& f = c.film_producer(k);
    const std::size_t ch = ClonerConfig::tiny().channels(k + 1);
    CHECK(f.weight.shape() == nn::Shape{2 * ch, 64});
    for (std::size_t i = 0; i < 2 * ch; ++i) CHECK(f.bias.values()[i] == (i < ch ? 1.0 : 0.0));
    const double bound = 0.1 / std::sqrt(64.0);
    for (double w : f.weight.values()) CHECK(std::abs(w) <= bound);
  }
}

TEST_CASE("layout: stride-1 skipless input layer and halving per level") {
  auto cfg = ClonerConfig::canonical();
  cfg.condition_dim = 8;  // keeps the canonical model cheap to build
  const Cloner c(cfg, 5);
  const auto lay = c.layout(131072);
  CHECK(lay.bottleneck_length == 2048);
  CHECK(lay.first_layer_stride == 1);
  CHECK_FALSE(lay.first_layer_skip);
  REQUIRE(lay.skip_sources.size() == 6);
  CHECK(lay.skip_sources.front() == "down5");
  CHECK(lay.skip_sources.back() == "down0");
  // the shallowest decoder block sees down0's channels, not the first layer's
  CHECK(lay.decoder_input_channels.back() == cfg.channels(2) + cfg.channels(1));
  CHECK(lay.decoder_input_lengths.back() == 131072);
  CHECK(lay.decoder_input_lengths.front() == 131072 / 32);
  for (const auto& p : c.params().parameters())
    if (p.name == "first.weight") CHECK(p.tensor.shape() == nn::Shape{32, 2, 15});
  CHECK_THROWS_AS(c.layout(1000), InvalidArgument);
}

TEST_CASE("cloner rejects bad shapes") {
  const Cloner c(ClonerConfig::tiny(), 6);
  CHECK_THROWS_AS(c.clone(StereoWaveform::silence(100), random_condition(64, 1)), InvalidArgument);
  CHECK_THROWS_AS(c.clone(StereoWaveform::silence(256), random_condition(63, 1)), InvalidArgument);
}

TEST_CASE("cloner gradients match central differences on a micro model") {
  ClonerConfig cfg;
  cfg.num_levels = 2;
  cfg.base_channels = 2;
  cfg.down_kernel = 5;
  cfg.up_kernel = 3;
  cfg.condition_dim = 3;
  cfg.resampler.taps = 31;
  Cloner c(cfg, 7);
  Rng rng(8);
  std::vector<double> xv(2 * 2 * 32), cv(2 * 3);
  for (double& v : xv) v = 0.3 * rng.normal();
  for (double& v : cv) v = rng.normal();
  const Tensor x({2, 2, 32}, xv);
  const Tensor cond({2, 3}, cv);
  std::vector<double> w(2 * 2 * 32);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  const Tensor weights({2, 2, 32}, w);
  auto loss = [&] { return nn::sum(nn::mul(c.forward(x, cond), weights)); };

  c.params().zero_grad();
  nn::backward(loss());
  const double h = 1e-6;
  std::size_t checked = 0;
  for (const auto& p : c.params().parameters()) {
    auto t = p.tensor;
    auto v = t.mutable_values();
    const std::vector<double> g(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < v.size(); i += 1 + v.size() / 6) {
      const double keep = v[i];
      double plus, minus;
      {
        nn::NoGradGuard guard;
        v[i] = keep + h;
        plus = loss().item();
        v[i] = keep - h;
        minus = loss().item();
      }
      v[i] = keep;
      const double numeric = (plus - minus) / (2 * h);
      CHECK_MESSAGE(std::abs(numeric - g[i]) <= 1e-5 * std::max(1.0, std::abs(numeric)), p.name);
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("alias-free activation") {
  const Resampler2 r;
  SUBCASE("zero stays zero") {
    const auto y = alias_free_act(Tensor({1, 1, 256}, 0.0), 0.2, r);
    for (double v : y.values()) CHECK(v == 0.0);
  }
  SUBCASE("positive band-limited input passes like a plain leaky ReLU") {
    const std::size_t n = 2048;
    auto s = testing::sine(n, 300.0, 0.2);
    for (double& v : s) v += 0.5;
    const auto y = alias_free_act(Tensor({1, 1, n}, s), 0.2, r);
    for (std::size_t i = 128; i + 128 < n; ++i) REQUIRE(std::abs(y.values()[i] - s[i]) <= 1e-2);
  }
  SUBCASE("less aliasing than the naive activation near Nyquist") {
    const std::size_t n = 4096;
    const std::size_t bin = 1946;  // about 0.95 x Nyquist, on a bin
    const double f = 44100.0 * static_cast<double>(bin) / static_cast<double>(n);
    const auto s = testing::sine(n, f, 0.8);
    const Tensor x({1, 1, n}, s);
    const auto smooth = alias_free_act(x, 0.2, r);
    const auto naive = nn::leaky_relu(x, 0.2);
    CHECK(band_energy(smooth.values(), bin) < band_energy(naive.values(), bin));
  }
}

TEST_CASE("cloner config presets and JSON") {
  CHECK(ClonerConfig::canonical().num_levels == 6);
  CHECK(ClonerConfig::canonical().condition_dim == 2048);
  CHECK(ClonerConfig::tiny().length_multiple() == 8);
  CHECK_THROWS_AS(ClonerConfig::preset("x"), InvalidArgument);
  nlohmann::json j = ClonerConfig::tiny();
  const auto back = j.get<ClonerConfig>();
  CHECK(back.num_levels == 3);
  CHECK(back.resampler.taps == ClonerConfig::tiny().resampler.taps);
}
