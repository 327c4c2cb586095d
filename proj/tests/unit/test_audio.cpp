#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <vector>

#include "remaster/audio.hpp"
#include "remaster/error.hpp"
#include "remaster/fft.hpp"
#include "remaster/resample.hpp"
#include "remaster/wav.hpp"
#include "toy_corpus.hpp"

using namespace remaster;

namespace {

void put16(std::ofstream& f, std::uint16_t v) { f.put(static_cast<char>(v & 0xFF)).put(static_cast<char>(v >> 8)); }
void put32(std::ofstream& f, std::uint32_t v) {
  put16(f, static_cast<std::uint16_t>(v & 0xFFFF));
  put16(f, static_cast<std::uint16_t>(v >> 16));
}

// Hand-rolled PCM16 writer, independent of save_wav.
void write_pcm16(const std::filesystem::path& path, std::uint16_t channels, const std::vector<std::int16_t>& codes) {
  std::ofstream f(path, std::ios::binary);
  const auto bytes = static_cast<std::uint32_t>(codes.size() * 2);
  f.write("RIFF", 4);
  put32(f, 36 + bytes);
  f.write("WAVEfmt ", 8);
  put32(f, 16);
  put16(f, 1);
  put16(f, channels);
  put32(f, 44100);
  put32(f, 44100u * channels * 2);
  put16(f, static_cast<std::uint16_t>(channels * 2));
  put16(f, 16);
  f.write("data", 4);
  put32(f, bytes);
  for (auto c : codes) put16(f, static_cast<std::uint16_t>(c));
}

std::vector<std::int16_t> read_pcm16_codes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::int16_t> codes;
  for (std::size_t i = 44; i + 1 < bytes.size(); i += 2)
    codes.push_back(static_cast<std::int16_t>(static_cast<unsigned char>(bytes[i]) |
                                              (static_cast<unsigned char>(bytes[i + 1]) << 8)));
  return codes;
}

}  // namespace

TEST_CASE("load_wav scales 16-bit codes by 2^-15") {
  const auto dir = testing::scratch_dir("audio_pcm");
  write_pcm16(dir / "a.wav", 2, {32767, -32768, 0, 16384});
  const auto wf = load_wav(dir / "a.wav");
  REQUIRE(wf.size() == 2);
  CHECK(wf.left()[0] == 32767.0 / 32768.0);
  CHECK(wf.right()[0] == -1.0);
  CHECK(wf.right()[1] == 0.5);
  CHECK(peak(wf) == 1.0);
}

TEST_CASE("mono files are duplicated to both channels") {
  const auto dir = testing::scratch_dir("audio_mono");
  write_pcm16(dir / "m.wav", 1, {100, -200, 300, 400, 500});
  const auto wf = load_wav(dir / "m.wav");
  CHECK(wf.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(wf.left()[i] == wf.right()[i]);
  CHECK(wf.left()[1] == -200.0 / 32768.0);
}

TEST_CASE("corrupt and missing files raise WavError") {
  const auto dir = testing::scratch_dir("audio_bad");
  {
    std::ofstream f(dir / "bad.wav", std::ios::binary);
    f << "this is not a wave file at all, just text padding it out";
  }
  try {
    load_wav(dir / "bad.wav");
    FAIL("expected an error");
  } catch (const WavError& e) {
    CHECK(e.kind() == WavErrorKind::unsupported_format);
    CHECK(std::string(e.what()).find("unsupported codec/bit depth") != std::string::npos);
  }
  CHECK_THROWS_AS(load_wav(dir / "absent.wav"), WavError);
}

TEST_CASE("32f round trip is bit exact and 16-bit stays within one step") {
  const auto dir = testing::scratch_dir("audio_rt");
  const auto wf = testing::toy_song(3, 0.2);
  save_wav(wf, dir / "f.wav", BitDepth::float32);
  const auto back = load_wav(dir / "f.wav");
  for (std::size_t i = 0; i < wf.size(); ++i) {
    CHECK(back.left()[i] == static_cast<double>(static_cast<float>(wf.left()[i])));
    CHECK(back.right()[i] == static_cast<double>(static_cast<float>(wf.right()[i])));
  }
  // float32 data survives a second pass unchanged
  save_wav(back, dir / "g.wav", BitDepth::float32);
  CHECK(load_wav(dir / "g.wav") == back);

  save_wav(wf, dir / "p.wav", BitDepth::pcm16);
  const auto q = load_wav(dir / "p.wav");
  double worst = 0.0;
  for (std::size_t i = 0; i < wf.size(); ++i) worst = std::max(worst, std::abs(q.left()[i] - wf.left()[i]));
  CHECK(worst <= std::ldexp(1.0, -15));

  save_wav(wf, dir / "p24.wav", BitDepth::pcm24);
  const auto q24 = load_wav(dir / "p24.wav");
  CHECK(std::abs(q24.right()[7] - wf.right()[7]) <= std::ldexp(1.0, -23));
}

TEST_CASE("out-of-range samples clamp to full scale on save") {
  const auto dir = testing::scratch_dir("audio_clamp");
  const StereoWaveform wf({1.5, -1.5, 0.25, 0.999999}, {0.0, 1.0, -1.0, -0.5}, 44100.0);
  save_wav(wf, dir / "c.wav", BitDepth::pcm16);
  // manual quantizer: round(x * 32768) clamped to [-32768, 32767]
  auto manual = [](double x) {
    return static_cast<std::int16_t>(std::clamp(std::round(x * 32768.0), -32768.0, 32767.0));
  };
  const auto codes = read_pcm16_codes(dir / "c.wav");
  REQUIRE(codes.size() == 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(codes[2 * i] == manual(wf.left()[i]));
    CHECK(codes[2 * i + 1] == manual(wf.right()[i]));
  }
  CHECK(codes[0] == 32767);
  CHECK(codes[2] == -32768);
}

TEST_CASE("parse_bit_depth accepts the three depths") {
  CHECK(parse_bit_depth("16") == BitDepth::pcm16);
  CHECK(parse_bit_depth("24") == BitDepth::pcm24);
  CHECK(parse_bit_depth("32f") == BitDepth::float32);
  CHECK_THROWS_AS(parse_bit_depth("8"), InvalidArgument);
}

TEST_CASE("StereoWaveform rejects malformed channels") {
  CHECK_THROWS_AS(StereoWaveform({1.0, 2.0}, {1.0}, 44100.0), InvalidArgument);
  CHECK_THROWS_AS(StereoWaveform({}, {}, 44100.0), InvalidArgument);
  CHECK_THROWS_AS(StereoWaveform({NAN}, {0.0}, 44100.0), InvalidArgument);
  CHECK_THROWS_AS(StereoWaveform({0.0}, {0.0}, 0.0), InvalidArgument);
}

TEST_CASE("mid/side conversion") {
  const StereoWaveform a({1.0, 0.0}, {0.0, 1.0}, 44100.0);
  const auto ms = to_mid_side(a);
  CHECK(ms.mid == std::vector<double>{0.5, 0.5});
  CHECK(ms.side == std::vector<double>{0.5, -0.5});
  CHECK(from_mid_side(ms) == a);

  const StereoWaveform same({0.3, -0.2, 0.7}, {0.3, -0.2, 0.7}, 44100.0);
  for (double s : to_mid_side(same).side) CHECK(s == 0.0);
  const StereoWaveform opposite({0.3, -0.2, 0.7}, {-0.3, 0.2, -0.7}, 44100.0);
  for (double m : to_mid_side(opposite).mid) CHECK(m == 0.0);
}

TEST_CASE("mid/side round trip is exact up to rounding for random signals") {
  const auto wf = testing::toy_song(11, 0.1);
  const auto back = from_mid_side(to_mid_side(wf));
  for (std::size_t i = 0; i < wf.size(); ++i) {
    CHECK(back.left()[i] == doctest::Approx(wf.left()[i]).epsilon(1e-15));
    CHECK(back.right()[i] == doctest::Approx(wf.right()[i]).epsilon(1e-15));
  }
}

TEST_CASE("rms") {
  CHECK(rms(std::vector<double>(10, 0.0)) == 0.0);
  CHECK(rms(std::vector<double>(10, 0.5)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(rms(std::vector<double>{3.0, 4.0}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  // stereo rms pools both channels
  const StereoWaveform wf({3.0, 3.0}, {4.0, 4.0}, 44100.0);
  CHECK(rms(wf) == doctest::Approx(std::sqrt(12.5)));
}

TEST_CASE("segment") {
  const auto wf = testing::toy_song(5, 10.0);
  CHECK(segment(wf, 0, wf.size()) == wf);
  CHECK_THROWS_AS(segment(wf, 0, 0), InvalidArgument);
  CHECK_THROWS_AS(segment(wf, wf.size() - 10, 11), InvalidArgument);
  const auto s = segment(wf, 44100, 131072);
  REQUIRE(s.size() == 131072);
  CHECK(s.left()[0] == wf.left()[44100]);
  CHECK(s.right()[131071] == wf.right()[44100 + 131071]);
}

TEST_CASE("db conversions invert each other") {
  CHECK(db_to_gain(0.0) == 1.0);
  CHECK(db_to_gain(20.0) == doctest::Approx(10.0));
  CHECK(gain_to_db(db_to_gain(-7.3)) == doctest::Approx(-7.3));
}

TEST_CASE("resample2 keeps DC after up then down") {
  const FilterSpec spec;
  const std::vector<double> dc(2000, 0.37);
  const auto up = resample2(dc, ResampleDirection::up, spec);
  REQUIRE(up.size() == 4000);
  const auto down = resample2(up, ResampleDirection::down, spec);
  REQUIRE(down.size() == 2000);
  const std::size_t edge = spec.taps / 2;
  for (std::size_t i = edge; i + edge < down.size(); ++i) CHECK(std::abs(down[i] - 0.37) <= 1e-3);
  for (std::size_t i = edge; i + edge < up.size(); ++i) CHECK(std::abs(up[i] - 0.37) <= 1e-3);
}

TEST_CASE("resample2 suppresses the image of a tone near Nyquist") {
  const std::size_t n = 4096;
  const double fs = 44100.0;
  // on-bin tone at about 0.9 x Nyquist so leakage does not mask the image
  const std::size_t bin = 1843;
  const double f = fs * static_cast<double>(bin) / static_cast<double>(n);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
  const auto up = resample2(x, ResampleDirection::up);
  // analyse the steady middle with a Hann window
  const std::size_t m = 4096;
  std::vector<double> frame(m);
  for (std::size_t i = 0; i < m; ++i)
    frame[i] = up[2048 + i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / m));
  std::vector<std::complex<double>> spec(m / 2 + 1);
  RealFft fft(m);
  fft.forward(frame, spec);
  // bins at the doubled rate
  auto level = [&](double hz) {
    const auto k = static_cast<std::size_t>(std::lround(hz * m / (2.0 * fs)));
    double best = 0.0;
    for (std::size_t j = k - 3; j <= k + 3; ++j) best = std::max(best, std::abs(spec[j]));
    return best;
  };
  const double tone = level(f);
  const double image = level(fs - f);
  CHECK(20.0 * std::log10(tone / image) >= 60.0);
}

TEST_CASE("resample2 maps zero to zero and checks lengths") {
  const std::vector<double> z(64, 0.0);
  for (double v : resample2(z, ResampleDirection::up)) CHECK(v == 0.0);
  for (double v : resample2(z, ResampleDirection::down)) CHECK(v == 0.0);
  CHECK_THROWS_AS(resample2(std::vector<double>(63, 0.0), ResampleDirection::down), InvalidArgument);
}

TEST_CASE("resampler adjoints satisfy <Ax, y> = <x, A'y>") {
  const Resampler2 r;
  for (std::size_t t : {1u, 7u, 64u, 333u}) {
    const auto x = testing::white_noise(t, 1.0, t);
    const auto y = testing::white_noise(2 * t, 1.0, t + 100);
    std::vector<double> ux(2 * t), dy(t), uty(t, 0.0), dtx(2 * t, 0.0);
    r.upsample(x, ux);
    r.downsample(y, dy);
    r.upsample_adjoint(y, uty);
    r.downsample_adjoint(x, dtx);
    double a = 0, b = 0, c = 0, d = 0;
    for (std::size_t i = 0; i < 2 * t; ++i) {
      a += ux[i] * y[i];
      d += dtx[i] * y[i];
    }
    for (std::size_t i = 0; i < t; ++i) {
      b += x[i] * uty[i];
      c += dy[i] * x[i];
    }
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
    CHECK(c == doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("resampler matches a dense convolution oracle") {
  const Resampler2 r;
  const auto taps = r.taps();
  const auto centre = static_cast<long>(taps.size() / 2);
  const long t = 150;
  const auto x = testing::white_noise(static_cast<std::size_t>(t), 1.0, 9);
  std::vector<double> up(2 * t), dense(2 * t, 0.0);
  r.upsample(x, up);
  // zero-stuff, gain 2, centred FIR
  for (long i = 0; i < t; ++i)
    for (long k = 0; k < static_cast<long>(taps.size()); ++k) {
      const long n = 2 * i + k - centre;
      if (n >= 0 && n < 2 * t) dense[static_cast<std::size_t>(n)] += 2.0 * taps[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(i)];
    }
  for (long n = 0; n < 2 * t; ++n) CHECK(up[static_cast<std::size_t>(n)] == doctest::Approx(dense[static_cast<std::size_t>(n)]).epsilon(1e-12));
}

TEST_CASE("designed low-pass has unit DC gain and symmetric taps") {
  FilterSpec spec;
  const auto h = design_lowpass(spec);
  CHECK(h.size() == spec.taps);
  double sum = 0.0;
  for (double v : h) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]));
  spec.taps = 64;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
}
