#include "remaster/fx.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

#include "remaster/error.hpp"

namespace remaster {
namespace {

constexpr double kButterworthQ = 0.70710678118654752440;

struct CookbookTerms {
  double cos_w0;
  double alpha;
};

CookbookTerms terms(double freq, double sample_rate, double q) {
  const double w0 = 2.0 * M_PI * freq / sample_rate;
  return {std::cos(w0), std::sin(w0) / (2.0 * q)};
}

Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

void check_below_nyquist(double freq, double sample_rate, const char* what) {
  if (!(freq > 0.0) || freq >= 0.5 * sample_rate)
    throw InvalidArgument(std::string(what) + " frequency " + std::to_string(freq) +
                          " Hz must lie in (0, Nyquist)");
}

void check_range(const Range& r, const char* name) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max)
    throw InvalidArgument(std::string("invalid range for ") + name);
}

template <class F>
StereoWaveform map_channels(const StereoWaveform& wf, F&& f) {
  std::vector<double> l(wf.left().begin(), wf.left().end());
  std::vector<double> r(wf.right().begin(), wf.right().end());
  f(l);
  f(r);
  return StereoWaveform(std::move(l), std::move(r), wf.sample_rate());
}

void lr4(std::vector<double>& x, const Biquad& section) {
  section.process(x);
  section.process(x);
}

void require_exact_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                        const char* what) {
  if (!j.is_object()) throw InvalidArgument(std::string(what) + " must be a JSON object");
  std::set<std::string> expected(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!expected.contains(k)) throw InvalidArgument(std::string("unknown field '") + k + "' in " + what);
  for (const auto& k : expected)
    if (!j.contains(k)) throw InvalidArgument(std::string("missing field '") + k + "' in " + what);
}

}  // namespace

Biquad Biquad::low_pass(double freq, double sample_rate, double q) {
  const auto [c, a] = terms(freq, sample_rate, q);
  return normalized((1 - c) / 2, 1 - c, (1 - c) / 2, 1 + a, -2 * c, 1 - a);
}

Biquad Biquad::high_pass(double freq, double sample_rate, double q) {
  const auto [c, a] = terms(freq, sample_rate, q);
  return normalized((1 + c) / 2, -(1 + c), (1 + c) / 2, 1 + a, -2 * c, 1 - a);
}

Biquad Biquad::all_pass(double freq, double sample_rate, double q) {
  const auto [c, a] = terms(freq, sample_rate, q);
  return normalized(1 - a, -2 * c, 1 + a, 1 + a, -2 * c, 1 - a);
}

Biquad Biquad::peak(double freq, double sample_rate, double gain_db, double q) {
  const auto [c, a] = terms(freq, sample_rate, q);
  const double A = std::pow(10.0, gain_db / 40.0);
  return normalized(1 + a * A, -2 * c, 1 - a * A, 1 + a / A, -2 * c, 1 - a / A);
}

Biquad Biquad::low_shelf(double freq, double sample_rate, double gain_db, double q) {
  const auto [c, a] = terms(freq, sample_rate, q);
  const double A = std::pow(10.0, gain_db / 40.0);
  const double s = 2 * std::sqrt(A) * a;
  return normalized(A * ((A + 1) - (A - 1) * c + s), 2 * A * ((A - 1) - (A + 1) * c),
                    A * ((A + 1) - (A - 1) * c - s), (A + 1) + (A - 1) * c + s,
                    -2 * ((A - 1) + (A + 1) * c), (A + 1) + (A - 1) * c - s);
}

Biquad Biquad::high_shelf(double freq, double sample_rate, double gain_db, double q) {
  const auto [c, a] = terms(freq, sample_rate, q);
  const double A = std::pow(10.0, gain_db / 40.0);
  const double s = 2 * std::sqrt(A) * a;
  return normalized(A * ((A + 1) + (A - 1) * c + s), -2 * A * ((A - 1) + (A + 1) * c),
                    A * ((A + 1) + (A - 1) * c - s), (A + 1) - (A - 1) * c + s,
                    2 * ((A - 1) - (A + 1) * c), (A + 1) - (A - 1) * c - s);
}

std::complex<double> Biquad::response(double freq, double sample_rate) const {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * M_PI * freq / sample_rate);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

void Biquad::process(std::span<double> x) const {
  double s1 = 0.0, s2 = 0.0;
  for (double& v : x) {
    const double in = v;
    const double out = b0 * in + s1;
    s1 = b1 * in - a1 * out + s2;
    s2 = b2 * in - a2 * out;
    v = out;
  }
}

void EqBand::validate() const {
  if (!(freq >= 20.0 && freq <= 20000.0)) throw InvalidArgument("EQ band frequency must lie in [20, 20000] Hz");
  if (!(std::abs(gain_db) <= 15.0)) throw InvalidArgument("EQ band gain must lie in [-15, 15] dB");
  if (!(q >= 0.1 && q <= 5.0)) throw InvalidArgument("EQ band Q must lie in [0.1, 5]");
}

Biquad EqBand::biquad(double sample_rate) const {
  check_below_nyquist(freq, sample_rate, "EQ band");
  switch (shape) {
    case EqShape::low_shelf: return Biquad::low_shelf(freq, sample_rate, gain_db, q);
    case EqShape::high_shelf: return Biquad::high_shelf(freq, sample_rate, gain_db, q);
    case EqShape::peak: break;
  }
  return Biquad::peak(freq, sample_rate, gain_db, q);
}

void ImagerParams::validate() const {
  double prev = 20.0;
  for (double f : crossover_freqs) {
    if (!(f > prev && f < 20000.0))
      throw InvalidArgument("imager crossovers must be strictly ascending within (20, 20000) Hz");
    prev = f;
  }
  for (double w : widths)
    if (!(w >= 0.0 && w <= 2.0)) throw InvalidArgument("imager widths must lie in [0, 2]");
}

void MaximizerParams::validate() const {
  if (!std::isfinite(pre_gain_db)) throw InvalidArgument("maximizer pre-gain must be finite");
  if (!(ceiling_db <= 0.0)) throw InvalidArgument("maximizer ceiling must be <= 0 dBFS");
  if (!(release_ms > 0.0)) throw InvalidArgument("maximizer release must be positive");
  if (!(lookahead_ms >= 0.0)) throw InvalidArgument("maximizer lookahead must be non-negative");
}

void FxParams::validate() const {
  if (!std::isfinite(gain_db)) throw InvalidArgument("gain must be finite");
  for (const auto& b : eq_bands) b.validate();
  imager.validate();
  maximizer.validate();
}

void FxRanges::validate() const {
  check_range(gain_db, "gain_db");
  check_range(eq_gain_db, "eq_gain_db");
  check_range(low_shelf_freq, "low_shelf_freq");
  check_range(peak_freq, "peak_freq");
  check_range(peak_q, "peak_q");
  check_range(high_shelf_freq, "high_shelf_freq");
  check_range(width, "width");
  check_range(pre_gain_db, "pre_gain_db");
  check_range(ceiling_db, "ceiling_db");
  check_range(release_ms, "release_ms");
  check_range(lookahead_ms, "lookahead_ms");
  if (peak_freq.min <= 0.0 || peak_q.min <= 0.0) throw InvalidArgument("log-uniform ranges must be positive");
  if (eq_gain_db.min < -15.0 || eq_gain_db.max > 15.0) throw InvalidArgument("EQ gain range exceeds +-15 dB");
  if (width.min < 0.0 || width.max > 2.0) throw InvalidArgument("width range exceeds [0, 2]");
  if (ceiling_db.max > 0.0) throw InvalidArgument("ceiling range exceeds 0 dBFS");
  if (release_ms.min <= 0.0) throw InvalidArgument("release range must be positive");
  if (lookahead_ms.min < 0.0) throw InvalidArgument("lookahead range must be non-negative");
  ImagerParams probe;
  probe.crossover_freqs = crossover_freqs;
  probe.validate();
}

FxRanges FxRanges::identity() {
  FxRanges r;
  r.gain_db = {0.0, 0.0};
  r.eq_gain_db = {0.0, 0.0};
  r.width = {1.0, 1.0};
  r.pre_gain_db = {0.0, 0.0};
  r.ceiling_db = {0.0, 0.0};
  return r;
}

FxParams sample_fx_params(Rng& rng, const FxRanges& ranges) {
  ranges.validate();
  auto draw = [&](const Range& r) { return r.min == r.max ? r.min : rng.uniform(r.min, r.max); };
  auto draw_log = [&](const Range& r) { return r.min == r.max ? r.min : rng.log_uniform(r.min, r.max); };

  FxParams p;
  p.gain_db = draw(ranges.gain_db);
  p.eq_bands.push_back({EqShape::low_shelf, draw(ranges.low_shelf_freq), draw(ranges.eq_gain_db), ranges.shelf_q});
  for (std::size_t i = 0; i < ranges.num_peaks; ++i) {
    const double f = draw_log(ranges.peak_freq);
    const double q = draw_log(ranges.peak_q);
    p.eq_bands.push_back({EqShape::peak, f, draw(ranges.eq_gain_db), q});
  }
  p.eq_bands.push_back({EqShape::high_shelf, draw(ranges.high_shelf_freq), draw(ranges.eq_gain_db), ranges.shelf_q});
  p.imager.crossover_freqs = ranges.crossover_freqs;
  for (double& w : p.imager.widths) w = draw(ranges.width);
  p.maximizer.pre_gain_db = draw(ranges.pre_gain_db);
  p.maximizer.ceiling_db = draw(ranges.ceiling_db);
  p.maximizer.release_ms = draw(ranges.release_ms);
  p.maximizer.lookahead_ms = draw(ranges.lookahead_ms);
  return p;
}

FxParams sample_fx_params(std::uint64_t seed, const FxRanges& ranges) {
  Rng rng(seed);
  FxParams p = sample_fx_params(rng, ranges);
  p.seed = seed;
  return p;
}

StereoWaveform apply_gain(const StereoWaveform& wf, double gain_db) {
  const double g = db_to_gain(gain_db);
  return map_channels(wf, [g](std::vector<double>& x) {
    for (double& v : x) v *= g;
  });
}

StereoWaveform apply_eq(const StereoWaveform& wf, std::span<const EqBand> bands) {
  std::vector<Biquad> sections;
  for (const auto& b : bands) {
    b.validate();
    sections.push_back(b.biquad(wf.sample_rate()));
  }
  return map_channels(wf, [&](std::vector<double>& x) {
    for (const auto& s : sections) s.process(x);
  });
}

std::array<StereoWaveform, 4> crossover_split(const StereoWaveform& wf,
                                              const std::array<double, 3>& freqs) {
  const double fs = wf.sample_rate();
  if (!(freqs[0] < freqs[1] && freqs[1] < freqs[2]))
    throw InvalidArgument("crossover frequencies must be strictly ascending");
  for (double f : freqs) check_below_nyquist(f, fs, "crossover");

  std::array<Biquad, 3> lp, hp, ap;
  for (std::size_t i = 0; i < 3; ++i) {
    lp[i] = Biquad::low_pass(freqs[i], fs, kButterworthQ);
    hp[i] = Biquad::high_pass(freqs[i], fs, kButterworthQ);
    ap[i] = Biquad::all_pass(freqs[i], fs, kButterworthQ);
  }

  // Lower bands pass through the all-pass of every higher split so that all
  // four share the same phase and sum to AP1*AP2*AP3.
  std::array<std::array<std::vector<double>, 2>, 4> bands;
  for (std::size_t c = 0; c < 2; ++c) {
    const auto src = wf.channel(c);
    std::vector<double> low(src.begin(), src.end());
    std::vector<double> high = low;
    lr4(low, lp[0]);
    ap[1].process(low);
    ap[2].process(low);
    lr4(high, hp[0]);

    std::vector<double> low_mid = high;
    lr4(low_mid, lp[1]);
    ap[2].process(low_mid);
    lr4(high, hp[1]);

    std::vector<double> mid = high;
    lr4(mid, lp[2]);
    lr4(high, hp[2]);

    bands[0][c] = std::move(low);
    bands[1][c] = std::move(low_mid);
    bands[2][c] = std::move(mid);
    bands[3][c] = std::move(high);
  }
  return {StereoWaveform(std::move(bands[0][0]), std::move(bands[0][1]), fs),
          StereoWaveform(std::move(bands[1][0]), std::move(bands[1][1]), fs),
          StereoWaveform(std::move(bands[2][0]), std::move(bands[2][1]), fs),
          StereoWaveform(std::move(bands[3][0]), std::move(bands[3][1]), fs)};
}

StereoWaveform apply_stereo_imager(const StereoWaveform& wf, const ImagerParams& p) {
  p.validate();
  const auto bands = crossover_split(wf, p.crossover_freqs);
  const std::size_t n = wf.size();
  std::vector<double> l(n, 0.0), r(n, 0.0);
  for (std::size_t b = 0; b < 4; ++b) {
    const auto bl = bands[b].left();
    const auto br = bands[b].right();
    const double w = p.widths[b];
    for (std::size_t i = 0; i < n; ++i) {
      const double mid = 0.5 * (bl[i] + br[i]);
      const double side = 0.5 * (bl[i] - br[i]) * w;
      l[i] += mid + side;
      r[i] += mid - side;
    }
  }
  return StereoWaveform(std::move(l), std::move(r), wf.sample_rate());
}

// Stereo-linked lookahead brickwall limiter, evaluated offline without
// latency. Per sample the required gain is ceiling/peak; a sliding minimum
// over the lookahead span, instant-attack/exponential-release smoothing and
// a box average over the same span yield a gain that never exceeds the
// requirement at any sample.
StereoWaveform apply_maximizer(const StereoWaveform& wf, const MaximizerParams& p) {
  p.validate();
  const std::size_t n = wf.size();
  const double fs = wf.sample_rate();
  const double pre = db_to_gain(p.pre_gain_db);
  const double ceiling = db_to_gain(p.ceiling_db);
  const auto lookahead = static_cast<std::size_t>(std::lround(p.lookahead_ms * 1e-3 * fs));
  const double release_coeff = 1.0 - std::exp(-1.0 / (p.release_ms * 1e-3 * fs));

  std::vector<double> l(n), r(n), required(n);
  for (std::size_t i = 0; i < n; ++i) {
    l[i] = wf.left()[i] * pre;
    r[i] = wf.right()[i] * pre;
    const double pk = std::max(std::abs(l[i]), std::abs(r[i]));
    required[i] = pk > ceiling ? ceiling / pk : 1.0;
  }

  // min over required[i .. i + lookahead]
  std::vector<double> window_min(n);
  std::deque<std::size_t> q;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t end = std::min(n - 1, i + lookahead);
    while (next <= end) {
      while (!q.empty() && required[q.back()] >= required[next]) q.pop_back();
      q.push_back(next++);
    }
    while (q.front() < i) q.pop_front();
    window_min[i] = required[q.front()];
  }

  std::vector<double> held(n);
  double g = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    g = std::min(window_min[i], g + (1.0 - g) * release_coeff);
    held[i] = g;
  }

  const double span = static_cast<double>(lookahead + 1);
  double sum = held[0] * span;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const double leaving = i > lookahead ? held[i - lookahead - 1] : held[0];
      sum += held[i] - leaving;
    }
    // min() only absorbs rounding drift of the running sum
    const double gain = lookahead == 0 ? held[i] : std::min(sum / span, required[i]);
    l[i] *= gain;
    r[i] *= gain;
  }
  return StereoWaveform(std::move(l), std::move(r), fs);
}

StereoWaveform apply_chain(const StereoWaveform& wf, const FxParams& p) {
  p.validate();
  auto out = apply_gain(wf, p.gain_db);
  out = apply_eq(out, p.eq_bands);
  out = apply_stereo_imager(out, p.imager);
  return apply_maximizer(out, p.maximizer);
}

namespace {
const char* shape_name(EqShape s) {
  switch (s) {
    case EqShape::low_shelf: return "low-shelf";
    case EqShape::high_shelf: return "high-shelf";
    case EqShape::peak: break;
  }
  return "peak";
}
}  // namespace

void to_json(nlohmann::json& j, const EqBand& b) {
  j = {{"shape", shape_name(b.shape)}, {"freq", b.freq}, {"gain_db", b.gain_db}, {"q", b.q}};
}

void from_json(const nlohmann::json& j, EqBand& b) {
  require_exact_keys(j, {"shape", "freq", "gain_db", "q"}, "EQ band");
  const auto shape = j.at("shape").get<std::string>();
  if (shape == "low-shelf") b.shape = EqShape::low_shelf;
  else if (shape == "peak") b.shape = EqShape::peak;
  else if (shape == "high-shelf") b.shape = EqShape::high_shelf;
  else throw InvalidArgument("unknown EQ shape '" + shape + "'");
  b.freq = j.at("freq").get<double>();
  b.gain_db = j.at("gain_db").get<double>();
  b.q = j.at("q").get<double>();
}

void to_json(nlohmann::json& j, const ImagerParams& p) {
  j = {{"crossover_freqs", p.crossover_freqs}, {"widths", p.widths}};
}

void from_json(const nlohmann::json& j, ImagerParams& p) {
  require_exact_keys(j, {"crossover_freqs", "widths"}, "imager");
  p.crossover_freqs = j.at("crossover_freqs").get<std::array<double, 3>>();
  p.widths = j.at("widths").get<std::array<double, 4>>();
}

void to_json(nlohmann::json& j, const MaximizerParams& p) {
  j = {{"pre_gain_db", p.pre_gain_db},
       {"ceiling_db", p.ceiling_db},
       {"release_ms", p.release_ms},
       {"lookahead_ms", p.lookahead_ms}};
}

void from_json(const nlohmann::json& j, MaximizerParams& p) {
  require_exact_keys(j, {"pre_gain_db", "ceiling_db", "release_ms", "lookahead_ms"}, "maximizer");
  p.pre_gain_db = j.at("pre_gain_db").get<double>();
  p.ceiling_db = j.at("ceiling_db").get<double>();
  p.release_ms = j.at("release_ms").get<double>();
  p.lookahead_ms = j.at("lookahead_ms").get<double>();
}

void to_json(nlohmann::json& j, const FxParams& p) {
  j = {{"gain_db", p.gain_db},
       {"eq_bands", p.eq_bands},
       {"imager", p.imager},
       {"maximizer", p.maximizer},
       {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, FxParams& p) {
  require_exact_keys(j, {"gain_db", "eq_bands", "imager", "maximizer", "seed"}, "fx params");
  p.gain_db = j.at("gain_db").get<double>();
  p.eq_bands = j.at("eq_bands").get<std::vector<EqBand>>();
  p.imager = j.at("imager").get<ImagerParams>();
  p.maximizer = j.at("maximizer").get<MaximizerParams>();
  p.seed = j.at("seed").get<std::uint64_t>();
}

FxParams load_fx_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read fx params: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed fx params " + path.string() + ": " + e.what());
  }
  FxParams p;
  try {
    p = j.get<FxParams>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("invalid fx params " + path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

void save_fx_params(const FxParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write fx params: " + path.string());
  out << nlohmann::json(p).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace remaster
