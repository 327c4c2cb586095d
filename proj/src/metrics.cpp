#include "remaster/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "remaster/dataset.hpp"
#include "remaster/error.hpp"
#include "remaster/fft.hpp"
#include "remaster/inference.hpp"
#include "remaster/wav.hpp"

namespace remaster {
namespace {

void require_same_length(const StereoWaveform& a, const StereoWaveform& b) {
  if (a.size() != b.size())
    throw InvalidArgument("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

// Critical-band layout of the classic fwSNRseg measure.
constexpr std::array<double, 25> kCentFreq{50.0,    120.0,   190.0,   260.0,   330.0,   400.0,   470.0,
                                           540.0,   617.372, 703.378, 798.717, 904.128, 1020.38, 1148.30,
                                           1288.72, 1442.54, 1610.70, 1794.16, 1993.93, 2211.08, 2446.71,
                                           2701.97, 2978.04, 3276.17, 3597.63};
constexpr std::array<double, 25> kBandwidth{70.0,    70.0,    70.0,    70.0,    70.0,    70.0,    70.0,
                                            77.3724, 86.0056, 95.3398, 105.411, 116.256, 127.914, 140.423,
                                            153.823, 168.154, 183.457, 199.776, 217.153, 235.631, 255.255,
                                            276.072, 298.126, 321.465, 346.136};

std::vector<double> magnitude_spectrum(RealFft& fft, std::span<const double> frame) {
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(frame, spec);
  std::vector<double> mag(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) mag[i] = std::abs(spec[i]);
  return mag;
}

// STOI constants
constexpr double kStoiRate = 10000.0;
constexpr std::size_t kStoiFrame = 256;
constexpr std::size_t kStoiFft = 512;
constexpr std::size_t kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr std::size_t kStoiSegment = 30;
constexpr double kStoiBeta = -15.0;
constexpr double kStoiDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Hann of length n+2 with both zero end points dropped.
std::vector<double> stoi_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::size_t hop = kStoiFrame / 2;
  const auto w = stoi_window(kStoiFrame);
  if (x.size() < kStoiFrame) throw InvalidArgument("stoi: signal shorter than one analysis frame");
  const std::size_t frames = (x.size() - kStoiFrame) / hop + 1;
  std::vector<double> energy(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      const double v = w[i] * x[f * hop + i];
      e += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < frames; ++f)
    if (top - kStoiDynRange - energy[f] < 0.0) keep.push_back(f);
  const std::size_t out_len = keep.empty() ? 0 : (keep.size() - 1) * hop + kStoiFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (std::size_t i = 0; i < kStoiFrame; ++i) {
      xs[k * hop + i] += w[i] * x[keep[k] * hop + i];
      ys[k * hop + i] += w[i] * y[keep[k] * hop + i];
    }
  x = std::move(xs);
  y = std::move(ys);
}

// One-third octave band envelopes [bands][frames].
std::vector<std::vector<double>> third_octave_envelopes(const std::vector<double>& x) {
  const std::size_t hop = kStoiFrame / 2, bins = kStoiFft / 2 + 1;
  const auto w = stoi_window(kStoiFrame);
  // frame starts in [0, len - frame), so the final full frame is left out as in the reference
  const std::size_t frames = x.size() <= kStoiFrame ? 0 : (x.size() - kStoiFrame - 1) / hop + 1;

  std::vector<double> freq(bins);
  for (std::size_t k = 0; k < bins; ++k) freq[k] = kStoiRate * static_cast<double>(k) / static_cast<double>(kStoiFft);
  std::vector<std::pair<std::size_t, std::size_t>> band_bins;
  for (std::size_t b = 0; b < kStoiBands; ++b) {
    const double lo = kStoiMinFreq * std::pow(2.0, (2.0 * static_cast<double>(b) - 1.0) / 6.0);
    const double hi = kStoiMinFreq * std::pow(2.0, (2.0 * static_cast<double>(b) + 1.0) / 6.0);
    auto nearest = [&](double f) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < bins; ++k)
        if ((freq[k] - f) * (freq[k] - f) < (freq[best] - f) * (freq[best] - f)) best = k;
      return best;
    };
    band_bins.emplace_back(nearest(lo), nearest(hi));  // [lo, hi)
  }

  RealFft& fft = fft_for(kStoiFft);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<std::vector<double>> env(kStoiBands, std::vector<double>(frames));
  std::vector<double> frame(kStoiFrame);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < kStoiFrame; ++i) frame[i] = w[i] * x[f * hop + i];
    fft.forward(frame, spec);
    for (std::size_t b = 0; b < kStoiBands; ++b) {
      double e = 0.0;
      for (std::size_t k = band_bins[b].first; k < band_bins[b].second; ++k) e += std::norm(spec[k]);
      env[b][f] = std::sqrt(e);
    }
  }
  return env;
}

}  // namespace

double delta_rms(const StereoWaveform& target, const StereoWaveform& output) {
  require_same_length(target, output);
  return std::abs(rms(target) - rms(output));
}

double delta_rms_side(const StereoWaveform& target, const StereoWaveform& output) {
  require_same_length(target, output);
  return std::abs(rms(to_mid_side(target).side) - rms(to_mid_side(output).side));
}

double fw_snr_channel(std::span<const double> target, std::span<const double> output, double sample_rate,
                      const FwSnrOptions& options) {
  if (target.size() != output.size()) throw InvalidArgument("fw_snr: length mismatch");
  const std::size_t win = static_cast<std::size_t>(std::lround(options.frame_ms * sample_rate / 1000.0));
  const std::size_t skip = win / 2;
  if (win < 4 || target.size() < win) throw InvalidArgument("fw_snr: signal shorter than one frame");
  std::size_t nfft = 1;
  while (nfft < 2 * win) nfft <<= 1;
  const std::size_t half = nfft / 2;
  const double nyquist = sample_rate / 2.0;

  // Gaussian-shaped critical band filters truncated at -30 dB
  const double min_factor = std::exp(-30.0 / (2.0 * 2.303));
  std::vector<std::vector<double>> filters(kCentFreq.size(), std::vector<double>(half));
  for (std::size_t b = 0; b < kCentFreq.size(); ++b) {
    const double f0 = kCentFreq[b] / nyquist * static_cast<double>(half);
    const double bw = kBandwidth[b] / nyquist * static_cast<double>(half);
    const double norm = std::log(kBandwidth[0]) - std::log(kBandwidth[b]);
    for (std::size_t j = 0; j < half; ++j) {
      const double d = (static_cast<double>(j) - std::floor(f0)) / bw;
      const double v = std::exp(-11.0 * d * d + norm);
      filters[b][j] = v > min_factor ? v : 0.0;
    }
  }
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(win + 1)));

  RealFft& fft = fft_for(nfft);
  const std::size_t frames = std::max<std::size_t>(1, (target.size() - win) / skip);
  std::vector<double> ft(win), fo(win);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * skip;
    if (start + win > target.size()) break;
    for (std::size_t i = 0; i < win; ++i) {
      ft[i] = target[start + i] * window[i];
      fo[i] = output[start + i] * window[i];
    }
    auto ct = magnitude_spectrum(fft, ft);
    auto co = magnitude_spectrum(fft, fo);
    double st = 0.0, so = 0.0;
    for (std::size_t j = 0; j < half; ++j) {
      st += ct[j];
      so += co[j];
    }
    if (st <= 0.0) continue;  // silent target frame carries no weight
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < filters.size(); ++b) {
      double et = 0.0, eo = 0.0;
      for (std::size_t j = 0; j < half; ++j) {
        et += filters[b][j] * ct[j] / st;
        if (so > 0.0) eo += filters[b][j] * co[j] / so;
      }
      const double err = (et - eo) * (et - eo);
      const double w = std::pow(et, options.gamma);
      // an exact band match is infinite SNR, whatever the band level
      double snr = err > 0.0 ? 10.0 * std::log10(et * et / err) : options.max_db;
      snr = std::clamp(snr, options.min_db, options.max_db);
      num += w * snr;
      den += w;
    }
    if (den <= 0.0) continue;
    total += num / den;
    ++used;
  }
  if (used == 0) throw InvalidArgument("fw_snr: target is silent");
  return total / static_cast<double>(used);
}

double fw_snr(const StereoWaveform& target, const StereoWaveform& output, const FwSnrOptions& options) {
  require_same_length(target, output);
  return 0.5 * (fw_snr_channel(target.left(), output.left(), target.sample_rate(), options) +
                fw_snr_channel(target.right(), output.right(), target.sample_rate(), options));
}

std::vector<double> resample_rational(std::span<const double> x, double from_rate, double to_rate) {
  if (!(from_rate > 0.0 && to_rate > 0.0)) throw InvalidArgument("resample_rational: rates must be positive");
  if (from_rate == to_rate) return {x.begin(), x.end()};
  const double ratio = to_rate / from_rate;
  const double fc = std::min(1.0, ratio);  // cutoff relative to input Nyquist
  const double zero_crossings = 16.0;
  const double half_width = zero_crossings / fc;  // in input samples
  const double beta = 8.6;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  const std::size_t out_len = static_cast<std::size_t>(std::ceil(static_cast<double>(x.size()) * ratio));
  std::vector<double> y(out_len, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double d = t - static_cast<double>(k);
      const double r = d / half_width;
      const double win = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double arg = std::numbers::pi * fc * d;
      const double sinc = d == 0.0 ? 1.0 : std::sin(arg) / arg;
      acc += x[static_cast<std::size_t>(k)] * fc * sinc * win;
    }
    y[m] = acc;
  }
  return y;
}

double stoi_channel(std::span<const double> target, std::span<const double> output, double sample_rate) {
  if (target.size() != output.size()) throw InvalidArgument("stoi: length mismatch");
  std::vector<double> x = resample_rational(target, sample_rate, kStoiRate);
  std::vector<double> y = resample_rational(output, sample_rate, kStoiRate);
  if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; }))
    throw InvalidArgument("stoi: target is silent");
  remove_silent_frames(x, y);
  const auto xe = third_octave_envelopes(x);
  const auto ye = third_octave_envelopes(y);
  const std::size_t frames = xe[0].size();
  if (frames < kStoiSegment)
    throw InvalidArgument("stoi: needs at least " + std::to_string(kStoiSegment) +
                          " non-silent frames (384 ms at 10 kHz), got " + std::to_string(frames));

  const double clip = std::pow(10.0, -kStoiBeta / 20.0);
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(kStoiSegment), ys(kStoiSegment);
  for (std::size_t m = kStoiSegment; m <= frames; ++m) {
    for (std::size_t b = 0; b < kStoiBands; ++b) {
      double nx = 0.0, ny = 0.0;
      for (std::size_t i = 0; i < kStoiSegment; ++i) {
        xs[i] = xe[b][m - kStoiSegment + i];
        ys[i] = ye[b][m - kStoiSegment + i];
        nx += xs[i] * xs[i];
        ny += ys[i] * ys[i];
      }
      const double g = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < kStoiSegment; ++i) {
        ys[i] = std::min(ys[i] * g, xs[i] * (1.0 + clip));
        mx += xs[i];
        my += ys[i];
      }
      mx /= static_cast<double>(kStoiSegment);
      my /= static_cast<double>(kStoiSegment);
      double sx = 0.0, sy = 0.0, sxy = 0.0;
      for (std::size_t i = 0; i < kStoiSegment; ++i) {
        xs[i] -= mx;
        ys[i] -= my;
        sx += xs[i] * xs[i];
        sy += ys[i] * ys[i];
        sxy += xs[i] * ys[i];
      }
      sum += sxy / ((std::sqrt(sx) + kEps) * (std::sqrt(sy) + kEps));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

double stoi(const StereoWaveform& target, const StereoWaveform& output, StoiDownmix downmix) {
  require_same_length(target, output);
  if (downmix == StoiDownmix::mono)
    return stoi_channel(to_mid_side(target).mid, to_mid_side(output).mid, target.sample_rate());
  return 0.5 * (stoi_channel(target.left(), output.left(), target.sample_rate()) +
                stoi_channel(target.right(), output.right(), target.sample_rate()));
}

MetricRecord compute_metrics(const std::string& pair_id, const StereoWaveform& target, const StereoWaveform& output,
                             StoiDownmix downmix) {
  MetricRecord r;
  r.pair_id = pair_id;
  r.delta_rms = delta_rms(target, output);
  r.delta_rms_side = delta_rms_side(target, output);
  r.fw_snr_db = fw_snr(target, output);
  r.stoi = stoi(target, output, downmix);
  return r;
}

nlohmann::json to_json(const MetricReport& report) {
  auto record_json = [](const MetricRecord& r) {
    return nlohmann::json{{"pair_id", r.pair_id},
                          {"delta_rms", r.delta_rms},
                          {"delta_rms_side", r.delta_rms_side},
                          {"fw_snr_db", r.fw_snr_db},
                          {"stoi", r.stoi}};
  };
  nlohmann::json j;
  j["metadata"] = {{"checkpoint_id", report.checkpoint_id},
                   {"dataset_seed", report.dataset_seed},
                   {"generated_at", report.generated_at}};
  j["records"] = nlohmann::json::array();
  for (const auto& r : report.records) j["records"].push_back(record_json(r));
  if (report.aggregate) {
    auto a = record_json(*report.aggregate);
    a.erase("pair_id");
    j["aggregate"] = a;
  } else {
    j["aggregate"] = nullptr;
  }
  return j;
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << to_json(report).dump(2) << '\n';
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

MetricReport evaluate_pairs(const std::filesystem::path& index_path, const EvaluateOptions& options) {
  const auto records = read_index(index_path);
  const auto base = index_path.parent_path();
  MetricReport report;
  report.dataset_seed = options.dataset_seed;
  report.generated_at = options.generated_at.empty() ? utc_now() : options.generated_at;

  const bool need_models =
      std::any_of(records.begin(), records.end(), [](const TripletRecord& r) { return !r.output_path; });
  RemasterModels models;
  if (need_models) {
    if (options.encoder_checkpoint.empty() || options.cloner_checkpoint.empty())
      throw InvalidArgument("evaluation needs encoder and cloner checkpoints");
    models = load_models(options.encoder_checkpoint, options.cloner_checkpoint);
    report.checkpoint_id = hex64(models.encoder_hash) + "-" + hex64(models.cloner_hash);
  } else {
    report.checkpoint_id = "none";
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const StereoWaveform target = load_wav(base / r.a2_path);
    StereoWaveform output = target;
    if (r.output_path) {
      output = load_wav(base / *r.output_path);
    } else {
      const StereoWaveform input = load_wav(base / r.a1_path);
      const StereoWaveform reference = load_wav(base / r.b2_path);
      output = remaster(models, input, reference);
    }
    report.records.push_back(compute_metrics(std::to_string(i), target, output, options.downmix));
  }

  if (!report.records.empty()) {
    MetricRecord mean;
    const double n = static_cast<double>(report.records.size());
    for (const auto& r : report.records) {
      mean.delta_rms += r.delta_rms / n;
      mean.delta_rms_side += r.delta_rms_side / n;
      mean.fw_snr_db += r.fw_snr_db / n;
      mean.stoi += r.stoi / n;
    }
    report.aggregate = mean;
  }
  return report;
}

}  // namespace remaster
