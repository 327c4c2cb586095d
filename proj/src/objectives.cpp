#include "remaster/objectives.hpp"

#include <cmath>

#include "remaster/error.hpp"
#include "remaster/nn/ops.hpp"
#include "remaster/stft.hpp"

namespace remaster {

void RmsLossSpec::validate() const {
  if (!(rho > 0.0)) throw InvalidArgument("rho must be > 0");
}

void MssSpec::validate() const {
  if (fft_sizes.empty()) throw InvalidArgument("mss needs at least one FFT size");
  for (std::size_t i = 0; i < fft_sizes.size(); ++i) {
    const auto n = fft_sizes[i];
    if (n < 4 || (n & (n - 1)) != 0) throw InvalidArgument("mss FFT sizes must be powers of two");
    if (i > 0 && n >= fft_sizes[i - 1]) throw InvalidArgument("mss FFT sizes must be descending");
  }
  if (!(overlap > 0.0 && overlap < 1.0)) throw InvalidArgument("mss overlap must lie in (0, 1)");
  if (!(log_eps > 0.0)) throw InvalidArgument("mss log_eps must be > 0");
  if (log_weight < 0.0) throw InvalidArgument("mss log_weight must be >= 0");
}

std::size_t MssSpec::hop(std::size_t fft_size) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(fft_size) * (1.0 - overlap))));
}

double rms_loss_from_delta(double delta, const RmsLossSpec& spec) {
  const double a = std::abs(delta);
  const double gamma = spec.rho * std::min(1.0 / spec.rho, a);
  return std::pow(gamma, 1.5) * delta * delta;
}

double rms_loss_derivative(double delta, const RmsLossSpec& spec) {
  const double a = std::abs(delta);
  if (a < 1.0 / spec.rho) {
    // loss = rho^1.5 |delta|^3.5
    const double sign = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
    return 3.5 * std::pow(spec.rho, 1.5) * std::pow(a, 2.5) * sign;
  }
  return 2.0 * delta;
}

namespace {

void require_same_length(const StereoWaveform& a, const StereoWaveform& b) {
  if (a.size() != b.size())
    throw InvalidArgument("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

double pooled_rms(std::span<const double> planar) {
  double acc = 0.0;
  for (double v : planar) acc += v * v;
  return std::sqrt(acc / static_cast<double>(planar.size()));
}

}  // namespace

double rms_loss(const StereoWaveform& a2, const StereoWaveform& a2p, const RmsLossSpec& spec) {
  spec.validate();
  require_same_length(a2, a2p);
  return rms_loss_from_delta(rms(a2) - rms(a2p), spec);
}

double mss_loss_grad(std::span<const double> x, std::span<const double> y, const MssSpec& spec,
                     std::span<double> grad_x) {
  spec.validate();
  if (x.size() != y.size()) throw InvalidArgument("mss_loss: length mismatch");
  if (x.size() < spec.fft_sizes.front())
    throw InvalidArgument("mss_loss: input of " + std::to_string(x.size()) + " samples is shorter than the " +
                          std::to_string(spec.fft_sizes.front()) + "-sample window");
  const bool want_grad = !grad_x.empty();
  double total = 0.0;
  std::vector<double> grad_mag;
  for (auto n : spec.fft_sizes) {
    const StftSpec st{n, spec.hop(n), WindowType::hann};
    const Spectrogram sx = stft(x, st);
    const Spectrogram sy = stft(y, st);
    const std::size_t count = sx.values.size();
    const double inv = 1.0 / static_cast<double>(count);
    double lin = 0.0, lg = 0.0;
    if (want_grad) grad_mag.assign(count, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      const double mx = std::abs(sx.values[i]);
      const double my = std::abs(sy.values[i]);
      const double d = mx - my;
      const double dl = std::log(mx + spec.log_eps) - std::log(my + spec.log_eps);
      lin += std::abs(d);
      lg += std::abs(dl);
      if (want_grad) {
        const double s1 = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        const double s2 = dl > 0.0 ? 1.0 : (dl < 0.0 ? -1.0 : 0.0);
        grad_mag[i] = inv * (s1 + spec.log_weight * s2 / (mx + spec.log_eps));
      }
    }
    total += inv * lin + spec.log_weight * inv * lg;
    if (want_grad) stft_magnitude_backward(sx, grad_mag, st, grad_x);
  }
  return total;
}

double mss_loss(std::span<const double> x, std::span<const double> y, const MssSpec& spec) {
  return mss_loss_grad(x, y, spec, {});
}

ClonerLossTerms cloner_loss_terms(const StereoWaveform& a2, const StereoWaveform& a2p, const RmsLossSpec& rms_spec,
                                  const MssSpec& mss_spec) {
  require_same_length(a2, a2p);
  ClonerLossTerms t;
  t.rms = rms_loss(a2, a2p, rms_spec);
  t.mss_left = mss_loss(a2p.left(), a2.left(), mss_spec);
  t.mss_right = mss_loss(a2p.right(), a2.right(), mss_spec);
  const auto ms_t = to_mid_side(a2);
  const auto ms_p = to_mid_side(a2p);
  t.mss_mid = mss_loss(ms_p.mid, ms_t.mid, mss_spec);
  t.mss_side = mss_loss(ms_p.side, ms_t.side, mss_spec);
  return t;
}

double cloner_loss(const StereoWaveform& a2, const StereoWaveform& a2p, const RmsLossSpec& rms_spec,
                   const MssSpec& mss_spec) {
  return cloner_loss_terms(a2, a2p, rms_spec, mss_spec).total();
}

nn::Tensor cloner_loss(const nn::Tensor& target, const nn::Tensor& prediction, const RmsLossSpec& rms_spec,
                       const MssSpec& mss_spec, ClonerLossTerms* terms) {
  rms_spec.validate();
  if (target.shape() != prediction.shape() || prediction.rank() != 3 || prediction.dim(1) != 2)
    throw InvalidArgument("cloner_loss expects matching [B, 2, T] tensors, got " + nn::shape_string(target.shape()) +
                          " and " + nn::shape_string(prediction.shape()));
  const std::size_t B = prediction.dim(0), T = prediction.dim(2);
  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<double> grad(prediction.size(), 0.0);
  ClonerLossTerms sum;
  std::vector<double> mid_p(T), side_p(T), mid_t(T), side_t(T), g_mid(T), g_side(T);
  for (std::size_t b = 0; b < B; ++b) {
    const auto p = prediction.values().subspan(b * 2 * T, 2 * T);
    const auto t = target.values().subspan(b * 2 * T, 2 * T);
    std::span<double> g(grad.data() + b * 2 * T, 2 * T);
    const auto pl = p.first(T), pr = p.subspan(T), tl = t.first(T), tr = t.subspan(T);
    std::span<double> gl = g.first(T), gr = g.subspan(T);

    const double rp = pooled_rms(p);
    const double delta = pooled_rms(t) - rp;
    sum.rms += rms_loss_from_delta(delta, rms_spec);
    if (rp > 0.0) {
      // d(delta)/dp_k = -p_k / (2T * rms(p))
      const double k = -rms_loss_derivative(delta, rms_spec) / (static_cast<double>(2 * T) * rp);
      for (std::size_t i = 0; i < 2 * T; ++i) g[i] += k * p[i];
    }

    sum.mss_left += mss_loss_grad(pl, tl, mss_spec, gl);
    sum.mss_right += mss_loss_grad(pr, tr, mss_spec, gr);
    for (std::size_t i = 0; i < T; ++i) {
      mid_p[i] = 0.5 * (pl[i] + pr[i]);
      side_p[i] = 0.5 * (pl[i] - pr[i]);
      mid_t[i] = 0.5 * (tl[i] + tr[i]);
      side_t[i] = 0.5 * (tl[i] - tr[i]);
    }
    std::fill(g_mid.begin(), g_mid.end(), 0.0);
    std::fill(g_side.begin(), g_side.end(), 0.0);
    sum.mss_mid += mss_loss_grad(mid_p, mid_t, mss_spec, g_mid);
    sum.mss_side += mss_loss_grad(side_p, side_t, mss_spec, g_side);
    for (std::size_t i = 0; i < T; ++i) {
      gl[i] += 0.5 * (g_mid[i] + g_side[i]);
      gr[i] += 0.5 * (g_mid[i] - g_side[i]);
    }
  }
  for (auto& v : grad) v *= inv_b;
  ClonerLossTerms mean{sum.rms * inv_b, sum.mss_left * inv_b, sum.mss_right * inv_b, sum.mss_mid * inv_b,
                       sum.mss_side * inv_b};
  if (terms) *terms = mean;
  return nn::custom_scalar(prediction, mean.total(), std::move(grad));
}

double hinge_d_loss(std::span<const double> real_scores, std::span<const double> fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) throw InvalidArgument("hinge loss on empty scores");
  double r = 0.0, f = 0.0;
  for (double s : real_scores) r += std::max(0.0, 1.0 - s);
  for (double s : fake_scores) f += std::max(0.0, 1.0 + s);
  return r / static_cast<double>(real_scores.size()) + f / static_cast<double>(fake_scores.size());
}

double hinge_g_loss(std::span<const double> fake_scores) {
  if (fake_scores.empty()) throw InvalidArgument("hinge loss on empty scores");
  double f = 0.0;
  for (double s : fake_scores) f += s;
  return -f / static_cast<double>(fake_scores.size());
}

nn::Tensor hinge_d_loss(const nn::Tensor& real_scores, const nn::Tensor& fake_scores) {
  return nn::add(nn::mean(nn::relu(nn::add_scalar(nn::scale(real_scores, -1.0), 1.0))),
                 nn::mean(nn::relu(nn::add_scalar(fake_scores, 1.0))));
}

nn::Tensor hinge_g_loss(const nn::Tensor& fake_scores) { return nn::scale(nn::mean(fake_scores), -1.0); }

}  // namespace remaster
