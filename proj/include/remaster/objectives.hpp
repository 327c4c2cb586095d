#pragma once

#include <span>
#include <vector>

#include "remaster/audio.hpp"
#include "remaster/nn/tensor.hpp"

namespace remaster {

struct RmsLossSpec {
  double rho = 100.0;
  void validate() const;
};

struct MssSpec {
  std::vector<std::size_t> fft_sizes{4096, 2048, 1024, 512};
  double overlap = 0.75;
  double log_eps = 1e-7;
  double log_weight = 1.0;
  void validate() const;
  std::size_t hop(std::size_t fft_size) const;
};

/// gamma = rho * min(1/rho, |delta|), loss = gamma^1.5 * delta^2.
double rms_loss_from_delta(double delta, const RmsLossSpec& spec);
/// d(loss)/d(delta).
double rms_loss_derivative(double delta, const RmsLossSpec& spec);
double rms_loss(const StereoWaveform& a2, const StereoWaveform& a2p, const RmsLossSpec& spec = {});

double mss_loss(std::span<const double> x, std::span<const double> y, const MssSpec& spec = {});
/// Loss value; accumulates d(loss)/dx into grad_x.
double mss_loss_grad(std::span<const double> x, std::span<const double> y, const MssSpec& spec,
                     std::span<double> grad_x);

struct ClonerLossTerms {
  double rms = 0.0;
  double mss_left = 0.0;
  double mss_right = 0.0;
  double mss_mid = 0.0;
  double mss_side = 0.0;
  double total() const { return rms + mss_left + mss_right + mss_mid + mss_side; }
};

ClonerLossTerms cloner_loss_terms(const StereoWaveform& a2, const StereoWaveform& a2p,
                                  const RmsLossSpec& rms_spec = {}, const MssSpec& mss_spec = {});
double cloner_loss(const StereoWaveform& a2, const StereoWaveform& a2p, const RmsLossSpec& rms_spec = {},
                   const MssSpec& mss_spec = {});

/// Differentiable L_psi for predictions [B, 2, T] against constant targets of
/// the same shape, averaged over the batch. `terms`, when given, receives the
/// batch-mean of each component.
nn::Tensor cloner_loss(const nn::Tensor& target, const nn::Tensor& prediction, const RmsLossSpec& rms_spec,
                       const MssSpec& mss_spec, ClonerLossTerms* terms = nullptr);

double hinge_d_loss(std::span<const double> real_scores, std::span<const double> fake_scores);
double hinge_g_loss(std::span<const double> fake_scores);
nn::Tensor hinge_d_loss(const nn::Tensor& real_scores, const nn::Tensor& fake_scores);
nn::Tensor hinge_g_loss(const nn::Tensor& fake_scores);

}  // namespace remaster
