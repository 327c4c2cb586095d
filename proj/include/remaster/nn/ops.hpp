#pragma once

#include <cstddef>
#include <vector>

#include "remaster/nn/tensor.hpp"
#include "remaster/resample.hpp"
#include "remaster/stft.hpp"

namespace remaster::nn {

// Elementwise, shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
/// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// x [B, Cin, T], w [Cout, Cin, K], bias [Cout] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);
/// x [B, Cin, H, W], w [Cout, Cin, Kh, Kw], bias [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// x [B, In], w [Out, In], bias [Out] -> [B, Out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Per-channel statistics over every axis except 1. In training mode batch
// statistics are used and the running estimates are updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

/// Same values under a new shape of equal element count.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

/// Mean over all axes after the first two: [B, C, ...] -> [B, C].
Tensor global_avg_pool(const Tensor& x);

/// x [B, C, T], scale/shift [B, C]: out = scale * x + shift per channel.
Tensor film(const Tensor& x, const Tensor& scale, const Tensor& shift);

/// Row-wise inner product: [B, D] x [B, D] -> [B].
Tensor row_dot(const Tensor& a, const Tensor& b);

/// Factor-2 resampling along the last axis of [B, C, T].
Tensor upsample2(const Tensor& x, const Resampler2& r);
Tensor downsample2(const Tensor& x, const Resampler2& r);

/// x [B, C, T] -> log(|STFT| + eps) laid out [B, C, bins, frames].
Tensor stft_log_magnitude(const Tensor& x, const StftSpec& spec, double eps);

/// Scalar node with externally computed value and gradient w.r.t. `x`.
Tensor custom_scalar(const Tensor& x, double value, std::vector<double> grad);

}  // namespace remaster::nn
