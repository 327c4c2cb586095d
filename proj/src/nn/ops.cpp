#include "remaster/nn/ops.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "remaster/error.hpp"

namespace remaster::nn {
namespace {

using Index = std::ptrdiff_t;

double* grad_of(Node& self, std::size_t parent) {
  auto& p = *self.parents[parent];
  return p.requires_grad ? p.grad.data() : nullptr;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                      " vs " + shape_string(b.shape()));
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd dfdx) {
  std::vector<double> out(x.size());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * dfdx(xv[i]);
  });
}

// valid output range [lo, hi) for input index t*stride + k - pad in [0, len)
std::pair<Index, Index> valid_range(Index len, Index out_len, Index k, Index stride, Index pad) {
  const Index shift = k - pad;
  Index lo = 0;
  if (shift < 0) lo = (-shift + stride - 1) / stride;
  const Index last = len - 1 - shift;
  if (last < 0) return {0, 0};
  Index hi = std::min(out_len, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return s * v; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
               [lo, hi](double v) { return v > lo && v < hi ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result({}, {acc}, {x}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

// Geometry of a 1-D or 2-D convolution lowered to one GEMM per example:
// Y[Cout, P] = W[Cout, Cin*Kh*Kw] * cols[Cin*Kh*Kw, P].
struct ConvGeometry {
  Index ci, h, w, kh, kw, ho, wo;
  Index stride_h, pad_h, stride_w, pad_w;
  Index patch() const { return ci * kh * kw; }
  Index positions() const { return ho * wo; }
  Index image() const { return ci * h * w; }

  void im2col(const double* x, double* cols) const {
    for (Index c = 0; c < ci; ++c)
      for (Index a = 0; a < kh; ++a)
        for (Index b = 0; b < kw; ++b) {
          double* row = cols + ((c * kh + a) * kw + b) * positions();
          std::fill(row, row + positions(), 0.0);
          const auto [hlo, hhi] = valid_range(h, ho, a, stride_h, pad_h);
          const auto [wlo, whi] = valid_range(w, wo, b, stride_w, pad_w);
          for (Index oh = hlo; oh < hhi; ++oh) {
            const double* src = x + (c * h + oh * stride_h + a - pad_h) * w + (b - pad_w);
            double* dst = row + oh * wo;
            if (stride_w == 1) {
              std::copy(src + wlo, src + whi, dst + wlo);
            } else {
              for (Index ow = wlo; ow < whi; ++ow) dst[ow] = src[ow * stride_w];
            }
          }
        }
  }

  void col2im_add(const double* cols, double* x) const {
    for (Index c = 0; c < ci; ++c)
      for (Index a = 0; a < kh; ++a)
        for (Index b = 0; b < kw; ++b) {
          const double* row = cols + ((c * kh + a) * kw + b) * positions();
          const auto [hlo, hhi] = valid_range(h, ho, a, stride_h, pad_h);
          const auto [wlo, whi] = valid_range(w, wo, b, stride_w, pad_w);
          for (Index oh = hlo; oh < hhi; ++oh) {
            double* dst = x + (c * h + oh * stride_h + a - pad_h) * w + (b - pad_w);
            const double* src = row + oh * wo;
            for (Index ow = wlo; ow < whi; ++ow) dst[ow * stride_w] += src[ow];
          }
        }
  }
};

Tensor conv_gemm(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry g, Index batch,
                 Index co, Shape out_shape) {
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.size() == static_cast<std::size_t>(co), "conv: bias size mismatch");
  const Index P = g.positions(), K = g.patch();
  std::vector<double> out(static_cast<std::size_t>(batch * co * P));
  std::vector<double> cols(static_cast<std::size_t>(K * P));
  ConstMapMatrix W(weight.values().data(), co, K);
  for (Index b = 0; b < batch; ++b) {
    g.im2col(x.values().data() + b * g.image(), cols.data());
    MapMatrix Y(out.data() + b * co * P, co, P);
    Y.noalias() = W * ConstMapMatrix(cols.data(), K, P);
    if (has_bias)
      for (Index c = 0; c < co; ++c) Y.row(c).array() += bias.values()[static_cast<std::size_t>(c)];
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(out_shape), std::move(out), inputs, [=](Node& self) {
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    double* gb = has_bias ? grad_of(self, 2) : nullptr;
    const double* xv = self.parents[0]->value.data();
    ConstMapMatrix Wb(self.parents[1]->value.data(), co, K);
    std::vector<double> buf(static_cast<std::size_t>(K * P));
    for (Index b = 0; b < batch; ++b) {
      ConstMapMatrix dY(self.grad.data() + b * co * P, co, P);
      // plain loop: Eigen's vectorized reduction peels by address, so its
      // rounding would depend on where the buffer happens to be allocated
      if (gb)
        for (Index c = 0; c < co; ++c) {
          const double* row = self.grad.data() + (b * co + c) * P;
          double s = 0.0;
          for (Index p = 0; p < P; ++p) s += row[p];
          gb[c] += s;
        }
      if (gw) {
        g.im2col(xv + b * g.image(), buf.data());
        MapMatrix(gw, co, K).noalias() += dY * ConstMapMatrix(buf.data(), K, P).transpose();
      }
      if (gx) {
        MapMatrix cols_grad(buf.data(), K, P);
        cols_grad.noalias() = Wb.transpose() * dY;
        g.col2im_add(buf.data(), gx + b * g.image());
      }
    }
  });
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require(x.rank() == 3 && w.rank() == 3, "conv1d expects x [B,Cin,T] and w [Cout,Cin,K]");
  require(x.dim(1) == w.dim(1), "conv1d: input has " + std::to_string(x.dim(1)) +
                                    " channels, kernel expects " + std::to_string(w.dim(1)));
  require(stride >= 1, "conv1d: stride must be >= 1");
  const Index B = static_cast<Index>(x.dim(0)), T = static_cast<Index>(x.dim(2));
  const Index Co = static_cast<Index>(w.dim(0)), K = static_cast<Index>(w.dim(2));
  const Index S = static_cast<Index>(stride), P = static_cast<Index>(padding);
  require(T + 2 * P >= K, "conv1d: input of length " + std::to_string(T) + " shorter than kernel");
  const Index To = (T + 2 * P - K) / S + 1;
  // a 1-D convolution is a 2-D one over a height-1 image
  const ConvGeometry g{static_cast<Index>(x.dim(1)), 1, T, 1, K, 1, To, 1, 0, S, P};
  return conv_gemm(x, w, bias, g, B, Co,
                   {static_cast<std::size_t>(B), static_cast<std::size_t>(Co), static_cast<std::size_t>(To)});
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require(x.rank() == 4 && w.rank() == 4, "conv2d expects x [B,Cin,H,W] and w [Cout,Cin,Kh,Kw]");
  require(x.dim(1) == w.dim(1), "conv2d: channel mismatch");
  require(stride >= 1, "conv2d: stride must be >= 1");
  const Index B = static_cast<Index>(x.dim(0)), H = static_cast<Index>(x.dim(2)), W = static_cast<Index>(x.dim(3));
  const Index Co = static_cast<Index>(w.dim(0)), KH = static_cast<Index>(w.dim(2)), KW = static_cast<Index>(w.dim(3));
  const Index S = static_cast<Index>(stride), P = static_cast<Index>(padding);
  require(H + 2 * P >= KH && W + 2 * P >= KW, "conv2d: input smaller than kernel");
  const Index Ho = (H + 2 * P - KH) / S + 1, Wo = (W + 2 * P - KW) / S + 1;
  const ConvGeometry g{static_cast<Index>(x.dim(1)), H, W, KH, KW, Ho, Wo, S, P, S, P};
  return conv_gemm(x, w, bias, g, B, Co,
                   {static_cast<std::size_t>(B), static_cast<std::size_t>(Co), static_cast<std::size_t>(Ho),
                    static_cast<std::size_t>(Wo)});
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.rank() == 2 && w.rank() == 2, "linear expects x [B,In] and w [Out,In]");
  require(x.dim(1) == w.dim(1), "linear: input has " + std::to_string(x.dim(1)) + " features, layer expects " +
                                    std::to_string(w.dim(1)));
  const std::size_t B = x.dim(0), In = x.dim(1), Out = w.dim(0);
  const bool has_bias = bias.defined();
  std::vector<double> out(B * Out);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Out; ++o) {
      double acc = has_bias ? bias.values()[o] : 0.0;
      const double* wr = w.values().data() + o * In;
      const double* xr = x.values().data() + b * In;
      for (std::size_t i = 0; i < In; ++i) acc += wr[i] * xr[i];
      out[b * Out + o] = acc;
    }
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_result({B, Out}, std::move(out), inputs, [=](Node& self) {
    const double* xv = self.parents[0]->value.data();
    const double* wv = self.parents[1]->value.data();
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    double* gb = has_bias ? grad_of(self, 2) : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < Out; ++o) {
        const double g = self.grad[b * Out + o];
        if (g == 0.0) continue;
        if (gb) gb[o] += g;
        if (gw)
          for (std::size_t i = 0; i < In; ++i) gw[o * In + i] += g * xv[b * In + i];
        if (gx)
          for (std::size_t i = 0; i < In; ++i) gx[b * In + i] += g * wv[o * In + i];
      }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  require(x.rank() >= 2, "batch_norm expects [B, C, ...]");
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.size() / (B * C);
  require(gamma.size() == C && beta.size() == C && running_mean.size() == C && running_var.size() == C,
          "batch_norm: parameter size mismatch");
  const std::size_t N = B * S;
  const double* xv = x.values().data();

  std::vector<double> mu(C), invstd(C);
  if (training) {
    require(N > 1, "batch_norm: training needs more than one value per channel");
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s) m += xv[(b * C + c) * S + s];
      m /= static_cast<double>(N);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s) {
          const double d = xv[(b * C + c) * S + s] - m;
          v += d * d;
        }
      v /= static_cast<double>(N);
      mu[c] = m;
      invstd[c] = 1.0 / std::sqrt(v + eps);
      auto rm = running_mean.mutable_values();
      auto rv = running_var.mutable_values();
      rm[c] = (1.0 - momentum) * rm[c] + momentum * m;
      rv[c] = (1.0 - momentum) * rv[c] + momentum * v * static_cast<double>(N) / static_cast<double>(N - 1);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = running_mean.values()[c];
      invstd[c] = 1.0 / std::sqrt(running_var.values()[c] + eps);
    }
  }

  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double g = gamma.values()[c], be = beta.values()[c];
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (b * C + c) * S + s;
        xhat[i] = (xv[i] - mu[c]) * invstd[c];
        out[i] = g * xhat[i] + be;
      }
    }

  auto saved = std::make_shared<std::vector<double>>(std::move(xhat));
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [=, invstd = std::move(invstd)](Node& self) {
    const auto& xh = *saved;
    const auto& gy = self.grad;
    const auto& gv = self.parents[1]->value;
    double* gx = grad_of(self, 0);
    double* ggamma = grad_of(self, 1);
    double* gbeta = grad_of(self, 2);
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t i = (b * C + c) * S + s;
          sum_dy += gy[i];
          sum_dy_xhat += gy[i] * xh[i];
        }
      if (ggamma) ggamma[c] += sum_dy_xhat;
      if (gbeta) gbeta[c] += sum_dy;
      if (!gx) continue;
      const double k = gv[c] * invstd[c];
      const double n = static_cast<double>(N);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t i = (b * C + c) * S + s;
          gx[i] += training ? k * (gy[i] - sum_dy / n - xh[i] * sum_dy_xhat / n) : k * gy[i];
        }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  return make_result(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {x},
                     [](Node& self) {
                       if (double* g = grad_of(self, 0))
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  require(!xs.empty(), "concat of nothing");
  const Shape& first = xs[0].shape();
  require(axis < first.size(), "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    require(t.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis) require(t.dim(d) == first[d], "concat: shape mismatch " + shape_string(t.shape()) + " vs " + shape_string(first));
    out_shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total = out_shape[axis];

  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> lengths;
  std::size_t offset = 0;
  for (const auto& t : xs) {
    const std::size_t len = t.dim(axis);
    lengths.push_back(len);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.values().data() + o * len * inner, len * inner, out.data() + (o * total + offset) * inner);
    offset += len;
  }
  return make_result(out_shape, std::move(out), xs, [=](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < lengths.size(); ++p) {
      const std::size_t len = lengths[p];
      if (double* g = grad_of(self, p))
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + (o * total + off) * inner;
          double* dst = g + o * len * inner;
          for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      off += len;
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require(axis < x.rank(), "slice: axis out of range");
  require(start + length <= x.dim(axis), "slice: range out of bounds");
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t total = x.dim(axis);
  std::vector<double> out(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.values().data() + (o * total + start) * inner, length * inner, out.data() + o * length * inner);
  return make_result(out_shape, std::move(out), {x}, [=](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = self.grad.data() + o * length * inner;
      double* dst = g + (o * total + start) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() >= 3, "global_avg_pool expects [B, C, ...]");
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.size() / (B * C);
  std::vector<double> out(B * C);
  for (std::size_t i = 0; i < B * C; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) acc += x.values()[i * S + s];
    out[i] = acc / static_cast<double>(S);
  }
  return make_result({B, C}, std::move(out), {x}, [=](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < B * C; ++i) {
      const double v = self.grad[i] / static_cast<double>(S);
      for (std::size_t s = 0; s < S; ++s) g[i * S + s] += v;
    }
  });
}

Tensor film(const Tensor& x, const Tensor& scale_t, const Tensor& shift) {
  require(x.rank() == 3, "film expects x [B, C, T]");
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  require(scale_t.shape() == Shape{B, C} && shift.shape() == Shape{B, C},
          "film: modulation must be [B, C] = " + shape_string({B, C}) + ", got " + shape_string(scale_t.shape()));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < B * C; ++i) {
    const double s = scale_t.values()[i], h = shift.values()[i];
    for (std::size_t t = 0; t < T; ++t) out[i * T + t] = s * x.values()[i * T + t] + h;
  }
  return make_result(x.shape(), std::move(out), {x, scale_t, shift}, [=](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& sv = self.parents[1]->value;
    double* gx = grad_of(self, 0);
    double* gs = grad_of(self, 1);
    double* gh = grad_of(self, 2);
    for (std::size_t i = 0; i < B * C; ++i) {
      double acc_s = 0.0, acc_h = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double g = self.grad[i * T + t];
        acc_s += g * xv[i * T + t];
        acc_h += g;
        if (gx) gx[i * T + t] += g * sv[i];
      }
      if (gs) gs[i] += acc_s;
      if (gh) gh[i] += acc_h;
    }
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && a.shape() == b.shape(), "row_dot expects two [B, D] tensors");
  const std::size_t B = a.dim(0), D = a.dim(1);
  std::vector<double> out(B);
  for (std::size_t i = 0; i < B; ++i) {
    double acc = 0.0;
    for (std::size_t d = 0; d < D; ++d) acc += a.values()[i * D + d] * b.values()[i * D + d];
    out[i] = acc;
  }
  return make_result({B}, std::move(out), {a, b}, [=](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t d = 0; d < D; ++d) {
        if (ga) ga[i * D + d] += self.grad[i] * bv[i * D + d];
        if (gb) gb[i * D + d] += self.grad[i] * av[i * D + d];
      }
  });
}

Tensor upsample2(const Tensor& x, const Resampler2& r) {
  require(x.rank() == 3, "upsample2 expects [B, C, T]");
  const std::size_t rows = x.dim(0) * x.dim(1), T = x.dim(2);
  std::vector<double> out(rows * 2 * T);
  for (std::size_t i = 0; i < rows; ++i)
    r.upsample(x.values().subspan(i * T, T), std::span(out).subspan(i * 2 * T, 2 * T));
  return make_result({x.dim(0), x.dim(1), 2 * T}, std::move(out), {x}, [rows, T, &r](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < rows; ++i)
      r.upsample_adjoint(std::span<const double>(self.grad).subspan(i * 2 * T, 2 * T), std::span(g + i * T, T));
  });
}

Tensor downsample2(const Tensor& x, const Resampler2& r) {
  require(x.rank() == 3, "downsample2 expects [B, C, T]");
  require(x.dim(2) % 2 == 0, "downsample2 needs an even time length, got " + std::to_string(x.dim(2)));
  const std::size_t rows = x.dim(0) * x.dim(1), T = x.dim(2), H = T / 2;
  std::vector<double> out(rows * H);
  for (std::size_t i = 0; i < rows; ++i)
    r.downsample(x.values().subspan(i * T, T), std::span(out).subspan(i * H, H));
  return make_result({x.dim(0), x.dim(1), H}, std::move(out), {x}, [rows, T, H, &r](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < rows; ++i)
      r.downsample_adjoint(std::span<const double>(self.grad).subspan(i * H, H), std::span(g + i * T, T));
  });
}

Tensor stft_log_magnitude(const Tensor& x, const StftSpec& spec, double eps) {
  require(x.rank() == 3, "stft_log_magnitude expects [B, C, T]");
  const std::size_t rows = x.dim(0) * x.dim(1), T = x.dim(2);
  auto specs = std::make_shared<std::vector<Spectrogram>>();
  specs->reserve(rows);
  for (std::size_t i = 0; i < rows; ++i) specs->push_back(stft(x.values().subspan(i * T, T), spec));
  const std::size_t bins = specs->front().bins, frames = specs->front().frames;
  std::vector<double> out(rows * bins * frames);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t k = 0; k < bins; ++k)
        out[(i * bins + k) * frames + f] = std::log(std::abs((*specs)[i].at(f, k)) + eps);
  return make_result({x.dim(0), x.dim(1), bins, frames}, std::move(out), {x},
                     [=](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    std::vector<double> grad_mag(bins * frames);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto& s = (*specs)[i];
      for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t k = 0; k < bins; ++k)
          grad_mag[f * bins + k] = self.grad[(i * bins + k) * frames + f] / (std::abs(s.at(f, k)) + eps);
      stft_magnitude_backward(s, grad_mag, spec, std::span(g + i * T, T));
    }
  });
}

Tensor custom_scalar(const Tensor& x, double value, std::vector<double> grad) {
  require(grad.size() == x.size(), "custom_scalar: gradient size mismatch");
  return make_result({}, {value}, {x}, [grad = std::move(grad)](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] += self.grad[0] * grad[i];
  });
}

}  // namespace remaster::nn
