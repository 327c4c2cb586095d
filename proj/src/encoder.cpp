#include "remaster/encoder.hpp"

#include <cmath>

#include "remaster/error.hpp"

namespace remaster {

EncoderConfig EncoderConfig::preset(const std::string& name) {
  if (name == "canonical") return canonical();
  if (name == "tiny") return tiny();
  throw InvalidArgument("unknown encoder preset '" + name + "'");
}

void EncoderConfig::validate() const {
  if (block_channels.empty()) throw InvalidArgument("encoder needs at least one block");
  for (auto c : block_channels)
    if (c == 0) throw InvalidArgument("encoder channel counts must be >= 1");
  if (block_channels.back() != embedding_dim)
    throw InvalidArgument("last encoder block has " + std::to_string(block_channels.back()) +
                          " channels but embedding_dim is " + std::to_string(embedding_dim));
  if (kernel_size == 0 || kernel_size % 2 == 0) throw InvalidArgument("encoder kernel_size must be odd");
  if (block_stride == 0) throw InvalidArgument("encoder block_stride must be >= 1");
  if (projection_dim == 0) throw InvalidArgument("projection_dim must be >= 1");
}

std::size_t EncoderConfig::min_length() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < block_channels.size(); ++i) n *= block_stride;
  return n;
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"block_channels", c.block_channels},
       {"kernel_size", c.kernel_size},
       {"block_stride", c.block_stride},
       {"embedding_dim", c.embedding_dim},
       {"projection_dim", c.projection_dim}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("block_channels").get_to(c.block_channels);
  j.at("kernel_size").get_to(c.kernel_size);
  j.at("block_stride").get_to(c.block_stride);
  j.at("embedding_dim").get_to(c.embedding_dim);
  j.at("projection_dim").get_to(c.projection_dim);
  c.validate();
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t k = config_.kernel_size, pad = k / 2, s = config_.block_stride;
  std::size_t in = 2;
  for (std::size_t i = 0; i < config_.block_channels.size(); ++i) {
    const std::size_t out = config_.block_channels[i];
    const std::string name = "block" + std::to_string(i);
    Block b;
    // convs feeding batch norm carry no bias (the norm's shift replaces it)
    b.conv1 = nn::Conv1d::create(params_, name + ".conv1", in, out, k, 1, pad, false, rng);
    b.norm1 = nn::BatchNorm::create(params_, name + ".norm1", out);
    b.conv2 = nn::Conv1d::create(params_, name + ".conv2", out, out, k, s, pad, false, rng);
    b.norm2 = nn::BatchNorm::create(params_, name + ".norm2", out);
    b.has_shortcut = in != out || s != 1;
    if (b.has_shortcut) b.shortcut = nn::Conv1d::create(params_, name + ".shortcut", in, out, 1, s, 0, true, rng);
    blocks_.push_back(std::move(b));
    in = out;
  }
  head_ = nn::Linear::create(params_, "head", config_.embedding_dim, config_.projection_dim, true, rng);
}

namespace {

// Batch norm over a ragged batch: concatenate along time so the statistics
// cover every position of every example, then split back.
std::vector<nn::Tensor> ragged_norm(const std::vector<nn::Tensor>& xs, const nn::BatchNorm& bn, bool training) {
  if (xs.size() == 1) return {bn(xs[0], training)};
  std::vector<std::size_t> lengths;
  for (const auto& x : xs) lengths.push_back(x.dim(2));
  nn::Tensor y = bn(nn::concat(xs, 2), training);
  std::vector<nn::Tensor> out;
  std::size_t start = 0;
  for (auto len : lengths) {
    out.push_back(nn::slice(y, 2, start, len));
    start += len;
  }
  return out;
}

}  // namespace

nn::Tensor Encoder::forward(const std::vector<nn::Tensor>& inputs, bool training) const {
  if (inputs.empty()) throw InvalidArgument("encoder forward on an empty batch");
  std::vector<nn::Tensor> xs;
  for (const auto& x : inputs) {
    if (x.rank() != 3 || x.dim(0) != 1 || x.dim(1) != 2)
      throw InvalidArgument("encoder expects [1, 2, T] inputs, got " + nn::shape_string(x.shape()));
    if (x.dim(2) < config_.min_length())
      throw InvalidArgument("encoder input of " + std::to_string(x.dim(2)) + " samples is shorter than the minimum " +
                            std::to_string(config_.min_length()));
    xs.push_back(x);
  }
  for (const auto& b : blocks_) {
    std::vector<nn::Tensor> h, shortcut;
    for (const auto& x : xs) h.push_back(b.conv1(x));
    h = ragged_norm(h, b.norm1, training);
    for (auto& t : h) t = b.conv2(nn::relu(t));
    h = ragged_norm(h, b.norm2, training);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      nn::Tensor skip = b.has_shortcut ? b.shortcut(xs[i]) : xs[i];
      xs[i] = nn::relu(nn::add(h[i], skip));
    }
  }
  std::vector<nn::Tensor> pooled;
  for (const auto& x : xs) pooled.push_back(nn::global_avg_pool(x));
  return pooled.size() == 1 ? pooled[0] : nn::concat(pooled, 0);
}

nn::Tensor Encoder::project(const nn::Tensor& embeddings) const {
  if (embeddings.rank() != 2 || embeddings.dim(1) != config_.embedding_dim)
    throw InvalidArgument("projection head expects [B, " + std::to_string(config_.embedding_dim) + "], got " +
                          nn::shape_string(embeddings.shape()));
  return head_(embeddings);
}

std::vector<double> Encoder::encode(const StereoWaveform& wf) const {
  nn::NoGradGuard guard;
  nn::Tensor e = forward({waveform_tensor(wf)}, false);
  return {e.values().begin(), e.values().end()};
}

nn::Tensor waveform_tensor(const StereoWaveform& wf) {
  return nn::Tensor({1, 2, wf.size()}, wf.interleaved_planar());
}

nn::Tensor batch_tensor(const std::vector<const StereoWaveform*>& batch) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const std::size_t n = batch[0]->size();
  std::vector<double> values;
  values.reserve(batch.size() * 2 * n);
  for (const auto* wf : batch) {
    if (wf->size() != n) throw InvalidArgument("batch waveforms differ in length");
    values.insert(values.end(), wf->left().begin(), wf->left().end());
    values.insert(values.end(), wf->right().begin(), wf->right().end());
  }
  return nn::Tensor({batch.size(), 2, n}, std::move(values));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: size mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

nn::Tensor nt_xent_loss(const nn::Tensor& projections, double temperature) {
  if (projections.rank() != 2 || projections.dim(0) % 2 != 0)
    throw InvalidArgument("nt_xent_loss expects [2B, D] projections");
  const std::size_t n = projections.dim(0), d = projections.dim(1), half = n / 2;
  if (half < 2) throw InvalidArgument("nt_xent_loss needs B >= 2 positive pairs so that negatives exist");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");

  const auto z = projections.values();
  std::vector<double> u(n * d), norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += z[i * d + k] * z[i * d + k];
    norm[i] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t k = 0; k < d; ++k) u[i * d + k] = z[i * d + k] / norm[i];
  }
  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += u[i * d + k] * u[j * d + k];
      sim[i * n + j] = s / temperature;
    }

  // G[i][j] = dL/dsim[i][j]
  std::vector<double> g(n * n, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = (i + half) % n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, sim[i * n + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) denom += std::exp(sim[i * n + j] - mx);
    loss += -(sim[i * n + pos] - mx) + std::log(denom);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) g[i * n + j] = std::exp(sim[i * n + j] - mx) / denom / static_cast<double>(n);
    g[i * n + pos] -= 1.0 / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);

  std::vector<double> grad(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> du(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = (g[i * n + j] + g[j * n + i]) / temperature;
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) du[k] += w * u[j * d + k];
    }
    // project out the radial component: d(z/|z|)/dz = (I - u u^T) / |z|
    double radial = 0.0;
    for (std::size_t k = 0; k < d; ++k) radial += du[k] * u[i * d + k];
    for (std::size_t k = 0; k < d; ++k) grad[i * d + k] = (du[k] - radial * u[i * d + k]) / norm[i];
  }
  return nn::custom_scalar(projections, loss, std::move(grad));
}

}  // namespace remaster
