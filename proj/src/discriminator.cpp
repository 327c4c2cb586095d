#include "remaster/discriminator.hpp"

#include "remaster/error.hpp"
#include "remaster/nn/ops.hpp"

namespace remaster {

DiscriminatorConfig DiscriminatorConfig::preset(const std::string& name) {
  if (name == "canonical") return canonical();
  if (name == "tiny") return tiny();
  throw InvalidArgument("unknown discriminator preset '" + name + "'");
}

void DiscriminatorConfig::validate() const {
  if (block_channels.empty()) throw InvalidArgument("discriminator needs at least one block");
  for (auto c : block_channels)
    if (c == 0) throw InvalidArgument("discriminator channel counts must be >= 1");
  if (block_channels.back() != projected_dim)
    throw InvalidArgument("last discriminator block must have projected_dim channels");
  if (kernel % 2 == 0 || stride == 0) throw InvalidArgument("discriminator kernel must be odd, stride >= 1");
  if (condition_dim == 0) throw InvalidArgument("condition_dim must be >= 1");
  if (fft_size < 2 || hop == 0 || !(log_eps > 0.0)) throw InvalidArgument("invalid discriminator spectrogram settings");
}

std::size_t DiscriminatorConfig::expected_parameter_count() const {
  std::size_t n = 0, in = 2;
  for (auto c : block_channels) {
    n += c * in * kernel * kernel + 2 * c;  // conv1 (no bias) + norm1
    n += c * c * kernel * kernel + 2 * c;   // conv2 (no bias) + norm2
    in = c;
  }
  n += projected_dim + 1;                                   // unconditional head
  n += condition_dim * projected_dim + projected_dim;       // mlp layer 1
  n += projected_dim * projected_dim + projected_dim;       // mlp layer 2
  return n;
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"block_channels", c.block_channels}, {"kernel", c.kernel},     {"stride", c.stride},
       {"condition_dim", c.condition_dim},   {"projected_dim", c.projected_dim},
       {"fft_size", c.fft_size},             {"hop", c.hop},           {"log_eps", c.log_eps}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  j.at("block_channels").get_to(c.block_channels);
  j.at("kernel").get_to(c.kernel);
  j.at("stride").get_to(c.stride);
  j.at("condition_dim").get_to(c.condition_dim);
  j.at("projected_dim").get_to(c.projected_dim);
  j.at("fft_size").get_to(c.fft_size);
  j.at("hop").get_to(c.hop);
  j.at("log_eps").get_to(c.log_eps);
  c.validate();
}

nn::Tensor spectrogram(const StereoWaveform& wf, const DiscriminatorConfig& config) {
  if (wf.size() < config.fft_size)
    throw InvalidArgument("spectrogram needs at least " + std::to_string(config.fft_size) + " samples, got " +
                          std::to_string(wf.size()));
  nn::NoGradGuard guard;
  nn::Tensor x({1, 2, wf.size()}, wf.interleaved_planar());
  nn::Tensor s = nn::stft_log_magnitude(x, config.stft_spec(), config.log_eps);
  return nn::Tensor({2, s.dim(2), s.dim(3)}, std::vector<double>(s.values().begin(), s.values().end()));
}

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t k = config_.kernel, pad = k / 2;
  std::size_t in = 2;
  for (std::size_t i = 0; i < config_.block_channels.size(); ++i) {
    const std::size_t out = config_.block_channels[i];
    const std::string name = "block" + std::to_string(i);
    Block b;
    b.conv1 = nn::Conv2d::create(params_, name + ".conv1", in, out, k, 1, pad, false, rng);
    b.norm1 = nn::BatchNorm::create(params_, name + ".norm1", out);
    b.conv2 = nn::Conv2d::create(params_, name + ".conv2", out, out, k, config_.stride, pad, false, rng);
    b.norm2 = nn::BatchNorm::create(params_, name + ".norm2", out);
    blocks_.push_back(std::move(b));
    in = out;
  }
  out_ = nn::Linear::create(params_, "out", config_.projected_dim, 1, true, rng);
  mlp1_ = nn::Linear::create(params_, "mlp1", config_.condition_dim, config_.projected_dim, true, rng);
  mlp2_ = nn::Linear::create(params_, "mlp2", config_.projected_dim, config_.projected_dim, true, rng);
}

nn::Tensor Discriminator::features(const nn::Tensor& spectrograms, bool training) const {
  if (spectrograms.rank() != 4 || spectrograms.dim(1) != 2)
    throw InvalidArgument("discriminator expects [B, 2, bins, frames], got " + nn::shape_string(spectrograms.shape()));
  nn::Tensor h = spectrograms;
  for (const auto& b : blocks_) {
    h = nn::relu(b.norm1(b.conv1(h), training));
    h = nn::relu(b.norm2(b.conv2(h), training));
  }
  return nn::global_avg_pool(h);
}

nn::Tensor Discriminator::embed_condition(const nn::Tensor& condition) const {
  if (condition.rank() != 2 || condition.dim(1) != config_.condition_dim)
    throw InvalidArgument("discriminator condition must be [B, " + std::to_string(config_.condition_dim) + "], got " +
                          nn::shape_string(condition.shape()));
  return mlp2_(nn::relu(mlp1_(condition)));
}

nn::Tensor Discriminator::score_from_features(const nn::Tensor& phi, const nn::Tensor& projected) const {
  if (phi.rank() != 2 || phi.dim(1) != config_.projected_dim || phi.shape() != projected.shape())
    throw InvalidArgument("score_from_features: dim mismatch");
  nn::Tensor flat = nn::reshape(out_(phi), {phi.dim(0)});
  return nn::add(flat, nn::row_dot(phi, projected));
}

nn::Tensor Discriminator::forward(const nn::Tensor& waveforms, const nn::Tensor& condition, bool training) const {
  if (waveforms.rank() != 3 || waveforms.dim(1) != 2)
    throw InvalidArgument("discriminator expects waveforms [B, 2, T], got " + nn::shape_string(waveforms.shape()));
  if (waveforms.dim(2) < config_.fft_size)
    throw InvalidArgument("discriminator input shorter than one " + std::to_string(config_.fft_size) + "-sample frame");
  if (condition.rank() != 2 || condition.dim(0) != waveforms.dim(0))
    throw InvalidArgument("discriminator condition batch mismatch");
  nn::Tensor spec = nn::stft_log_magnitude(waveforms, config_.stft_spec(), config_.log_eps);
  nn::Tensor phi = features(spec, training);
  return score_from_features(phi, embed_condition(condition));
}

}  // namespace remaster
