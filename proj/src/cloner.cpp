#include "remaster/cloner.hpp"

#include <algorithm>

#include "remaster/error.hpp"

namespace remaster {

ClonerConfig ClonerConfig::preset(const std::string& name) {
  if (name == "canonical") return canonical();
  if (name == "tiny") return tiny();
  throw InvalidArgument("unknown cloner preset '" + name + "'");
}

void ClonerConfig::validate() const {
  if (num_levels < 1) throw InvalidArgument("cloner num_levels must be >= 1");
  if (num_levels > 20) throw InvalidArgument("cloner num_levels is unreasonably large");
  if (base_channels < 1) throw InvalidArgument("cloner base_channels must be >= 1");
  if (down_kernel % 2 == 0 || up_kernel % 2 == 0) throw InvalidArgument("cloner kernels must be odd");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw InvalidArgument("leaky_slope must lie in (0, 1)");
  if (condition_dim < 1) throw InvalidArgument("condition_dim must be >= 1");
  resampler.validate();
}

void to_json(nlohmann::json& j, const ClonerConfig& c) {
  j = {{"num_levels", c.num_levels},       {"base_channels", c.base_channels},
       {"down_kernel", c.down_kernel},     {"up_kernel", c.up_kernel},
       {"leaky_slope", c.leaky_slope},     {"condition_dim", c.condition_dim},
       {"resampler_taps", c.resampler.taps}, {"resampler_cutoff", c.resampler.cutoff},
       {"resampler_beta", c.resampler.beta}};
}

void from_json(const nlohmann::json& j, ClonerConfig& c) {
  j.at("num_levels").get_to(c.num_levels);
  j.at("base_channels").get_to(c.base_channels);
  j.at("down_kernel").get_to(c.down_kernel);
  j.at("up_kernel").get_to(c.up_kernel);
  j.at("leaky_slope").get_to(c.leaky_slope);
  j.at("condition_dim").get_to(c.condition_dim);
  j.at("resampler_taps").get_to(c.resampler.taps);
  j.at("resampler_cutoff").get_to(c.resampler.cutoff);
  j.at("resampler_beta").get_to(c.resampler.beta);
  c.validate();
}

nn::Tensor alias_free_act(const nn::Tensor& x, double slope, const Resampler2& resampler) {
  return nn::downsample2(nn::leaky_relu(nn::upsample2(x, resampler), slope), resampler);
}

Cloner::Cloner(const ClonerConfig& config, std::uint64_t seed)
    : config_(config), resampler_((config.validate(), config.resampler)) {
  Rng rng(seed);
  const std::size_t L = config_.num_levels, kd = config_.down_kernel, ku = config_.up_kernel;
  first_ = nn::Conv1d::create(params_, "first", 2, config_.channels(0), kd, 1, kd / 2, true, rng);
  for (std::size_t i = 0; i < L; ++i)
    down_.push_back(nn::Conv1d::create(params_, "down" + std::to_string(i), config_.channels(i),
                                       config_.channels(i + 1), kd, 1, kd / 2, true, rng));
  bottleneck_ = nn::Conv1d::create(params_, "bottleneck", config_.channels(L), config_.channels(L + 1), kd, 1,
                                   kd / 2, true, rng);
  up_.resize(L);
  film_.resize(L);
  for (std::size_t k = L; k-- > 0;) {
    const std::size_t in = config_.channels(k + 2) + config_.channels(k + 1);
    const std::size_t out = config_.channels(k + 1);
    up_[k] = nn::Conv1d::create(params_, "up" + std::to_string(k), in, out, ku, 1, ku / 2, true, rng);
    // small random weights keep the condition path live while scale ~ 1, shift ~ 0
    auto weight = nn::uniform_init(2 * out * config_.condition_dim, config_.condition_dim, rng, 0.1);
    std::vector<double> bias(2 * out, 0.0);
    std::fill(bias.begin(), bias.begin() + static_cast<std::ptrdiff_t>(out), 1.0);
    const std::string name = "film" + std::to_string(k);
    film_[k].weight = params_.add_parameter(name + ".weight", {2 * out, config_.condition_dim}, std::move(weight));
    film_[k].bias = params_.add_parameter(name + ".bias", {2 * out}, std::move(bias));
  }
  head_ = nn::Conv1d::create(params_, "head", config_.channels(1), 2, 1, 1, 0, true, rng);
}

void Cloner::check_input(const nn::Tensor& x, const nn::Tensor& condition) const {
  if (x.rank() != 3 || x.dim(1) != 2) throw InvalidArgument("cloner expects [B, 2, T], got " + nn::shape_string(x.shape()));
  if (x.dim(2) == 0 || x.dim(2) % config_.length_multiple() != 0)
    throw InvalidArgument("cloner input length " + std::to_string(x.dim(2)) + " is not a multiple of " +
                          std::to_string(config_.length_multiple()));
  if (condition.rank() != 2 || condition.dim(0) != x.dim(0) || condition.dim(1) != config_.condition_dim)
    throw InvalidArgument("cloner condition must be [" + std::to_string(x.dim(0)) + ", " +
                          std::to_string(config_.condition_dim) + "], got " + nn::shape_string(condition.shape()));
}

nn::Tensor Cloner::forward(const nn::Tensor& x, const nn::Tensor& condition) const {
  check_input(x, condition);
  const double slope = config_.leaky_slope;
  const std::size_t L = config_.num_levels;
  nn::Tensor h = alias_free_act(first_(x), slope, resampler_);

  std::vector<nn::Tensor> skips;
  for (std::size_t i = 0; i < L; ++i) {
    h = alias_free_act(down_[i](h), slope, resampler_);
    skips.push_back(h);
    h = nn::downsample2(h, resampler_);
  }
  h = alias_free_act(bottleneck_(h), slope, resampler_);

  for (std::size_t k = L; k-- > 0;) {
    h = nn::upsample2(h, resampler_);
    h = nn::concat({h, skips[k]}, 1);
    h = alias_free_act(up_[k](h), slope, resampler_);
    const std::size_t c = config_.channels(k + 1);
    nn::Tensor mod = film_[k](condition);
    h = nn::film(h, nn::slice(mod, 1, 0, c), nn::slice(mod, 1, c, c));
  }
  return nn::clamp(head_(h), -1.0, 1.0);
}

StereoWaveform Cloner::clone(const StereoWaveform& a1, std::span<const double> condition) const {
  nn::NoGradGuard guard;
  nn::Tensor x({1, 2, a1.size()}, a1.interleaved_planar());
  nn::Tensor c({1, condition.size()}, std::vector<double>(condition.begin(), condition.end()));
  nn::Tensor y = forward(x, c);
  const auto v = y.values();
  const std::size_t n = a1.size();
  return StereoWaveform({v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n)},
                        {v.begin() + static_cast<std::ptrdiff_t>(n), v.end()}, a1.sample_rate());
}

ClonerLayout Cloner::layout(std::size_t length) const {
  if (length == 0 || length % config_.length_multiple() != 0)
    throw InvalidArgument("length must be a positive multiple of " + std::to_string(config_.length_multiple()));
  ClonerLayout out;
  const std::size_t L = config_.num_levels;
  out.bottleneck_length = length >> L;
  for (std::size_t k = L; k-- > 0;) {
    out.skip_sources.push_back("down" + std::to_string(k));
    out.decoder_input_channels.push_back(up_[k].weight.dim(1));
    out.decoder_input_lengths.push_back(length >> k);
  }
  out.first_layer_stride = first_.stride;
  out.first_layer_skip = std::find(out.skip_sources.begin(), out.skip_sources.end(), "first") != out.skip_sources.end();
  return out;
}

}  // namespace remaster
