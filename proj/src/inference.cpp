#include "remaster/inference.hpp"

#include <cmath>
#include <numbers>

#include "remaster/checkpoint.hpp"
#include "remaster/error.hpp"

namespace remaster {

std::unique_ptr<Encoder> load_encoder(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path, kEncoderKind);
  auto encoder = std::make_unique<Encoder>(ckpt.config.at("encoder").get<EncoderConfig>());
  restore_params(encoder->params(), "encoder.", ckpt);
  return encoder;
}

RemasterModels load_models(const std::filesystem::path& encoder_path, const std::filesystem::path& cloner_path) {
  RemasterModels m;
  m.encoder = load_encoder(encoder_path);
  const Checkpoint ckpt = load_checkpoint(cloner_path, kClonerKind);
  const auto config = ckpt.config.at("cloner").get<ClonerConfig>();
  if (config.condition_dim != m.encoder->config().embedding_dim)
    throw InvalidArgument("model mismatch: cloner expects " + std::to_string(config.condition_dim) +
                          "-d conditions but the encoder produces " +
                          std::to_string(m.encoder->config().embedding_dim) + "-d embeddings");
  m.cloner = std::make_unique<Cloner>(config);
  restore_params(m.cloner->params(), "cloner.", ckpt);
  m.window = ckpt.config.at("segment_samples").get<std::size_t>();
  m.encoder_hash = m.encoder->params().hash();
  m.cloner_hash = m.cloner->params().hash();
  return m;
}

StereoWaveform remaster_windowed(const Cloner& cloner, std::span<const double> condition,
                                 const StereoWaveform& input, std::size_t window) {
  const std::size_t multiple = cloner.config().length_multiple();
  if (window == 0 || window % multiple != 0 || window % 2 != 0)
    throw InvalidArgument("remaster window must be an even multiple of " + std::to_string(multiple));
  const std::size_t n = input.size(), hop = window / 2;
  const std::size_t count = n <= window ? 1 : (n - window + hop - 1) / hop + 1;
  const std::size_t padded = (count - 1) * hop + window;

  std::vector<double> weight(window);
  for (std::size_t t = 0; t < window; ++t) {
    // half-sample offset keeps every weight strictly positive
    const double s = std::sin(std::numbers::pi * (static_cast<double>(t) + 0.5) / static_cast<double>(window));
    weight[t] = s * s;
  }
  std::vector<double> acc_l(padded, 0.0), acc_r(padded, 0.0), norm(padded, 0.0);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * hop;
    std::vector<double> l(window, 0.0), r(window, 0.0);
    for (std::size_t t = 0; t < window && start + t < n; ++t) {
      l[t] = input.left()[start + t];
      r[t] = input.right()[start + t];
    }
    const StereoWaveform out = cloner.clone(StereoWaveform(std::move(l), std::move(r), input.sample_rate()), condition);
    for (std::size_t t = 0; t < window; ++t) {
      acc_l[start + t] += weight[t] * out.left()[t];
      acc_r[start + t] += weight[t] * out.right()[t];
      norm[start + t] += weight[t];
    }
  }
  std::vector<double> left(n), right(n);
  for (std::size_t t = 0; t < n; ++t) {
    left[t] = acc_l[t] / norm[t];
    right[t] = acc_r[t] / norm[t];
  }
  return StereoWaveform(std::move(left), std::move(right), input.sample_rate());
}

StereoWaveform remaster(const RemasterModels& models, const StereoWaveform& input, const StereoWaveform& reference) {
  if (!models.encoder || !models.cloner) throw InvalidArgument("remaster needs loaded models");
  const auto condition = models.encoder->encode(reference);
  return remaster_windowed(*models.cloner, condition, input, models.window);
}

}  // namespace remaster
