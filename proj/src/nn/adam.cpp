#include "remaster/nn/adam.hpp"

#include <cmath>

namespace remaster::nn {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const auto g = p.grad();
    if (g.empty()) {
      // a parameter outside this step's graph still decays its moments
      auto values = p.mutable_values();
      for (std::size_t k = 0; k < values.size(); ++k) {
        m_[i][k] *= config_.beta1;
        v_[i][k] *= config_.beta2;
        values[k] -= config_.lr * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + config_.eps);
      }
      continue;
    }
    auto values = p.mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      m_[i][k] = config_.beta1 * m_[i][k] + (1.0 - config_.beta1) * g[k];
      v_[i][k] = config_.beta2 * v_[i][k] + (1.0 - config_.beta2) * g[k] * g[k];
      values[k] -= config_.lr * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace remaster::nn
