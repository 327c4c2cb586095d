#pragma once

#include <cstdint>
#include <vector>

#include "remaster/nn/tensor.hpp"

namespace remaster::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// One update from the accumulated gradients (missing grads count as zero).
  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  // Moment buffers, one per parameter, for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace remaster::nn
