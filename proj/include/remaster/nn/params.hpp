#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remaster/nn/ops.hpp"
#include "remaster/nn/tensor.hpp"
#include "remaster/rng.hpp"

namespace remaster::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Named trainable parameters plus non-trainable buffers (norm statistics).
// Tensors are shared handles, so layers keep copies that alias the entries.
class ParamSet {
 public:
  Tensor add_parameter(const std::string& name, Shape shape, std::vector<double> values);
  Tensor add_buffer(const std::string& name, Shape shape, std::vector<double> values);

  const std::vector<NamedTensor>& parameters() const { return parameters_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  std::vector<Tensor> parameter_tensors() const;

  std::size_t parameter_count() const;
  void zero_grad();
  /// FNV-1a over names, shapes and values of parameters and buffers.
  std::uint64_t hash() const;

  /// Appends every entry of `other` under `prefix`.
  void extend(const std::string& prefix, const ParamSet& other);

 private:
  void check_new(const std::string& name) const;
  std::vector<NamedTensor> parameters_;
  std::vector<NamedTensor> buffers_;
};

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t state = 0xcbf29ce484222325ULL);

/// Uniform(-bound, bound) values with bound = gain / sqrt(fan_in).
std::vector<double> uniform_init(std::size_t count, std::size_t fan_in, Rng& rng, double gain = 1.0);

struct Conv1d {
  Tensor weight;  // [Cout, Cin, K]
  Tensor bias;    // [Cout] or undefined
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv1d create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t padding, bool with_bias, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv1d(x, weight, bias, stride, padding); }
};

struct Conv2d {
  Tensor weight;  // [Cout, Cin, K, K]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2d create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t padding, bool with_bias, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct Linear {
  Tensor weight;  // [Out, In]
  Tensor bias;

  static Linear create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                       bool with_bias, Rng& rng);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;

  static BatchNorm create(ParamSet& params, const std::string& name, std::size_t channels);
  Tensor operator()(const Tensor& x, bool training) const;
};

}  // namespace remaster::nn
