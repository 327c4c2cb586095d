#include "remaster/nn/params.hpp"

#include <cmath>

#include "remaster/error.hpp"

namespace remaster::nn {

void ParamSet::check_new(const std::string& name) const {
  for (const auto& p : parameters_)
    if (p.name == name) throw InvalidArgument("duplicate parameter name " + name);
  for (const auto& b : buffers_)
    if (b.name == name) throw InvalidArgument("duplicate buffer name " + name);
}

Tensor ParamSet::add_parameter(const std::string& name, Shape shape, std::vector<double> values) {
  check_new(name);
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  parameters_.push_back({name, t});
  return t;
}

Tensor ParamSet::add_buffer(const std::string& name, Shape shape, std::vector<double> values) {
  check_new(name);
  Tensor t(std::move(shape), std::move(values));
  buffers_.push_back({name, t});
  return t;
}

std::vector<Tensor> ParamSet::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(parameters_.size());
  for (const auto& p : parameters_) out.push_back(p.tensor);
  return out;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters_) n += p.tensor.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : parameters_) p.tensor.zero_grad();
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t state) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state ^= bytes[i];
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t ParamSet::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto fold = [&h](const std::vector<NamedTensor>& list) {
    for (const auto& e : list) {
      h = fnv1a(e.name.data(), e.name.size(), h);
      for (auto d : e.tensor.shape()) {
        const std::uint64_t d64 = d;
        h = fnv1a(&d64, sizeof d64, h);
      }
      h = fnv1a(e.tensor.values().data(), e.tensor.size() * sizeof(double), h);
    }
  };
  fold(parameters_);
  fold(buffers_);
  return h;
}

void ParamSet::extend(const std::string& prefix, const ParamSet& other) {
  for (const auto& p : other.parameters_) {
    check_new(prefix + p.name);
    parameters_.push_back({prefix + p.name, p.tensor});
  }
  for (const auto& b : other.buffers_) {
    check_new(prefix + b.name);
    buffers_.push_back({prefix + b.name, b.tensor});
  }
}

std::vector<double> uniform_init(std::size_t count, std::size_t fan_in, Rng& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(count);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

Conv1d Conv1d::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                      std::size_t kernel, std::size_t stride, std::size_t padding, bool with_bias, Rng& rng) {
  Conv1d c;
  const std::size_t fan_in = in * kernel;
  c.weight = params.add_parameter(name + ".weight", {out, in, kernel}, uniform_init(out * in * kernel, fan_in, rng));
  if (with_bias) c.bias = params.add_parameter(name + ".bias", {out}, uniform_init(out, fan_in, rng));
  c.stride = stride;
  c.padding = padding;
  return c;
}

Conv2d Conv2d::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                      std::size_t kernel, std::size_t stride, std::size_t padding, bool with_bias, Rng& rng) {
  Conv2d c;
  const std::size_t fan_in = in * kernel * kernel;
  c.weight = params.add_parameter(name + ".weight", {out, in, kernel, kernel},
                                  uniform_init(out * in * kernel * kernel, fan_in, rng));
  if (with_bias) c.bias = params.add_parameter(name + ".bias", {out}, uniform_init(out, fan_in, rng));
  c.stride = stride;
  c.padding = padding;
  return c;
}

Linear Linear::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                      bool with_bias, Rng& rng) {
  Linear l;
  l.weight = params.add_parameter(name + ".weight", {out, in}, uniform_init(out * in, in, rng));
  if (with_bias) l.bias = params.add_parameter(name + ".bias", {out}, uniform_init(out, in, rng));
  return l;
}

BatchNorm BatchNorm::create(ParamSet& params, const std::string& name, std::size_t channels) {
  BatchNorm bn;
  bn.gamma = params.add_parameter(name + ".gamma", {channels}, std::vector<double>(channels, 1.0));
  bn.beta = params.add_parameter(name + ".beta", {channels}, std::vector<double>(channels, 0.0));
  bn.running_mean = params.add_buffer(name + ".running_mean", {channels}, std::vector<double>(channels, 0.0));
  bn.running_var = params.add_buffer(name + ".running_var", {channels}, std::vector<double>(channels, 1.0));
  return bn;
}

Tensor BatchNorm::operator()(const Tensor& x, bool training) const {
  Tensor mean = running_mean;
  Tensor var = running_var;
  return batch_norm(x, gamma, beta, mean, var, training);
}

}  // namespace remaster::nn
