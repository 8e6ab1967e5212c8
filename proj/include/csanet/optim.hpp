#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "csanet/tensor.hpp"

namespace csanet {

/// A trainable tensor with its Adam moments. The gradient accumulator is the
/// grad buffer of `value`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;
};

enum class Init { he_uniform, zeros, ones };

/// Named parameters and non-trainable buffers (normalization running
/// statistics). Iteration order is by name, so it is stable across runs.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Creates a parameter, or returns the existing one if the name is taken
  /// with the same shape. He-uniform draws use bound sqrt(6 / fan_in) from a
  /// stream seeded by the store seed and the name.
  Tensor create(const std::string& name, Shape shape, Init init, int fan_in = 0);
  /// Zero- or one-filled buffer of length n, shared on repeated requests.
  std::span<double> buffer(const std::string& name, std::size_t n, double fill);

  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::vector<Parameter*> params();
  std::vector<const Parameter*> params() const;
  std::map<std::string, std::vector<double>>& buffers() { return buffers_; }
  const std::map<std::string, std::vector<double>>& buffers() const { return buffers_; }

  std::size_t num_scalars() const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, Parameter> params_;
  std::map<std::string, std::vector<double>> buffers_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update per parameter; gradients are cleared
/// afterwards. Throws if a parameter has no gradient.
void adam_step(std::span<Parameter* const> params, double lr,
               const AdamOptions& opts = {});

/// Step decay: lr = base * decay^(number of milestones <= epoch).
class MultiStepSchedule {
 public:
  MultiStepSchedule(double base_lr, std::vector<int> milestones, double decay);
  double lr_at(int epoch) const;

 private:
  double base_;
  std::vector<int> milestones_;
  double decay_;
};

}  // namespace csanet
