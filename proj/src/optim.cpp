#include "csanet/optim.hpp"

#include <cmath>

#include "csanet/random.hpp"

namespace csanet {

Tensor ParameterStore::create(const std::string& name, Shape shape, Init init,
                              int fan_in) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (it->second.value.shape() != shape) {
      throw ShapeError("parameter '" + name + "' exists with shape " +
                       it->second.value.shape().str() + ", requested " + shape.str());
    }
    return it->second.value;
  }
  std::vector<double> values(shape.numel(), init == Init::ones ? 1.0 : 0.0);
  if (init == Init::he_uniform) {
    if (fan_in <= 0) throw Error("parameter '" + name + "': fan_in must be positive");
    const double bound = std::sqrt(6.0 / fan_in);
    Rng rng(seed_ ^ fnv1a(name));
    for (double& v : values) v = rng.uniform(-bound, bound);
  }
  Parameter p;
  p.name = name;
  p.value = Tensor::from(shape, std::move(values), true);
  p.adam_m = Tensor::zeros(shape);
  p.adam_v = Tensor::zeros(shape);
  auto [pos, _] = params_.emplace(name, std::move(p));
  return pos->second.value;
}

std::span<double> ParameterStore::buffer(const std::string& name, std::size_t n,
                                         double fill) {
  auto it = buffers_.find(name);
  if (it != buffers_.end()) {
    if (it->second.size() != n) {
      throw ShapeError("buffer '" + name + "' exists with length " +
                       std::to_string(it->second.size()) + ", requested " +
                       std::to_string(n));
    }
    return it->second;
  }
  return buffers_.emplace(name, std::vector<double>(n, fill)).first->second;
}

Parameter& ParameterStore::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<Parameter*> ParameterStore::params() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::params() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.value.zero_grad();
}

void adam_step(std::span<Parameter* const> params, double lr,
               const AdamOptions& opts) {
  for (const Parameter* p : params) {
    if (!p->value.has_grad()) {
      throw Error("adam_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(opts.beta1, t);
    const double c2 = 1.0 - std::pow(opts.beta2, t);
    auto g = p->value.grad();
    auto w = p->value.mutable_data();
    auto m = p->adam_m.mutable_data();
    auto v = p->adam_v.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + opts.eps);
    }
    p->value.zero_grad();
  }
}

MultiStepSchedule::MultiStepSchedule(double base_lr, std::vector<int> milestones,
                                     double decay)
    : base_(base_lr), milestones_(std::move(milestones)), decay_(decay) {}

double MultiStepSchedule::lr_at(int epoch) const {
  double lr = base_;
  for (int m : milestones_) {
    if (epoch >= m) lr *= decay_;
  }
  return lr;
}

}  // namespace csanet
