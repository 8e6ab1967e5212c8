#include "csanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>

#include "csanet/loss.hpp"
#include "csanet/random.hpp"

namespace csanet {

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(s, std::move(v), true);
}

/// Values bounded away from zero, for ops with a kink there.
Tensor away_from_zero(Rng& rng, Shape s) {
  std::vector<double> v(s.numel());
  for (double& x : v) {
    const double m = rng.uniform(0.1, 1.0);
    x = rng.bernoulli(0.5) ? m : -m;
  }
  return Tensor::from(s, std::move(v), true);
}

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const GradFunction& f,
                                std::vector<Tensor> inputs, const GradCheckOptions& opts) {
  Rng rng(splitmix64(opts.seed ^ fnv1a(name)));
  GradCheckResult res;
  res.name = name;

  const Shape out_shape = f(inputs).shape();
  std::vector<double> vv(out_shape.numel());
  for (double& x : vv) x = rng.uniform(-1.0, 1.0);
  const Tensor v = Tensor::from(out_shape, std::move(vv));

  auto objective = [&]() { return sum(mul(f(inputs), v)); };
  auto value = [&](std::vector<bool>& signs) {
    ReluSignRecorder rec;
    const double l = objective().item();
    signs = std::move(rec.signs);
    return l;
  };

  for (auto& t : inputs) t.zero_grad();
  std::vector<bool> base_signs;
  {
    ReluSignRecorder rec;
    backward(objective());
    base_signs = std::move(rec.signs);
  }
  std::vector<std::vector<double>> grads;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      grads.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      grads.emplace_back(t.numel(), 0.0);
    }
  }
  for (auto& t : inputs) t.zero_grad();

  // Central difference along u; the step shrinks while a probe flips the
  // sign of some relu input, where the difference quotient is meaningless.
  auto probe = [&](std::span<double> x, const std::vector<double>& orig,
                   const std::function<void(double)>& set, double analytic) {
    std::vector<bool> sp, sm;
    for (int attempt = 0; attempt < opts.max_refinements + 1; ++attempt) {
      const double h = opts.step * std::pow(0.1, attempt);
      set(h);
      const double plus = value(sp);
      set(-h);
      const double minus = value(sm);
      std::copy(orig.begin(), orig.end(), x.begin());
      if (sp == base_signs && sm == base_signs) {
        // A difference of a few ulps of the objective is noise, not error.
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                             std::max(std::abs(plus), std::abs(minus)) / h;
        const double floor = std::max(opts.floor, noise / opts.tolerance);
        res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, (plus - minus) / (2.0 * h), floor));
        ++res.checks;
        return;
      }
    }
    ++res.skipped;
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto x = inputs[i].mutable_data();
    const std::vector<double> orig(x.begin(), x.end());
    for (int d = 0; d < opts.directions; ++d) {
      std::vector<double> u(x.size());
      double norm = 0.0;
      for (double& e : u) {
        e = rng.normal();
        norm += e * e;
      }
      norm = std::sqrt(norm);
      double analytic = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) {
        u[j] /= norm;
        analytic += grads[i][j] * u[j];
      }
      probe(x, orig, [&](double h) {
        for (std::size_t j = 0; j < u.size(); ++j) x[j] = orig[j] + h * u[j];
      }, analytic);
    }
    const int coords = std::min<int>(opts.coordinates, static_cast<int>(x.size()));
    for (int c = 0; c < coords; ++c) {
      const std::size_t j = c == 0 ? 0 : rng.below(x.size());
      probe(x, orig, [&](double h) {
        std::copy(orig.begin(), orig.end(), x.begin());
        x[j] = orig[j] + h;
      }, grads[i][j]);
    }
  }
  res.passed = res.max_rel_error <= opts.tolerance && res.skipped * 20 <= res.checks + res.skipped;
  return res;
}

std::vector<GradCheckResult> check_ops(const GradCheckOptions& opts) {
  Rng rng(splitmix64(opts.seed + 1));
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, const GradFunction& f, std::vector<Tensor> in) {
    out.push_back(check_gradients(name, f, std::move(in), opts));
  };

  run("conv2d 3x3 s1 p1",
      [](std::span<const Tensor> t) { return conv2d(t[0], t[1], t[2], {1, 1, 1}); },
      {random_tensor(rng, {2, 3, 5, 5}), random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {1, 4, 1, 1})});
  run("conv2d 3x3 s2 p1",
      [](std::span<const Tensor> t) { return conv2d(t[0], t[1], t[2], {2, 1, 1}); },
      {random_tensor(rng, {1, 2, 7, 6}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {1, 3, 1, 1})});
  run("conv2d 3x3 dilation 2",
      [](std::span<const Tensor> t) { return conv2d(t[0], t[1], t[2], {1, 2, 2}); },
      {random_tensor(rng, {1, 2, 6, 6}), random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {1, 2, 1, 1})});
  run("conv2d 1x1 no bias",
      [](std::span<const Tensor> t) { return conv2d(t[0], t[1], Tensor(), {}); },
      {random_tensor(rng, {2, 3, 4, 3}), random_tensor(rng, {5, 3, 1, 1})});
  run("transposed_conv2d k4 s2 p1",
      [](std::span<const Tensor> t) { return transposed_conv2d(t[0], t[1], t[2], 2, 1); },
      {random_tensor(rng, {2, 3, 3, 4}), random_tensor(rng, {3, 2, 4, 4}), random_tensor(rng, {1, 2, 1, 1})});
  run("transposed_conv2d k3 s1 p1",
      [](std::span<const Tensor> t) { return transposed_conv2d(t[0], t[1], Tensor(), 1, 1); },
      {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {2, 3, 3, 3})});
  run("relu", [](std::span<const Tensor> t) { return relu(t[0]); }, {away_from_zero(rng, {2, 3, 4, 4})});
  run("batch_norm train",
      [](std::span<const Tensor> t) {
        std::vector<double> m(3, 0.0), v(3, 1.0);
        return batch_norm(t[0], t[1], t[2], m, v, {NormMode::train, 0.1, 1e-5});
      },
      {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {1, 3, 1, 1}, 0.5, 1.5),
       random_tensor(rng, {1, 3, 1, 1})});
  run("batch_norm eval",
      [](std::span<const Tensor> t) {
        std::vector<double> m{0.1, -0.2, 0.3}, v{0.5, 1.5, 2.0};
        return batch_norm(t[0], t[1], t[2], m, v, {NormMode::eval, 0.1, 1e-5});
      },
      {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {1, 3, 1, 1}, 0.5, 1.5),
       random_tensor(rng, {1, 3, 1, 1})});
  run("global_avg_pool", [](std::span<const Tensor> t) { return global_avg_pool(t[0]); },
      {random_tensor(rng, {2, 3, 4, 5})});
  run("resize_bilinear up", [](std::span<const Tensor> t) { return resize_bilinear(t[0], 7, 9); },
      {random_tensor(rng, {2, 2, 3, 4})});
  run("resize_bilinear down", [](std::span<const Tensor> t) { return resize_bilinear(t[0], 3, 2); },
      {random_tensor(rng, {1, 2, 5, 5})});
  run("resize_bilinear broadcast", [](std::span<const Tensor> t) { return resize_bilinear(t[0], 3, 4); },
      {random_tensor(rng, {2, 3, 1, 1})});
  run("concat_channels",
      [](std::span<const Tensor> t) { return concat_channels({t[0], t[1], t[2]}); },
      {random_tensor(rng, {2, 1, 3, 3}), random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {2, 2, 3, 3})});
  run("slice_channels", [](std::span<const Tensor> t) { return slice_channels(t[0], 1, 4); },
      {random_tensor(rng, {2, 5, 3, 3})});
  run("add", [](std::span<const Tensor> t) { return add(t[0], t[1]); },
      {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {2, 3, 3, 3})});
  run("mul", [](std::span<const Tensor> t) { return mul(t[0], t[1]); },
      {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {2, 3, 3, 3})});
  run("scale", [](std::span<const Tensor> t) { return scale(t[0], -1.75); }, {random_tensor(rng, {1, 2, 3, 3})});
  run("sum", [](std::span<const Tensor> t) { return sum(t[0]); }, {random_tensor(rng, {2, 2, 3, 3})});
  {
    std::vector<double> m{1, 0, 1, 1, 1, 0};
    const Tensor mask = Tensor::from({2, 3, 1, 1}, std::move(m));
    run("mse_masked",
        [mask](std::span<const Tensor> t) { return mse_masked(t[0], t[1], mask); },
        {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {2, 3, 4, 4})});
  }
  return out;
}

ModelConfig micro_model_config() {
  ModelConfig c;
  c.stage_channels = {4, 8, 8, 16, 16};
  c.blocks_per_stage = {1, 1, 1, 1};
  c.feature_width = 8;
  c.hhp_depth = 2;
  c.input_h = 32;
  c.input_w = 32;
  return c;
}

std::vector<GradCheckResult> check_model(const ModelConfig& cfg, const GradCheckOptions& opts) {
  cfg.validate();
  std::vector<GradCheckResult> out;
  for (NormMode mode : {NormMode::eval, NormMode::train}) {
    const bool eval = mode == NormMode::eval;
    const int n = eval ? 1 : 2;
    ModelConfig mc = cfg;
    if (!eval) {
      mc.input_h *= 2;
      mc.input_w *= 2;
    }
    const int hh = mc.input_h / 4, hw = mc.input_w / 4;
    ParameterStore store(opts.seed + 7);
    PoseModel model(mc, store);
    Rng rng(splitmix64(opts.seed + 11 + n));
    // Non-trivial running statistics so eval mode is not the identity map.
    for (auto& [name, buf] : store.buffers()) {
      const bool var = name.find("var") != std::string::npos;
      for (double& x : buf) x = var ? rng.uniform(0.5, 2.0) : rng.uniform(-0.3, 0.3);
    }
    const Tensor x = [&] {
      Tensor t = random_tensor(rng, {n, 3, mc.input_h, mc.input_w});
      return t.detach();
    }();
    std::vector<double> tv(static_cast<std::size_t>(n) * cfg.num_keypoints * hh * hw);
    for (double& e : tv) e = rng.uniform(0.0, 1.0);
    const Tensor targets = Tensor::from({n, cfg.num_keypoints, hh, hw}, std::move(tv));
    std::vector<double> mv(static_cast<std::size_t>(n) * cfg.num_keypoints);
    for (double& e : mv) e = rng.bernoulli(0.8) ? 1.0 : 0.0;
    const Tensor mask = Tensor::from({n, cfg.num_keypoints, 1, 1}, std::move(mv));

    std::vector<Parameter*> params = store.params();
    std::vector<Tensor> inputs;
    for (Parameter* p : params) inputs.push_back(p->value);
    GradCheckOptions o = opts;
    o.directions = 1;
    o.coordinates = 2;
    const std::string tag = std::string(eval ? "model eval " : "model train ") + std::to_string(n) + "x3x" +
                            std::to_string(mc.input_h) + "x" + std::to_string(mc.input_w);
    // One check per parameter tensor keeps the objective unchanged between
    // them; the function ignores its span and reads the shared parameters.
    const GradFunction f = [&](std::span<const Tensor>) {
      return compute_loss(model.forward(x, mode), targets, mask, cfg.loss_weights).total;
    };
    GradCheckResult agg;
    agg.name = tag + " (all parameters)";
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      GradCheckResult r = check_gradients(tag + " " + params[i]->name, f, {inputs[i]}, o);
      if (r.max_rel_error > agg.max_rel_error) agg.max_rel_error = r.max_rel_error;
      agg.checks += r.checks;
      agg.skipped += r.skipped;
      if (!r.passed) out.push_back(r);
    }
    agg.passed = agg.max_rel_error <= opts.tolerance && agg.skipped * 20 <= agg.checks + agg.skipped;
    out.push_back(agg);
  }
  return out;
}

GradCheckResult check_broken_op(const GradCheckOptions& opts) {
  Rng rng(splitmix64(opts.seed + 3));
  const GradFunction broken = [](std::span<const Tensor> t) {
    const Tensor& x = t[0];
    std::vector<double> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.0 * x.data()[i];
    return make_result(x.shape(), std::move(y), {x}, "broken_double", [](detail::Node& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * self.grad[i];
    });
  };
  return check_gradients("broken op (must fail)", broken, {random_tensor(rng, {1, 2, 3, 3})}, opts);
}

void print_results(std::ostream& os, std::span<const GradCheckResult> results) {
  char buf[192];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-48s max_rel_err=%.3e checks=%-5d skipped=%-3d %s\n", r.name.c_str(),
                  r.max_rel_error, r.checks, r.skipped, r.passed ? "ok" : "FAIL");
    os << buf;
  }
}

}  // namespace csanet
