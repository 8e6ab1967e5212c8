#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "csanet/model.hpp"

namespace csanet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that gradients that are
  /// zero on both sides compare as equal.
  double floor = 1e-6;
  /// Random directions per input tensor.
  int directions = 2;
  /// Single coordinates checked per input tensor.
  int coordinates = 4;
  /// Times the step is divided by 10 when a probe crosses a relu kink.
  int max_refinements = 2;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  int checks = 0;
  /// Probes that crossed a relu kink at every step size; at most 5% allowed.
  int skipped = 0;
  bool passed = false;
};

/// Maps the (requires-grad) inputs to a tensor.
using GradFunction = std::function<Tensor(std::span<const Tensor>)>;

/// Compares backward() of sum(f(x) * v), v random, against central
/// differences along random directions and single coordinates of every input.
GradCheckResult check_gradients(const std::string& name, const GradFunction& f,
                                std::vector<Tensor> inputs, const GradCheckOptions& opts = {});

/// Every differentiable tensor operation on small random inputs.
std::vector<GradCheckResult> check_ops(const GradCheckOptions& opts = {});

/// Micro configuration: 32x32 input, stage widths 4, 8, 8, 16, 16.
ModelConfig micro_model_config();

/// Loss of the model against random targets, checked with respect to every
/// parameter: eval mode at batch 1, then train mode at batch 2 and twice the
/// input size so that the deepest normalization sees more than two values.
std::vector<GradCheckResult> check_model(const ModelConfig& cfg, const GradCheckOptions& opts = {});

/// An operation with a deliberately wrong backward rule; must fail.
GradCheckResult check_broken_op(const GradCheckOptions& opts = {});

void print_results(std::ostream& os, std::span<const GradCheckResult> results);

}  // namespace csanet
