#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "csanet/ops.hpp"
#include "csanet/optim.hpp"

namespace csanet {

enum class Variant { csanet, sbn };

struct ModelConfig {
  Variant variant = Variant::csanet;
  std::array<int, 5> stage_channels{16, 32, 64, 128, 256};
  std::array<int, 4> blocks_per_stage{2, 2, 2, 2};
  int feature_width = 256;
  std::vector<int> aspp_rates{1, 6, 12, 18};
  int hhp_depth = 3;
  int num_keypoints = 17;
  /// Weights of the face, upper-limb and lower-limb auxiliary losses.
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};
  double sigma = 2.0;
  int input_h = 256;
  int input_w = 192;
  bool use_aspp = true;
  bool use_sap = true;
  bool sap_conv3 = true;
  bool sap_conv2gp = true;

  /// Every violated constraint, empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;
};

struct StageFeatures {
  Tensor c2;  // 1/4
  Tensor c3;  // 1/8
  Tensor c5;  // 1/32
};

struct StructureOutputs {
  std::array<Tensor, 4> part_feats;  // face, upper, lower, hybrid
  std::array<Tensor, 3> aux;         // face, upper, lower heatmaps
};

struct CapOutputs {
  Tensor feats;
  std::array<Tensor, 3> aux;
};

/// Body heatmaps plus the auxiliary part heads (undefined for the baseline
/// variant).
struct ForwardOutputs {
  Tensor body;
  Tensor aux_face;
  Tensor aux_upper;
  Tensor aux_lower;
  bool has_aux() const { return aux_face.defined(); }
};

/// The pose network. Parameters live in the store passed at construction,
/// so two models built on one store share every parameter with the same
/// name (the backbone in particular).
class PoseModel {
 public:
  PoseModel(const ModelConfig& cfg, ParameterStore& store);
  ~PoseModel();
  PoseModel(const PoseModel&) = delete;
  PoseModel& operator=(const PoseModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }

  ForwardOutputs forward(const Tensor& x, NormMode mode) const;

  StageFeatures backbone_forward(const Tensor& x, NormMode mode) const;
  StructureOutputs structure_supervision_forward(const Tensor& c5, NormMode mode) const;
  Tensor aspp_forward(const Tensor& x, NormMode mode) const;
  CapOutputs cap_forward(const Tensor& c5, NormMode mode) const;
  Tensor sap_forward(const Tensor& c2, const Tensor& c3, NormMode mode) const;
  Tensor hhp_forward(const Tensor& cap, const Tensor& sap, NormMode mode) const;
  Tensor sbn_forward(const Tensor& x, NormMode mode) const;

  /// Channel count entering the SAP reduction layer.
  int sap_concat_channels() const;
  /// Scalar parameter count of this model's layers.
  std::size_t num_parameters() const;

 private:
  struct Layers;
  ModelConfig cfg_;
  ParameterStore& store_;
  std::unique_ptr<Layers> layers_;
};

}  // namespace csanet
