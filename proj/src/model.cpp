#include "csanet/model.hpp"

#include <optional>

#include "csanet/keypoints.hpp"

namespace csanet {

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < stage_channels.size(); ++i) {
    if (stage_channels[i] < 1) v.push_back("model.stage_channels[" + std::to_string(i) + "] must be >= 1");
  }
  for (std::size_t i = 0; i < blocks_per_stage.size(); ++i) {
    if (blocks_per_stage[i] < 1) v.push_back("model.blocks_per_stage[" + std::to_string(i) + "] must be >= 1");
  }
  if (feature_width < 1) v.push_back("model.feature_width must be >= 1");
  if (aspp_rates.empty()) v.push_back("model.aspp_rates must be non-empty");
  for (int r : aspp_rates) {
    if (r < 1) v.push_back("model.aspp_rates entries must be >= 1, got " + std::to_string(r));
  }
  if (hhp_depth < 0) v.push_back("model.hhp_depth must be >= 0");
  if (num_keypoints != kNumKeypoints) {
    v.push_back("model.num_keypoints must be " + std::to_string(kNumKeypoints) +
                " to match the face/upper/lower partition");
  }
  for (double w : loss_weights) {
    if (!(w >= 0.0)) v.push_back("model.loss_weights entries must be >= 0");
  }
  if (!(sigma > 0.0)) v.push_back("model.sigma must be > 0");
  if (input_h < 32 || input_h % 32 != 0) v.push_back("model.input_size height must be a positive multiple of 32");
  if (input_w < 32 || input_w % 32 != 0) v.push_back("model.input_size width must be a positive multiple of 32");
  return v;
}

void ModelConfig::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& s : v) msg += "\n  " + s;
  throw Error(msg);
}

namespace {

class Builder {
 public:
  explicit Builder(ParameterStore& store) : store_(store) {}

  Tensor weight(const std::string& name, Shape s, int fan_in) {
    return track(store_.create(name, s, Init::he_uniform, fan_in));
  }
  Tensor bias(const std::string& name, int c) {
    return track(store_.create(name, {1, c, 1, 1}, Init::zeros));
  }
  Tensor ones(const std::string& name, int c) {
    return track(store_.create(name, {1, c, 1, 1}, Init::ones));
  }
  std::span<double> buffer(const std::string& name, int c, double fill) {
    return store_.buffer(name, static_cast<std::size_t>(c), fill);
  }
  std::size_t count() const { return count_; }

 private:
  Tensor track(Tensor t) {
    count_ += t.numel();
    return t;
  }
  ParameterStore& store_;
  std::size_t count_ = 0;
};

struct Conv {
  Tensor w, b;
  ConvGeometry g;

  Conv() = default;
  Conv(Builder& bd, const std::string& name, int cin, int cout, int k, ConvGeometry geo,
       bool with_bias)
      : g(geo) {
    w = bd.weight(name + ".w", {cout, cin, k, k}, cin * k * k);
    if (with_bias) b = bd.bias(name + ".b", cout);
  }
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, g); }
};

struct Norm {
  Tensor gamma, beta;
  std::span<double> mean, var;

  Norm() = default;
  Norm(Builder& bd, const std::string& name, int c) {
    gamma = bd.ones(name + ".gamma", c);
    beta = bd.bias(name + ".beta", c);
    mean = bd.buffer(name + ".running_mean", c, 0.0);
    var = bd.buffer(name + ".running_var", c, 1.0);
  }
  Tensor operator()(const Tensor& x, NormMode mode) const {
    BatchNormOptions o;
    o.mode = mode;
    return batch_norm(x, gamma, beta, mean, var, o);
  }
};

// conv (no bias) -> norm -> relu
struct ConvNormAct {
  Conv conv;
  Norm norm;

  ConvNormAct() = default;
  ConvNormAct(Builder& bd, const std::string& name, int cin, int cout, int k,
              ConvGeometry g = {})
      : conv(bd, name + ".conv", cin, cout, k, g, false), norm(bd, name + ".bn", cout) {}
  Tensor operator()(const Tensor& x, NormMode mode) const {
    return relu(norm(conv(x), mode));
  }
};

// stride-2 4x4 transposed conv (no bias) -> norm -> relu
struct DeconvNormAct {
  Tensor w;
  Norm norm;

  DeconvNormAct() = default;
  DeconvNormAct(Builder& bd, const std::string& name, int cin, int cout) {
    constexpr int k = 4, stride = 2;
    w = bd.weight(name + ".deconv.w", {cin, cout, k, k}, cin * k * k / (stride * stride));
    norm = Norm(bd, name + ".bn", cout);
  }
  Tensor operator()(const Tensor& x, NormMode mode) const {
    return relu(norm(transposed_conv2d(x, w, Tensor(), 2, 1), mode));
  }
};

// Three doubling deconvolutions: 1/32 -> 1/4.
struct DeconvStack {
  std::array<DeconvNormAct, 3> layers;

  DeconvStack() = default;
  DeconvStack(Builder& bd, const std::string& name, int cin, int width) {
    for (int i = 0; i < 3; ++i) {
      layers[i] = DeconvNormAct(bd, name + "." + std::to_string(i), i == 0 ? cin : width, width);
    }
  }
  Tensor operator()(Tensor x, NormMode mode) const {
    for (const auto& l : layers) x = l(x, mode);
    return x;
  }
};

// conv (bias) -> relu, used on 1x1 pooled maps where batch statistics are
// degenerate.
struct ConvAct {
  Conv conv;

  ConvAct() = default;
  ConvAct(Builder& bd, const std::string& name, int cin, int cout)
      : conv(bd, name, cin, cout, 1, {}, true) {}
  Tensor operator()(const Tensor& x) const { return relu(conv(x)); }
};

struct BasicBlock {
  ConvNormAct c1;
  Conv c2;
  Norm n2;
  std::optional<Conv> proj;
  Norm proj_norm;

  BasicBlock(Builder& bd, const std::string& name, int cin, int cout, int stride)
      : c1(bd, name + ".conv1", cin, cout, 3, {stride, 1, 1}),
        c2(bd, name + ".conv2.conv", cout, cout, 3, {1, 1, 1}, false),
        n2(bd, name + ".conv2.bn", cout) {
    if (stride != 1 || cin != cout) {
      proj = Conv(bd, name + ".proj.conv", cin, cout, 1, {stride, 0, 1}, false);
      proj_norm = Norm(bd, name + ".proj.bn", cout);
    }
  }
  Tensor operator()(const Tensor& x, NormMode mode) const {
    Tensor y = n2(c2(c1(x, mode)), mode);
    Tensor skip = proj ? proj_norm((*proj)(x), mode) : x;
    return relu(add(y, skip));
  }
};

void require_spatial(const Tensor& t, int h, int w, const std::string& what) {
  if (t.shape().h != h || t.shape().w != w) {
    throw ShapeError(what + ": expected spatial size " + std::to_string(h) + "x" +
                     std::to_string(w) + ", got " + t.shape().str());
  }
}

}  // namespace

struct PoseModel::Layers {
  std::size_t count = 0;
  // backbone
  ConvNormAct stem;
  std::array<std::vector<BasicBlock>, 4> stages;
  // baseline head
  DeconvStack sbn_deconv;
  Conv sbn_head;
  // context aware path
  std::array<DeconvStack, 4> ss_branches;
  std::array<Conv, 3> ss_heads;
  ConvNormAct cap_reduce;
  std::vector<ConvNormAct> aspp_branches;
  ConvAct aspp_pool;
  ConvNormAct aspp_reduce;
  // spatial aware path
  ConvNormAct sap_c2_a, sap_c2_b, sap_c3_a, sap_c3_b;
  ConvAct sap_gp_a, sap_gp_b;
  ConvNormAct sap_reduce;
  // heavy head path
  std::vector<ConvNormAct> hhp_convs;
  Conv hhp_head;
};

PoseModel::PoseModel(const ModelConfig& cfg, ParameterStore& store)
    : cfg_(cfg), store_(store), layers_(std::make_unique<Layers>()) {
  cfg_.validate();
  Builder bd(store_);
  Layers& L = *layers_;
  const auto& ch = cfg_.stage_channels;
  const int f = cfg_.feature_width;
  const int k = cfg_.num_keypoints;

  L.stem = ConvNormAct(bd, "backbone.stem", 3, ch[0], 3, {2, 1, 1});
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg_.blocks_per_stage[s]; ++b) {
      const int cin = b == 0 ? ch[s] : ch[s + 1];
      L.stages[s].emplace_back(bd, "backbone.c" + std::to_string(s + 2) + "." + std::to_string(b),
                               cin, ch[s + 1], b == 0 ? 2 : 1);
    }
  }

  if (cfg_.variant == Variant::sbn) {
    L.sbn_deconv = DeconvStack(bd, "sbn.deconv", ch[4], f);
    L.sbn_head = Conv(bd, "sbn.head", f, k, 1, {}, true);
    L.count = bd.count();
    return;
  }

  static const std::array<const char*, 4> branch_names = {"face", "upper", "lower", "hybrid"};
  static const std::array<PartRange, 3> parts = {kFace, kUpper, kLower};
  for (int i = 0; i < 4; ++i) {
    L.ss_branches[i] = DeconvStack(bd, std::string("cap.ss.") + branch_names[i], ch[4], f);
  }
  for (int i = 0; i < 3; ++i) {
    L.ss_heads[i] = Conv(bd, std::string("cap.ss.") + branch_names[i] + ".head", f,
                         parts[i].size(), 1, {}, true);
  }
  L.cap_reduce = ConvNormAct(bd, "cap.reduce", 4 * f, f, 1);
  if (cfg_.use_aspp) {
    for (int r : cfg_.aspp_rates) {
      L.aspp_branches.emplace_back(bd, "cap.aspp.rate" + std::to_string(r), f, f, 3,
                                   ConvGeometry{1, r, r});
    }
    L.aspp_pool = ConvAct(bd, "cap.aspp.pool", f, f);
    L.aspp_reduce = ConvNormAct(bd, "cap.aspp.reduce",
                                static_cast<int>(cfg_.aspp_rates.size() + 1) * f, f, 1);
  }

  if (cfg_.use_sap) {
    L.sap_c2_a = ConvNormAct(bd, "sap.conv2.a", ch[1], f, 3, {1, 1, 1});
    L.sap_c2_b = ConvNormAct(bd, "sap.conv2.b", f, f, 1);
    if (cfg_.sap_conv3) {
      L.sap_c3_a = ConvNormAct(bd, "sap.conv3.a", ch[2], f, 3, {1, 1, 1});
      L.sap_c3_b = ConvNormAct(bd, "sap.conv3.b", f, f, 1);
    }
    if (cfg_.sap_conv2gp) {
      L.sap_gp_a = ConvAct(bd, "sap.conv2gp.a", ch[1], f);
      L.sap_gp_b = ConvAct(bd, "sap.conv2gp.b", f, f);
    }
    L.sap_reduce = ConvNormAct(bd, "sap.reduce", sap_concat_channels(), f, 1);
  }

  const int hhp_in = cfg_.use_sap ? 2 * f : f;
  for (int i = 0; i < cfg_.hhp_depth; ++i) {
    L.hhp_convs.emplace_back(bd, "hhp.conv" + std::to_string(i), i == 0 ? hhp_in : f, f, 3,
                             ConvGeometry{1, 1, 1});
  }
  L.hhp_head = Conv(bd, "hhp.head", cfg_.hhp_depth > 0 ? f : hhp_in, k, 1, {}, true);
  L.count = bd.count();
}

PoseModel::~PoseModel() = default;

int PoseModel::sap_concat_channels() const {
  int n = 1;
  if (cfg_.sap_conv3) ++n;
  if (cfg_.sap_conv2gp) ++n;
  return n * cfg_.feature_width;
}

std::size_t PoseModel::num_parameters() const { return layers_->count; }

StageFeatures PoseModel::backbone_forward(const Tensor& x, NormMode mode) const {
  const Shape& s = x.shape();
  if (s.c != 3) throw ShapeError("backbone: expected 3 input channels, got " + std::to_string(s.c));
  if (s.h < 32 || s.w < 32 || s.h % 32 != 0 || s.w % 32 != 0) {
    throw ShapeError("backbone: input spatial size " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " is not divisible by 32");
  }
  const Layers& L = *layers_;
  Tensor t = L.stem(x, mode);
  StageFeatures out;
  for (int st = 0; st < 4; ++st) {
    for (const auto& b : L.stages[st]) t = b(t, mode);
    if (st == 0) out.c2 = t;
    if (st == 1) out.c3 = t;
  }
  out.c5 = t;
  require_spatial(out.c2, s.h / 4, s.w / 4, "backbone c2");
  require_spatial(out.c3, s.h / 8, s.w / 8, "backbone c3");
  require_spatial(out.c5, s.h / 32, s.w / 32, "backbone c5");
  return out;
}

StructureOutputs PoseModel::structure_supervision_forward(const Tensor& c5, NormMode mode) const {
  if (cfg_.variant != Variant::csanet) throw Error("structure supervision is not part of the baseline model");
  if (c5.shape().c != cfg_.stage_channels[4]) {
    throw ShapeError("structure supervision: expected " + std::to_string(cfg_.stage_channels[4]) +
                     " input channels, got " + std::to_string(c5.shape().c));
  }
  const Layers& L = *layers_;
  StructureOutputs out;
  for (int i = 0; i < 4; ++i) out.part_feats[i] = L.ss_branches[i](c5, mode);
  for (int i = 0; i < 3; ++i) out.aux[i] = L.ss_heads[i](out.part_feats[i]);
  require_spatial(out.part_feats[0], c5.shape().h * 8, c5.shape().w * 8, "structure supervision");
  return out;
}

Tensor PoseModel::aspp_forward(const Tensor& x, NormMode mode) const {
  const Layers& L = *layers_;
  if (!cfg_.use_aspp) throw Error("ASPP is disabled in this configuration");
  std::vector<Tensor> parts;
  for (const auto& b : L.aspp_branches) parts.push_back(b(x, mode));
  Tensor pooled = L.aspp_pool(global_avg_pool(x));
  parts.push_back(resize_bilinear(pooled, x.shape().h, x.shape().w));
  return L.aspp_reduce(concat_channels(parts), mode);
}

CapOutputs PoseModel::cap_forward(const Tensor& c5, NormMode mode) const {
  const Layers& L = *layers_;
  StructureOutputs ss = structure_supervision_forward(c5, mode);
  Tensor fused = L.cap_reduce(concat_channels(ss.part_feats), mode);
  CapOutputs out;
  out.feats = cfg_.use_aspp ? aspp_forward(fused, mode) : fused;
  out.aux = ss.aux;
  return out;
}

Tensor PoseModel::sap_forward(const Tensor& c2, const Tensor& c3, NormMode mode) const {
  if (!cfg_.use_sap) throw Error("SAP is disabled in this configuration");
  const Layers& L = *layers_;
  const int h = c2.shape().h, w = c2.shape().w;
  require_spatial(c3, h / 2, w / 2, "SAP c3 input");
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("SAP: c2 spatial size must be even");
  std::vector<Tensor> parts;
  parts.push_back(L.sap_c2_b(L.sap_c2_a(c2, mode), mode));
  if (cfg_.sap_conv3) {
    parts.push_back(resize_bilinear(L.sap_c3_b(L.sap_c3_a(c3, mode), mode), h, w));
  }
  if (cfg_.sap_conv2gp) {
    parts.push_back(resize_bilinear(L.sap_gp_b(L.sap_gp_a(global_avg_pool(c2))), h, w));
  }
  return L.sap_reduce(concat_channels(parts), mode);
}

Tensor PoseModel::hhp_forward(const Tensor& cap, const Tensor& sap, NormMode mode) const {
  const Layers& L = *layers_;
  Tensor t = cap;
  if (cfg_.use_sap) {
    if (cap.shape().h != sap.shape().h || cap.shape().w != sap.shape().w) {
      throw ShapeError("HHP: CAP features " + cap.shape().str() + " and SAP features " +
                       sap.shape().str() + " differ in spatial size");
    }
    t = concat_channels({cap, sap});
  }
  for (const auto& c : L.hhp_convs) t = c(t, mode);
  return L.hhp_head(t);
}

Tensor PoseModel::sbn_forward(const Tensor& x, NormMode mode) const {
  if (cfg_.variant != Variant::sbn) throw Error("model was not built as the baseline variant");
  const Layers& L = *layers_;
  StageFeatures f = backbone_forward(x, mode);
  return L.sbn_head(L.sbn_deconv(f.c5, mode));
}

ForwardOutputs PoseModel::forward(const Tensor& x, NormMode mode) const {
  ForwardOutputs out;
  if (cfg_.variant == Variant::sbn) {
    out.body = sbn_forward(x, mode);
  } else {
    StageFeatures f = backbone_forward(x, mode);
    CapOutputs cap = cap_forward(f.c5, mode);
    Tensor sap = cfg_.use_sap ? sap_forward(f.c2, f.c3, mode) : Tensor();
    out.body = hhp_forward(cap.feats, sap, mode);
    out.aux_face = cap.aux[0];
    out.aux_upper = cap.aux[1];
    out.aux_lower = cap.aux[2];
  }
  require_spatial(out.body, x.shape().h / 4, x.shape().w / 4, "body heatmaps");
  return out;
}

}  // namespace csanet
