#include "csanet/train.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include "csanet/heatmap.hpp"

namespace csanet {

Batch make_batch(std::span<const SampleRecord> samples, double sigma) {
  if (samples.empty()) throw Error("make_batch: empty batch");
  std::vector<const Image*> imgs;
  std::vector<double> targets, mask;
  const int in_h = samples[0].image.height, in_w = samples[0].image.width;
  const int h = in_h / kHeatmapStride, w = in_w / kHeatmapStride;
  for (const auto& s : samples) {
    imgs.push_back(&s.image);
    HeatmapTarget t = encode_heatmaps(crop_to_heatmap(s.keypoints, in_h, in_w), h, w, sigma);
    targets.insert(targets.end(), t.maps.data().begin(), t.maps.data().end());
    mask.insert(mask.end(), t.mask.data().begin(), t.mask.data().end());
  }
  const int n = static_cast<int>(samples.size());
  return {images_to_tensor(imgs), Tensor::from({n, kNumKeypoints, h, w}, std::move(targets)),
          Tensor::from({n, kNumKeypoints, 1, 1}, std::move(mask))};
}

Dataset load_split(const RunConfig& cfg, Split split) {
  const std::string& dir = split == Split::train ? cfg.data.train_dir : cfg.data.val_dir;
  const int n = split == Split::train ? cfg.data.train_size : cfg.data.val_size;
  Dataset ds;
  if (!dir.empty()) {
    ds = read_dataset(dir);
  } else if (n > 0) {
    DatasetOptions opts;
    opts.input_h = cfg.model.input_h;
    opts.input_w = cfg.model.input_w;
    opts.difficulty = cfg.data.difficulty;
    ds = make_dataset(n, cfg.data.seed, split, opts);
  }
  for (const auto& s : ds.samples) {
    if (s.image.height != cfg.model.input_h || s.image.width != cfg.model.input_w) {
      throw Error("dataset image size " + std::to_string(s.image.height) + "x" + std::to_string(s.image.width) +
                  " does not match model.input_size " + std::to_string(cfg.model.input_h) + "x" +
                  std::to_string(cfg.model.input_w));
    }
  }
  return ds;
}

namespace {

constexpr char kMagic[8] = {'C', 'S', 'A', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(std::span<const double> v) {
    for (double d : v) f64(d);
  }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> buf, std::string source) : buf_(std::move(buf)), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw Error("checkpoint " + source_ + " is truncated");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  void expect(const void* p, std::size_t n, const std::string& what) {
    need(n);
    if (std::memcmp(buf_.data() + pos_, p, n) != 0) throw Error(source_ + ": " + what);
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::vector<unsigned char> buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

struct StoredParam {
  std::string name;
  Shape shape;
  std::int64_t step_count;
  std::vector<double> value, m, v;
};

struct StoredCheckpoint {
  std::string run_echo;
  std::string model_echo;
  TrainState state;
  std::vector<StoredParam> params;
  std::map<std::string, std::vector<double>> buffers;
};

StoredCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf), path.string());
  r.expect(kMagic, sizeof kMagic, "not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw Error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  StoredCheckpoint c;
  c.run_echo = r.str();
  c.model_echo = r.str();
  c.state.step = r.i64();
  c.state.epoch = r.i32();
  c.state.lr = r.f64();
  c.state.best_val_ap = r.f64();
  c.state.rng.set_state(r.str());
  c.state.cursor = r.u64();
  const std::uint64_t n_order = r.u64();
  r.need(n_order * 4);
  for (std::uint64_t i = 0; i < n_order; ++i) c.state.order.push_back(r.i32());
  const std::uint64_t n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    StoredParam p;
    p.name = r.str();
    p.shape.n = r.i32();
    p.shape.c = r.i32();
    p.shape.h = r.i32();
    p.shape.w = r.i32();
    if (p.shape.n < 0 || p.shape.c < 0 || p.shape.h < 0 || p.shape.w < 0) {
      throw Error(path.string() + ": negative dimension for " + p.name);
    }
    p.step_count = r.i64();
    p.value = r.doubles(p.shape.numel());
    p.m = r.doubles(p.shape.numel());
    p.v = r.doubles(p.shape.numel());
    c.params.push_back(std::move(p));
  }
  const std::uint64_t n_buffers = r.u64();
  for (std::uint64_t i = 0; i < n_buffers; ++i) {
    std::string name = r.str();
    const std::uint64_t len = r.u64();
    c.buffers[name] = r.doubles(len);
  }
  if (!r.at_end()) throw Error(path.string() + ": trailing bytes after checkpoint payload");
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const RunConfig& cfg, const TrainState& state) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.str(config_echo(cfg));
  w.str(model_echo(cfg.model));
  w.i64(state.step);
  w.i32(state.epoch);
  w.f64(state.lr);
  w.f64(state.best_val_ap);
  w.str(state.rng.state());
  w.u64(state.cursor);
  w.u64(state.order.size());
  for (int i : state.order) w.i32(i);
  const auto params = store.params();
  w.u64(params.size());
  for (const Parameter* p : params) {
    w.str(p->name);
    const Shape& s = p->value.shape();
    w.i32(s.n);
    w.i32(s.c);
    w.i32(s.h);
    w.i32(s.w);
    w.i64(p->step_count);
    w.doubles(p->value.data());
    w.doubles(p->adam_m.data());
    w.doubles(p->adam_v.data());
  }
  w.u64(store.buffers().size());
  for (const auto& [name, values] : store.buffers()) {
    w.str(name);
    w.u64(values.size());
    w.doubles(values);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
    if (!f) throw Error("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                           const ModelConfig& model) {
  StoredCheckpoint c = read_checkpoint(path);
  std::vector<std::string> diffs;
  const auto stored = parse_echo(c.model_echo);
  const auto wanted = parse_echo(model_echo(model));
  for (const auto& [k, v] : wanted) {
    auto it = stored.find(k);
    const std::string have = it == stored.end() ? "<missing>" : it->second;
    if (have != v) diffs.push_back("config " + k + ": checkpoint=" + have + " config=" + v);
  }
  std::map<std::string, const StoredParam*> by_name;
  for (const auto& p : c.params) by_name[p.name] = &p;
  for (const Parameter* p : store.params()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      diffs.push_back("parameter " + p->name + " " + p->value.shape().str() + " missing from checkpoint");
    } else if (it->second->shape != p->value.shape()) {
      diffs.push_back("parameter " + p->name + ": checkpoint " + it->second->shape.str() + " vs model " +
                      p->value.shape().str());
    }
  }
  for (const auto& p : c.params) {
    if (!store.contains(p.name)) diffs.push_back("parameter " + p.name + " " + p.shape.str() + " not in model");
  }
  for (const auto& [name, values] : store.buffers()) {
    auto it = c.buffers.find(name);
    if (it == c.buffers.end()) {
      diffs.push_back("buffer " + name + " missing from checkpoint");
    } else if (it->second.size() != values.size()) {
      diffs.push_back("buffer " + name + ": checkpoint length " + std::to_string(it->second.size()) +
                      " vs model " + std::to_string(values.size()));
    }
  }
  for (const auto& [name, _] : c.buffers) {
    if (!store.buffers().count(name)) diffs.push_back("buffer " + name + " not in model");
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint " + path.string() + " does not match the model:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw Error(msg);
  }
  for (const auto& sp : c.params) {
    Parameter& p = store.param(sp.name);
    std::copy(sp.value.begin(), sp.value.end(), p.value.mutable_data().begin());
    std::copy(sp.m.begin(), sp.m.end(), p.adam_m.mutable_data().begin());
    std::copy(sp.v.begin(), sp.v.end(), p.adam_v.mutable_data().begin());
    p.step_count = sp.step_count;
    p.value.zero_grad();
  }
  for (auto& [name, values] : store.buffers()) values = c.buffers.at(name);
  return c.state;
}

RunConfig checkpoint_config(const std::filesystem::path& path) {
  return parse_config(read_checkpoint(path).run_echo);
}

std::string format_log_line(long step, const LossBreakdown& l, double lr) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "step=%ld l_face=%.9g l_upper=%.9g l_lower=%.9g l_body=%.9g l_total=%.9g lr=%.9g",
                step, l.l_face, l.l_upper, l.l_lower, l.l_body, l.l_total, lr);
  return buf;
}

Trainer::Trainer(const RunConfig& cfg, Dataset train, Dataset val)
    : cfg_(cfg), train_(std::move(train)), val_(std::move(val)), store_(cfg.seed) {
  cfg_.validate();
  if (train_.samples.empty()) throw Error("training set is empty");
  model_ = std::make_unique<PoseModel>(cfg_.model, store_);
  state_.rng = Rng(splitmix64(cfg_.seed ^ 0x7472616e5eedULL));
  state_.lr = lr_for_epoch(0);
}

double Trainer::lr_for_epoch(int epoch) const {
  return MultiStepSchedule(cfg_.optim.lr, cfg_.optim.milestones, cfg_.optim.decay).lr_at(epoch);
}

bool Trainer::finished() const {
  if (cfg_.optim.max_steps > 0 && state_.step >= cfg_.optim.max_steps) return true;
  return state_.epoch >= cfg_.optim.epochs;
}

LossBreakdown Trainer::step() {
  const int n = static_cast<int>(train_.samples.size());
  if (state_.cursor == 0) {
    state_.order.resize(n);
    std::iota(state_.order.begin(), state_.order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(state_.rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(state_.order[i], state_.order[j]);
    }
  }
  const std::size_t end = std::min<std::size_t>(n, state_.cursor + cfg_.optim.batch_size);
  const FlipPairs pairs = FlipPairs::standard();
  std::vector<SampleRecord> batch;
  for (std::size_t i = state_.cursor; i < end; ++i) {
    const SampleRecord& s = train_.samples[state_.order[i]];
    batch.push_back(cfg_.data.augment ? augment(s, state_.rng, pairs) : s);
  }
  Batch b = make_batch(batch, cfg_.model.sigma);
  state_.lr = lr_for_epoch(state_.epoch);
  ForwardOutputs out = model_->forward(b.images, NormMode::train);
  LossBreakdown loss = compute_loss(out, b.targets, b.mask, cfg_.model.loss_weights);
  if (!std::isfinite(loss.l_total)) {
    throw NumericalError("non-finite loss at step " + std::to_string(state_.step + 1));
  }
  backward(loss.total);
  auto params = store_.params();
  adam_step(params, state_.lr);
  state_.step += 1;
  state_.cursor = end;
  if (state_.cursor >= static_cast<std::size_t>(n)) {
    state_.cursor = 0;
    state_.epoch += 1;
  }
  return loss;
}

EvalResult Trainer::evaluate(std::span<const SampleRecord> samples, bool flip_test) const {
  EvalOptions o;
  o.flip_test = flip_test;
  return evaluate_model(model_predictor(*model_), samples, o);
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, store_, cfg_, state_); }

void Trainer::load(const std::filesystem::path& path) { state_ = load_checkpoint(path, store_, cfg_.model); }

void Trainer::run(std::ostream& log) {
  namespace fs = std::filesystem;
  const fs::path out = cfg_.io.out_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (!fs::is_directory(out)) throw Error("cannot create output directory " + out.string());
  std::ofstream file(out / "train.log", state_.step > 0 ? std::ios::app : std::ios::trunc);
  if (!file) throw Error("cannot write " + (out / "train.log").string());
  auto emit = [&](const std::string& line) {
    log << line << "\n";
    file << line << "\n";
    log.flush();
    file.flush();
  };
  auto validate = [&](const char* tag) {
    if (val_.samples.empty()) return;
    EvalResult r = evaluate(val_.samples, cfg_.eval.flip_test);
    state_.best_val_ap = std::max(state_.best_val_ap, r.report.ap);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s epoch=%d step=%ld ", tag, state_.epoch, state_.step);
    emit(buf + r.report.to_text());
  };

  while (!finished()) {
    const int epoch_before = state_.epoch;
    LossBreakdown loss = step();
    if (state_.step % cfg_.io.log_interval == 0 || state_.step == 1) {
      emit(format_log_line(state_.step, loss, state_.lr));
    }
    if (cfg_.io.checkpoint_interval > 0 && state_.step % cfg_.io.checkpoint_interval == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "step_%08ld.ckpt", state_.step);
      save(out / name);
    }
    if (state_.epoch != epoch_before && cfg_.eval.interval > 0 && state_.epoch % cfg_.eval.interval == 0 &&
        !finished()) {
      validate("val");
    }
  }
  if (!val_.samples.empty()) {
    EvalResult r = evaluate(val_.samples, cfg_.eval.flip_test);
    state_.best_val_ap = std::max(state_.best_val_ap, r.report.ap);
    char buf[96];
    std::snprintf(buf, sizeof buf, "final epoch=%d step=%ld ", state_.epoch, state_.step);
    emit(buf + r.report.to_text());
    std::ofstream json(out / "report.json");
    json << r.report.to_json() << "\n";
  }
  save(out / "final.ckpt");
}

}  // namespace csanet
