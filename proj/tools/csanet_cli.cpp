#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "csanet/config.hpp"
#include "csanet/eval.hpp"
#include "csanet/gradcheck.hpp"
#include "csanet/heatmap.hpp"
#include "csanet/train.hpp"

namespace fs = std::filesystem;
using namespace csanet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNumerical = 2;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::vector<std::string> settings;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  std::vector<std::string> errors;
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      errors.push_back("--set expects key=value, got '" + s + "'");
      continue;
    }
    try {
      apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out.empty()) cfg.io.out_dir = g.out;
  cfg.validate();
  return cfg;
}

/// Model and store restored from a checkpoint, built from its own config.
struct Loaded {
  RunConfig cfg;
  std::unique_ptr<ParameterStore> store;
  std::unique_ptr<PoseModel> model;
};

Loaded load_model(const std::string& path) {
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path);
  Loaded l;
  l.cfg = checkpoint_config(path);
  l.store = std::make_unique<ParameterStore>(l.cfg.seed);
  l.model = std::make_unique<PoseModel>(l.cfg.model, *l.store);
  load_checkpoint(path, *l.store, l.cfg.model);
  return l;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

int cmd_train(const Globals& g, const std::string& resume) {
  RunConfig cfg = resolve_config(g);
  Trainer t(cfg, load_split(cfg, Split::train), load_split(cfg, Split::val));
  if (!resume.empty()) t.load(resume);
  t.run(std::cout);
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& ckpt, const std::string& data, const std::string& split,
             bool flip) {
  Loaded l = load_model(ckpt);
  RunConfig cfg = l.cfg;
  if (g.seed_set) cfg.data.seed = g.seed;
  Dataset ds;
  if (!data.empty()) {
    ds = read_dataset(data);
  } else {
    const Split s = split == "train" ? Split::train : Split::val;
    if (s == Split::train) cfg.data.train_dir.clear();
    else cfg.data.val_dir.clear();
    ds = load_split(cfg, s);
  }
  EvalOptions opts;
  opts.flip_test = flip;
  const EvalResult r = evaluate_model(model_predictor(*l.model), ds.samples, opts);
  char buf[64];
  std::snprintf(buf, sizeof buf, " mean_error=%.6f", r.mean_error);
  std::cout << r.report.to_text() << buf << "\n";
  if (!g.out.empty()) write_text(fs::path(g.out) / "report.json", r.report.to_json() + "\n");
  return kExitOk;
}

Box parse_box(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("--box expects x,y,w,h");
    }
  }
  if (v.size() != 4 || !(v[2] > 0) || !(v[3] > 0)) throw Error("--box expects x,y,w,h with w, h > 0");
  return {v[0], v[1], v[2], v[3]};
}

int cmd_predict(const Globals& g, const std::string& ckpt, const std::string& image_path,
                const std::string& box_text, bool dump, bool flip) {
  const Box box = parse_box(box_text);
  const Image img = read_ppm(image_path);
  Loaded l = load_model(ckpt);
  const int h = l.cfg.model.input_h, w = l.cfg.model.input_w;
  const Affine2 fwd = crop_affine(box, h, w);
  Image crop = warp_affine(img, fwd, h, w);
  crop.quantize();
  const Image* ptr = &crop;
  const Tensor maps = predict_heatmaps(model_predictor(*l.model), images_to_tensor({&ptr, 1}), flip);
  const DecodedKeypoints dec = decode_keypoints(maps);
  const KeypointSet in_crop = heatmap_to_crop(dec.keypoints, h, w);
  const Affine2 back = fwd.inverse();

  nlohmann::ordered_json rec;
  rec["image"] = image_path;
  rec["box"] = {box.x, box.y, box.w, box.h};
  auto& kps = rec["keypoints"] = nlohmann::ordered_json::array();
  for (int k = 0; k < kNumKeypoints; ++k) {
    const Point p = back.apply(in_crop.coords[k]);
    kps.push_back({{"name", std::string(kKeypointNames[k])}, {"x", p.x}, {"y", p.y}, {"score", dec.scores[k]}});
  }
  const std::string text = rec.dump(2) + "\n";
  std::cout << text;
  if (!g.out.empty()) {
    write_text(fs::path(g.out) / "prediction.json", text);
    if (dump) {
      for (int k = 0; k < kNumKeypoints; ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "heatmap_%02d_%s.pgm", k, std::string(kKeypointNames[k]).c_str());
        write_heatmap_pgm(fs::path(g.out) / name, maps, 0, k);
      }
    }
  } else if (dump) {
    throw Error("--dump-heatmaps needs --out");
  }
  return kExitOk;
}

int cmd_gradcheck(const Globals& g) {
  GradCheckOptions opts;
  if (g.seed_set) opts.seed = g.seed;
  std::vector<GradCheckResult> results = check_ops(opts);
  for (auto& r : check_model(micro_model_config(), opts)) results.push_back(r);
  print_results(std::cout, results);
  const GradCheckResult neg = check_broken_op(opts);
  std::printf("%-48s max_rel_err=%.3e %s\n", neg.name.c_str(), neg.max_rel_error,
              neg.passed ? "NOT DETECTED" : "detected");
  bool ok = !neg.passed;
  for (const auto& r : results) ok = ok && r.passed;
  std::cout << (ok ? "gradcheck: PASS\n" : "gradcheck: FAIL\n");
  return ok ? kExitOk : kExitNumerical;
}

int cmd_gen_data(const Globals& g, int n, const std::string& difficulty, const std::string& split,
                 const std::string& size) {
  if (g.out.empty()) throw Error("gen-data needs --out");
  if (n < 1) throw Error("--n must be >= 1");
  DatasetOptions opts;
  opts.difficulty = parse_difficulty(difficulty);
  if (!size.empty()) {
    RunConfig probe;
    apply_setting(probe, "model.input_size", size);
    opts.input_h = probe.model.input_h;
    opts.input_w = probe.model.input_w;
  }
  const Dataset ds = make_dataset(n, g.seed, split == "val" ? Split::val : Split::train, opts);
  write_dataset(g.out, ds);
  std::cout << "wrote " << n << " samples to " << g.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose estimation toolkit: train, evaluate, predict, check gradients, generate data"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Configuration file (key=value lines)");
  app.add_option_function<std::uint64_t>(
         "--seed", [&](const std::uint64_t& s) { g.seed = s, g.seed_set = true; }, "Seed override")
      ->type_name("INT");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--set", g.settings, "Configuration override key=value (repeatable)");
  app.fallthrough();

  std::string resume;
  auto* train = app.add_subcommand("train", "Train a model from a configuration");
  train->add_option("--resume", resume, "Checkpoint to resume from");

  std::string ckpt, data, split = "val";
  bool flip = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data, "Dataset directory (default: regenerate from the checkpoint config)");
  eval->add_option("--split", split, "Split to regenerate when --data is absent")
      ->check(CLI::IsMember({"train", "val"}));
  eval->add_flag("--flip-test", flip, "Average with the mirrored input");

  std::string image, box;
  bool dump = false;
  auto* predict = app.add_subcommand("predict", "Keypoints for one person box in an image");
  predict->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  predict->add_option("--image", image, "PPM image")->required();
  predict->add_option("--box", box, "Person box x,y,w,h")->required();
  predict->add_flag("--dump-heatmaps", dump, "Write the 17 heatmaps as PGM files to --out");
  predict->add_flag("--flip-test", flip, "Average with the mirrored input");

  bool micro = true;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks of every op and the micro model");
  grad->add_flag("--micro-config", micro, "Use the micro model configuration (default)");

  int n = 0;
  std::string difficulty = "easy", size, gen_split = "train";
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen->add_option("--n", n, "Number of samples")->required();
  gen->add_option("--difficulty", difficulty, "easy or occluded");
  gen->add_option("--split", gen_split, "train or val")->check(CLI::IsMember({"train", "val"}));
  gen->add_option("--size", size, "Crop size HxW (default 128x96)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*train) return cmd_train(g, resume);
    if (*eval) return cmd_eval(g, ckpt, data, split, flip);
    if (*predict) return cmd_predict(g, ckpt, image, box, dump, flip);
    if (*grad) return cmd_gradcheck(g);
    if (*gen) return cmd_gen_data(g, n, difficulty, gen_split, size);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
