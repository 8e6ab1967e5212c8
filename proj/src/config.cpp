#include "csanet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace csanet {

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::string msg = "invalid configuration:";
  for (const auto& s : v) msg += "\n  " + s;
  return msg;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

long to_long(const std::string& v) {
  long out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) throw Error("expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& v) {
  long l = to_long(v);
  if (l < INT32_MIN || l > INT32_MAX) throw Error("integer out of range: '" + v + "'");
  return static_cast<int>(l);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) throw Error("expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  if (v.empty()) throw Error("expected a number, got ''");
  std::size_t pos = 0;
  double d;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw Error("expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw Error("expected a number, got '" + v + "'");
  return d;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("expected a boolean, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F conv) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (const auto& item : split(v, ',')) out.push_back(conv(item));
  return out;
}

template <std::size_t N, typename T, typename F>
std::array<T, N> to_array(const std::string& v, F conv, const char* what) {
  auto list = to_list<T>(v, conv);
  if (list.size() != N) {
    throw Error(std::string(what) + " needs " + std::to_string(N) + " comma-separated values, got " +
                std::to_string(list.size()));
  }
  std::array<T, N> out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

template <typename C, typename F>
std::string fmt_list(const C& c, F f) {
  std::string s;
  for (const auto& v : c) {
    if (!s.empty()) s += ",";
    s += f(v);
  }
  return s;
}

std::string fmt_int(long v) { return std::to_string(v); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.variant",
       [](RunConfig& c, const std::string& v) {
         if (v == "csanet") {
           c.model.variant = Variant::csanet;
         } else if (v == "sbn") {
           c.model.variant = Variant::sbn;
         } else {
           throw Error("expected csanet or sbn, got '" + v + "'");
         }
       }},
      {"model.stage_channels",
       [](RunConfig& c, const std::string& v) { c.model.stage_channels = to_array<5, int>(v, to_int, "stage_channels"); }},
      {"model.blocks_per_stage",
       [](RunConfig& c, const std::string& v) { c.model.blocks_per_stage = to_array<4, int>(v, to_int, "blocks_per_stage"); }},
      {"model.feature_width", [](RunConfig& c, const std::string& v) { c.model.feature_width = to_int(v); }},
      {"model.aspp_rates", [](RunConfig& c, const std::string& v) { c.model.aspp_rates = to_list<int>(v, to_int); }},
      {"model.hhp_depth", [](RunConfig& c, const std::string& v) { c.model.hhp_depth = to_int(v); }},
      {"model.num_keypoints", [](RunConfig& c, const std::string& v) { c.model.num_keypoints = to_int(v); }},
      {"model.loss_weights",
       [](RunConfig& c, const std::string& v) { c.model.loss_weights = to_array<3, double>(v, to_double, "loss_weights"); }},
      {"model.sigma", [](RunConfig& c, const std::string& v) { c.model.sigma = to_double(v); }},
      {"model.input_size",
       [](RunConfig& c, const std::string& v) {
         auto parts = split(v, 'x');
         if (parts.size() != 2) throw Error("expected HxW, got '" + v + "'");
         c.model.input_h = to_int(parts[0]);
         c.model.input_w = to_int(parts[1]);
       }},
      {"model.use_aspp", [](RunConfig& c, const std::string& v) { c.model.use_aspp = to_bool(v); }},
      {"model.use_sap", [](RunConfig& c, const std::string& v) { c.model.use_sap = to_bool(v); }},
      {"model.sap_conv3", [](RunConfig& c, const std::string& v) { c.model.sap_conv3 = to_bool(v); }},
      {"model.sap_conv2gp", [](RunConfig& c, const std::string& v) { c.model.sap_conv2gp = to_bool(v); }},
      {"optim.lr", [](RunConfig& c, const std::string& v) { c.optim.lr = to_double(v); }},
      {"optim.milestones", [](RunConfig& c, const std::string& v) { c.optim.milestones = to_list<int>(v, to_int); }},
      {"optim.decay", [](RunConfig& c, const std::string& v) { c.optim.decay = to_double(v); }},
      {"optim.batch_size", [](RunConfig& c, const std::string& v) { c.optim.batch_size = to_int(v); }},
      {"optim.epochs", [](RunConfig& c, const std::string& v) { c.optim.epochs = to_int(v); }},
      {"optim.max_steps", [](RunConfig& c, const std::string& v) { c.optim.max_steps = to_long(v); }},
      {"data.train_size", [](RunConfig& c, const std::string& v) { c.data.train_size = to_int(v); }},
      {"data.val_size", [](RunConfig& c, const std::string& v) { c.data.val_size = to_int(v); }},
      {"data.seed", [](RunConfig& c, const std::string& v) { c.data.seed = to_u64(v); }},
      {"data.difficulty", [](RunConfig& c, const std::string& v) { c.data.difficulty = parse_difficulty(v); }},
      {"data.augment", [](RunConfig& c, const std::string& v) { c.data.augment = to_bool(v); }},
      {"data.train_dir", [](RunConfig& c, const std::string& v) { c.data.train_dir = v; }},
      {"data.val_dir", [](RunConfig& c, const std::string& v) { c.data.val_dir = v; }},
      {"eval.flip_test", [](RunConfig& c, const std::string& v) { c.eval.flip_test = to_bool(v); }},
      {"eval.interval", [](RunConfig& c, const std::string& v) { c.eval.interval = to_int(v); }},
      {"io.out_dir", [](RunConfig& c, const std::string& v) { c.io.out_dir = v; }},
      {"io.checkpoint_interval", [](RunConfig& c, const std::string& v) { c.io.checkpoint_interval = to_long(v); }},
      {"io.log_interval", [](RunConfig& c, const std::string& v) { c.io.log_interval = to_long(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
  };
  return table;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v = model.violations();
  if (model.input_h * 3 != model.input_w * 4) {
    v.push_back("model.input_size must have height:width = 4:3, got " + std::to_string(model.input_h) + "x" +
                std::to_string(model.input_w));
  }
  if (!(optim.lr > 0.0)) v.push_back("optim.lr must be > 0");
  if (!(optim.decay > 0.0 && optim.decay <= 1.0)) v.push_back("optim.decay must be in (0, 1]");
  if (optim.batch_size < 1) v.push_back("optim.batch_size must be >= 1");
  if (optim.epochs < 1) v.push_back("optim.epochs must be >= 1");
  if (optim.max_steps < 0) v.push_back("optim.max_steps must be >= 0");
  for (std::size_t i = 0; i < optim.milestones.size(); ++i) {
    if (i > 0 && optim.milestones[i] <= optim.milestones[i - 1]) {
      v.push_back("optim.milestones must be strictly increasing");
    }
    if (optim.milestones[i] >= optim.epochs) {
      v.push_back("optim.milestones entry " + std::to_string(optim.milestones[i]) + " must be < optim.epochs");
    }
    if (optim.milestones[i] < 1) v.push_back("optim.milestones entries must be >= 1");
  }
  if (data.train_size < 1) v.push_back("data.train_size must be >= 1");
  if (data.val_size < 0) v.push_back("data.val_size must be >= 0");
  if (eval.interval < 0) v.push_back("eval.interval must be >= 0");
  if (io.checkpoint_interval < 0) v.push_back("io.checkpoint_interval must be >= 0");
  if (io.log_interval < 1) v.push_back("io.log_interval must be >= 1");
  if (io.out_dir.empty()) v.push_back("io.out_dir must be non-empty");
  return v;
}

void RunConfig::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw Error("unknown key '" + key + "'");
  it->second(cfg, value);
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key=value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_setting(cfg, key, value);
    } catch (const Error& e) {
      errors.push_back("line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  if (!errors.empty()) {
    for (auto& v : cfg.violations()) errors.push_back(std::move(v));
    throw ConfigError(std::move(errors));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read config " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

std::string model_echo(const ModelConfig& m) {
  std::ostringstream os;
  os << "model.variant=" << (m.variant == Variant::csanet ? "csanet" : "sbn") << "\n";
  os << "model.stage_channels=" << fmt_list(m.stage_channels, fmt_int) << "\n";
  os << "model.blocks_per_stage=" << fmt_list(m.blocks_per_stage, fmt_int) << "\n";
  os << "model.feature_width=" << m.feature_width << "\n";
  os << "model.aspp_rates=" << fmt_list(m.aspp_rates, fmt_int) << "\n";
  os << "model.hhp_depth=" << m.hhp_depth << "\n";
  os << "model.num_keypoints=" << m.num_keypoints << "\n";
  os << "model.loss_weights=" << fmt_list(m.loss_weights, fmt_double) << "\n";
  os << "model.sigma=" << fmt_double(m.sigma) << "\n";
  os << "model.input_size=" << m.input_h << "x" << m.input_w << "\n";
  os << "model.use_aspp=" << fmt_bool(m.use_aspp) << "\n";
  os << "model.use_sap=" << fmt_bool(m.use_sap) << "\n";
  os << "model.sap_conv3=" << fmt_bool(m.sap_conv3) << "\n";
  os << "model.sap_conv2gp=" << fmt_bool(m.sap_conv2gp) << "\n";
  return os.str();
}

std::string config_echo(const RunConfig& c) {
  std::ostringstream os;
  os << model_echo(c.model);
  os << "optim.lr=" << fmt_double(c.optim.lr) << "\n";
  os << "optim.milestones=" << fmt_list(c.optim.milestones, fmt_int) << "\n";
  os << "optim.decay=" << fmt_double(c.optim.decay) << "\n";
  os << "optim.batch_size=" << c.optim.batch_size << "\n";
  os << "optim.epochs=" << c.optim.epochs << "\n";
  os << "optim.max_steps=" << c.optim.max_steps << "\n";
  os << "data.train_size=" << c.data.train_size << "\n";
  os << "data.val_size=" << c.data.val_size << "\n";
  os << "data.seed=" << c.data.seed << "\n";
  os << "data.difficulty=" << to_string(c.data.difficulty) << "\n";
  os << "data.augment=" << fmt_bool(c.data.augment) << "\n";
  os << "data.train_dir=" << c.data.train_dir << "\n";
  os << "data.val_dir=" << c.data.val_dir << "\n";
  os << "eval.flip_test=" << fmt_bool(c.eval.flip_test) << "\n";
  os << "eval.interval=" << c.eval.interval << "\n";
  os << "io.out_dir=" << c.io.out_dir << "\n";
  os << "io.checkpoint_interval=" << c.io.checkpoint_interval << "\n";
  os << "io.log_interval=" << c.io.log_interval << "\n";
  os << "seed=" << c.seed << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_echo(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace csanet
