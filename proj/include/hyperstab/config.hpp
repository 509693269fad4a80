#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyperstab/activation.hpp"
#include "hyperstab/errors.hpp"
#include "hyperstab/hypernet.hpp"
#include "hyperstab/normalization.hpp"

namespace hyperstab {

enum class Task { MnistBayes, SyntheticDenoise };

inline std::string to_string(Task t) { return t == Task::MnistBayes ? "mnist_bayes" : "synthetic_denoise"; }

inline Task parse_task(const std::string& s) {
  if (s == "mnist_bayes") return Task::MnistBayes;
  if (s == "synthetic_denoise") return Task::SyntheticDenoise;
  throw ConfigError("unknown task '" + s + "'");
}

enum class OptimizerKind { SgdNesterov, AdamW };

/// Flat experiment description. `mode` takes a parametrization name or a
/// normalization variant; the latter implies the default parametrization.
struct ExperimentConfig {
  Task task = Task::MnistBayes;
  std::string mode = "default";
  std::vector<std::size_t> trunk_widths{16, 128};
  std::string trunk_activation = "leaky_relu";
  double leaky_slope = 0.01;
  std::size_t input_dim = 1;
  std::string gamma_strategy = "uniform01";
  double gamma_lo = 0.0;
  double gamma_hi = 1.0;
  bool gamma_per_example = false;
  bool fold_bias = true;
  double norm_eps = 1e-5;
  std::string optimizer = "sgd_nesterov";
  double lr = 3e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  std::string data_dir = "data/mnist";
  std::size_t limit = 4096;
  std::size_t test_limit = 1024;
  std::vector<std::size_t> primary_hidden;  // empty: task default
  std::size_t synthetic_n = 2048;
  std::size_t synthetic_d = 32;
  std::size_t synthetic_segments = 4;
  double synthetic_noise = 0.1;
  std::size_t evals_per_epoch = 0;  // 0: task default
  std::vector<double> eval_gammas{0.1, 0.3, 0.5, 0.7, 0.9};

  Parametrization parametrization() const {
    if (mode == "batchnorm_p" || mode == "layernorm_p" || mode == "layernorm_h" || mode == "weightnorm") {
      return Parametrization::Default;
    }
    return parse_parametrization(mode);
  }

  std::optional<NormVariant> norm() const {
    if (mode == "default" || mode == "npa" || mode == "input_only" || mode == "output_only") return std::nullopt;
    NormVariant v = NormVariant::parse(mode);
    v.epsilon = norm_eps;
    return v;
  }

  Activation trunk_act() const { return Activation::parse(trunk_activation, leaky_slope); }

  OptimizerKind optimizer_kind() const {
    if (optimizer == "sgd_nesterov") return OptimizerKind::SgdNesterov;
    if (optimizer == "adamw") return OptimizerKind::AdamW;
    throw ConfigError("unknown optimizer '" + optimizer + "'");
  }

  GammaStrategy gamma() const {
    if (gamma_strategy == "uniform01") return GammaStrategy::uniform01();
    if (gamma_strategy == "gaussian_sigmoid") return GammaStrategy::gaussian_sigmoid();
    if (gamma_strategy == "uniform_range") return GammaStrategy::uniform_range(gamma_lo, gamma_hi);
    throw ConfigError("unknown gamma_strategy '" + gamma_strategy + "'");
  }

  std::vector<std::size_t> hidden() const {
    if (!primary_hidden.empty()) return primary_hidden;
    return task == Task::MnistBayes ? std::vector<std::size_t>{64, 64} : std::vector<std::size_t>{64};
  }

  std::size_t evals() const {
    if (evals_per_epoch > 0) return evals_per_epoch;
    return task == Task::MnistBayes ? 4 : 1;
  }

  /// Throws ConfigError on the first invalid field.
  void validate() const {
    parametrization();
    norm();
    trunk_act();
    optimizer_kind();
    const auto g = gamma();
    if (g.kind == GammaStrategy::Kind::UniformRange) {
      Rng probe(0);
      sample_gamma(g, 1, probe);
    }
    if (trunk_widths.empty()) throw ConfigError("trunk_widths must be nonempty");
    for (auto w : trunk_widths)
      if (w == 0) throw ConfigError("trunk_widths entries must be positive");
    for (auto w : primary_hidden)
      if (w == 0) throw ConfigError("primary_hidden entries must be positive");
    if (input_dim == 0) throw ConfigError("input_dim must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
    if (eval_gammas.empty()) throw ConfigError("eval_gammas must be nonempty");
    for (double e : eval_gammas)
      if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eval_gammas must lie in [0,1]");
    if (task == Task::SyntheticDenoise && g.declared_range() != GammaRange::Unit) {
      throw ConfigError("synthetic_denoise weights its loss by gamma, which must lie in [0,1]");
    }
    if (limit < 2) throw ConfigError("limit must be at least 2");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  for (const auto& item : split(value, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

/// Set one key. Unknown keys are rejected.
inline void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  static const std::map<std::string, std::function<void(ExperimentConfig&, const std::string&, const std::string&)>>
      setters = {
          {"task", [](auto& c, auto&, auto& v) { c.task = parse_task(v); }},
          {"mode", [](auto& c, auto&, auto& v) { c.mode = v; }},
          {"trunk_widths", [](auto& c, auto& k, auto& v) { c.trunk_widths = parse_list<std::size_t>(k, v); }},
          {"trunk_activation", [](auto& c, auto&, auto& v) { c.trunk_activation = v; }},
          {"leaky_slope", [](auto& c, auto& k, auto& v) { c.leaky_slope = parse_number<double>(k, v); }},
          {"input_dim", [](auto& c, auto& k, auto& v) { c.input_dim = parse_number<std::size_t>(k, v); }},
          {"gamma_strategy", [](auto& c, auto&, auto& v) { c.gamma_strategy = v; }},
          {"gamma_lo", [](auto& c, auto& k, auto& v) { c.gamma_lo = parse_number<double>(k, v); }},
          {"gamma_hi", [](auto& c, auto& k, auto& v) { c.gamma_hi = parse_number<double>(k, v); }},
          {"gamma_per_example", [](auto& c, auto& k, auto& v) { c.gamma_per_example = parse_bool(k, v); }},
          {"fold_bias", [](auto& c, auto& k, auto& v) { c.fold_bias = parse_bool(k, v); }},
          {"norm_eps", [](auto& c, auto& k, auto& v) { c.norm_eps = parse_number<double>(k, v); }},
          {"optimizer", [](auto& c, auto&, auto& v) { c.optimizer = v; }},
          {"lr", [](auto& c, auto& k, auto& v) { c.lr = parse_number<double>(k, v); }},
          {"momentum", [](auto& c, auto& k, auto& v) { c.momentum = parse_number<double>(k, v); }},
          {"beta1", [](auto& c, auto& k, auto& v) { c.beta1 = parse_number<double>(k, v); }},
          {"beta2", [](auto& c, auto& k, auto& v) { c.beta2 = parse_number<double>(k, v); }},
          {"adam_eps", [](auto& c, auto& k, auto& v) { c.adam_eps = parse_number<double>(k, v); }},
          {"weight_decay", [](auto& c, auto& k, auto& v) { c.weight_decay = parse_number<double>(k, v); }},
          {"epochs", [](auto& c, auto& k, auto& v) { c.epochs = parse_number<std::size_t>(k, v); }},
          {"batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = parse_number<std::size_t>(k, v); }},
          {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
          {"output_dir", [](auto& c, auto&, auto& v) { c.output_dir = v; }},
          {"data_dir", [](auto& c, auto&, auto& v) { c.data_dir = v; }},
          {"limit", [](auto& c, auto& k, auto& v) { c.limit = parse_number<std::size_t>(k, v); }},
          {"test_limit", [](auto& c, auto& k, auto& v) { c.test_limit = parse_number<std::size_t>(k, v); }},
          {"primary_hidden",
           [](auto& c, auto& k, auto& v) {
             c.primary_hidden = v.empty() ? std::vector<std::size_t>{} : parse_list<std::size_t>(k, v);
           }},
          {"synthetic_n", [](auto& c, auto& k, auto& v) { c.synthetic_n = parse_number<std::size_t>(k, v); }},
          {"synthetic_d", [](auto& c, auto& k, auto& v) { c.synthetic_d = parse_number<std::size_t>(k, v); }},
          {"synthetic_segments",
           [](auto& c, auto& k, auto& v) { c.synthetic_segments = parse_number<std::size_t>(k, v); }},
          {"synthetic_noise", [](auto& c, auto& k, auto& v) { c.synthetic_noise = parse_number<double>(k, v); }},
          {"evals_per_epoch", [](auto& c, auto& k, auto& v) { c.evals_per_epoch = parse_number<std::size_t>(k, v); }},
          {"eval_gammas", [](auto& c, auto& k, auto& v) { c.eval_gammas = parse_list<double>(k, v); }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(c, key, value);
}

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    }
    try {
      apply_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::fmt_double;
  using detail::join;
  std::ostringstream o;
  o << "task = " << to_string(c.task) << "\n"
    << "mode = " << c.mode << "\n"
    << "trunk_widths = " << join(c.trunk_widths) << "\n"
    << "trunk_activation = " << c.trunk_activation << "\n"
    << "leaky_slope = " << fmt_double(c.leaky_slope) << "\n"
    << "input_dim = " << c.input_dim << "\n"
    << "gamma_strategy = " << c.gamma_strategy << "\n"
    << "gamma_lo = " << fmt_double(c.gamma_lo) << "\n"
    << "gamma_hi = " << fmt_double(c.gamma_hi) << "\n"
    << "gamma_per_example = " << (c.gamma_per_example ? "true" : "false") << "\n"
    << "fold_bias = " << (c.fold_bias ? "true" : "false") << "\n"
    << "norm_eps = " << fmt_double(c.norm_eps) << "\n"
    << "optimizer = " << c.optimizer << "\n"
    << "lr = " << fmt_double(c.lr) << "\n"
    << "momentum = " << fmt_double(c.momentum) << "\n"
    << "beta1 = " << fmt_double(c.beta1) << "\n"
    << "beta2 = " << fmt_double(c.beta2) << "\n"
    << "adam_eps = " << fmt_double(c.adam_eps) << "\n"
    << "weight_decay = " << fmt_double(c.weight_decay) << "\n"
    << "epochs = " << c.epochs << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "seed = " << c.seed << "\n"
    << "output_dir = " << c.output_dir << "\n"
    << "data_dir = " << c.data_dir << "\n"
    << "limit = " << c.limit << "\n"
    << "test_limit = " << c.test_limit << "\n"
    << "primary_hidden = " << join(c.primary_hidden) << "\n"
    << "synthetic_n = " << c.synthetic_n << "\n"
    << "synthetic_d = " << c.synthetic_d << "\n"
    << "synthetic_segments = " << c.synthetic_segments << "\n"
    << "synthetic_noise = " << fmt_double(c.synthetic_noise) << "\n"
    << "evals_per_epoch = " << c.evals_per_epoch << "\n"
    << "eval_gammas = " << join(c.eval_gammas) << "\n";
  return o.str();
}

}  // namespace hyperstab
