#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hyperstab/checkpoint.hpp"
#include "hyperstab/config.hpp"
#include "hyperstab/data.hpp"
#include "hyperstab/diagnostics.hpp"
#include "hyperstab/hypernet.hpp"
#include "hyperstab/losses.hpp"
#include "hyperstab/normalization.hpp"
#include "hyperstab/optim.hpp"

namespace hyperstab {

/// Training and held-out arrays for either task. Classification uses
/// `*_labels`; denoising uses `*_targets` (the clean signals).
struct TaskData {
  Tensor train_x, test_x;
  std::vector<int> train_labels, test_labels;
  Tensor train_targets, test_targets;

  std::size_t train_size() const { return train_x.size(0); }
  std::size_t input_width() const { return train_x.size(1); }
};

namespace detail {

inline std::string find_idx_file(const std::string& dir, const std::string& base) {
  for (const auto& candidate : {base, base + ".gz"}) {
    const auto p = std::filesystem::path(dir) / candidate;
    if (std::filesystem::exists(p)) return p.string();
  }
  throw IoError("missing IDX file '" + base + "[.gz]' in '" + dir + "'");
}

}  // namespace detail

inline TaskData load_task_data(const ExperimentConfig& c) {
  TaskData d;
  if (c.task == Task::MnistBayes) {
    const auto full = load_idx(detail::find_idx_file(c.data_dir, "train-images-idx3-ubyte"),
                               detail::find_idx_file(c.data_dir, "train-labels-idx1-ubyte"), c.limit);
    auto [train, val] = split_train_val(full);
    const auto test = load_idx(detail::find_idx_file(c.data_dir, "t10k-images-idx3-ubyte"),
                               detail::find_idx_file(c.data_dir, "t10k-labels-idx1-ubyte"), c.test_limit, Split::Test);
    d.train_x = train.images;
    d.train_labels = train.labels;
    d.test_x = test.images;
    d.test_labels = test.labels;
    return d;
  }
  Rng rng = Rng::stream(c.seed, Rng::Stream::Data);
  const auto ds = gen_synthetic_denoise(c.synthetic_n, c.synthetic_d, c.synthetic_segments, c.synthetic_noise, rng);
  const auto n_train = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(ds.size())));
  if (n_train == 0 || n_train >= ds.size()) throw ConfigError("synthetic_n too small for an 80/20 split");
  std::vector<std::size_t> train(n_train), test(ds.size() - n_train);
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;
  for (std::size_t i = 0; i < test.size(); ++i) test[i] = n_train + i;
  d.train_x = gather_rows(ds.noisy, train);
  d.train_targets = gather_rows(ds.clean, train);
  d.test_x = gather_rows(ds.noisy, test);
  d.test_targets = gather_rows(ds.clean, test);
  return d;
}

inline Arch primary_arch(const ExperimentConfig& c, std::size_t input_width) {
  const std::size_t out = c.task == Task::MnistBayes ? 10 : input_width;
  return make_arch(input_width, [&] {
    auto w = c.hidden();
    w.push_back(out);
    return w;
  }(), Activation::relu(), Activation::linear());
}

/// Seeded model for `c`. With fold_bias set, θ⁰ is carried by the head
/// biases during training.
inline InstrumentedModel build_model(const ExperimentConfig& c, std::size_t input_width) {
  Rng rng = Rng::stream(c.seed, Rng::Stream::Init);
  HypernetOptions opts;
  opts.trunk_activation = c.trunk_act();
  const Arch primary = primary_arch(c, input_width);
  auto hn = hypernet_init(primary, c.trunk_widths, c.parametrization(), rng, c.input_dim, opts);
  if (c.fold_bias && uses_theta0(hn.mode)) hn = fold_theta0_into_bias(hn);
  return attach_norm(c.norm(), std::move(hn), primary);
}

inline Optimizer build_optimizer(const ExperimentConfig& c, const InstrumentedModel& m) {
  if (c.optimizer_kind() == OptimizerKind::SgdNesterov) {
    return Optimizer::sgd_nesterov(m.parameters(), {c.lr, c.momentum});
  }
  return Optimizer::adamw(m.parameters(), {c.lr, c.beta1, c.beta2, c.adam_eps, c.weight_decay});
}

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // ‖∇θ L‖₂ at the predicted parameters
  bool finite = true;
};

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;  // accuracy, or MSE against the clean signal
};

/// One training run's model, optimizer and random streams.
class Trainer {
 public:
  Trainer(ExperimentConfig config, TaskData data)
      : config_((config.validate(), std::move(config))),
        data_(std::move(data)),
        model_(build_model(config_, data_.input_width())),
        optimizer_(build_optimizer(config_, model_)),
        data_rng_(Rng::stream(config_.seed, Rng::Stream::DataOrder)),
        gamma_rng_(Rng::stream(config_.seed, Rng::Stream::Gamma)) {}

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const ExperimentConfig& config() const { return config_; }
  const TaskData& data() const { return data_; }
  InstrumentedModel& model() { return model_; }
  const InstrumentedModel& model() const { return model_; }
  Optimizer& optimizer() { return optimizer_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  std::vector<std::vector<std::size_t>> next_epoch_batches() {
    return epoch_batches(data_.train_size(), config_.batch_size, data_rng_);
  }

  /// Sample Γ, predict θ per γ, run the primary network, backpropagate into
  /// ω (and θ⁰ when unfolded) and apply one optimizer update. Non-finite
  /// losses skip the update.
  StepResult train_step(const std::vector<std::size_t>& batch) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    const std::size_t groups = config_.gamma_per_example ? batch.size() : 1;
    const auto strategy = config_.gamma();
    std::vector<GammaSample> gammas;
    std::vector<ParamSet> thetas;
    for (std::size_t g = 0; g < groups; ++g) {
      gammas.push_back(sample_gamma(strategy, config_.input_dim, gamma_rng_));
      thetas.push_back(predict(model_, gammas.back()));
      for (auto& [name, t] : thetas.back()) t.retain_grad();
    }
    std::vector<const ParamSet*> ptrs;
    for (const auto& t : thetas) ptrs.push_back(&t);

    const Tensor x = gather_rows(data_.train_x, batch);
    const Tensor out = primary_forward(model_, ptrs, x, true);
    Tensor loss;
    if (config_.task == Task::MnistBayes) {
      std::vector<int> labels;
      for (auto i : batch) labels.push_back(data_.train_labels[i]);
      loss = loss_task1(out, labels);
    } else {
      const Tensor clean = gather_rows(data_.train_targets, batch);
      if (groups == 1) {
        loss = loss_task2(out, clean, gammas[0].values[0]);
      } else {
        std::vector<Tensor> parts;
        for (std::size_t g = 0; g < groups; ++g) {
          parts.push_back(loss_task2(slice_rows(out, g, g + 1), slice_rows(clean, g, g + 1), gammas[g].values[0]));
        }
        Tensor total = parts[0];
        for (std::size_t g = 1; g < groups; ++g) total = add(total, parts[g]);
        loss = scale(total, 1.0 / static_cast<double>(groups));
      }
    }

    StepResult r;
    r.loss = loss.item();
    r.finite = std::isfinite(r.loss);
    optimizer_.zero_grad();
    if (!r.finite) return r;
    backward(loss);
    r.grad_norm = theta_grad_norm(thetas);
    r.finite = std::isfinite(r.grad_norm);
    if (r.finite) {
      optimizer_.step();
      ++steps_;
    }
    return r;
  }

  /// Held-out loss and metric averaged over the fixed evaluation γ grid.
  EvalResult evaluate() {
    EvalResult r;
    for (double g : config_.eval_gammas) {
      const ParamSet theta = predict(model_, GammaSample::filled(config_.input_dim, g));
      const Tensor out = primary_forward(model_, {&theta}, data_.test_x, false);
      if (config_.task == Task::MnistBayes) {
        r.loss += loss_task1(out, data_.test_labels).item();
        r.metric += accuracy(out, data_.test_labels);
      } else {
        r.loss += loss_task2(out, data_.test_targets, g).item();
        r.metric += mse(out, data_.test_targets).item();
      }
    }
    const double n = static_cast<double>(config_.eval_gammas.size());
    r.loss /= n;
    r.metric /= n;
    return r;
  }

 private:
  ExperimentConfig config_;
  TaskData data_;
  InstrumentedModel model_;
  Optimizer optimizer_;
  Rng data_rng_;
  Rng gamma_rng_;
  std::uint64_t steps_ = 0;
};

/// One row of metrics.csv. The initialization row has no training loss or
/// gradient statistics (written as empty fields).
struct MetricsRecord {
  std::uint64_t step = 0;
  double epoch = 0.0;
  std::optional<double> train_loss;
  double eval_loss = 0.0;
  double eval_metric = 0.0;
  std::optional<double> grad_norm_mean;
  std::optional<double> grad_norm_std;
  double wall_seconds = 0.0;  // kept out of metrics.csv
};

struct RunResult {
  ExperimentConfig config;
  std::vector<MetricsRecord> records;
  std::vector<std::pair<std::size_t, double>> grad_norms;  // (epoch, ‖∇θ L‖) per minibatch
  std::vector<GradNormTrace> traces;
  bool diverged = false;
  double best_eval_metric = 0.0;
  double last_eval_metric = 0.0;
  double last_eval_loss = 0.0;
  std::uint64_t steps = 0;
  std::size_t parameter_count = 0;

  /// Metric value at the first evaluation with epoch >= `epoch`.
  std::optional<double> metric_at_epoch(double epoch) const {
    for (const auto& r : records)
      if (r.epoch >= epoch) return r.eval_metric;
    return std::nullopt;
  }
};

namespace detail {

inline std::string opt_field(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

}  // namespace detail

inline std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  using detail::fmt_double;
  std::ostringstream o;
  o << "step,epoch,train_loss,eval_loss,eval_metric,grad_norm_mean,grad_norm_std\n";
  for (const auto& r : records) {
    o << r.step << ',' << fmt_double(r.epoch) << ',' << detail::opt_field(r.train_loss) << ','
      << fmt_double(r.eval_loss) << ',' << fmt_double(r.eval_metric) << ',' << detail::opt_field(r.grad_norm_mean)
      << ',' << detail::opt_field(r.grad_norm_std) << '\n';
  }
  return o.str();
}

inline std::string grad_trace_csv(const std::vector<std::pair<std::size_t, double>>& norms) {
  std::ostringstream o;
  o << "epoch,batch,grad_norm\n";
  std::size_t batch = 0, epoch = 0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (i == 0 || norms[i].first != epoch) batch = 0;
    epoch = norms[i].first;
    o << epoch << ',' << batch++ << ',' << detail::fmt_double(norms[i].second) << '\n';
  }
  return o.str();
}

inline std::string grad_summary_csv(const std::vector<GradNormTrace>& traces) {
  using detail::fmt_double;
  std::ostringstream o;
  o << "epoch,count,mean,stdev,cv\n";
  for (const auto& t : traces) {
    o << t.epoch << ',' << t.norms.size() << ',' << fmt_double(t.mean) << ',' << fmt_double(t.stdev) << ','
      << fmt_double(t.cv) << '\n';
  }
  return o.str();
}

struct RunOptions {
  bool write_artifacts = true;
  std::ostream* log = nullptr;
};

/// Train per `config`, evaluating at init and `evals()` times per epoch.
/// A non-finite loss stops training and marks the run diverged; artifacts
/// are written either way.
inline RunResult run_experiment(const ExperimentConfig& config, const TaskData& data, const RunOptions& options = {}) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto seconds = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  Trainer trainer(config, data);
  RunResult result;
  result.config = config;
  result.parameter_count = trainer.model().parameter_count();

  auto record = [&](double epoch, std::optional<double> train_loss, const std::vector<double>& norms) {
    const auto ev = trainer.evaluate();
    MetricsRecord r;
    r.step = trainer.steps();
    r.epoch = epoch;
    r.train_loss = train_loss;
    r.eval_loss = ev.loss;
    r.eval_metric = ev.metric;
    if (!norms.empty()) {
      const auto s = summarize_grad_norms(0, norms);
      r.grad_norm_mean = s.mean;
      r.grad_norm_std = s.stdev;
    }
    r.wall_seconds = seconds();
    result.records.push_back(r);
    if (options.log) {
      *options.log << "epoch " << epoch << " step " << r.step << " eval_loss " << r.eval_loss << " eval_metric "
                   << r.eval_metric << "\n";
    }
  };

  record(0.0, std::nullopt, {});
  const std::size_t evals = config.evals();
  for (std::size_t e = 0; e < config.epochs && !result.diverged; ++e) {
    const auto batches = trainer.next_epoch_batches();
    const std::size_t nb = batches.size();
    std::size_t next_eval = 1;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::vector<double> interval_norms;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto step = trainer.train_step(batches[b]);
      if (!step.finite) {
        result.diverged = true;
        record(static_cast<double>(e) + static_cast<double>(b + 1) / static_cast<double>(nb), step.loss,
               interval_norms);
        break;
      }
      result.grad_norms.emplace_back(e, step.grad_norm);
      loss_sum += step.loss;
      ++loss_count;
      interval_norms.push_back(step.grad_norm);
      // Evaluation points: after batch ⌈k·nb/evals⌉ for k = 1..evals.
      bool eval_now = false;
      while (next_eval <= evals && (next_eval * nb + evals - 1) / evals == b + 1) {
        eval_now = true;
        ++next_eval;
      }
      if (eval_now) {
        const double frac = static_cast<double>(next_eval - 1) / static_cast<double>(evals);
        record(static_cast<double>(e) + frac, loss_sum / static_cast<double>(loss_count), interval_norms);
        loss_sum = 0.0;
        loss_count = 0;
        interval_norms.clear();
      }
    }
  }

  result.traces = grad_norm_trace(result.grad_norms);
  result.steps = trainer.steps();
  const bool higher_better = config.task == Task::MnistBayes;
  bool first = true;
  for (const auto& r : result.records) {
    if (!std::isfinite(r.eval_metric)) continue;
    if (first || (higher_better ? r.eval_metric > result.best_eval_metric : r.eval_metric < result.best_eval_metric)) {
      result.best_eval_metric = r.eval_metric;
      first = false;
    }
  }
  result.last_eval_metric = result.records.back().eval_metric;
  result.last_eval_loss = result.records.back().eval_loss;

  if (options.write_artifacts) {
    const std::filesystem::path dir(config.output_dir);
    detail::ensure_dir(dir);
    detail::write_text(dir / "config.txt", serialize_config(config));
    detail::write_text(dir / "metrics.csv", metrics_csv(result.records));
    detail::write_text(dir / "grad_trace.csv", grad_trace_csv(result.grad_norms));
    detail::write_text(dir / "grad_summary.csv", grad_summary_csv(result.traces));
    std::ostringstream timings;
    timings << "step,wall_seconds\n";
    for (const auto& r : result.records) timings << r.step << ',' << detail::fmt_double(r.wall_seconds) << '\n';
    detail::write_text(dir / "timings.csv", timings.str());
    std::ostringstream summary;
    summary << "diverged = " << (result.diverged ? "true" : "false") << "\n"
            << "steps = " << result.steps << "\n"
            << "evaluations = " << result.records.size() << "\n"
            << "parameter_count = " << result.parameter_count << "\n"
            << "best_eval_metric = " << detail::fmt_double(result.best_eval_metric) << "\n"
            << "last_eval_metric = " << detail::fmt_double(result.last_eval_metric) << "\n"
            << "last_eval_loss = " << detail::fmt_double(result.last_eval_loss) << "\n";
    if (!result.traces.empty()) summary << "first_epoch_grad_cv = " << detail::fmt_double(result.traces[0].cv) << "\n";
    detail::write_text(dir / "summary.txt", summary.str());
    checkpoint_save(trainer.model(), trainer.optimizer(), (dir / "checkpoint.hpnc").string(), trainer.steps());
  }
  return result;
}

inline RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  config.validate();
  return run_experiment(config, load_task_data(config), options);
}

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"mode", "widths", "depth", "input_dim", "activation", "lr"};
  return axes;
}

inline std::vector<std::string> default_axis_values(const std::string& axis) {
  if (axis == "mode") return {"default", "npa", "input_only", "output_only"};
  if (axis == "widths") return {"16/128", "16/32/64", "16/32/64/128"};
  if (axis == "depth") return {"3", "4", "5"};
  if (axis == "input_dim") return {"1", "2", "4", "8", "16", "32"};
  if (axis == "activation") return {"leaky_relu", "relu", "tanh", "gelu", "silu"};
  if (axis == "lr") return {"3e-2", "1e-2", "3e-3", "1e-3", "3e-4", "1e-4", "3e-5", "1e-5"};
  throw ConfigError("unknown sweep axis '" + axis + "'");
}

/// `base` with one axis set to `value`. Width lists use '/' separators;
/// depth repeats the first trunk width.
inline ExperimentConfig apply_axis(ExperimentConfig base, const std::string& axis, const std::string& value) {
  if (axis == "mode") {
    base.mode = value;
  } else if (axis == "widths") {
    base.trunk_widths.clear();
    for (const auto& w : detail::split(value, '/')) base.trunk_widths.push_back(detail::parse_number<std::size_t>(axis, w));
  } else if (axis == "depth") {
    const auto depth = detail::parse_number<std::size_t>(axis, value);
    if (depth == 0) throw ConfigError("depth must be at least 1");
    base.trunk_widths = std::vector<std::size_t>(depth, base.trunk_widths.front());
  } else if (axis == "input_dim") {
    base.input_dim = detail::parse_number<std::size_t>(axis, value);
  } else if (axis == "activation") {
    base.trunk_activation = value;
  } else if (axis == "lr") {
    base.lr = detail::parse_number<double>(axis, value);
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  std::string tag = value;
  for (auto& ch : tag)
    if (ch == '/') ch = '-';
  base.output_dir = (std::filesystem::path(base.output_dir) / (axis + "=" + tag)).string();
  base.validate();
  return base;
}

struct SweepEntry {
  std::string value;
  RunResult run;
};

/// One run per value; every config is validated before training starts and
/// diverged runs do not stop the sweep.
inline std::vector<SweepEntry> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                         std::vector<std::string> values, const RunOptions& options = {}) {
  if (values.empty()) values = default_axis_values(axis);
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(apply_axis(base, axis, v));
  std::optional<TaskData> shared;
  if (base.task == Task::MnistBayes) shared = load_task_data(base);

  std::vector<SweepEntry> out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (options.log) *options.log << "sweep " << axis << "=" << values[i] << "\n";
    out.push_back({values[i], shared ? run_experiment(configs[i], *shared, options) : run_experiment(configs[i], options)});
  }

  if (options.write_artifacts) {
    using detail::fmt_double;
    std::ostringstream o;
    o << "axis,value,diverged,steps,parameter_count,best_eval_metric,last_eval_metric,last_eval_loss,first_epoch_grad_cv\n";
    for (const auto& e : out) {
      o << axis << ',' << e.value << ',' << (e.run.diverged ? 1 : 0) << ',' << e.run.steps << ','
        << e.run.parameter_count << ',' << fmt_double(e.run.best_eval_metric) << ','
        << fmt_double(e.run.last_eval_metric) << ',' << fmt_double(e.run.last_eval_loss) << ','
        << (e.run.traces.empty() ? "" : fmt_double(e.run.traces[0].cv)) << '\n';
    }
    detail::ensure_dir(base.output_dir);
    detail::write_text(std::filesystem::path(base.output_dir) / "sweep_summary.csv", o.str());
  }
  return out;
}

struct DiagnoseResult {
  std::vector<SweepRow> rows;
  ProportionalityFit fit;
  double stdev_ratio = 0.0;  // max/min stdev over the grid
  bool from_checkpoint = false;
};

/// Weight/activation sweep of a freshly initialized model, or of a trained
/// one when `checkpoint` exists. A grad_trace.csv next to the checkpoint is
/// re-summarized into the output directory.
inline DiagnoseResult diagnose(const ExperimentConfig& config, const std::optional<std::string>& checkpoint,
                               std::optional<Tensor> probe = std::nullopt, bool write_artifacts = true) {
  config.validate();
  const std::size_t width = config.task == Task::MnistBayes ? 784 : config.synthetic_d;
  InstrumentedModel model = build_model(config, width);
  Optimizer opt = build_optimizer(config, model);
  DiagnoseResult r;
  if (checkpoint && std::filesystem::exists(*checkpoint)) {
    checkpoint_load(model, opt, *checkpoint);
    r.from_checkpoint = true;
  }
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(0.1 * i);
  SweepOptions so;
  so.probe = std::move(probe);
  so.sample_cap = 256;
  r.rows = weight_std_sweep(model, grid, so);
  r.fit = fit_proportionality(r.rows);
  double lo = r.rows[0].stdev, hi = r.rows[0].stdev;
  for (const auto& row : r.rows) {
    lo = std::min(lo, row.stdev);
    hi = std::max(hi, row.stdev);
  }
  r.stdev_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();

  if (write_artifacts) {
    using detail::fmt_double;
    const std::filesystem::path dir(config.output_dir);
    detail::ensure_dir(dir);
    std::ostringstream sweep;
    sweep << "gamma,stdev,l2";
    for (const auto& t : r.rows[0].tensors) sweep << ",stdev." << t.name;
    for (std::size_t k = 0; k < r.rows[0].activation_stdev.size(); ++k) sweep << ",act_stdev.L" << k;
    sweep << '\n';
    for (const auto& row : r.rows) {
      sweep << fmt_double(row.gamma) << ',' << fmt_double(row.stdev) << ',' << fmt_double(row.l2);
      for (const auto& t : row.tensors) sweep << ',' << fmt_double(t.stdev);
      for (double a : row.activation_stdev) sweep << ',' << fmt_double(a);
      sweep << '\n';
    }
    detail::write_text(dir / "weight_sweep.csv", sweep.str());

    std::ostringstream samples;
    samples << "gamma,tensor,index,value\n";
    for (const auto& row : r.rows)
      for (const auto& [name, values] : row.samples)
        for (std::size_t i = 0; i < values.size(); ++i)
          samples << fmt_double(row.gamma) << ',' << name << ',' << i << ',' << fmt_double(values[i]) << '\n';
    detail::write_text(dir / "theta_samples.csv", samples.str());

    std::ostringstream fit;
    fit << "slope = " << fmt_double(r.fit.slope) << "\n"
        << "intercept = " << fmt_double(r.fit.intercept) << "\n"
        << "r2 = " << fmt_double(r.fit.r2) << "\n"
        << "mean_stdev = " << fmt_double(r.fit.mean) << "\n"
        << "stdev_ratio = " << fmt_double(r.stdev_ratio) << "\n"
        << "from_checkpoint = " << (r.from_checkpoint ? "true" : "false") << "\n";
    detail::write_text(dir / "proportionality.txt", fit.str());

    if (r.from_checkpoint) {
      const auto trace_path = std::filesystem::path(*checkpoint).parent_path() / "grad_trace.csv";
      std::ifstream in(trace_path);
      if (in) {
        std::vector<std::pair<std::size_t, double>> norms;
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          const auto f = detail::split(line, ',');
          if (f.size() != 3) throw FormatError("malformed grad trace line '" + line + "'");
          norms.emplace_back(detail::parse_number<std::size_t>("epoch", f[0]),
                             detail::parse_number<double>("grad_norm", f[2]));
        }
        detail::write_text(dir / "grad_summary.csv", grad_summary_csv(grad_norm_trace(norms)));
      }
    }
  }
  return r;
}

}  // namespace hyperstab
