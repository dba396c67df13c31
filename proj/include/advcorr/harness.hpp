#pragma once

// Experiment configuration and the command implementations behind the
// advcorr executable. Every JSON artifact carries the resolved configuration.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "advcorr/attacks.hpp"
#include "advcorr/data_io.hpp"
#include "advcorr/errors.hpp"
#include "advcorr/finetune.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/trainer.hpp"

namespace advcorr {

struct DatasetConfig {
  std::string kind = "mnist";  // mnist | synthetic
  std::string path = "data/mnist10k";
  std::size_t train_limit = 0;  // 0 = all
  std::size_t test_limit = 0;
  SyntheticConfig synthetic;
  int synthetic_test_per_class = 100;
};

struct EvalConfig {
  std::string pgd_preset = "mnist_pgd";
  double fgsm_epsilon = 0.1;
};

struct RunConfig {
  DatasetConfig dataset;
  std::vector<Index> hidden = {32};
  TrainConfig train;
  std::string attack_preset = "mnist_pgd";
  AttackConfig attack = AttackConfig::mnist_pgd();
  std::size_t adversarial_size = 50;
  FinetuneConfig finetune;
  EvalConfig eval;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;
  FloatEncoding encoding = FloatEncoding::decimal;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
T get_as(const json& obj, const std::string& key, const std::string& where, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "." + key + "' has the wrong type");
  }
}

inline AttackConfig attack_preset(const std::string& name) {
  if (name == "mnist_pgd") return AttackConfig::mnist_pgd();
  if (name == "cifar_pgd") return AttackConfig::cifar_pgd();
  if (name == "fgsm") return AttackConfig::fgsm_preset();
  throw ConfigError("config: unknown attack preset '" + name + "' (expected mnist_pgd, cifar_pgd or fgsm)");
}

}  // namespace detail

/// Strict parse: unknown keys, wrong types and invalid values are ConfigErrors.
inline RunConfig parse_run_config(const json& j) {
  using detail::check_keys;
  using detail::get_as;
  RunConfig c;
  const json root = j.is_null() ? json::object() : j;
  check_keys(root, "", {"dataset", "architecture", "train", "attack", "adversarial", "finetune", "eval", "output_dir",
                        "seed", "threads", "encoding"});
  c.seed = get_as<std::uint64_t>(root, "seed", "", 0);
  c.threads = get_as<int>(root, "threads", "", 1);
  if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
  c.output_dir = get_as<std::string>(root, "output_dir", "", "out");
  const auto enc = get_as<std::string>(root, "encoding", "", "decimal");
  if (enc == "decimal") c.encoding = FloatEncoding::decimal;
  else if (enc == "base64") c.encoding = FloatEncoding::base64;
  else throw ConfigError("config: encoding must be 'decimal' or 'base64'");

  if (root.contains("dataset")) {
    const auto& d = root.at("dataset");
    check_keys(d, "dataset", {"kind", "path", "train_limit", "test_limit", "synthetic", "synthetic_test_per_class"});
    c.dataset.kind = get_as<std::string>(d, "kind", "dataset", c.dataset.kind);
    c.dataset.path = get_as<std::string>(d, "path", "dataset", c.dataset.path);
    c.dataset.train_limit = get_as<std::size_t>(d, "train_limit", "dataset", 0);
    c.dataset.test_limit = get_as<std::size_t>(d, "test_limit", "dataset", 0);
    c.dataset.synthetic_test_per_class = get_as<int>(d, "synthetic_test_per_class", "dataset", 100);
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      check_keys(s, "dataset.synthetic", {"kind", "n_per_class", "noise_std", "input_dim", "num_classes"});
      const auto kind = get_as<std::string>(s, "kind", "dataset.synthetic", "gaussian_blobs");
      if (kind == "gaussian_blobs") c.dataset.synthetic.kind = SyntheticKind::gaussian_blobs;
      else if (kind == "two_moons") c.dataset.synthetic.kind = SyntheticKind::two_moons;
      else throw ConfigError("config: dataset.synthetic.kind must be gaussian_blobs or two_moons");
      c.dataset.synthetic.n_per_class = get_as<int>(s, "n_per_class", "dataset.synthetic", 100);
      c.dataset.synthetic.noise_std = get_as<double>(s, "noise_std", "dataset.synthetic", 0.1);
      c.dataset.synthetic.input_dim = get_as<int>(s, "input_dim", "dataset.synthetic", 2);
      c.dataset.synthetic.num_classes = get_as<int>(s, "num_classes", "dataset.synthetic", 2);
    }
  }
  if (c.dataset.kind != "mnist" && c.dataset.kind != "synthetic")
    throw ConfigError("config: dataset.kind must be 'mnist' or 'synthetic'");
  if (c.dataset.synthetic_test_per_class < 1) throw ConfigError("config: dataset.synthetic_test_per_class must be >= 1");
  c.dataset.synthetic.seed = c.seed;
  if (c.dataset.kind == "synthetic") c.dataset.synthetic.validate();

  if (root.contains("architecture")) {
    const auto& a = root.at("architecture");
    check_keys(a, "architecture", {"hidden"});
    c.hidden = get_as<std::vector<Index>>(a, "hidden", "architecture", c.hidden);
  }
  for (Index h : c.hidden)
    if (h < 1) throw ConfigError("config: architecture.hidden widths must be >= 1");

  if (root.contains("train")) {
    const auto& t = root.at("train");
    check_keys(t, "train", {"epochs", "batch_size", "learning_rate", "optimizer", "momentum"});
    c.train.epochs = get_as<int>(t, "epochs", "train", c.train.epochs);
    c.train.batch_size = get_as<int>(t, "batch_size", "train", c.train.batch_size);
    c.train.learning_rate = get_as<double>(t, "learning_rate", "train", c.train.learning_rate);
    c.train.momentum = get_as<double>(t, "momentum", "train", c.train.momentum);
    const auto opt = get_as<std::string>(t, "optimizer", "train", "adam");
    if (opt == "adam") c.train.optimizer = OptimizerKind::adam;
    else if (opt == "sgd") c.train.optimizer = OptimizerKind::sgd;
    else throw ConfigError("config: train.optimizer must be 'adam' or 'sgd'");
  }
  c.train.seed = c.seed;
  c.train.validate();

  if (root.contains("attack")) {
    const auto& a = root.at("attack");
    check_keys(a, "attack", {"preset", "epsilon", "step_size", "iterations"});
    c.attack_preset = get_as<std::string>(a, "preset", "attack", c.attack_preset);
    c.attack = detail::attack_preset(c.attack_preset);
    c.attack.epsilon = get_as<double>(a, "epsilon", "attack", c.attack.epsilon);
    c.attack.step_size = get_as<double>(a, "step_size", "attack", c.attack.step_size);
    c.attack.iterations = get_as<int>(a, "iterations", "attack", c.attack.iterations);
  }
  c.attack.seed = c.seed;
  c.attack.validate();

  if (root.contains("adversarial")) {
    const auto& a = root.at("adversarial");
    check_keys(a, "adversarial", {"size"});
    c.adversarial_size = get_as<std::size_t>(a, "size", "adversarial", c.adversarial_size);
  }
  if (c.adversarial_size < 1) throw ConfigError("config: adversarial.size must be >= 1");

  if (root.contains("finetune")) {
    const auto& f = root.at("finetune");
    check_keys(f, "finetune", {"iterations", "omega", "delta", "epsilon_bar", "xi", "alpha_grid", "block",
                               "target_violation", "qp_tol", "qp_max_sweeps", "max_cuts"});
    auto& ft = c.finetune;
    ft.max_iterations = get_as<int>(f, "iterations", "finetune", ft.max_iterations);
    ft.omega = get_as<double>(f, "omega", "finetune", ft.omega);
    ft.delta = get_as<double>(f, "delta", "finetune", ft.delta);
    ft.epsilon_bar = get_as<double>(f, "epsilon_bar", "finetune", ft.epsilon_bar);
    ft.xi = get_as<double>(f, "xi", "finetune", ft.xi);
    ft.alpha_grid = get_as<std::vector<double>>(f, "alpha_grid", "finetune", ft.alpha_grid);
    if (f.contains("block") && !f.at("block").is_null()) {
      const auto& b = f.at("block");
      check_keys(b, "finetune.block", {"p", "T"});
      ft.block = BlockConfig{get_as<double>(b, "p", "finetune.block", 0.8), get_as<int>(b, "T", "finetune.block", 1)};
    }
    if (f.contains("target_violation") && !f.at("target_violation").is_null())
      ft.target_violation = get_as<double>(f, "target_violation", "finetune", 0.0);
    ft.qp.tol = get_as<double>(f, "qp_tol", "finetune", ft.qp.tol);
    ft.qp.max_sweeps = get_as<int>(f, "qp_max_sweeps", "finetune", ft.qp.max_sweeps);
    ft.max_cuts = get_as<std::size_t>(f, "max_cuts", "finetune", ft.max_cuts);
  }
  c.finetune.seed = c.seed;
  c.finetune.validate();

  if (root.contains("eval")) {
    const auto& e = root.at("eval");
    check_keys(e, "eval", {"pgd_preset", "fgsm_epsilon"});
    c.eval.pgd_preset = get_as<std::string>(e, "pgd_preset", "eval", c.eval.pgd_preset);
    c.eval.fgsm_epsilon = get_as<double>(e, "fgsm_epsilon", "eval", c.eval.fgsm_epsilon);
  }
  if (detail::attack_preset(c.eval.pgd_preset).kind != AttackKind::pgd)
    throw ConfigError("config: eval.pgd_preset must name a PGD preset");
  if (!(c.eval.fgsm_epsilon >= 0.0)) throw ConfigError("config: eval.fgsm_epsilon must be >= 0");
  return c;
}

/// Fully resolved configuration (defaults filled in); parses back to the same RunConfig.
inline json to_json(const RunConfig& c) {
  json ds{{"kind", c.dataset.kind},
          {"path", c.dataset.path},
          {"train_limit", c.dataset.train_limit},
          {"test_limit", c.dataset.test_limit},
          {"synthetic_test_per_class", c.dataset.synthetic_test_per_class},
          {"synthetic",
           {{"kind", to_string(c.dataset.synthetic.kind)},
            {"n_per_class", c.dataset.synthetic.n_per_class},
            {"noise_std", c.dataset.synthetic.noise_std},
            {"input_dim", c.dataset.synthetic.input_dim},
            {"num_classes", c.dataset.synthetic.num_classes}}}};
  const auto& f = c.finetune;
  json block = f.block ? json{{"p", f.block->p}, {"T", f.block->T}} : json(nullptr);
  return {{"seed", c.seed},
          {"threads", c.threads},
          {"output_dir", c.output_dir},
          {"encoding", c.encoding == FloatEncoding::base64 ? "base64" : "decimal"},
          {"dataset", ds},
          {"architecture", {{"hidden", c.hidden}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"optimizer", to_string(c.train.optimizer)},
            {"momentum", c.train.momentum}}},
          {"attack",
           {{"preset", c.attack_preset},
            {"epsilon", c.attack.epsilon},
            {"step_size", c.attack.step_size},
            {"iterations", c.attack.iterations}}},
          {"adversarial", {{"size", c.adversarial_size}}},
          {"finetune",
           {{"iterations", f.max_iterations},
            {"omega", f.omega},
            {"delta", f.delta},
            {"epsilon_bar", f.epsilon_bar},
            {"xi", f.xi},
            {"alpha_grid", f.alpha_grid},
            {"block", block},
            {"target_violation", f.target_violation ? json(*f.target_violation) : json(nullptr)},
            {"qp_tol", f.qp.tol},
            {"qp_max_sweeps", f.qp.max_sweeps},
            {"max_cuts", f.max_cuts}}},
          {"eval", {{"pgd_preset", c.eval.pgd_preset}, {"fgsm_epsilon", c.eval.fgsm_epsilon}}}};
}

inline RunConfig load_run_config(const std::optional<std::string>& path, const json& overrides = json::object()) {
  json j = path ? read_json_file(*path) : json::object();
  if (!j.is_object()) throw ConfigError("config file must contain a JSON object");
  if (!overrides.is_null()) j.merge_patch(overrides);
  return parse_run_config(j);
}

// ---------------------------------------------------------------------------
// Data and evaluation

struct Datasets {
  LabeledDataset train;
  LabeledDataset test;
};

inline Datasets load_datasets(const RunConfig& c) {
  Datasets d;
  if (c.dataset.kind == "mnist") {
    auto [tr, te] = load_mnist_dir(c.dataset.path);
    d.train = std::move(tr);
    d.test = std::move(te);
  } else {
    d.train = make_synthetic(c.dataset.synthetic);
    SyntheticConfig t = c.dataset.synthetic;
    t.seed = c.dataset.synthetic.seed + 1;
    t.n_per_class = c.dataset.synthetic_test_per_class;
    d.test = make_synthetic(t);
  }
  if (c.dataset.train_limit > 0) d.train = d.train.slice(0, c.dataset.train_limit);
  if (c.dataset.test_limit > 0) d.test = d.test.slice(0, c.dataset.test_limit);
  return d;
}

inline Architecture architecture_for(const RunConfig& c, const Datasets& d) {
  return {d.train.input_dim(), c.hidden, d.train.num_classes()};
}

struct Metrics {
  double loss = 0.0;
  double clean_acc = 0.0;
  double fgsm_acc = 0.0;
  double pgd_acc = 0.0;
  std::optional<double> violation;
};

inline Metrics evaluate_metrics(const Network& net, const Datasets& d, const RunConfig& c,
                                const std::vector<AdversarialExample>* adv = nullptr) {
  Metrics m;
  m.loss = loss(net, d.train);
  m.clean_acc = evaluate_accuracy(net, d.test);
  AttackConfig fg = AttackConfig::fgsm_preset();
  fg.epsilon = c.eval.fgsm_epsilon;
  fg.step_size = c.eval.fgsm_epsilon > 0.0 ? c.eval.fgsm_epsilon : 1.0;
  m.fgsm_acc = attack_accuracy(net, d.test, fg);
  m.pgd_acc = attack_accuracy(net, d.test, detail::attack_preset(c.eval.pgd_preset));
  if (adv && !adv->empty()) m.violation = total_violation(net, *adv);
  if (!std::isfinite(m.loss)) throw NumericalError("training loss is not finite");
  return m;
}

inline json to_json(const Metrics& m) {
  json j{{"loss", m.loss}, {"clean_acc", m.clean_acc}, {"fgsm_acc", m.fgsm_acc}, {"pgd_acc", m.pgd_acc}};
  if (m.violation) j["violation"] = *m.violation;
  return j;
}

/// Two-row table; with `deltas`, the second row shows differences in parentheses.
inline std::string format_comparison(const std::string& first_name, const Metrics& a, const std::string& second_name,
                                     const Metrics& b, bool deltas) {
  std::ostringstream os;
  os << std::fixed;
  const bool has_v = a.violation && b.violation;
  os << std::left << std::setw(14) << "model" << std::right << std::setw(20) << "loss" << std::setw(20) << "clean acc %"
     << std::setw(20) << "FGSM acc %" << std::setw(20) << "PGD acc %";
  if (has_v) os << std::setw(22) << "V";
  os << '\n';
  auto cell = [&](double v, double ref, int prec, bool show_delta) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(prec) << v;
    if (show_delta) c << " (" << std::showpos << std::setprecision(prec) << v - ref << std::noshowpos << ")";
    return c.str();
  };
  auto row = [&](const std::string& name, const Metrics& m, bool show) {
    os << std::left << std::setw(14) << name << std::right << std::setw(20) << cell(m.loss, a.loss, 4, show)
       << std::setw(20) << cell(100 * m.clean_acc, 100 * a.clean_acc, 2, show) << std::setw(20)
       << cell(100 * m.fgsm_acc, 100 * a.fgsm_acc, 2, show) << std::setw(20)
       << cell(100 * m.pgd_acc, 100 * a.pgd_acc, 2, show);
    if (has_v) os << std::setw(22) << cell(*m.violation, *a.violation, 4, show);
    os << '\n';
  };
  row(first_name, a, false);
  row(second_name, b, deltas);
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline std::filesystem::path prepare_out(const RunConfig& c) {
  std::filesystem::path out(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + c.output_dir + ": " + ec.message());
  return out;
}

inline json with_config(json j, const RunConfig& c) {
  j["config"] = to_json(c);
  return j;
}

inline Checkpoint checked_inputs(const std::string& checkpoint_path, const std::string& adv_path,
                                 AdversarialSet& adv) {
  Checkpoint ck = load_checkpoint_full(checkpoint_path);
  adv = load_adversarial_set(adv_path);
  if (adv.model_checksum != ck.checksum)
    throw DataError("adversarial set " + adv_path + " was generated for model " + adv.model_checksum +
                    " but checkpoint " + checkpoint_path + " has checksum " + ck.checksum +
                    "; regenerate the adversarial set");
  if (adv.examples.empty()) throw DataError("adversarial set " + adv_path + " is empty");
  for (const auto& e : adv.examples) {
    if (e.x_tilde.size() != ck.net.input_dim())
      throw DataError("adversarial set " + adv_path + " input dimension does not match the checkpoint");
    if (e.y < 0 || e.y >= ck.net.num_classes())
      throw DataError("adversarial set " + adv_path + " has a label outside the model's classes");
  }
  return ck;
}

}  // namespace detail

inline void cmd_pretrain(const RunConfig& c, std::ostream& log) {
  const auto out = detail::prepare_out(c);
  const Datasets d = load_datasets(c);
  const Network net = pretrain(architecture_for(c, d), d.train, c.train);
  const Metrics m = evaluate_metrics(net, d, c);
  CheckpointMeta meta{c.seed, to_json(c), checksum_hex(dataset_checksum(d.train))};
  save_checkpoint(net, meta, (out / "checkpoint.json").string(), c.encoding);
  write_json_file(detail::with_config(to_json(m), c), (out / "pretrain_metrics.json").string());
  log << std::fixed << std::setprecision(4) << "pretrained: loss " << m.loss << ", clean acc " << 100 * m.clean_acc
      << "%, FGSM acc " << 100 * m.fgsm_acc << "%, PGD acc " << 100 * m.pgd_acc << "%\n"
      << "wrote " << (out / "checkpoint.json").string() << '\n';
}

inline void cmd_attack(const RunConfig& c, const std::string& checkpoint_path, std::ostream& log) {
  const auto out = detail::prepare_out(c);
  const Checkpoint ck = load_checkpoint_full(checkpoint_path);
  const Datasets d = load_datasets(c);
  AdversarialSet s;
  s.attack = c.attack;
  s.model_checksum = ck.checksum;
  s.config = to_json(c);
  s.examples = generate_adv_dataset(ck.net, d.train, c.adversarial_size, c.attack);
  save_adversarial_set(s, (out / "adversarial.json").string(), c.encoding);
  log << "wrote " << s.examples.size() << " adversarial examples (V = " << total_violation(ck.net, s.examples)
      << ") to " << (out / "adversarial.json").string() << '\n';
}

inline void cmd_finetune(const RunConfig& c, const std::string& checkpoint_path, const std::string& adv_path,
                         bool dump_params, std::ostream& log) {
  const auto out = detail::prepare_out(c);
  AdversarialSet adv;
  const Checkpoint ck = detail::checked_inputs(checkpoint_path, adv_path, adv);
  const Datasets d = load_datasets(c);
  const Metrics before = evaluate_metrics(ck.net, d, c, &adv.examples);
  FinetuneResult r = run_finetune(ck.net, adv.examples, d.train, c.finetune, [&log](const IterationRecord& rec) {
    log << "iteration " << rec.k << ": qp " << to_string(rec.qp_status) << ", loss " << rec.loss_iterate << ", V "
        << rec.violation_iterate << ", best V " << rec.best_violation << ", pool " << rec.pool_size << '\n';
  });
  const Metrics after = evaluate_metrics(r.net, d, c, &adv.examples);

  CheckpointMeta meta{c.seed, to_json(c), ck.meta.dataset_checksum};
  save_checkpoint(r.net, meta, (out / "finetuned.json").string(), c.encoding);
  {
    std::ofstream csv(out / "history.csv");
    if (!csv) throw DataError("cannot write " + (out / "history.csv").string());
    csv << "# config=" << to_json(c).dump() << '\n';
    write_history_csv(r.history, csv);
  }
  write_json_file(detail::with_config({{"selected_index", r.selected_index},
                                       {"candidates", pool_to_json(r.pool, dump_params, r.selected_index)}},
                                      c),
                  (out / "pool.json").string());
  json report{{"before", to_json(before)},
              {"after", to_json(after)},
              {"selected", {{"iterate", r.selected.origin.iterate}, {"alpha", r.selected.origin.alpha}}},
              {"iterations_run", r.history.records.size()},
              {"stopped_early", r.history.stopped_early},
              {"stop_reason", r.history.stop_reason},
              {"cuts", r.cuts.size()}};
  write_json_file(detail::with_config(report, c), (out / "finetune_report.json").string());
  if (r.history.stopped_early) log << "stopped early: " << r.history.stop_reason << '\n';
  log << format_comparison("pretrained", before, "fine-tuned", after, false);
}

inline void cmd_baseline_retrain(const RunConfig& c, const std::string& checkpoint_path, const std::string& adv_path,
                                 std::ostream& log) {
  const auto out = detail::prepare_out(c);
  AdversarialSet adv;
  const Checkpoint ck = detail::checked_inputs(checkpoint_path, adv_path, adv);
  const Datasets d = load_datasets(c);
  const Metrics before = evaluate_metrics(ck.net, d, c, &adv.examples);
  const Network net = retrain_with_adversarial(architecture_for(c, d), d.train, adv.examples, c.train);
  const Metrics after = evaluate_metrics(net, d, c, &adv.examples);
  CheckpointMeta meta{c.seed, to_json(c), ck.meta.dataset_checksum};
  save_checkpoint(net, meta, (out / "baseline.json").string(), c.encoding);
  json delta{{"loss", after.loss - before.loss},
             {"clean_acc", after.clean_acc - before.clean_acc},
             {"fgsm_acc", after.fgsm_acc - before.fgsm_acc},
             {"pgd_acc", after.pgd_acc - before.pgd_acc},
             {"violation", *after.violation - *before.violation}};
  write_json_file(detail::with_config({{"pretrained", to_json(before)}, {"retrained", to_json(after)}, {"delta", delta}}, c),
                  (out / "baseline_report.json").string());
  log << format_comparison("pretrained", before, "retrained", after, true);
}

inline void cmd_eval(const RunConfig& c, const std::string& checkpoint_path, const std::optional<std::string>& adv_path,
                     std::ostream& log) {
  const auto out = detail::prepare_out(c);
  // No model-checksum check here: V of a fine-tuned model on the original set is the usual query.
  const Checkpoint ck = load_checkpoint_full(checkpoint_path);
  std::optional<AdversarialSet> adv;
  if (adv_path) {
    adv = load_adversarial_set(*adv_path);
    for (const auto& e : adv->examples)
      if (e.x_tilde.size() != ck.net.input_dim() || e.y >= ck.net.num_classes())
        throw ShapeError("adversarial set " + *adv_path + " does not fit checkpoint " + checkpoint_path);
  }
  const Datasets d = load_datasets(c);
  const Metrics m = evaluate_metrics(ck.net, d, c, adv ? &adv->examples : nullptr);
  write_json_file(detail::with_config(to_json(m), c), (out / "eval_metrics.json").string());
  log << std::fixed << std::setprecision(4) << "loss " << m.loss << ", clean acc " << 100 * m.clean_acc
      << "%, FGSM acc " << 100 * m.fgsm_acc << "%, PGD acc " << 100 * m.pgd_acc << '%';
  if (m.violation) log << ", V " << *m.violation;
  log << '\n';
}

}  // namespace advcorr
