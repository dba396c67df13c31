// advcorr: pretrain, attack, fine-tune by cut projection, baseline retrain, eval.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "advcorr/harness.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

struct FinetuneFlags {
  std::optional<double> omega, delta, epsilon_bar, xi, block_p;
  std::optional<int> iters, block_T;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker cap")->check(CLI::PositiveNumber);
}

nlohmann::json common_overrides(const CommonFlags& f) {
  nlohmann::json o = nlohmann::json::object();
  if (f.seed) o["seed"] = *f.seed;
  if (f.out) o["output_dir"] = *f.out;
  if (f.threads) o["threads"] = *f.threads;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversary correction of pretrained classifiers by cut projection"};
  app.require_subcommand(1);

  CommonFlags common;
  FinetuneFlags ft;
  std::string checkpoint, adv;
  std::optional<std::string> eval_adv;
  std::optional<std::size_t> size;
  bool dump_params = false;

  auto* pre = app.add_subcommand("pretrain", "train a model from scratch and write checkpoint.json");
  add_common(pre, common);

  auto* att = app.add_subcommand("attack", "generate the adversarial set for a checkpoint");
  add_common(att, common);
  att->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  att->add_option("--size", size, "number of adversarial examples (multiple of the class count)");

  auto* fin = app.add_subcommand("finetune", "project the checkpoint onto the adversary-correction cuts");
  add_common(fin, common);
  fin->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  fin->add_option("--adv", adv, "adversarial set")->required();
  fin->add_option("--omega", ft.omega, "loss weight in the final selection, in [0,1)");
  fin->add_option("--iters", ft.iters, "outer iterations M");
  fin->add_option("--delta", ft.delta, "classification margin");
  fin->add_option("--epsilon-bar", ft.epsilon_bar, "l1 robustness radius of the adversary cuts");
  fin->add_option("--xi", ft.xi, "loss relaxation");
  fin->add_option("--block-p", ft.block_p, "fraction of coordinates held fixed per block solve");
  fin->add_option("--block-T", ft.block_T, "block sweeps");
  fin->add_flag("--dump-params", dump_params, "include candidate parameters in pool.json");

  auto* base = app.add_subcommand("baseline-retrain", "retrain from scratch with the adversarial points added");
  add_common(base, common);
  base->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  base->add_option("--adv", adv, "adversarial set")->required();

  auto* ev = app.add_subcommand("eval", "clean, FGSM and PGD accuracy of a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--adv", eval_adv, "adversarial set (reports V)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    nlohmann::json o = common_overrides(common);
    if (size) o["adversarial"]["size"] = *size;
    if (ft.omega) o["finetune"]["omega"] = *ft.omega;
    if (ft.iters) o["finetune"]["iterations"] = *ft.iters;
    if (ft.delta) o["finetune"]["delta"] = *ft.delta;
    if (ft.epsilon_bar) o["finetune"]["epsilon_bar"] = *ft.epsilon_bar;
    if (ft.xi) o["finetune"]["xi"] = *ft.xi;
    if (ft.block_p) o["finetune"]["block"]["p"] = *ft.block_p;
    if (ft.block_T) o["finetune"]["block"]["T"] = *ft.block_T;
    const advcorr::RunConfig cfg = advcorr::load_run_config(common.config, o);

    if (*pre) advcorr::cmd_pretrain(cfg, std::cout);
    else if (*att) advcorr::cmd_attack(cfg, checkpoint, std::cout);
    else if (*fin) advcorr::cmd_finetune(cfg, checkpoint, adv, dump_params, std::cout);
    else if (*base) advcorr::cmd_baseline_retrain(cfg, checkpoint, adv, std::cout);
    else if (*ev) advcorr::cmd_eval(cfg, checkpoint, eval_adv, std::cout);
  } catch (const advcorr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return advcorr::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
