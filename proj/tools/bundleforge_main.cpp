#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "bundleforge/cli.hpp"

using namespace bundleforge;

namespace {

struct Overrides {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::uint64_t seed = 0;
  std::string distill;
  std::string scenario;
  std::string variant;
  std::string ks;
  double head_ratio = -1.0;
  double tail_ratio = -1.0;
  bool has_seed = false, has_out = false, has_data = false, has_distill = false;
  bool has_scenario = false, has_variant = false, has_ks = false;
  bool has_head = false, has_tail = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--seed", o.seed, "root seed")->each([&](const std::string&) {
    o.has_seed = true;
  });
  cmd->add_option("--out", o.out_dir, "output directory")
      ->each([&](const std::string&) { o.has_out = true; });
  cmd->add_option("--data", o.data_dir, "dataset directory")
      ->each([&](const std::string&) { o.has_data = true; });
}

cli::ExperimentConfig resolve(const Overrides& o) {
  cli::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = cli::load_config(o.config_path);
  if (o.has_seed) cfg.seed = o.seed;
  if (o.has_out) cfg.out_dir = o.out_dir;
  if (o.has_data) cfg.data_dir = o.data_dir;
  if (o.has_distill) cfg.distill = o.distill;
  if (o.has_scenario) cfg.scenario = o.scenario;
  if (o.has_variant) cfg.ablation = o.variant;
  if (o.has_ks) cfg.ks = o.ks;
  if (o.has_head) cfg.head_ratio = o.head_ratio;
  if (o.has_tail) cfg.tail_ratio = o.tail_ratio;
  cli::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bundleforge: debiased product bundling pipeline"};
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, o);
  auto* fb = app.add_subcommand("feedback", "pre-extract item user-feedback features");
  add_common(fb, o);
  auto* teacher = app.add_subcommand("train-teacher", "train and freeze the bundle-view teacher");
  add_common(teacher, o);
  auto* train = app.add_subcommand("train", "train the multimodal student");
  add_common(train, o);
  train->add_option("--distill", o.distill, "logits|feature|both|none")
      ->each([&](const std::string&) { o.has_distill = true; });
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint per scenario");
  add_common(eval_cmd, o);
  eval_cmd->add_option("--scenario", o.scenario, "overall|pop2lt|lt2pop|pop2pop|lt2lt|all")
      ->each([&](const std::string&) { o.has_scenario = true; });
  eval_cmd->add_option("--head-ratio", o.head_ratio, "popular share")
      ->each([&](const std::string&) { o.has_head = true; });
  eval_cmd->add_option("--tail-ratio", o.tail_ratio, "long-tail share")
      ->each([&](const std::string&) { o.has_tail = true; });
  eval_cmd->add_option("--k", o.ks, "comma-separated cutoffs, e.g. 20,40")
      ->each([&](const std::string&) { o.has_ks = true; });
  auto* sweep = app.add_subcommand("sweep", "popularity-ratio sweep of backbone vs distilled student");
  add_common(sweep, o);
  auto* ablate = app.add_subcommand("ablate", "train a fusion-ablated backbone");
  add_common(ablate, o);
  ablate->add_option("--variant", o.variant, "wo_ui|wo_mm|wo_bi")
      ->each([&](const std::string&) { o.has_variant = true; });
  auto* report = app.add_subcommand("report", "score distributions and case studies");
  add_common(report, o);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(o);
    if (synth->parsed()) return cli::cmd_synth(cfg);
    if (fb->parsed()) return cli::cmd_feedback(cfg);
    if (teacher->parsed()) return cli::cmd_train_teacher(cfg);
    if (train->parsed()) return cli::cmd_train(cfg);
    if (eval_cmd->parsed()) return cli::cmd_eval(cfg);
    if (sweep->parsed()) return cli::cmd_sweep(cfg);
    if (ablate->parsed()) return cli::cmd_ablate(cfg);
    if (report->parsed()) return cli::cmd_report(cfg);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
