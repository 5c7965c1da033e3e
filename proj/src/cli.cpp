#include "bundleforge/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "bundleforge/eval.hpp"
#include "bundleforge/feedback.hpp"

namespace bundleforge::cli {

namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PrerequisiteError("cannot write '" + path + "'");
  out << content;
}

std::string metrics_log_text(const std::vector<diet::EpochLog>& log) {
  std::string out = "epoch\tL_b\tL_d\tval_recall@20\n";
  char buf[128];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\n", row.epoch, row.l_b,
                  row.l_d, row.val_recall20);
    out += buf;
  }
  return out;
}

corpus::Dataset load_dataset_checked(const ExperimentConfig& cfg) {
  return corpus::load_dataset(cfg.resolved_data_dir());
}

corpus::FeatureMatrix load_feedback_table(const ExperimentConfig& cfg, int n_items) {
  const std::string path = cfg.out_dir + "/feedback.bndf";
  if (!fs::exists(path))
    throw PrerequisiteError("missing " + path + "; run `bundleforge feedback` first");
  auto table = corpus::load_features(path);
  if (table.n != n_items)
    throw ContractError("feedback table covers " + std::to_string(table.n) +
                        " items but the corpus has " + std::to_string(n_items));
  return table;
}

const num::Tensor<float>& find_tensor(const checkpoint::NamedTensors& t,
                                      const std::string& name) {
  for (const auto& [k, v] : t)
    if (k == name) return v;
  throw ParseError("checkpoint is missing parameter '" + name + "'");
}

bool has_tensor(const checkpoint::NamedTensors& t, const std::string& name) {
  for (const auto& [k, v] : t)
    if (k == name) return true;
  return false;
}

std::vector<corpus::BundlingCase> scenario_cases(
    const corpus::BundleTable& bundles, const std::vector<int>& ids,
    const corpus::PopularityProfile& profile, corpus::Scenario scenario) {
  std::vector<corpus::BundlingCase> out;
  for (int b : ids) {
    auto cs = corpus::make_scenario_cases(bundles.items[b], b, profile, scenario);
    out.insert(out.end(), cs.begin(), cs.end());
  }
  return out;
}

}  // namespace

int eval_threads() {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min(threads, 8);
  if (const char* env = std::getenv("BUNDLEFORGE_THREADS")) {
    try {
      threads = std::min(threads, std::max(1, std::stoi(env)));
    } catch (...) {
      throw ConfigError("BUNDLEFORGE_THREADS is not an integer: '" +
                        std::string(env) + "'");
    }
  }
  return threads;
}

diet::TeacherState<float> teacher_from_checkpoint(const checkpoint::NamedTensors& t,
                                                  int n_items, int layers_bundle) {
  diet::TeacherState<float> state;
  state.item_embed = find_tensor(t, "teacher.item_embed");
  state.bundle_stack.w_key = find_tensor(t, "teacher.bundle.w_key");
  state.bundle_stack.w_query = find_tensor(t, "teacher.bundle.w_query");
  state.bundle_stack.layers = layers_bundle;
  if (state.item_embed.rows() != n_items)
    throw ContractError("teacher checkpoint covers " +
                        std::to_string(state.item_embed.rows()) +
                        " items but the corpus has " + std::to_string(n_items));
  state.frozen = true;
  return state;
}

diet::StudentState<float> student_from_checkpoint(const checkpoint::NamedTensors& t,
                                                  int n_items, int layers_item,
                                                  int layers_bundle) {
  diet::StudentState<float> state;
  const bool content = has_tensor(t, "student.map_text");
  const bool feedback_row = has_tensor(t, "student.fusion.w_feedback");
  const bool embed = has_tensor(t, "student.fusion.item_embed");
  if (content && feedback_row && embed)
    state.ablation = diet::AblationVariant::full;
  else if (!feedback_row && content && embed)
    state.ablation = diet::AblationVariant::wo_ui;
  else if (!content && feedback_row && embed)
    state.ablation = diet::AblationVariant::wo_mm;
  else if (!embed && content && feedback_row)
    state.ablation = diet::AblationVariant::wo_bi;
  else
    throw ParseError("student checkpoint has an unrecognized parameter set");
  if (content) {
    state.map_text = find_tensor(t, "student.map_text");
    state.map_media = find_tensor(t, "student.map_media");
    state.fusion.w_content = find_tensor(t, "student.fusion.w_content");
    state.modality_stack.w_key = find_tensor(t, "student.modality.w_key");
    state.modality_stack.w_query = find_tensor(t, "student.modality.w_query");
    state.modality_stack.layers = layers_bundle;
  }
  if (feedback_row)
    state.fusion.w_feedback = find_tensor(t, "student.fusion.w_feedback");
  if (embed) {
    state.fusion.item_embed = find_tensor(t, "student.fusion.item_embed");
    if (state.fusion.item_embed.rows() != n_items)
      throw ContractError("student checkpoint covers " +
                          std::to_string(state.fusion.item_embed.rows()) +
                          " items but the corpus has " + std::to_string(n_items));
  }
  state.item_stack.w_key = find_tensor(t, "student.item.w_key");
  state.item_stack.w_query = find_tensor(t, "student.item.w_query");
  state.item_stack.layers = layers_item;
  state.bundle_stack.w_key = find_tensor(t, "student.bundle.w_key");
  state.bundle_stack.w_query = find_tensor(t, "student.bundle.w_query");
  state.bundle_stack.layers = layers_bundle;
  return state;
}

int cmd_synth(const ExperimentConfig& cfg) {
  auto data = corpus::synth_generate(cfg.synth_config());
  const std::string dir = cfg.resolved_data_dir();
  corpus::write_dataset(data, dir);
  std::printf("synth: wrote %d items, %d bundles, %d users, %lld interactions to %s (seed %llu)\n",
              data.corpus.n, data.bundles.size(), data.interactions.users,
              static_cast<long long>(data.interactions.nnz), dir.c_str(),
              static_cast<unsigned long long>(cfg.seed));
  return 0;
}

int cmd_feedback(const ExperimentConfig& cfg) {
  auto ds = load_dataset_checked(cfg);
  feedback::FeedbackConfig fcfg;
  fcfg.dim = cfg.fb_dim;
  fcfg.layers = cfg.fb_layers;
  fcfg.epochs = cfg.fb_epochs;
  fcfg.lr = static_cast<float>(cfg.fb_lr);
  fcfg.neg_per_pos = cfg.fb_neg_per_pos;
  fcfg.batch = cfg.fb_batch;
  fcfg.reg = static_cast<float>(cfg.fb_reg);
  fcfg.seed = derive_seed(cfg.seed, Stage::feedback);
  auto table = feedback::train_feedback(ds.interactions, fcfg);
  fs::create_directories(cfg.out_dir);
  corpus::save_features(cfg.out_dir + "/feedback.bndf", table);
  std::printf("feedback: trained %dx%d item features over %lld interactions, wrote %s/feedback.bndf\n",
              table.n, table.dim, static_cast<long long>(ds.interactions.nnz),
              cfg.out_dir.c_str());
  return 0;
}

int cmd_train_teacher(const ExperimentConfig& cfg) {
  auto ds = load_dataset_checked(cfg);
  auto split = corpus::split_bundles(ds.bundles, derive_seed(cfg.seed, Stage::split));
  auto result = diet::train_teacher(ds.corpus.n, ds.bundles, split, cfg.train_config());
  fs::create_directories(cfg.out_dir);
  checkpoint::save(cfg.resolved_teacher_checkpoint(), result.state.named_tensors());
  write_file(cfg.out_dir + "/metrics_teacher.tsv", metrics_log_text(result.log));
  std::printf("train-teacher: %zu epochs, best val recall@20 %.4f at epoch %d, wrote %s\n",
              result.log.size(), result.best_val_recall20, result.best_epoch,
              cfg.resolved_teacher_checkpoint().c_str());
  return 0;
}

namespace {

int train_student_command(const ExperimentConfig& cfg, diet::TrainConfig tcfg,
                          const std::string& checkpoint_path,
                          const std::string& metrics_path, const char* label) {
  auto ds = load_dataset_checked(cfg);
  auto fb = load_feedback_table(cfg, ds.corpus.n);
  auto feats = diet::make_features<float>(ds.corpus, fb);
  auto split = corpus::split_bundles(ds.bundles, derive_seed(cfg.seed, Stage::split));

  diet::TeacherState<float> teacher;
  const diet::TeacherState<float>* teacher_ptr = nullptr;
  if (tcfg.distill != diet::DistillMode::none) {
    const std::string tpath = cfg.resolved_teacher_checkpoint();
    if (!fs::exists(tpath))
      throw PrerequisiteError("missing " + tpath +
                              "; run `bundleforge train-teacher` first");
    teacher = teacher_from_checkpoint(checkpoint::load(tpath), ds.corpus.n,
                                      tcfg.layers_bundle);
    teacher_ptr = &teacher;
  }
  auto result = diet::train_student(feats, ds.bundles, split, teacher_ptr, tcfg);
  fs::create_directories(cfg.out_dir);
  checkpoint::save(checkpoint_path, result.state.named_tensors());
  write_file(metrics_path, metrics_log_text(result.log));
  std::printf("%s: distill=%s ablation=%s, %zu epochs, best val recall@20 %.4f at epoch %d, wrote %s\n",
              label, diet::distill_name(tcfg.distill),
              diet::ablation_name(tcfg.ablation), result.log.size(),
              result.best_val_recall20, result.best_epoch, checkpoint_path.c_str());
  return 0;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
  return train_student_command(cfg, cfg.train_config(),
                               cfg.resolved_student_checkpoint(),
                               cfg.out_dir + "/metrics_student.tsv", "train");
}

int cmd_ablate(const ExperimentConfig& cfg) {
  auto tcfg = cfg.train_config();
  if (tcfg.ablation == diet::AblationVariant::full)
    throw ConfigError("ablate: pass --variant wo_ui|wo_mm|wo_bi");
  // Surgical study of the backbone: distillation is disabled.
  tcfg.distill = diet::DistillMode::none;
  const std::string name = diet::ablation_name(tcfg.ablation);
  return train_student_command(cfg, tcfg,
                               cfg.out_dir + "/student_" + name + ".bndc",
                               cfg.out_dir + "/metrics_" + name + ".tsv", "ablate");
}

namespace {

// Builds the scorer selected by eval_model; keeps the model state alive.
struct LoadedModel {
  diet::TeacherState<float> teacher;
  diet::StudentState<float> student;
  diet::Features<float> feats;
  eval::Scorer scorer;
};

LoadedModel load_model_for_eval(const ExperimentConfig& cfg,
                                const corpus::Dataset& ds,
                                const std::string& checkpoint_path,
                                const std::string& model_kind) {
  LoadedModel m;
  if (!fs::exists(checkpoint_path))
    throw PrerequisiteError("missing " + checkpoint_path +
                            "; run the producing train command first");
  auto named = checkpoint::load(checkpoint_path);
  if (model_kind == "teacher") {
    m.teacher = teacher_from_checkpoint(named, ds.corpus.n, cfg.layers_bundle);
    m.scorer = diet::make_teacher_scorer(m.teacher);
  } else if (model_kind == "content") {
    m.student = student_from_checkpoint(named, ds.corpus.n, cfg.layers_item,
                                        cfg.layers_bundle);
    auto fb = load_feedback_table(cfg, ds.corpus.n);
    m.feats = diet::make_features<float>(ds.corpus, fb);
    m.scorer = diet::make_content_scorer(m.student, m.feats);
  } else {
    m.student = student_from_checkpoint(named, ds.corpus.n, cfg.layers_item,
                                        cfg.layers_bundle);
    auto fb = load_feedback_table(cfg, ds.corpus.n);
    m.feats = diet::make_features<float>(ds.corpus, fb);
    m.scorer = diet::make_student_scorer(m.student, m.feats);
  }
  return m;
}

}  // namespace

int cmd_eval(const ExperimentConfig& cfg) {
  auto ds = load_dataset_checked(cfg);
  auto split = corpus::split_bundles(ds.bundles, derive_seed(cfg.seed, Stage::split));
  const auto test_ids = split.bundles_in(corpus::Split::test);
  auto profile =
      corpus::compute_popularity(ds.interactions, cfg.head_ratio, cfg.tail_ratio);
  const std::string checkpoint_path = cfg.eval_model == "teacher"
                                          ? cfg.resolved_teacher_checkpoint()
                                          : cfg.resolved_student_checkpoint();
  auto model = load_model_for_eval(cfg, ds, checkpoint_path, cfg.eval_model);

  std::vector<corpus::Scenario> scenarios;
  if (cfg.scenario == "all") {
    scenarios = {corpus::Scenario::overall, corpus::Scenario::pop_to_lt,
                 corpus::Scenario::lt_to_pop, corpus::Scenario::pop_to_pop,
                 corpus::Scenario::lt_to_lt};
  } else {
    scenarios = {corpus::scenario_from_name(cfg.scenario)};
  }
  const auto ks = cfg.k_list();
  const int threads = eval_threads();
  std::vector<eval::MetricsReport> reports;
  for (auto s : scenarios) {
    auto cases = scenario_cases(ds.bundles, test_ids, profile, s);
    reports.push_back(eval::evaluate(model.scorer, cases, ks,
                                     corpus::scenario_name(s), threads));
  }
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/reports.json", eval::report_to_json(reports));
  std::string summary = "eval: " + std::string(cfg.eval_model);
  for (const auto& r : reports) {
    summary += " " + r.scenario + "=";
    summary += r.metrics.empty() ? "n/a"
                                 : std::to_string(r.metrics[0].second).substr(0, 6);
  }
  std::printf("%s, wrote %s/reports.json\n", summary.c_str(), cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  auto ds = load_dataset_checked(cfg);
  auto split = corpus::split_bundles(ds.bundles, derive_seed(cfg.seed, Stage::split));
  const auto test_ids = split.bundles_in(corpus::Split::test);
  if (cfg.backbone_checkpoint.empty())
    throw ConfigError("sweep: set backbone_checkpoint to a student trained with distill=none");
  auto backbone =
      load_model_for_eval(cfg, ds, cfg.backbone_checkpoint, "student");
  auto diet_model =
      load_model_for_eval(cfg, ds, cfg.resolved_student_checkpoint(), "student");
  auto points = eval::popularity_sweep(backbone.scorer, diet_model.scorer,
                                       ds.bundles, test_ids, ds.interactions,
                                       cfg.ratio_list(), cfg.k_list(),
                                       eval_threads());
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/sweep.json", eval::sweep_to_json(points));
  std::string summary = "sweep:";
  char buf[64];
  for (const auto& p : points) {
    if (p.has_improvement)
      std::snprintf(buf, sizeof(buf), " r%.2g:%+.1f%%", p.ratio, p.improvement_pct);
    else
      std::snprintf(buf, sizeof(buf), " r%.2g:n/a", p.ratio);
    summary += buf;
  }
  std::printf("%s, wrote %s/sweep.json\n", summary.c_str(), cfg.out_dir.c_str());
  return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
  auto ds = load_dataset_checked(cfg);
  auto split = corpus::split_bundles(ds.bundles, derive_seed(cfg.seed, Stage::split));
  const auto test_ids = split.bundles_in(corpus::Split::test);
  auto profile =
      corpus::compute_popularity(ds.interactions, cfg.head_ratio, cfg.tail_ratio);
  auto model = load_model_for_eval(cfg, ds, cfg.resolved_student_checkpoint(),
                                   "student");

  auto overall_cases =
      scenario_cases(ds.bundles, test_ids, profile, corpus::Scenario::overall);
  auto hist = eval::score_distribution(model.scorer, overall_cases, profile);
  fs::create_directories(cfg.out_dir);
  write_file(cfg.out_dir + "/score_distribution.csv", eval::histogram_to_csv(hist));

  auto pop2lt_cases =
      scenario_cases(ds.bundles, test_ids, profile, corpus::Scenario::pop_to_lt);
  const int n_reports =
      std::min<int>(cfg.report_cases, static_cast<int>(pop2lt_cases.size()));
  for (int i = 0; i < n_reports; ++i) {
    auto rows = eval::case_report(model.scorer, pop2lt_cases[i], 5, profile,
                                  ds.corpus.items);
    write_file(cfg.out_dir + "/case_report_" + std::to_string(i) + ".csv",
               eval::case_report_to_csv(rows));
  }
  std::printf("report: wrote score_distribution.csv and %d case reports to %s\n",
              n_reports, cfg.out_dir.c_str());
  return 0;
}

}  // namespace bundleforge::cli
