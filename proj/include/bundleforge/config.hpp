#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bundleforge/diet.hpp"

namespace bundleforge::cli {

// Flat key=value experiment configuration. Unknown keys are rejected;
// defaults follow the documented recipe (d = 64, T = 2, lambda = 1,
// beta = 1e-5). All stage seeds derive from the one root seed.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string data_dir;  // empty: resolved as <out_dir>/dataset
  std::string out_dir = "out";

  // model / training
  int d = 64;
  int layers_item = 1;
  int layers_bundle = 1;
  double temperature = 2.0;
  double lambda = 1.0;
  double beta = 1e-5;
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 150;
  int patience = 20;
  int cases_per_bundle = 1;
  std::string distill = "logits";
  std::string kd_direction = "teacher_to_student";
  std::string fd_similarity = "cosine";
  std::string ablation = "full";

  // evaluation
  double head_ratio = 0.3;
  double tail_ratio = 0.3;
  std::string scenario = "all";
  std::string ks = "20,40";
  std::string eval_model = "student";
  std::string sweep_ratios = "0.5,0.4,0.3,0.2,0.1";
  int report_cases = 3;

  // synthetic generator
  int n_items = 500;
  int n_users = 2000;
  int n_bundles = 1500;
  int bundle_min = 3;
  int bundle_max = 7;
  double zipf_exponent = 1.2;
  int d_t = 48;
  int d_m = 32;
  int n_themes = 12;
  int latent_dim = 12;
  double z_spread = 1.0;
  double proximity_tau = 0.5;
  double feature_noise = 0.45;
  double promo_decile_frac = 0.30;
  double promo_wide_frac = 0.25;
  int promo_head_max = 2;
  int promo_tail_max = 4;
  double organic_pop_exponent = 0.7;
  double theme_boost = 3.0;
  int user_min_items = 6;
  int user_max_items = 14;

  // feedback pre-extraction
  int fb_dim = 64;
  int fb_layers = 2;
  int fb_epochs = 30;
  double fb_lr = 0.01;
  int fb_neg_per_pos = 1;
  int fb_batch = 2048;
  double fb_reg = 1e-4;

  // artifact paths (empty: resolved under out_dir)
  std::string teacher_checkpoint;
  std::string student_checkpoint;
  std::string backbone_checkpoint;

  std::string resolved_data_dir() const {
    return data_dir.empty() ? out_dir + "/dataset" : data_dir;
  }
  std::string resolved_teacher_checkpoint() const {
    return teacher_checkpoint.empty() ? out_dir + "/teacher.bndc" : teacher_checkpoint;
  }
  std::string resolved_student_checkpoint() const {
    return student_checkpoint.empty() ? out_dir + "/student.bndc" : student_checkpoint;
  }

  corpus::SynthConfig synth_config() const;
  diet::TrainConfig train_config() const;
  std::vector<int> k_list() const;
  std::vector<double> ratio_list() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin);
std::string dump_config(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

}  // namespace bundleforge::cli
