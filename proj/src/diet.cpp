#include "bundleforge/diet.hpp"

#include <algorithm>
#include <memory>

#include "bundleforge/eval.hpp"
#include "bundleforge/rng.hpp"

namespace bundleforge::diet {

using num::Tensor;

DistillMode distill_from_name(const std::string& name) {
  if (name == "none") return DistillMode::none;
  if (name == "logits") return DistillMode::logits;
  if (name == "feature") return DistillMode::feature;
  if (name == "both") return DistillMode::both;
  throw ConfigError("unknown distill mode '" + name +
                    "' (expected logits|feature|both|none)");
}

const char* distill_name(DistillMode m) {
  switch (m) {
    case DistillMode::none: return "none";
    case DistillMode::logits: return "logits";
    case DistillMode::feature: return "feature";
    case DistillMode::both: return "both";
  }
  return "unknown";
}

AblationVariant ablation_from_name(const std::string& name) {
  if (name == "full") return AblationVariant::full;
  if (name == "wo_ui") return AblationVariant::wo_ui;
  if (name == "wo_mm") return AblationVariant::wo_mm;
  if (name == "wo_bi") return AblationVariant::wo_bi;
  throw ConfigError("unknown ablation variant '" + name +
                    "' (expected full|wo_ui|wo_mm|wo_bi)");
}

const char* ablation_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::wo_ui: return "wo_ui";
    case AblationVariant::wo_mm: return "wo_mm";
    case AblationVariant::wo_bi: return "wo_bi";
  }
  return "unknown";
}

namespace {

std::vector<corpus::BundlingCase> holdout_cases(const corpus::BundleTable& bundles,
                                                const std::vector<int>& ids) {
  std::vector<corpus::BundlingCase> out;
  out.reserve(ids.size());
  for (int b : ids)
    out.push_back(corpus::make_holdout_case(bundles.items[b], b));
  return out;
}

double val_recall20(const Scorer& scorer,
                    const std::vector<corpus::BundlingCase>& cases) {
  if (cases.empty()) return 0.0;
  auto report = eval::evaluate(scorer, cases, {20}, "val", 1);
  return report.metrics[0].second;
}

// Early stopping: halt once validation Recall@20 has not improved for
// `patience` epochs and keep the final parameters. With no validation
// bundles the loop just runs every epoch.
struct EarlyStop {
  int patience = 20;
  bool enabled = true;
  double best = -1.0;
  int best_epoch = -1;
  int since_best = 0;

  // Returns true when training should stop.
  bool observe(int epoch, double recall) {
    if (!enabled) return false;
    if (recall > best) {
      best = recall;
      best_epoch = epoch;
      since_best = 0;
      return false;
    }
    return ++since_best >= patience;
  }
};

}  // namespace

TeacherResult train_teacher(int n_items, const corpus::BundleTable& bundles,
                            const corpus::SplitAssignment& split,
                            const TrainConfig& config) {
  const std::uint64_t stage_seed = derive_seed(config.seed, Stage::teacher);
  Rng rng(derive_seed(stage_seed, 0x74726E54ULL));

  TeacherResult result;
  result.state = TeacherState<float>::init(n_items, config.d,
                                           config.layers_bundle, stage_seed);
  auto params = result.state.params();
  auto adam = num::AdamState<float>::with_lr(config.lr);

  auto train_ids = split.bundles_in(corpus::Split::train);
  if (train_ids.empty()) throw ContractError("train_teacher: empty train split");
  const auto val_cases = holdout_cases(bundles, split.bundles_in(corpus::Split::val));
  auto scorer = make_teacher_scorer(result.state);

  EarlyStop stop;
  stop.patience = config.patience;
  stop.enabled = !val_cases.empty();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_lb = 0.0;
    std::size_t seen = 0;
    for (int rep = 0; rep < std::max(1, config.cases_per_bundle); ++rep) {
      rng.shuffle(train_ids);
      for (std::size_t start = 0; start < train_ids.size();
           start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t stop_idx = std::min(
            train_ids.size(), start + static_cast<std::size_t>(config.batch_size));
        std::vector<Tensor<float>> logits;
        std::vector<std::vector<int>> targets;
        for (std::size_t i = start; i < stop_idx; ++i) {
          const int b = train_ids[i];
          auto c = corpus::make_training_case(bundles.items[b], b, rng);
          logits.push_back(pcd_forward(c.query, result.state).logits);
          targets.push_back(std::move(c.target));
        }
        // The teacher optimizes the construction loss alone; the combined
        // objective with the L2 term belongs to the student.
        auto l_b = construction_loss(logits, targets);
        num::backward(l_b);
        num::adam_step(params, adam);
        epoch_lb += static_cast<double>(l_b.item()) * static_cast<double>(logits.size());
        seen += logits.size();
      }
    }
    const double recall = val_recall20(scorer, val_cases);
    result.log.push_back({epoch, epoch_lb / static_cast<double>(seen), 0.0, recall});
    if (stop.observe(epoch, recall)) break;
  }
  result.best_epoch = stop.best_epoch;
  result.best_val_recall20 = std::max(0.0, stop.best);
  result.state.freeze();
  return result;
}

StudentResult train_student(const Features<float>& feats,
                            const corpus::BundleTable& bundles,
                            const corpus::SplitAssignment& split,
                            const TeacherState<float>* teacher,
                            const TrainConfig& config) {
  const bool distilling = config.distill != DistillMode::none;
  if (distilling && teacher == nullptr)
    throw ConfigError("distill mode '" + std::string(distill_name(config.distill)) +
                      "' requires a trained teacher; run train-teacher first");
  if (distilling && config.ablation == AblationVariant::wo_mm)
    throw ConfigError("the wo_mm ablation removes the content path needed for distillation");
  if (distilling && teacher != nullptr && !teacher->frozen)
    throw ContractError("train_student: teacher must be frozen");
  const bool need_logits = config.distill == DistillMode::logits ||
                           config.distill == DistillMode::both;
  const bool need_feature = config.distill == DistillMode::feature ||
                            config.distill == DistillMode::both;

  const std::uint64_t stage_seed = derive_seed(config.seed, Stage::student);
  Rng rng(derive_seed(stage_seed, 0x74726E53ULL));

  StudentResult result;
  result.state = StudentState<float>::init(
      feats.n, config.d, feats.text.cols(), feats.media.cols(),
      feats.feedback.cols(), config.layers_item, config.layers_bundle,
      config.ablation, stage_seed);
  auto params = result.state.params();
  auto adam = num::AdamState<float>::with_lr(config.lr);

  auto train_ids = split.bundles_in(corpus::Split::train);
  if (train_ids.empty()) throw ContractError("train_student: empty train split");
  const auto val_cases = holdout_cases(bundles, split.bundles_in(corpus::Split::val));

  EarlyStop stop;
  stop.patience = config.patience;
  stop.enabled = !val_cases.empty();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_lb = 0.0, epoch_ld = 0.0;
    std::size_t seen = 0;
    for (int rep = 0; rep < std::max(1, config.cases_per_bundle); ++rep) {
    rng.shuffle(train_ids);
    for (std::size_t start = 0; start < train_ids.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop_idx = std::min(
          train_ids.size(), start + static_cast<std::size_t>(config.batch_size));
      auto ctx = UbtForward<float>::build(result.state, feats, distilling);
      std::vector<Tensor<float>> main_logits, content_logits, teacher_logits;
      std::vector<Tensor<float>> teacher_reprs, student_reprs;
      std::vector<std::vector<int>> targets;
      for (std::size_t i = start; i < stop_idx; ++i) {
        const int b = train_ids[i];
        auto c = corpus::make_training_case(bundles.items[b], b, rng);
        auto out = ctx.forward_case(c.query, distilling);
        main_logits.push_back(out.main_logits);
        if (distilling) {
          num::NoGradGuard ng;
          auto t_out = pcd_forward(c.query, *teacher);
          if (need_logits) {
            content_logits.push_back(out.content_logits);
            teacher_logits.push_back(t_out.logits);
          }
          if (need_feature) {
            student_reprs.push_back(out.content_repr);
            teacher_reprs.push_back(t_out.bundle_repr);
          }
        }
        targets.push_back(std::move(c.target));
      }
      auto l_b = construction_loss(main_logits, targets);
      Tensor<float> l_d;
      if (need_logits)
        l_d = logits_distill_loss(content_logits, teacher_logits,
                                  config.temperature, config.kd_direction);
      if (need_feature) {
        auto l_f = feature_distill_loss(teacher_reprs, student_reprs,
                                        config.fd_similarity);
        l_d = l_d.defined() ? num::add(l_d, l_f) : l_f;
      }
      auto loss = total_loss(l_b, l_d, distilling ? config.lambda : 0.0f,
                             config.beta, params);
      num::backward(loss);
      num::adam_step(params, adam);
      epoch_lb += static_cast<double>(l_b.item()) * static_cast<double>(targets.size());
      if (l_d.defined())
        epoch_ld += static_cast<double>(l_d.item()) * static_cast<double>(targets.size());
      seen += targets.size();
    }
    }
    const auto scorer = make_student_scorer(result.state, feats);
    const double recall = val_recall20(scorer, val_cases);
    result.log.push_back({epoch, epoch_lb / static_cast<double>(seen),
                          epoch_ld / static_cast<double>(seen), recall});
    if (stop.observe(epoch, recall)) break;
  }
  result.best_epoch = stop.best_epoch;
  result.best_val_recall20 = std::max(0.0, stop.best);
  return result;
}

Scorer make_teacher_scorer(const TeacherState<float>& teacher) {
  TeacherState<float> state = teacher;  // shared tensor handles
  return [state](const corpus::BundlingCase& c) {
    num::NoGradGuard ng;
    return pcd_forward(c.query, state).logits.values();
  };
}

Scorer make_student_scorer(const StudentState<float>& student,
                           const Features<float>& feats) {
  auto ctx = std::make_shared<UbtForward<float>>();
  {
    num::NoGradGuard ng;
    *ctx = UbtForward<float>::build(student, feats, false);
  }
  return [ctx](const corpus::BundlingCase& c) {
    num::NoGradGuard ng;
    return ctx->forward_case(c.query, false).main_logits.values();
  };
}

Scorer make_content_scorer(const StudentState<float>& student,
                           const Features<float>& feats) {
  auto ctx = std::make_shared<UbtForward<float>>();
  {
    num::NoGradGuard ng;
    *ctx = UbtForward<float>::build(student, feats, true);
  }
  return [ctx](const corpus::BundlingCase& c) {
    num::NoGradGuard ng;
    return ctx->forward_case(c.query, true).content_logits.values();
  };
}

}  // namespace bundleforge::diet
