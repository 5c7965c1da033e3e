#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bundleforge/corpus.hpp"
#include "bundleforge/encoder.hpp"
#include "bundleforge/optim.hpp"
#include "bundleforge/tensor.hpp"

namespace bundleforge::diet {

enum class DistillMode { none, logits, feature, both };
enum class KdDirection { teacher_to_student, student_to_teacher };
enum class FdSimilarity { cosine, dot };
enum class AblationVariant { full, wo_ui, wo_mm, wo_bi };

DistillMode distill_from_name(const std::string& name);
const char* distill_name(DistillMode m);
AblationVariant ablation_from_name(const std::string& name);
const char* ablation_name(AblationVariant v);

struct TrainConfig {
  int d = 64;
  int layers_item = 1;    // L
  int layers_bundle = 1;  // Z
  float temperature = 2.0f;
  float lambda = 1.0f;
  float beta = 1e-5f;
  float lr = 1e-3f;
  int batch_size = 256;
  int epochs = 150;
  int patience = 20;
  int cases_per_bundle = 1;  // training cases drawn per bundle per epoch
  std::uint64_t seed = 42;
  DistillMode distill = DistillMode::logits;
  KdDirection kd_direction = KdDirection::teacher_to_student;
  FdSimilarity fd_similarity = FdSimilarity::cosine;
  AblationVariant ablation = AblationVariant::full;
};

// Item features lifted into tensors once; feedback rows stay constants
// (never tracked), which is what keeps them frozen downstream.
template <class T>
struct Features {
  num::Tensor<T> text;      // n x d_t
  num::Tensor<T> media;     // n x d_m
  num::Tensor<T> feedback;  // n x d_p
  int n = 0;
};

template <class T>
num::Tensor<T> tensor_from_features(const corpus::FeatureMatrix& f) {
  num::Tensor<T> t(f.n, f.dim);
  for (std::size_t i = 0; i < f.data.size(); ++i)
    t.raw_values()[i] = static_cast<T>(f.data[i]);
  return t;
}

template <class T>
Features<T> make_features(const corpus::ItemCorpus& corpus,
                          const corpus::FeatureMatrix& feedback_table) {
  Features<T> f;
  f.text = tensor_from_features<T>(corpus.text);
  f.media = tensor_from_features<T>(corpus.media);
  f.feedback = tensor_from_features<T>(feedback_table);
  f.n = corpus.n;
  if (f.feedback.rows() != corpus.n)
    throw ShapeError("feedback table has " + std::to_string(f.feedback.rows()) +
                     " rows for " + std::to_string(corpus.n) + " items");
  return f;
}

// ---------------------------------------------------------------------------
// PCD teacher: bundle-level item embeddings plus one bundle attention stack.
// It never touches user-item data or content features.
// ---------------------------------------------------------------------------

template <class T>
struct TeacherState {
  num::Tensor<T> item_embed;  // V_t, n x d
  encoder::AttentionStack<T> bundle_stack;
  bool frozen = false;

  static TeacherState init(int n, int d, int layers, std::uint64_t seed) {
    TeacherState t;
    t.item_embed = num::xavier_init<T>(n, d, derive_seed(seed, 0x74567454ULL));
    t.bundle_stack =
        encoder::AttentionStack<T>::init(d, layers, derive_seed(seed, 0x74427354ULL));
    return t;
  }

  std::vector<std::pair<std::string, num::Tensor<T>>> named_tensors() const {
    return {{"teacher.item_embed", item_embed},
            {"teacher.bundle.w_key", bundle_stack.w_key},
            {"teacher.bundle.w_query", bundle_stack.w_query}};
  }

  num::ParamTable<T> params() const {
    num::ParamTable<T> p;
    for (auto& [name, t] : named_tensors()) p.add(name, t);
    return p;
  }

  void freeze() {
    for (auto& [name, t] : named_tensors()) t.set_requires_grad(false);
    frozen = true;
  }
};

template <class T>
struct TeacherOut {
  num::Tensor<T> logits;       // 1 x n
  num::Tensor<T> bundle_repr;  // 1 x d (e_b^t)
};

template <class T>
TeacherOut<T> pcd_forward(const std::vector<int>& query,
                          const TeacherState<T>& teacher) {
  if (query.empty()) throw ContractError("pcd_forward: empty query set");
  auto e_b = encoder::encode_bundle(num::take_rows(teacher.item_embed, query),
                                    teacher.bundle_stack);
  return {encoder::score_all(e_b, teacher.item_embed), e_b};
}

// ---------------------------------------------------------------------------
// UBT student
// ---------------------------------------------------------------------------

template <class T>
struct StudentState {
  num::Tensor<T> map_text;   // d_t x d
  num::Tensor<T> map_media;  // d_m x d
  encoder::FusionParams<T> fusion;
  encoder::AttentionStack<T> item_stack;      // L layers
  encoder::AttentionStack<T> bundle_stack;    // Z layers, general path
  encoder::AttentionStack<T> modality_stack;  // Z layers, content path
  AblationVariant ablation = AblationVariant::full;

  bool has_content() const { return ablation != AblationVariant::wo_mm; }
  bool has_feedback() const { return ablation != AblationVariant::wo_ui; }
  bool has_embed() const { return ablation != AblationVariant::wo_bi; }

  static StudentState init(int n, int d, int d_t, int d_m, int d_p, int layers_item,
                           int layers_bundle, AblationVariant ablation,
                           std::uint64_t seed) {
    StudentState s;
    s.ablation = ablation;
    if (s.has_content()) {
      s.map_text = num::xavier_init<T>(d_t, d, derive_seed(seed, 0x6D547854ULL));
      s.map_media = num::xavier_init<T>(d_m, d, derive_seed(seed, 0x6D4D6454ULL));
      s.fusion.w_content = num::xavier_init<T>(d, d, derive_seed(seed, 0x57635754ULL));
      s.modality_stack = encoder::AttentionStack<T>::init(
          d, layers_bundle, derive_seed(seed, 0x6D537454ULL));
    }
    if (s.has_feedback())
      s.fusion.w_feedback = num::xavier_init<T>(d_p, d, derive_seed(seed, 0x57705754ULL));
    if (s.has_embed())
      s.fusion.item_embed = num::xavier_init<T>(n, d, derive_seed(seed, 0x56735654ULL));
    s.item_stack = encoder::AttentionStack<T>::init(
        d, layers_item, derive_seed(seed, 0x69537454ULL));
    s.bundle_stack = encoder::AttentionStack<T>::init(
        d, layers_bundle, derive_seed(seed, 0x62537454ULL));
    return s;
  }

  std::vector<std::pair<std::string, num::Tensor<T>>> named_tensors() const {
    std::vector<std::pair<std::string, num::Tensor<T>>> out;
    if (has_content()) {
      out.emplace_back("student.map_text", map_text);
      out.emplace_back("student.map_media", map_media);
      out.emplace_back("student.fusion.w_content", fusion.w_content);
      out.emplace_back("student.modality.w_key", modality_stack.w_key);
      out.emplace_back("student.modality.w_query", modality_stack.w_query);
    }
    if (has_feedback())
      out.emplace_back("student.fusion.w_feedback", fusion.w_feedback);
    if (has_embed())
      out.emplace_back("student.fusion.item_embed", fusion.item_embed);
    out.emplace_back("student.item.w_key", item_stack.w_key);
    out.emplace_back("student.item.w_query", item_stack.w_query);
    out.emplace_back("student.bundle.w_key", bundle_stack.w_key);
    out.emplace_back("student.bundle.w_query", bundle_stack.w_query);
    return out;
  }

  num::ParamTable<T> params() const {
    num::ParamTable<T> p;
    for (auto& [name, t] : named_tensors()) p.add(name, t);
    return p;
  }
};

// Shared per-snapshot forward state: the item matrices are computed once and
// reused by every case against the same parameters.
template <class T>
struct UbtForward {
  num::Tensor<T> items;    // n x d, main-path representations f_i
  num::Tensor<T> content;  // n x d, content representations c_i (Eq. 6 path)
  const StudentState<T>* student = nullptr;

  static UbtForward build(const StudentState<T>& s, const Features<T>& feats,
                          bool need_content_path) {
    UbtForward ctx;
    ctx.student = &s;
    num::Tensor<T> content_rows, feedback_rows;
    if (s.has_content()) {
      auto mapped_text = num::matmul(feats.text, s.map_text);
      auto mapped_media = num::matmul(feats.media, s.map_media);
      ctx.content = num::scale(num::add(mapped_text, mapped_media), T(0.5));
      content_rows = num::matmul(ctx.content, s.fusion.w_content);
    } else if (need_content_path) {
      throw ConfigError("content path requested but the wo_mm ablation removes it");
    }
    if (s.has_feedback())
      feedback_rows = num::matmul(feats.feedback, s.fusion.w_feedback);

    std::vector<num::Tensor<T>> reprs;
    reprs.reserve(feats.n);
    for (int i = 0; i < feats.n; ++i) {
      std::vector<num::Tensor<T>> rows;
      if (s.has_content()) rows.push_back(num::row(content_rows, i));
      if (s.has_feedback()) rows.push_back(num::row(feedback_rows, i));
      if (s.has_embed()) rows.push_back(num::row(s.fusion.item_embed, i));
      reprs.push_back(
          encoder::encode_item(num::concat_rows(rows), s.item_stack));
    }
    ctx.items = num::concat_rows(reprs);
    return ctx;
  }

  struct CaseOut {
    num::Tensor<T> main_logits;     // 1 x n
    num::Tensor<T> content_logits;  // 1 x n (when the content path exists)
    num::Tensor<T> bundle_repr;     // e_b, main path
    num::Tensor<T> content_repr;    // e_bc, content path
  };

  CaseOut forward_case(const std::vector<int>& query, bool with_content) const {
    if (query.empty()) throw ContractError("ubt forward: empty query set");
    CaseOut out;
    out.bundle_repr = encoder::encode_bundle(num::take_rows(items, query),
                                             student->bundle_stack);
    out.main_logits = encoder::score_all(out.bundle_repr, items);
    if (with_content) {
      if (!student->has_content())
        throw ConfigError("content path requested but the wo_mm ablation removes it");
      out.content_repr = encoder::encode_bundle(num::take_rows(content, query),
                                                student->modality_stack);
      out.content_logits = encoder::score_all(out.content_repr, content);
    }
    return out;
  }
};

// Convenience single-case forward matching the module contract.
template <class T>
typename UbtForward<T>::CaseOut ubt_forward(const std::vector<int>& query,
                                            const StudentState<T>& student,
                                            const Features<T>& feats) {
  auto ctx = UbtForward<T>::build(student, feats, student.has_content());
  return ctx.forward_case(query, student.has_content());
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Negative log-likelihood over the item axis, normalized by batch size times
// the item-corpus size.
template <class T>
num::Tensor<T> construction_loss(const std::vector<num::Tensor<T>>& logits_batch,
                                 const std::vector<std::vector<int>>& target_sets) {
  if (logits_batch.empty())
    throw ContractError("construction_loss: empty batch");
  if (logits_batch.size() != target_sets.size())
    throw ContractError("construction_loss: batch size mismatch");
  const int n = logits_batch[0].cols();
  auto stacked = num::concat_rows(logits_batch);
  auto logp = num::log_softmax_rows(stacked);
  num::Tensor<T> mask(static_cast<int>(target_sets.size()), n);
  for (std::size_t b = 0; b < target_sets.size(); ++b) {
    if (target_sets[b].empty())
      throw ContractError("construction_loss: empty target set in batch");
    for (int i : target_sets[b])
      mask.set(static_cast<int>(b), i, T(1));
  }
  const T norm = T(-1) / (static_cast<T>(target_sets.size()) * static_cast<T>(n));
  return num::scale(num::sum(num::mul(logp, mask)), norm);
}

// Tempered soft-target distillation: KL between the student's tempered
// log distribution and the teacher's tempered distribution, averaged over
// the batch and scaled by T^2. Teacher logits enter as constants.
template <class T>
num::Tensor<T> logits_distill_loss(
    const std::vector<num::Tensor<T>>& student_logits,
    const std::vector<num::Tensor<T>>& teacher_logits, T temperature,
    KdDirection direction = KdDirection::teacher_to_student) {
  if (temperature <= T(0))
    throw ConfigError("distillation temperature must be positive");
  if (student_logits.empty() || student_logits.size() != teacher_logits.size())
    throw ContractError("logits_distill_loss: batch mismatch");
  std::vector<num::Tensor<T>> detached;
  detached.reserve(teacher_logits.size());
  for (const auto& t : teacher_logits) detached.push_back(num::detach(t));
  const T inv_temp = T(1) / temperature;
  auto student_log = num::log_softmax_rows(
      num::scale(num::concat_rows(student_logits), inv_temp));
  auto teacher_scaled = num::scale(num::concat_rows(detached), inv_temp);
  num::Tensor<T> kl;
  if (direction == KdDirection::teacher_to_student) {
    kl = num::kl_div(student_log, num::softmax_rows(teacher_scaled));
  } else {
    kl = num::kl_div_from_log(student_log, num::log_softmax_rows(teacher_scaled));
  }
  const T scale_factor =
      temperature * temperature / static_cast<T>(student_logits.size());
  return num::scale(kl, scale_factor);
}

// Feature-level distillation: mean over the batch of 1 - sim(e_b^t, e_bc^s),
// with the teacher side detached.
template <class T>
num::Tensor<T> feature_distill_loss(
    const std::vector<num::Tensor<T>>& teacher_reprs,
    const std::vector<num::Tensor<T>>& student_reprs,
    FdSimilarity sim = FdSimilarity::cosine) {
  if (teacher_reprs.empty() || teacher_reprs.size() != student_reprs.size())
    throw ContractError("feature_distill_loss: batch mismatch");
  num::Tensor<T> acc = num::Tensor<T>::scalar(T(0));
  for (std::size_t i = 0; i < teacher_reprs.size(); ++i) {
    auto t = num::detach(teacher_reprs[i]);
    num::Tensor<T> s =
        sim == FdSimilarity::cosine
            ? num::cosine_sim(t, student_reprs[i])
            : num::matmul_nt(t, student_reprs[i]);
    acc = num::add(acc, num::sub(num::Tensor<T>::scalar(T(1)), s));
  }
  return num::scale(acc, T(1) / static_cast<T>(teacher_reprs.size()));
}

// L_b + lambda L_d + beta sum ||theta||^2. Terms with zero weight are not
// added, so the lambda = beta = 0 case is construction loss exactly.
template <class T>
num::Tensor<T> total_loss(const num::Tensor<T>& l_b, const num::Tensor<T>& l_d,
                          T lambda, T beta, const num::ParamTable<T>& params) {
  num::Tensor<T> loss = l_b;
  if (lambda != T(0) && l_d.defined())
    loss = num::add(loss, num::scale(l_d, lambda));
  if (beta != T(0)) {
    num::Tensor<T> reg;
    for (const auto& [name, t] : params) {
      auto term = num::sumsq(t);
      reg = reg.defined() ? num::add(reg, term) : term;
    }
    if (reg.defined()) loss = num::add(loss, num::scale(reg, beta));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double l_b = 0.0;
  double l_d = 0.0;
  double val_recall20 = 0.0;
};

struct TeacherResult {
  TeacherState<float> state;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_recall20 = 0.0;
};

struct StudentResult {
  StudentState<float> state;
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_recall20 = 0.0;
};

using Scorer = std::function<std::vector<float>(const corpus::BundlingCase&)>;

TeacherResult train_teacher(int n_items, const corpus::BundleTable& bundles,
                            const corpus::SplitAssignment& split,
                            const TrainConfig& config);

StudentResult train_student(const Features<float>& feats,
                            const corpus::BundleTable& bundles,
                            const corpus::SplitAssignment& split,
                            const TeacherState<float>* teacher,
                            const TrainConfig& config);

Scorer make_teacher_scorer(const TeacherState<float>& teacher);
// Holds a prebuilt forward snapshot; the student state must outlive it.
Scorer make_student_scorer(const StudentState<float>& student,
                           const Features<float>& feats);
// Scores with the content path only (Eq.-6-style logits); diagnostic view
// of what the distillation target taught the modality mappings.
Scorer make_content_scorer(const StudentState<float>& student,
                           const Features<float>& feats);

}  // namespace bundleforge::diet
