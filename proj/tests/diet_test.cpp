#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "bundleforge/diet.hpp"
#include "bundleforge/feedback.hpp"
#include "support/gradcheck.hpp"
#include "support/model_oracle.hpp"

using namespace bundleforge;
using num::Tensor;

namespace {

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

template <class T>
Tensor<T> random_tensor(Rng& rng, int r, int c, bool requires_grad = false) {
  Tensor<T> t(r, c, requires_grad);
  for (auto& v : t.raw_values()) v = static_cast<T>(rng.uniform() * 2.0 - 1.0);
  return t;
}

testsupport::Mat to_mat(const Tensor<float>& t) {
  testsupport::Mat m(t.rows(), std::vector<double>(t.cols()));
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

corpus::FeatureMatrix random_features(Rng& rng, int n, int dim) {
  corpus::FeatureMatrix f;
  f.n = n;
  f.dim = dim;
  f.data.resize(static_cast<std::size_t>(n) * dim);
  for (auto& v : f.data) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  return f;
}

diet::Features<float> random_feature_set(Rng& rng, int n, int d_t, int d_m,
                                         int d_p) {
  corpus::ItemCorpus c;
  c.n = n;
  c.text = random_features(rng, n, d_t);
  c.media = random_features(rng, n, d_m);
  return diet::make_features<float>(c, random_features(rng, n, d_p));
}

// Small themed corpus for training smoke/direction tests.
struct TinyWorld {
  corpus::SynthData data;
  corpus::SplitAssignment split;
  corpus::FeatureMatrix fb;
  diet::Features<float> feats;
};

TinyWorld tiny_world(std::uint64_t seed, int n_items = 120, int n_users = 400,
                     int n_bundles = 180) {
  corpus::SynthConfig cfg;
  cfg.n_items = n_items;
  cfg.n_users = n_users;
  cfg.n_bundles = n_bundles;
  cfg.d_t = 12;
  cfg.d_m = 10;
  cfg.n_themes = 8;
  cfg.seed = seed;
  TinyWorld w;
  w.data = corpus::synth_generate(cfg);
  w.split = corpus::split_bundles(w.data.bundles, derive_seed(seed, Stage::split));
  feedback::FeedbackConfig fcfg;
  fcfg.dim = 12;
  fcfg.epochs = 8;
  fcfg.seed = derive_seed(seed, Stage::feedback);
  w.fb = feedback::train_feedback(w.data.interactions, fcfg);
  w.feats = diet::make_features<float>(w.data.corpus, w.fb);
  return w;
}

diet::TrainConfig tiny_config(std::uint64_t seed) {
  diet::TrainConfig cfg;
  cfg.d = 16;
  cfg.epochs = 12;
  cfg.patience = 12;
  cfg.batch_size = 64;
  cfg.lr = 5e-3f;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// PCD forward
// ---------------------------------------------------------------------------

TEST_CASE("pcd_forward: orthonormal embeddings score the queried item highest") {
  diet::TeacherState<float> teacher;
  teacher.item_embed = Tensor<float>(4, 4);
  for (int i = 0; i < 4; ++i) teacher.item_embed.set(i, i, 1.0f);
  teacher.bundle_stack = encoder::AttentionStack<float>::init(4, 2, 7);
  auto out = diet::pcd_forward({1}, teacher);
  CHECK(out.logits.cols() == 4);
  for (int i = 0; i < 4; ++i)
    if (i != 1) CHECK(out.logits.at(0, 1) > out.logits.at(0, i));
  CHECK_THROWS_AS(diet::pcd_forward({}, teacher), ContractError);
}

TEST_CASE("pcd_forward: pure function of embeddings, stack and query") {
  Rng rng(3);
  diet::TeacherState<float> teacher;
  teacher.item_embed = random_tensor<float>(rng, 6, 4);
  teacher.bundle_stack = encoder::AttentionStack<float>::init(4, 1, 9);
  auto a = diet::pcd_forward({0, 3}, teacher).logits.values();
  // Anything user-item related changing in the environment cannot reach the
  // teacher: it reads nothing but its own state.
  auto unrelated = random_feature_set(rng, 6, 5, 5, 5);
  auto b = diet::pcd_forward({0, 3}, teacher).logits.values();
  CHECK(bits_equal(a, b));
}

TEST_CASE("pcd_forward: three-item toy matches the hand oracle") {
  diet::TeacherState<float> teacher;
  teacher.item_embed =
      Tensor<float>::from_values(3, 2, {0.5f, -1.0f, 2.0f, 0.25f, -0.75f, 1.5f});
  teacher.bundle_stack.w_key =
      Tensor<float>::from_values(2, 2, {1, 0.5f, -0.5f, 1});
  teacher.bundle_stack.w_query =
      Tensor<float>::from_values(2, 2, {0.75f, 0, 0.25f, -1});
  teacher.bundle_stack.layers = 1;
  auto out = diet::pcd_forward({0, 1}, teacher);

  testsupport::Mat v = to_mat(teacher.item_embed);
  testsupport::Mat query_rows = {v[0], v[1]};
  auto e = testsupport::encode_rows(query_rows, to_mat(teacher.bundle_stack.w_key),
                                    to_mat(teacher.bundle_stack.w_query), 1);
  auto expected = testsupport::score_against(e, v);
  for (int i = 0; i < 3; ++i)
    CHECK(out.logits.at(0, i) == doctest::Approx(expected[i]).epsilon(1e-5));
}

// ---------------------------------------------------------------------------
// UBT forward
// ---------------------------------------------------------------------------

TEST_CASE("ubt_forward: content logits ignore the feedback table and embeddings") {
  Rng rng(5);
  const int n = 8, d = 6;
  auto student = diet::StudentState<float>::init(n, d, 5, 4, 7, 1, 1,
                                                 diet::AblationVariant::full, 11);
  auto feats_a = random_feature_set(rng, n, 5, 4, 7);
  auto feats_b = feats_a;
  feats_b.feedback = random_tensor<float>(rng, n, 7);  // noise replacement

  auto out_a = diet::ubt_forward({1, 4}, student, feats_a);
  auto out_b = diet::ubt_forward({1, 4}, student, feats_b);
  CHECK(out_a.main_logits.cols() == n);
  CHECK(out_a.content_logits.cols() == n);
  CHECK(bits_equal(out_a.content_logits.values(), out_b.content_logits.values()));

  // Perturbing the bundle-level embeddings cannot reach the content path.
  for (auto& v : student.fusion.item_embed.raw_values()) v += 0.37f;
  auto out_c = diet::ubt_forward({1, 4}, student, feats_a);
  CHECK(bits_equal(out_a.content_logits.values(), out_c.content_logits.values()));
}

TEST_CASE("ubt_forward: three-item toy with identity mappings matches the oracle") {
  Rng rng(7);
  const int n = 3, d = 2;
  diet::StudentState<float> student;
  auto identity = Tensor<float>::from_values(2, 2, {1, 0, 0, 1});
  student.map_text = identity;
  student.map_media = identity;
  student.fusion.w_content = identity;
  student.fusion.w_feedback = identity;
  student.fusion.item_embed = random_tensor<float>(rng, n, d);
  student.item_stack = encoder::AttentionStack<float>::init(d, 1, 13);
  student.bundle_stack = encoder::AttentionStack<float>::init(d, 1, 17);
  student.modality_stack = encoder::AttentionStack<float>::init(d, 1, 19);

  diet::Features<float> feats;
  feats.n = n;
  feats.text = random_tensor<float>(rng, n, d);
  feats.media = random_tensor<float>(rng, n, d);
  feats.feedback = random_tensor<float>(rng, n, d);

  auto out = diet::ubt_forward({0, 2}, student, feats);

  // Oracle: content c_i = (t_i + m_i) / 2; fusion rows [c_i, p_i, v_i];
  // item encoding then bundle encodings on both paths.
  testsupport::Mat content(n), items;
  for (int i = 0; i < n; ++i) {
    content[i].resize(d);
    for (int j = 0; j < d; ++j)
      content[i][j] = 0.5 * (feats.text.at(i, j) + feats.media.at(i, j));
  }
  auto ik = to_mat(student.item_stack.w_key);
  auto iq = to_mat(student.item_stack.w_query);
  for (int i = 0; i < n; ++i) {
    testsupport::Mat rows = {content[i],
                             {feats.feedback.at(i, 0), feats.feedback.at(i, 1)},
                             {student.fusion.item_embed.at(i, 0),
                              student.fusion.item_embed.at(i, 1)}};
    items.push_back(testsupport::encode_rows(rows, ik, iq, 1));
  }
  auto e_b = testsupport::encode_rows({items[0], items[2]},
                                      to_mat(student.bundle_stack.w_key),
                                      to_mat(student.bundle_stack.w_query), 1);
  auto main_expected = testsupport::score_against(e_b, items);
  auto e_bc = testsupport::encode_rows({content[0], content[2]},
                                       to_mat(student.modality_stack.w_key),
                                       to_mat(student.modality_stack.w_query), 1);
  auto content_expected = testsupport::score_against(e_bc, content);
  for (int i = 0; i < n; ++i) {
    CHECK(out.main_logits.at(0, i) == doctest::Approx(main_expected[i]).epsilon(1e-4));
    CHECK(out.content_logits.at(0, i) ==
          doctest::Approx(content_expected[i]).epsilon(1e-4));
  }
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

TEST_CASE("construction_loss: uniform logits, one target over n items -> ln(n)/n") {
  const int n = 5;
  std::vector<Tensor<float>> logits{Tensor<float>(1, n)};
  auto loss = diet::construction_loss<float>(logits, {{2}});
  CHECK(loss.item() == doctest::Approx(std::log(5.0) / 5.0));
}

TEST_CASE("construction_loss: dominant target logit drives the loss to zero") {
  auto row = Tensor<float>::from_values(1, 4, {50.0f, 0, 0, 0});
  auto loss = diet::construction_loss<float>({row}, {{0}});
  CHECK(loss.item() < 1e-6f);
}

TEST_CASE("construction_loss: two targets with logits [2,1,0] match the oracle") {
  // Scalar oracle: softmax log-probs of [2,1,0], sum over targets {0,1},
  // normalized by -1/(1*3).
  const double z = std::exp(2.0) + std::exp(1.0) + 1.0;
  const double oracle = -((2.0 - std::log(z)) + (1.0 - std::log(z))) / 3.0;
  auto row = Tensor<float>::from_values(1, 3, {2, 1, 0});
  auto loss = diet::construction_loss<float>({row}, {{0, 1}});
  CHECK(loss.item() == doctest::Approx(oracle).epsilon(1e-5));
  CHECK_THROWS_AS(diet::construction_loss<float>({}, {}), ContractError);
  CHECK_THROWS_AS(diet::construction_loss<float>({row}, {{}}), ContractError);
}

TEST_CASE("logits_distill_loss: identical logits give zero at every temperature") {
  Rng rng(23);
  auto a = random_tensor<float>(rng, 1, 6);
  auto b = num::detach(a);
  for (float t : {1.0f, 2.0f, 3.0f}) {
    auto loss = diet::logits_distill_loss<float>({a}, {b}, t);
    CHECK(std::abs(loss.item()) < 1e-6f);
  }
  CHECK_THROWS_AS(diet::logits_distill_loss<float>({a}, {b}, 0.0f), ConfigError);
}

TEST_CASE("logits_distill_loss: T=1 reduces to mean plain KL over the batch") {
  Rng rng(29);
  std::vector<Tensor<float>> student, teacher;
  double plain = 0.0;
  for (int c = 0; c < 3; ++c) {
    student.push_back(random_tensor<float>(rng, 1, 5));
    teacher.push_back(random_tensor<float>(rng, 1, 5));
    auto lp = num::log_softmax_rows(student.back());
    auto q = num::softmax_rows(teacher.back());
    plain += num::kl_div(lp, q).item();
  }
  auto loss = diet::logits_distill_loss<float>(student, teacher, 1.0f);
  CHECK(loss.item() == doctest::Approx(plain / 3.0).epsilon(1e-6));
}

TEST_CASE("logits_distill_loss: tempered scalar oracle for teacher [2,0,0]") {
  // Oracle: P_t = softmax([1,0,0]), P_s = log softmax([0,0,0]),
  // KL * T^2 with T = 2.
  const double e = std::exp(1.0);
  const double z = e + 2.0;
  double kl = 0.0;
  for (double q : {e / z, 1.0 / z, 1.0 / z}) kl += q * (std::log(q) - std::log(1.0 / 3.0));
  const double oracle = kl * 4.0;
  auto teacher = Tensor<float>::from_values(1, 3, {2, 0, 0});
  auto student = Tensor<float>::from_values(1, 3, {0, 0, 0});
  auto loss = diet::logits_distill_loss<float>({student}, {teacher}, 2.0f);
  CHECK(loss.item() == doctest::Approx(oracle).epsilon(1e-5));
}

TEST_CASE("logits_distill_loss: gradient reaches the student only") {
  Rng rng(31);
  auto student = random_tensor<double>(rng, 1, 4, true);
  auto teacher = random_tensor<double>(rng, 1, 4, true);
  auto loss_fn = [&]() {
    return diet::logits_distill_loss<double>({student}, {teacher}, 2.0);
  };
  auto rep = testsupport::check_gradients({student}, loss_fn);
  CHECK(rep.max_rel_error < 1e-3);
  auto loss = loss_fn();
  num::backward(loss);
  CHECK_FALSE(teacher.has_grad());
}

TEST_CASE("feature_distill_loss: identical, antiparallel and random pairs") {
  auto a = Tensor<float>::from_values(1, 3, {1, 2, 3});
  auto b = Tensor<float>::from_values(1, 3, {-1, -2, -3});
  CHECK(diet::feature_distill_loss<float>({a}, {a}).item() ==
        doctest::Approx(0.0).epsilon(1e-6));
  CHECK(diet::feature_distill_loss<float>({a}, {b}).item() ==
        doctest::Approx(2.0).epsilon(1e-6));

  Rng rng(37);
  auto x = random_tensor<float>(rng, 1, 5);
  auto y = random_tensor<float>(rng, 1, 5);
  double xy = 0, xx = 0, yy = 0;
  for (int j = 0; j < 5; ++j) {
    xy += static_cast<double>(x.at(0, j)) * y.at(0, j);
    xx += static_cast<double>(x.at(0, j)) * x.at(0, j);
    yy += static_cast<double>(y.at(0, j)) * y.at(0, j);
  }
  const double oracle = 1.0 - xy / std::sqrt(xx * yy);
  CHECK(diet::feature_distill_loss<float>({x}, {y}).item() ==
        doctest::Approx(oracle).epsilon(1e-5));

  auto zero = Tensor<float>(1, 3);
  CHECK(diet::feature_distill_loss<float>({zero}, {a}).item() ==
        doctest::Approx(1.0));
}

TEST_CASE("total_loss: decomposition and arithmetic") {
  num::ParamTable<float> params;
  params.add("w", Tensor<float>::from_values(1, 2, {3, 4}, true));
  auto l_b = Tensor<float>::scalar(0.5f);
  auto l_d = Tensor<float>::scalar(0.25f);

  auto bare = diet::total_loss<float>(l_b, l_d, 0.0f, 0.0f, params);
  CHECK(bare.item() == 0.5f);  // exactly construction loss
  CHECK(bare.node_id() == l_b.node_id());

  auto combined = diet::total_loss<float>(l_b, l_d, 1.0f, 0.0f, params);
  CHECK(combined.item() == doctest::Approx(0.75f));

  auto with_reg = diet::total_loss<float>(l_b, Tensor<float>{}, 0.0f, 1e-5f, params);
  CHECK(with_reg.item() == doctest::Approx(0.5f + 25e-5f));
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TEST_CASE("train_teacher: beats the random-ranking baseline on themed data") {
  auto world = tiny_world(101, 240, 700, 260);
  auto cfg = tiny_config(101);
  cfg.epochs = 30;
  cfg.patience = 30;
  auto result = diet::train_teacher(world.data.corpus.n, world.data.bundles,
                                    world.split, cfg);
  const double random_baseline = 20.0 / world.data.corpus.n;
  MESSAGE("teacher val recall@20: " << result.best_val_recall20
                                    << " vs baseline " << random_baseline);
  CHECK(result.best_val_recall20 >= 5.0 * random_baseline);
  CHECK(result.state.frozen);
}

TEST_CASE("train_teacher: zero epochs yields a frozen random teacher") {
  auto world = tiny_world(103);
  auto cfg = tiny_config(103);
  cfg.epochs = 0;
  auto result = diet::train_teacher(world.data.corpus.n, world.data.bundles,
                                    world.split, cfg);
  CHECK(result.state.frozen);
  CHECK(result.log.empty());
  auto expected = diet::TeacherState<float>::init(
      world.data.corpus.n, cfg.d, cfg.layers_bundle,
      derive_seed(cfg.seed, Stage::teacher));
  CHECK(bits_equal(result.state.item_embed.values(), expected.item_embed.values()));
}

TEST_CASE("train_teacher: deterministic per seed") {
  auto world = tiny_world(107);
  auto cfg = tiny_config(107);
  cfg.epochs = 4;
  auto a = diet::train_teacher(world.data.corpus.n, world.data.bundles, world.split, cfg);
  auto b = diet::train_teacher(world.data.corpus.n, world.data.bundles, world.split, cfg);
  CHECK(bits_equal(a.state.item_embed.values(), b.state.item_embed.values()));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].l_b == b.log[i].l_b);
    CHECK(a.log[i].val_recall20 == b.log[i].val_recall20);
  }
}

TEST_CASE("train_student: mode none ignores the teacher entirely") {
  auto world = tiny_world(109);
  auto cfg = tiny_config(109);
  cfg.epochs = 3;
  cfg.distill = diet::DistillMode::none;

  auto teacher_cfg = tiny_config(109);
  teacher_cfg.epochs = 2;
  auto teacher = diet::train_teacher(world.data.corpus.n, world.data.bundles,
                                     world.split, teacher_cfg);

  auto without = diet::train_student(world.feats, world.data.bundles, world.split,
                                     nullptr, cfg);
  auto with = diet::train_student(world.feats, world.data.bundles, world.split,
                                  &teacher.state, cfg);
  REQUIRE(without.log.size() == with.log.size());
  for (std::size_t i = 0; i < with.log.size(); ++i) {
    CHECK(without.log[i].l_b == with.log[i].l_b);
    CHECK(without.log[i].l_d == 0.0);
  }
  for (auto& [name, t] : without.state.named_tensors())
    CHECK(bits_equal(t.values(), with.state.params().get(name).values()));
}

TEST_CASE("train_student: distillation requires a teacher and leaves it untouched") {
  auto world = tiny_world(113);
  auto cfg = tiny_config(113);
  cfg.epochs = 2;
  cfg.distill = diet::DistillMode::logits;
  CHECK_THROWS_AS(diet::train_student(world.feats, world.data.bundles, world.split,
                                      nullptr, cfg),
                  ConfigError);

  auto teacher_cfg = tiny_config(113);
  teacher_cfg.epochs = 2;
  auto teacher = diet::train_teacher(world.data.corpus.n, world.data.bundles,
                                     world.split, teacher_cfg);
  const auto v_before = teacher.state.item_embed.values();
  auto student = diet::train_student(world.feats, world.data.bundles, world.split,
                                     &teacher.state, cfg);
  CHECK(bits_equal(teacher.state.item_embed.values(), v_before));
  CHECK_FALSE(teacher.state.item_embed.has_grad());
  CHECK(student.log.back().l_d > 0.0);

  // Default configuration is the tempered-logits recipe.
  diet::TrainConfig defaults;
  CHECK(defaults.distill == diet::DistillMode::logits);
  CHECK(defaults.temperature == 2.0f);
  CHECK(defaults.lambda == 1.0f);
  CHECK(defaults.beta == doctest::Approx(1e-5f));
  CHECK(defaults.d == 64);
}

TEST_CASE("train_student: feature and both modes run and report distill loss") {
  auto world = tiny_world(127);
  auto teacher_cfg = tiny_config(127);
  teacher_cfg.epochs = 2;
  auto teacher = diet::train_teacher(world.data.corpus.n, world.data.bundles,
                                     world.split, teacher_cfg);
  for (auto mode : {diet::DistillMode::feature, diet::DistillMode::both}) {
    auto cfg = tiny_config(127);
    cfg.epochs = 2;
    cfg.distill = mode;
    auto student = diet::train_student(world.feats, world.data.bundles, world.split,
                                       &teacher.state, cfg);
    CHECK(student.log.back().l_d > 0.0);
    CHECK(std::isfinite(student.log.back().l_b));
  }
}

// ---------------------------------------------------------------------------
// ablations
// ---------------------------------------------------------------------------

TEST_CASE("wo_ui: forward output is invariant to the feedback table contents") {
  Rng rng(41);
  const int n = 10;
  auto student = diet::StudentState<float>::init(n, 8, 6, 5, 7, 1, 1,
                                                 diet::AblationVariant::wo_ui, 31);
  auto feats_a = random_feature_set(rng, n, 6, 5, 7);
  auto feats_b = feats_a;
  feats_b.feedback = random_tensor<float>(rng, n, 7);
  auto a = diet::ubt_forward({0, 3, 7}, student, feats_a);
  auto b = diet::ubt_forward({0, 3, 7}, student, feats_b);
  CHECK(bits_equal(a.main_logits.values(), b.main_logits.values()));
}

TEST_CASE("ablation variants drop exactly one fusion input") {
  const int n = 6;
  auto full = diet::StudentState<float>::init(n, 4, 3, 3, 3, 1, 1,
                                              diet::AblationVariant::full, 1);
  auto wo_ui = diet::StudentState<float>::init(n, 4, 3, 3, 3, 1, 1,
                                               diet::AblationVariant::wo_ui, 1);
  auto wo_mm = diet::StudentState<float>::init(n, 4, 3, 3, 3, 1, 1,
                                               diet::AblationVariant::wo_mm, 1);
  auto wo_bi = diet::StudentState<float>::init(n, 4, 3, 3, 3, 1, 1,
                                               diet::AblationVariant::wo_bi, 1);
  auto has = [](const diet::StudentState<float>& s, const std::string& name) {
    for (auto& [k, t] : s.named_tensors())
      if (k == name) return true;
    return false;
  };
  CHECK(has(full, "student.fusion.w_feedback"));
  CHECK_FALSE(has(wo_ui, "student.fusion.w_feedback"));
  CHECK(has(wo_ui, "student.fusion.item_embed"));
  CHECK_FALSE(has(wo_mm, "student.map_text"));
  CHECK_FALSE(has(wo_bi, "student.fusion.item_embed"));
  CHECK(has(wo_bi, "student.map_text"));
  CHECK_THROWS_AS(diet::ablation_from_name("wo_xx"), ConfigError);
}

TEST_CASE("all ablation variants train to finite loss") {
  auto world = tiny_world(131);
  for (auto v : {diet::AblationVariant::wo_ui, diet::AblationVariant::wo_mm,
                 diet::AblationVariant::wo_bi}) {
    auto cfg = tiny_config(131);
    cfg.epochs = 2;
    cfg.distill = diet::DistillMode::none;
    cfg.ablation = v;
    auto student = diet::train_student(world.feats, world.data.bundles, world.split,
                                       nullptr, cfg);
    CHECK(std::isfinite(student.log.back().l_b));
  }
  // wo_mm cannot feed a distillation path.
  auto cfg = tiny_config(131);
  cfg.ablation = diet::AblationVariant::wo_mm;
  cfg.distill = diet::DistillMode::logits;
  auto teacher_cfg = tiny_config(131);
  teacher_cfg.epochs = 1;
  auto teacher = diet::train_teacher(world.data.corpus.n, world.data.bundles,
                                     world.split, teacher_cfg);
  CHECK_THROWS_AS(diet::train_student(world.feats, world.data.bundles, world.split,
                                      &teacher.state, cfg),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// gradient check through the fused student path
// ---------------------------------------------------------------------------

TEST_CASE("full student objective matches finite differences in 64-bit replay") {
  Rng rng(43);
  const int n = 5, d = 4;
  auto student = diet::StudentState<double>::init(n, d, 3, 3, 3, 1, 1,
                                                  diet::AblationVariant::full, 53);
  diet::Features<double> feats;
  feats.n = n;
  feats.text = random_tensor<double>(rng, n, 3);
  feats.media = random_tensor<double>(rng, n, 3);
  feats.feedback = random_tensor<double>(rng, n, 3);
  auto teacher_logits = random_tensor<double>(rng, 1, n);
  auto params = student.params();

  auto loss_fn = [&]() {
    auto ctx = diet::UbtForward<double>::build(student, feats, true);
    auto out = ctx.forward_case({0, 2}, true);
    auto l_b = diet::construction_loss<double>({out.main_logits}, {{1, 4}});
    auto l_d = diet::logits_distill_loss<double>({out.content_logits},
                                                 {teacher_logits}, 2.0);
    return diet::total_loss<double>(l_b, l_d, 1.0, 1e-5, params);
  };
  std::vector<Tensor<double>> leaves;
  for (auto& [name, t] : params) leaves.push_back(t);
  auto rep = testsupport::check_gradients(leaves, loss_fn);
  CHECK(rep.max_rel_error < 1e-3);

  // The frozen feedback features never accumulate gradient.
  auto loss = loss_fn();
  num::backward(loss);
  CHECK_FALSE(feats.feedback.has_grad());
}
