#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <iostream>

#include "bundleforge/feedback.hpp"

using namespace bundleforge;
using num::Tensor;

namespace {

corpus::InteractionMatrix matrix_from_pairs(
    int users, int items, const std::vector<std::pair<int, int>>& pairs) {
  corpus::InteractionMatrix d;
  d.users = users;
  d.items = items;
  d.by_user.resize(users);
  d.item_counts.assign(items, 0);
  for (auto [u, i] : pairs) d.by_user[u].push_back(i);
  for (auto& row : d.by_user) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    for (int i : row) ++d.item_counts[i];
    d.nnz += static_cast<std::int64_t>(row.size());
  }
  return d;
}

float adj_entry(const feedback::BipartiteGraph& g, int r, int c) {
  for (int e = g.adj->row_ptr[r]; e < g.adj->row_ptr[r + 1]; ++e)
    if (g.adj->col[e] == c) return g.adj->val[e];
  return 0.0f;
}

double cosine(const float* a, const float* b, int d) {
  double ab = 0, na = 0, nb = 0;
  for (int j = 0; j < d; ++j) {
    ab += static_cast<double>(a[j]) * b[j];
    na += static_cast<double>(a[j]) * a[j];
    nb += static_cast<double>(b[j]) * b[j];
  }
  if (na == 0 || nb == 0) return 0.0;
  return ab / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("build_graph: a single interaction gets weight 1") {
  auto d = matrix_from_pairs(1, 1, {{0, 0}});
  auto g = feedback::build_graph(d);
  CHECK(adj_entry(g, 0, 1) == 1.0f);
  CHECK(adj_entry(g, 1, 0) == 1.0f);
}

TEST_CASE("build_graph: user with four degree-1 items spreads 1/(2 sqrt(deg_i))") {
  auto d = matrix_from_pairs(1, 4, {{0, 0}, {0, 1}, {0, 2}, {0, 3}});
  auto g = feedback::build_graph(d);
  for (int i = 0; i < 4; ++i)
    CHECK(adj_entry(g, 0, 1 + i) == doctest::Approx(0.5f));
}

TEST_CASE("build_graph: isolated item keeps a zero row") {
  auto d = matrix_from_pairs(2, 3, {{0, 0}, {1, 1}});
  auto g = feedback::build_graph(d);
  const int row = 2 + 2;  // item 2
  CHECK(g.adj->row_ptr[row] == g.adj->row_ptr[row + 1]);
}

TEST_CASE("propagate: zero layers returns the input unchanged") {
  auto d = matrix_from_pairs(2, 2, {{0, 0}, {1, 1}});
  auto g = feedback::build_graph(d);
  auto e0 = num::xavier_init<float>(4, 3, 5);
  auto out = feedback::propagate(e0, g, 0);
  CHECK(out.values() == e0.values());
}

TEST_CASE("propagate: one user-one item pair averages self and neighbor") {
  auto d = matrix_from_pairs(1, 1, {{0, 0}});
  auto g = feedback::build_graph(d);
  auto e0 = Tensor<float>::from_values(2, 2, {1, 2, 5, 8});
  auto out = feedback::propagate(e0, g, 1);
  // Hand computation: layer 1 swaps the rows, the mean over layers 0..1
  // gives (self + neighbor) / 2.
  CHECK(out.at(0, 0) == doctest::Approx(3.0f));
  CHECK(out.at(0, 1) == doctest::Approx(5.0f));
  CHECK(out.at(1, 0) == doctest::Approx(3.0f));
  CHECK(out.at(1, 1) == doctest::Approx(5.0f));
}

TEST_CASE("propagate: linear in the input embeddings") {
  auto d = matrix_from_pairs(3, 3, {{0, 0}, {0, 1}, {1, 1}, {2, 2}});
  auto g = feedback::build_graph(d);
  auto e0 = num::xavier_init<float>(6, 4, 17);
  auto doubled = num::scale(e0, 2.0f);
  auto a = feedback::propagate(e0, g, 2);
  auto b = feedback::propagate(doubled, g, 2);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(2.0f * a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-6));
}

TEST_CASE("train_feedback: zero epochs exports the propagated initialization") {
  auto d = matrix_from_pairs(3, 4, {{0, 0}, {1, 1}, {2, 2}, {2, 3}});
  feedback::FeedbackConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 0;
  cfg.seed = 77;
  auto table = feedback::train_feedback(d, cfg);
  auto g = feedback::build_graph(d);
  auto e0 = num::xavier_init<float>(7, 8, cfg.seed);
  auto prop = feedback::propagate(e0, g, cfg.layers);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(table.row(i)[j] == prop.at(3 + i, j));
}

TEST_CASE("train_feedback: block-diagonal data clusters items by block") {
  // Two dense 10x10 blocks; after training, intra-block item similarity
  // should exceed inter-block similarity.
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < 10; ++u)
    for (int i = 0; i < 10; ++i) {
      pairs.push_back({u, i});
      pairs.push_back({10 + u, 10 + i});
    }
  auto d = matrix_from_pairs(20, 20, pairs);
  feedback::FeedbackConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 50;
  cfg.batch = 64;
  cfg.seed = 3;
  auto table = feedback::train_feedback(d, cfg);
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (int a = 0; a < 20; ++a)
    for (int b = a + 1; b < 20; ++b) {
      const double c = cosine(table.row(a), table.row(b), cfg.dim);
      if ((a < 10) == (b < 10)) {
        intra += c;
        ++n_intra;
      } else {
        inter += c;
        ++n_inter;
      }
    }
  CHECK(intra / n_intra > inter / n_inter);
}

TEST_CASE("train_feedback: identical config and seed give identical tables") {
  auto d = matrix_from_pairs(5, 6, {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {0, 5}});
  feedback::FeedbackConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 5;
  cfg.seed = 41;
  auto a = feedback::train_feedback(d, cfg);
  auto b = feedback::train_feedback(d, cfg);
  CHECK(a.data == b.data);
  CHECK_THROWS_AS(feedback::train_feedback(matrix_from_pairs(2, 2, {}), cfg),
                  ContractError);
}

TEST_CASE("diagnostic: feedback norms track popularity on zipf-skewed data") {
  corpus::SynthConfig scfg;
  scfg.n_items = 120;
  scfg.n_users = 500;
  scfg.n_bundles = 60;
  scfg.seed = 9;
  auto data = corpus::synth_generate(scfg);
  feedback::FeedbackConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 15;
  cfg.seed = 9;
  auto table = feedback::train_feedback(data.interactions, cfg);
  // Pearson correlation between interaction count and embedding norm. This
  // documents the popularity signal carried by the user-feedback features;
  // it is a witness, not a pass/fail gate.
  double mx = 0, my = 0;
  std::vector<double> norms(scfg.n_items);
  for (int i = 0; i < scfg.n_items; ++i) {
    double s = 0;
    for (int j = 0; j < cfg.dim; ++j) s += static_cast<double>(table.row(i)[j]) * table.row(i)[j];
    norms[i] = std::sqrt(s);
    mx += data.interactions.item_counts[i];
    my += norms[i];
  }
  mx /= scfg.n_items;
  my /= scfg.n_items;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < scfg.n_items; ++i) {
    const double dx = data.interactions.item_counts[i] - mx;
    const double dy = norms[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double corr = sxy / std::sqrt(sxx * syy);
  MESSAGE("popularity/norm correlation: " << corr);
  CHECK(std::isfinite(corr));
}
