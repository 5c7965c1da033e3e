#include "bundleforge/feedback.hpp"

#include <algorithm>
#include <cmath>

#include "bundleforge/optim.hpp"
#include "bundleforge/rng.hpp"

namespace bundleforge::feedback {

using num::Tensor;

BipartiteGraph build_graph(const corpus::InteractionMatrix& d) {
  BipartiteGraph g;
  g.users = d.users;
  g.items = d.items;
  auto adj = std::make_shared<num::Csr<float>>();
  adj->n = d.users + d.items;
  adj->row_ptr.reserve(adj->n + 1);
  adj->row_ptr.push_back(0);

  // Item rows need per-item user lists; users are visited in ascending
  // order, so every row's columns come out sorted.
  std::vector<std::vector<int>> by_item(d.items);
  for (int u = 0; u < d.users; ++u)
    for (int i : d.by_user[u]) by_item[i].push_back(u);

  auto norm = [&](int u, int i) {
    const double du = static_cast<double>(d.by_user[u].size());
    const double di = static_cast<double>(d.item_counts[i]);
    return static_cast<float>(1.0 / std::sqrt(du * di));
  };
  for (int u = 0; u < d.users; ++u) {
    for (int i : d.by_user[u]) {
      adj->col.push_back(d.users + i);
      adj->val.push_back(norm(u, i));
    }
    adj->row_ptr.push_back(static_cast<int>(adj->col.size()));
  }
  for (int i = 0; i < d.items; ++i) {
    for (int u : by_item[i]) {
      adj->col.push_back(u);
      adj->val.push_back(norm(u, i));
    }
    adj->row_ptr.push_back(static_cast<int>(adj->col.size()));
  }
  g.adj = adj;
  return g;
}

num::Tensor<float> propagate(const num::Tensor<float>& e0,
                             const BipartiteGraph& graph, int layers) {
  return propagate<float>(e0, graph.adj, layers);
}

corpus::FeatureMatrix train_feedback(const corpus::InteractionMatrix& d,
                                     const FeedbackConfig& cfg) {
  if (d.nnz < 1)
    throw ContractError("train_feedback: interaction matrix has no interactions");
  const int m = d.users, n = d.items;
  BipartiteGraph graph = build_graph(d);
  Rng rng(derive_seed(cfg.seed, 0x4C47434EULL));

  num::ParamTable<float> params;
  params.add("embeddings", num::xavier_init<float>(m + n, cfg.dim, cfg.seed));
  Tensor<float>& e0 = params.get("embeddings");
  auto state = num::AdamState<float>::with_lr(cfg.lr);

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(d.nnz));
  for (int u = 0; u < m; ++u)
    for (int i : d.by_user[u]) pairs.emplace_back(u, i);

  auto has_interaction = [&](int u, int i) {
    const auto& row = d.by_user[u];
    return std::binary_search(row.begin(), row.end(), i);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pairs);
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop =
          std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<int> u_idx, pos_idx, neg_idx;
      for (std::size_t p = start; p < stop; ++p) {
        const auto [u, i] = pairs[p];
        for (int t = 0; t < cfg.neg_per_pos; ++t) {
          int j = static_cast<int>(rng.uniform_int(0, n - 1));
          for (int retry = 0; retry < 64 && has_interaction(u, j); ++retry)
            j = static_cast<int>(rng.uniform_int(0, n - 1));
          u_idx.push_back(u);
          pos_idx.push_back(m + i);
          neg_idx.push_back(m + j);
        }
      }
      const float b = static_cast<float>(u_idx.size());
      auto prop = propagate<float>(e0, graph.adj, cfg.layers);
      auto users = num::take_rows(prop, u_idx);
      auto pos = num::take_rows(prop, pos_idx);
      auto neg = num::take_rows(prop, neg_idx);
      auto margin = num::sub(num::rowwise_dot(users, pos),
                             num::rowwise_dot(users, neg));
      auto rank_loss = num::scale(num::sum(num::logsigmoid(margin)), -1.0f / b);
      // L2 on the ego embeddings of the batch, as in the original protocol.
      auto reg = num::scale(
          num::add(num::sumsq(num::take_rows(e0, u_idx)),
                   num::add(num::sumsq(num::take_rows(e0, pos_idx)),
                            num::sumsq(num::take_rows(e0, neg_idx)))),
          cfg.reg / b);
      auto loss = num::add(rank_loss, reg);
      num::backward(loss);
      num::adam_step(params, state);
    }
  }

  corpus::FeatureMatrix out;
  out.n = n;
  out.dim = cfg.dim;
  out.data.resize(static_cast<std::size_t>(n) * cfg.dim);
  {
    num::NoGradGuard ng;
    auto prop = propagate<float>(e0, graph.adj, cfg.layers);
    std::copy(prop.values().begin() + static_cast<std::size_t>(m) * cfg.dim,
              prop.values().end(), out.data.begin());
  }
  return out;
}

}  // namespace bundleforge::feedback
