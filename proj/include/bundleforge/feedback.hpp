#pragma once

#include <cstdint>
#include <memory>

#include "bundleforge/corpus.hpp"
#include "bundleforge/tensor.hpp"

namespace bundleforge::feedback {

// Symmetrically normalized user-item adjacency over m + n nodes: entry
// 1/sqrt(deg_u * deg_i) at every interaction, zero elsewhere. Zero-degree
// nodes keep all-zero rows.
struct BipartiteGraph {
  int users = 0;
  int items = 0;
  std::shared_ptr<const num::Csr<float>> adj;

  int nodes() const { return users + items; }
};

BipartiteGraph build_graph(const corpus::InteractionMatrix& d);

// Mean over propagation layers 0..K: (1/(K+1)) sum_k A^k E0. Works on
// tracked tensors, so training can backprop through it.
template <class T>
num::Tensor<T> propagate(const num::Tensor<T>& e0,
                         const std::shared_ptr<const num::Csr<T>>& adj,
                         int layers) {
  if (layers < 0) throw ContractError("propagate: negative layer count");
  num::Tensor<T> acc = e0;
  num::Tensor<T> cur = e0;
  for (int k = 0; k < layers; ++k) {
    cur = num::spmm(adj, cur);
    acc = num::add(acc, cur);
  }
  return num::scale(acc, T(1) / T(layers + 1));
}

num::Tensor<float> propagate(const num::Tensor<float>& e0,
                             const BipartiteGraph& graph, int layers);

struct FeedbackConfig {
  int dim = 64;
  int layers = 2;
  int epochs = 30;
  float lr = 0.01f;
  int neg_per_pos = 1;
  int batch = 2048;
  float reg = 1e-4f;
  std::uint64_t seed = 42;
};

// Trains user/item embeddings with the Bayesian pairwise ranking loss on
// propagated embeddings and exports the frozen item rows. Embeddings are
// initialized with xavier_init((m+n) x dim, cfg.seed).
corpus::FeatureMatrix train_feedback(const corpus::InteractionMatrix& d,
                                     const FeedbackConfig& cfg);

}  // namespace bundleforge::feedback
