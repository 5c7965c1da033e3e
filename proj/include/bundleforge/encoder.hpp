#pragma once

#include <cmath>
#include <cstdint>

#include "bundleforge/tensor.hpp"

namespace bundleforge::encoder {

// Self-attention as the bundling backbone defines it: scores are scaled
// key/query inner products, the softmax-weighted mix is applied directly to
// the layer input. No value projection, no residual, no feed-forward. The
// same key/query pair is reused at every layer of a stack.
template <class T>
struct AttentionStack {
  num::Tensor<T> w_key;
  num::Tensor<T> w_query;
  int layers = 1;

  static AttentionStack init(int d, int layers, std::uint64_t seed) {
    AttentionStack s;
    s.w_key = num::xavier_init<T>(d, d, derive_seed(seed, 0x6B6579ULL));
    s.w_query = num::xavier_init<T>(d, d, derive_seed(seed, 0x717279ULL));
    s.layers = layers;
    return s;
  }
};

template <class T>
struct FusionParams {
  num::Tensor<T> w_content;   // d_c x d
  num::Tensor<T> w_feedback;  // d_p x d
  num::Tensor<T> item_embed;  // n x d, trainable bundle-level embeddings
};

template <class T>
num::Tensor<T> self_attend(num::Tensor<T> h, const AttentionStack<T>& stack) {
  if (h.rows() < 1) throw ContractError("self_attend: empty input");
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(h.cols()));
  for (int l = 0; l < stack.layers; ++l) {
    auto scores = num::scale(
        num::matmul_nt(num::matmul(h, stack.w_key), num::matmul(h, stack.w_query)),
        inv_sqrt_d);
    h = num::matmul(num::softmax_rows(scores), h);
  }
  return h;
}

// Final item representation rows: mapped content, mapped user feedback, and
// the bundle-level embedding. The content average happens upstream when the
// two modality widths differ.
template <class T>
num::Tensor<T> fuse_item(const num::Tensor<T>& t, const num::Tensor<T>& m,
                         const num::Tensor<T>& p, const num::Tensor<T>& v,
                         const FusionParams<T>& params) {
  auto content = num::scale(num::add(t, m), T(0.5));
  return num::concat_rows<T>({num::matmul(content, params.w_content),
                              num::matmul(p, params.w_feedback), v});
}

template <class T>
num::Tensor<T> encode_item(const num::Tensor<T>& fused,
                           const AttentionStack<T>& item_stack) {
  return num::mean_rows(self_attend(fused, item_stack));
}

template <class T>
num::Tensor<T> encode_bundle(const num::Tensor<T>& item_reprs,
                             const AttentionStack<T>& bundle_stack) {
  if (item_reprs.rows() < 1)
    throw ContractError("encode_bundle: empty partial bundle");
  return num::mean_rows(self_attend(item_reprs, bundle_stack));
}

// Inner products of the bundle representation against every item row.
template <class T>
num::Tensor<T> score_all(const num::Tensor<T>& bundle_repr,
                         const num::Tensor<T>& item_matrix) {
  return num::matmul_nt(bundle_repr, item_matrix);
}

}  // namespace bundleforge::encoder
