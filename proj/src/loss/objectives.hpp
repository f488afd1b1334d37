// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "nd/autograd.hpp"

namespace gk::loss {

// Which pairs a triplet term compares.
//   unanchored: every positive pair against every negative pair in the batch.
//   anchored:   (a, p, n) with p and n sharing the anchor a (conventional batch-all).
enum class TripletMining { unanchored, anchored };

struct TripletOptions {
  double margin = 0.2;
  TripletMining mining = TripletMining::unanchored;
};

template <typename T>
struct TripletResult {
  nd::Var<T> loss;                // scalar, mean over parts
  std::size_t nonzero_count = 0;  // strictly positive hinge terms, summed over parts
  std::size_t total_terms = 0;
};

// embeddings: [N, P, d] (or [N, d] for a single part); labels: N identities.
// Per part: sum of relu(d_pos - d_neg + m) over the active terms divided by the
// number of strictly positive terms (0 when none). Zero-distance pairs get a
// zero subgradient.
template <typename T>
TripletResult<T> triplet_loss(const nd::Var<T>& embeddings, const std::vector<int>& labels,
                              const TripletOptions& opt = {});

enum class CeKind { per_class, conventional };

struct CeOptions {
  double epsilon = 0.1;     // label smoothing towards uniform
  double log_floor = 1e-12;
  CeKind kind = CeKind::per_class;
};

// logits: [N, P, Y] (or [N, Y]); labels in [0, Y). Softmax over the last axis, then
//   per_class:    -(1/Y) sum_k [q_k log p_k + (1 - q_k) log(1 - p_k)]
//   conventional: -sum_k q_k log p_k
// with q = (1 - eps) onehot + eps / Y, averaged over samples and parts.
// Logs are clamped at log_floor; clamped terms contribute no gradient.
template <typename T>
nd::Var<T> smoothed_ce(const nd::Var<T>& logits, const std::vector<int>& labels, const CeOptions& opt = {});

struct LossWeights {
  double triplet = 1.0;
  double ce = 1.0;
};

template <typename T>
struct CombinedResult {
  nd::Var<T> total;
  nd::Var<T> triplet;  // undefined when its weight is zero
  nd::Var<T> ce;       // undefined when its weight is zero
  std::size_t nonzero_count = 0;
};

template <typename T>
CombinedResult<T> combined_loss(const nd::Var<T>& embeddings, const nd::Var<T>& logits, const std::vector<int>& labels,
                                const LossWeights& w = {}, const TripletOptions& topt = {}, const CeOptions& copt = {});

}  // namespace gk::loss
