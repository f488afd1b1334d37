// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nd/ops.hpp"
#include "nd/optim.hpp"

namespace gk::net {

using Real = float;
using Tensor = nd::Tensor<Real>;
using Var = nd::Var<Real>;
using Rng = std::mt19937_64;
using nd::NormMode;

// Trainable parameters plus batch-norm running statistics, keyed by
// hierarchical names such as "sil.stage1.0.conv1.weight".
struct ModelState {
  nd::ParamSet<Real> params;
  std::map<std::string, nd::BatchNormState<Real>> buffers;

  const Var& param(const std::string& name) const { return params.at(name); }
  std::size_t count_with_prefix(const std::string& prefix) const;
};

// Bias-free convolution over [N, C, T, H, W].
class Conv {
 public:
  Conv() = default;
  Conv(ModelState& st, std::string name, std::size_t cin, std::size_t cout, std::array<std::size_t, 3> kernel,
       std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad, Rng& rng);
  Var operator()(const ModelState& st, const Var& x) const;
  const std::string& weight_name() const { return weight_; }

 private:
  std::string weight_;
  nd::Conv3dOptions opt_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ModelState& st, std::string name, std::size_t channels, bool with_beta = true);
  Var operator()(ModelState& st, const Var& x, NormMode mode) const;

 private:
  std::string name_;
  bool beta_ = true;
};

enum class BlockKind { plain2d, full3d, pseudo3d };

// A 3x3(x3) convolution in one of the three flavours. pseudo3d is the serial
// spatial 1x3x3 then temporal 3x1x1 factorization. The stride is spatial only.
class KernelConv {
 public:
  KernelConv() = default;
  KernelConv(ModelState& st, const std::string& name, BlockKind kind, std::size_t cin, std::size_t cout,
             std::size_t stride, Rng& rng);
  Var operator()(const ModelState& st, const Var& x) const;
  const Conv& spatial() const { return spatial_; }
  const std::optional<Conv>& temporal() const { return temporal_; }

 private:
  Conv spatial_;
  std::optional<Conv> temporal_;
};

// conv -> BN -> ReLU -> conv -> BN, plus identity or 1x1x1 conv + BN shortcut, then ReLU.
class ResBlock {
 public:
  ResBlock(ModelState& st, const std::string& name, BlockKind kind, std::size_t cin, std::size_t cout,
           std::size_t stride, Rng& rng);
  Var operator()(ModelState& st, const Var& x, NormMode mode) const;
  bool has_projection() const { return proj_.has_value(); }
  const KernelConv& conv1() const { return conv1_; }
  const KernelConv& conv2() const { return conv2_; }

 private:
  KernelConv conv1_, conv2_;
  BatchNorm bn1_, bn2_;
  std::optional<Conv> proj_;
  std::optional<BatchNorm> proj_bn_;
};

class Stage {
 public:
  Stage() = default;
  Stage(ModelState& st, const std::string& name, BlockKind kind, std::size_t cin, std::size_t cout,
        std::size_t stride, int blocks, Rng& rng);
  Var operator()(ModelState& st, Var x, NormMode mode) const;
  std::size_t size() const { return blocks_.size(); }

 private:
  std::vector<ResBlock> blocks_;
};

enum class FusionKind { add, cat, attention };

// Frame-by-frame fusion of two equally shaped feature sequences.
class Fusion {
 public:
  Fusion() = default;
  Fusion(ModelState& st, const std::string& name, FusionKind kind, std::size_t width, Rng& rng);
  Var operator()(ModelState& st, const Var& sil, const Var& ske, NormMode mode) const;
  // [N, 2, C, T, H, W] softmax weights (silhouette first); attention only.
  Var attention_weights(ModelState& st, const Var& sil, const Var& ske, NormMode mode) const;
  FusionKind kind() const { return kind_; }
  const std::string& cat_weight_name() const { return mix_.weight_name(); }

 private:
  FusionKind kind_ = FusionKind::add;
  std::size_t width_ = 0;
  Conv mix_;  // cat: 2C -> C
  Conv squeeze_, spatial_, expand_;
  BatchNorm squeeze_bn_, spatial_bn_;
};

// Temporal max pooling: [N, C, T, H, W] -> [N, C, H, W].
Var temporal_pool(const Var& x);

// Horizontal pooling: [N, C, H, W] -> [N, C, parts], each strip reduced by max + mean.
Var horizontal_pool(const Var& x, std::size_t parts);

struct HeadOutput {
  Var features;    // [N, P, d] before the BNNeck (triplet input)
  Var embeddings;  // [N, P, d] after the BNNeck (retrieval embedding)
  Var logits;      // [N, P, Y]
};

// Separate per-part FCs, then BNNeck (no beta) and a bias-free per-part classifier.
class Head {
 public:
  Head() = default;
  Head(ModelState& st, const std::string& name, std::size_t parts, std::size_t in_dim, std::size_t embed_dim,
       std::size_t classes, Rng& rng);
  HeadOutput operator()(ModelState& st, const Var& parts_matrix, NormMode mode) const;

 private:
  std::string fc_, cls_;
  BatchNorm bn_;
  std::size_t parts_ = 0, dim_ = 0, classes_ = 0;
};

}  // namespace gk::net
