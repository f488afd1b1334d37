// SPDX-License-Identifier: Apache-2.0
#include "net/layers.hpp"

#include <cmath>

#include "common/error.hpp"

namespace gk::net {
namespace {

Tensor kaiming_normal(nd::Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

Tensor xavier_uniform(nd::Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

}  // namespace

std::size_t ModelState::count_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, v] : params.params)
    if (name.starts_with(prefix)) n += v.value().numel();
  return n;
}

Conv::Conv(ModelState& st, std::string name, std::size_t cin, std::size_t cout, std::array<std::size_t, 3> kernel,
           std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad, Rng& rng)
    : weight_(std::move(name) + ".weight"), opt_{stride, pad} {
  const std::size_t fan_in = cin * kernel[0] * kernel[1] * kernel[2];
  st.params.add(weight_, kaiming_normal({cout, cin, kernel[0], kernel[1], kernel[2]}, fan_in, rng));
}

Var Conv::operator()(const ModelState& st, const Var& x) const {
  return nd::conv3d<Real>(x, st.param(weight_), std::nullopt, opt_);
}

BatchNorm::BatchNorm(ModelState& st, std::string name, std::size_t channels, bool with_beta)
    : name_(std::move(name)), beta_(with_beta) {
  st.params.add(name_ + ".gamma", Tensor({channels}, Real(1)));
  if (beta_) st.params.add(name_ + ".beta", Tensor({channels}, Real(0)));
  st.buffers[name_] = nd::BatchNormState<Real>::fresh(channels);
}

Var BatchNorm::operator()(ModelState& st, const Var& x, NormMode mode) const {
  std::optional<Var> beta;
  if (beta_) beta = st.param(name_ + ".beta");
  return nd::batch_norm<Real>(x, st.param(name_ + ".gamma"), beta, st.buffers.at(name_), mode);
}

KernelConv::KernelConv(ModelState& st, const std::string& name, BlockKind kind, std::size_t cin, std::size_t cout,
                       std::size_t stride, Rng& rng) {
  switch (kind) {
    case BlockKind::plain2d:
      spatial_ = Conv(st, name, cin, cout, {1, 3, 3}, {1, stride, stride}, {0, 1, 1}, rng);
      break;
    case BlockKind::full3d:
      spatial_ = Conv(st, name, cin, cout, {3, 3, 3}, {1, stride, stride}, {1, 1, 1}, rng);
      break;
    case BlockKind::pseudo3d:
      spatial_ = Conv(st, name + ".spatial", cin, cout, {1, 3, 3}, {1, stride, stride}, {0, 1, 1}, rng);
      temporal_ = Conv(st, name + ".temporal", cout, cout, {3, 1, 1}, {1, 1, 1}, {1, 0, 0}, rng);
      break;
  }
}

Var KernelConv::operator()(const ModelState& st, const Var& x) const {
  Var y = spatial_(st, x);
  return temporal_ ? (*temporal_)(st, y) : y;
}

ResBlock::ResBlock(ModelState& st, const std::string& name, BlockKind kind, std::size_t cin, std::size_t cout,
                   std::size_t stride, Rng& rng)
    : conv1_(st, name + ".conv1", kind, cin, cout, stride, rng),
      conv2_(st, name + ".conv2", kind, cout, cout, 1, rng),
      bn1_(st, name + ".bn1", cout),
      bn2_(st, name + ".bn2", cout) {
  if (cin != cout || stride != 1) {
    proj_ = Conv(st, name + ".proj", cin, cout, {1, 1, 1}, {1, stride, stride}, {0, 0, 0}, rng);
    proj_bn_ = BatchNorm(st, name + ".proj_bn", cout);
  }
}

Var ResBlock::operator()(ModelState& st, const Var& x, NormMode mode) const {
  Var y = nd::relu(bn1_(st, conv1_(st, x), mode));
  y = bn2_(st, conv2_(st, y), mode);
  const Var shortcut = proj_ ? (*proj_bn_)(st, (*proj_)(st, x), mode) : x;
  return nd::relu(nd::add(y, shortcut));
}

Stage::Stage(ModelState& st, const std::string& name, BlockKind kind, std::size_t cin, std::size_t cout,
             std::size_t stride, int blocks, Rng& rng) {
  for (int b = 0; b < blocks; ++b)
    blocks_.emplace_back(st, name + "." + std::to_string(b), kind, b == 0 ? cin : cout, cout, b == 0 ? stride : 1,
                         rng);
}

Var Stage::operator()(ModelState& st, Var x, NormMode mode) const {
  for (const auto& b : blocks_) x = b(st, x, mode);
  return x;
}

Fusion::Fusion(ModelState& st, const std::string& name, FusionKind kind, std::size_t width, Rng& rng)
    : kind_(kind), width_(width) {
  if (kind == FusionKind::cat) {
    mix_ = Conv(st, name + ".mix", 2 * width, width, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
  } else if (kind == FusionKind::attention) {
    const std::size_t mid = std::max<std::size_t>(1, width / 2);
    squeeze_ = Conv(st, name + ".squeeze", 2 * width, mid, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
    squeeze_bn_ = BatchNorm(st, name + ".squeeze_bn", mid);
    spatial_ = Conv(st, name + ".spatial", mid, mid, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, rng);
    spatial_bn_ = BatchNorm(st, name + ".spatial_bn", mid);
    expand_ = Conv(st, name + ".expand", mid, 2 * width, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
  }
}

namespace {

void check_pair(const Var& a, const Var& b) {
  if (a.shape().size() != 5 || b.shape().size() != 5) throw ShapeError("fusion expects [N, C, T, H, W] inputs");
  if (a.shape()[2] != b.shape()[2])
    throw ContractError("fusion inputs are not frame-aligned: " + std::to_string(a.shape()[2]) + " vs " +
                        std::to_string(b.shape()[2]) + " frames");
  if (a.shape() != b.shape())
    throw ContractError("fusion input shapes differ: " + nd::to_string(a.shape()) + " vs " + nd::to_string(b.shape()));
}

}  // namespace

Var Fusion::attention_weights(ModelState& st, const Var& sil, const Var& ske, NormMode mode) const {
  if (kind_ != FusionKind::attention) throw ArgumentError("attention_weights on a non-attention fusion");
  check_pair(sil, ske);
  const Var cat = nd::concat<Real>({sil, ske}, 1);
  Var h = nd::relu(squeeze_bn_(st, squeeze_(st, cat), mode));
  h = nd::relu(spatial_bn_(st, spatial_(st, h), mode));
  h = expand_(st, h);
  auto s = sil.shape();
  return nd::softmax(nd::reshape(h, {s[0], 2, s[1], s[2], s[3], s[4]}), 1);
}

Var Fusion::operator()(ModelState& st, const Var& sil, const Var& ske, NormMode mode) const {
  check_pair(sil, ske);
  switch (kind_) {
    case FusionKind::add:
      return nd::add(sil, ske);
    case FusionKind::cat:
      return mix_(st, nd::concat<Real>({sil, ske}, 1));
    case FusionKind::attention: {
      const Var w = attention_weights(st, sil, ske, mode);
      const auto& s = sil.shape();
      const Var ws = nd::reshape(nd::slice(w, 1, 0, 1), s);
      const Var wk = nd::reshape(nd::slice(w, 1, 1, 2), s);
      return nd::add(nd::mul(ws, sil), nd::mul(wk, ske));
    }
  }
  throw ArgumentError("unknown fusion kind");
}

Var temporal_pool(const Var& x) {
  if (x.shape().size() != 5) throw ShapeError("temporal_pool expects [N, C, T, H, W]");
  return nd::reduce_max(x, 2);
}

Var horizontal_pool(const Var& x, std::size_t parts) {
  if (x.shape().size() != 4) throw ShapeError("horizontal_pool expects [N, C, H, W]");
  const auto& s = x.shape();
  if (parts == 0 || s[2] % parts != 0)
    throw ArgumentError("parts (" + std::to_string(parts) + ") must divide the feature height " +
                        std::to_string(s[2]));
  const Var strips = nd::reshape(x, {s[0], s[1], parts, (s[2] / parts) * s[3]});
  return nd::add(nd::reduce_max(strips, 3), nd::reduce_mean(strips, 3));
}

Head::Head(ModelState& st, const std::string& name, std::size_t parts, std::size_t in_dim, std::size_t embed_dim,
           std::size_t classes, Rng& rng)
    : fc_(name + ".fc"), cls_(name + ".classifier"), parts_(parts), dim_(embed_dim), classes_(classes) {
  st.params.add(fc_, xavier_uniform({parts, in_dim, embed_dim}, in_dim, embed_dim, rng));
  bn_ = BatchNorm(st, name + ".bnneck", parts * embed_dim, false);
  st.params.add(cls_, xavier_uniform({parts, embed_dim, classes}, embed_dim, classes, rng));
}

HeadOutput Head::operator()(ModelState& st, const Var& pm, NormMode mode) const {
  const auto& s = pm.shape();
  if (s.size() != 3 || s[2] != parts_) throw ShapeError("head expects [N, C, parts], got " + nd::to_string(s));
  const std::size_t n = s[0];
  // [N, C, P] -> [P, N, C] -> per-part FC -> [P, N, d]
  const Var f_pnd = nd::bmm(nd::permute(pm, {2, 0, 1}), st.param(fc_));
  const Var f = nd::permute(f_pnd, {1, 0, 2});
  const Var bn = nd::reshape(bn_(st, nd::reshape(f, {n, parts_ * dim_}), mode), {n, parts_, dim_});
  const Var logits = nd::permute(nd::bmm(nd::permute(bn, {1, 0, 2}), st.param(cls_)), {1, 0, 2});
  return {f, bn, logits};
}

}  // namespace gk::net
