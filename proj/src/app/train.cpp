// SPDX-License-Identifier: Apache-2.0
#include "app/train.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "common/error.hpp"
#include "loss/objectives.hpp"
#include "nd/optim.hpp"

namespace gk::app {
namespace fs = std::filesystem;
namespace {

net::ModelConfig model_config(const RunConfig& cfg, std::size_t classes) {
  auto j = cfg.model;
  if (!j.contains("num_classes")) j["num_classes"] = classes;
  auto m = net::model_config_from_json(j);
  if (m.num_classes < classes)
    throw ArgumentError("model.num_classes (" + std::to_string(m.num_classes) + ") is below the " +
                        std::to_string(classes) + " training subjects");
  return m;
}

net::Mode mode_of(const RunConfig& cfg) { return model_config(cfg, 1).mode; }

std::map<prep::SequenceKey, std::pair<nd::TensorF, std::vector<long>>> load_all(const fs::path& dir,
                                                                                std::size_t channels) {
  const auto idx = prep::read_index(dir);
  std::map<prep::SequenceKey, std::pair<nd::TensorF, std::vector<long>>> out;
  for (const auto& e : idx.entries) {
    auto t = idx.load(e);
    const std::size_t per = t.numel() / t.dim(0);
    const std::size_t H = t.dim(t.rank() - 2), W = t.dim(t.rank() - 1);
    if (per != channels * H * W)
      throw DataError("sequence " + e.key.str() + " in " + dir.string() + " does not hold " +
                      std::to_string(channels) + "-channel frames");
    out.emplace(e.key, std::make_pair(std::move(t).reshaped({t.dim(0), channels, H, W}), e.frames));
  }
  return out;
}

std::string rng_string(const prep::Rng& r) {
  std::ostringstream s;
  s << r;
  return s.str();
}

}  // namespace

Corpus load_corpus(const DataSection& data, net::Mode mode) {
  const bool need_sil = mode != net::Mode::skeletongait, need_ske = mode != net::Mode::deepgaitv2;
  if (need_sil && data.silhouettes.empty()) throw ArgumentError("this model needs data.silhouettes");
  if (need_ske && data.skeletons.empty()) throw ArgumentError("this model needs data.skeletons");
  Corpus c;
  if (need_sil && need_ske) {
    auto sil = load_all(data.silhouettes, 1);
    auto ske = load_all(data.skeletons, 2);
    for (auto& [key, s] : sil) {
      auto it = ske.find(key);
      if (it == ske.end()) continue;
      const auto& fs_ = s.second;
      const auto& fk = it->second.second;
      std::vector<std::size_t> is, ik;
      for (std::size_t a = 0; a < fs_.size(); ++a) {
        const auto b = std::find(fk.begin(), fk.end(), fs_[a]);
        if (b != fk.end()) {
          is.push_back(a);
          ik.push_back(static_cast<std::size_t>(b - fk.begin()));
        }
      }
      if (is.empty()) continue;
      c.items.push_back({key, prep::gather_frames(s.first, is), prep::gather_frames(it->second.first, ik)});
    }
  } else if (need_sil) {
    for (auto& [key, s] : load_all(data.silhouettes, 1)) c.items.push_back({key, std::move(s.first), std::nullopt});
  } else {
    for (auto& [key, s] : load_all(data.skeletons, 2)) c.items.push_back({key, std::nullopt, std::move(s.first)});
  }
  if (c.items.empty()) throw DataError("no usable sequences in the configured datasets");
  return c;
}

Corpus select_conditions(const Corpus& c, const std::vector<std::string>& conditions) {
  if (conditions.empty()) return c;
  Corpus out;
  for (const auto& it : c.items)
    if (std::find(conditions.begin(), conditions.end(), it.key.condition) != conditions.end()) out.items.push_back(it);
  return out;
}

nd::TensorF stack_clips(const std::vector<nd::TensorF>& clips) {
  if (clips.empty()) throw ArgumentError("stack_clips: no clips");
  const auto s = clips[0].shape();
  if (s.size() != 4) throw ShapeError("stack_clips expects [T, C, H, W] clips");
  const std::size_t T = s[0], C = s[1], HW = s[2] * s[3];
  nd::TensorF out({clips.size(), C, T, s[2], s[3]});
  for (std::size_t n = 0; n < clips.size(); ++n) {
    if (clips[n].shape() != s) throw ShapeError("stack_clips: clips differ in shape");
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(clips[n].ptr() + (t * C + c) * HW, HW, out.ptr() + ((n * C + c) * T + t) * HW);
  }
  return out;
}

Trainer::Trainer(const RunConfig& cfg, Corpus train) : cfg_(cfg), train_(std::move(train)) {
  init_labels();
  const std::size_t classes = static_cast<std::size_t>(*std::max_element(labels_.begin(), labels_.end()) + 1);
  model_ = std::make_unique<net::Model>(model_config(cfg_, classes), cfg_.seed);
  rng_.seed(cfg_.seed + 1);
}

Trainer::Trainer(const RunConfig& cfg, Corpus train, const fs::path& checkpoint)
    : cfg_(cfg), train_(std::move(train)) {
  init_labels();
  auto ck = net::load_checkpoint(checkpoint);
  model_ = std::move(ck.model);
  step_ = ck.train.step;
  std::istringstream s(ck.train.rng);
  s >> rng_;
  if (!s) throw DataError("checkpoint in " + checkpoint.string() + " has no valid sampler state");
}

void Trainer::init_labels() {
  if (train_.items.empty()) throw DataError("no training sequences");
  std::vector<prep::SequenceKey> keys;
  for (const auto& it : train_.items) keys.push_back(it.key);
  const auto ids = prep::contiguous_labels(keys);
  labels_.clear();
  for (const auto& k : keys) labels_.push_back(ids.at(k.subject));
}

StepLog Trainer::step() {
  const auto& o = cfg_.optim;
  const auto picks = prep::make_batch(labels_, o.batch_p, o.batch_k, rng_);
  std::vector<nd::TensorF> sils, skes;
  std::vector<int> y;
  for (const auto& p : picks) {
    const auto& item = train_.items[p.sequence];
    const auto idx = prep::clip_indices(item.frames(), o.clip_len, rng_);
    const auto& any = item.silhouette ? *item.silhouette : *item.skeleton;
    std::optional<prep::AugmentDraw> d;
    if (o.augment) d = prep::draw_augment(o.augment_cfg, any.dim(2), any.dim(3), rng_);
    auto clip = [&](const nd::TensorF& t) {
      auto c = prep::gather_frames(t, idx);
      return d ? prep::apply_augment(c, *d) : c;
    };
    if (item.silhouette) sils.push_back(clip(*item.silhouette));
    if (item.skeleton) skes.push_back(clip(*item.skeleton));
    y.push_back(p.label);
  }
  net::Inputs in;
  if (!sils.empty()) in.silhouette = stack_clips(sils);
  if (!skes.empty()) in.skeleton = stack_clips(skes);

  StepLog log;
  log.lr = nd::multistep_lr(o.lr, o.milestones, step_);
  const auto out = model_->forward(in, nd::NormMode::train);
  const auto L = loss::combined_loss<float>(out.features, out.logits, y, o.weights, o.triplet, o.ce);
  auto& params = model_->state().params;
  const auto grads = nd::backward(L.total, params.params);
  nd::sgd_step(params, grads, {log.lr, o.momentum, o.weight_decay});
  log.step = ++step_;
  log.loss = L.total.value().item();
  log.triplet = L.triplet.defined() ? L.triplet.value().item() : 0.0;
  log.ce = L.ce.defined() ? L.ce.value().item() : 0.0;
  log.nonzero = L.nonzero_count;
  return log;
}

void Trainer::save(const fs::path& dir) const {
  net::TrainState ts;
  ts.step = step_;
  ts.rng = rng_string(rng_);
  ts.extra = {{"seed", cfg_.seed}};
  net::save_checkpoint(dir, *model_, ts);
}

eval::EmbeddingSet embed_corpus(net::Model& model, const Corpus& c) {
  nd::NoGradGuard guard;
  eval::EmbeddingSet set{model.config().parts, model.config().embed_dim, {}};
  for (const auto& it : c.items) {
    net::Inputs in;
    if (it.silhouette) in.silhouette = stack_clips({*it.silhouette});
    if (it.skeleton) in.skeleton = stack_clips({*it.skeleton});
    const auto out = model.forward(in, nd::NormMode::eval);
    const auto& v = out.embeddings.value();
    set.items.push_back({it.key.subject, it.key.condition, it.key.view, {v.data().begin(), v.data().end()}});
  }
  return set;
}

TrainResult run_training(const RunConfig& cfg, const std::optional<fs::path>& resume,
                         const std::function<void(const StepLog&)>& on_log) {
  const Corpus corpus = load_corpus(cfg.data, mode_of(cfg));
  Corpus train = select_conditions(corpus, cfg.data.train_conditions);
  Trainer tr = resume ? Trainer(cfg, std::move(train), *resume) : Trainer(cfg, std::move(train));
  fs::create_directories(cfg.output);
  std::ofstream log(cfg.output / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write metrics log in " + cfg.output.string());
  TrainResult res;
  const auto& o = cfg.optim;
  while (tr.steps_done() < o.total_steps) {
    const StepLog s = tr.step();
    res.log.push_back(s);
    if (s.step == 1 || s.step % o.log_every == 0 || s.step == o.total_steps) {
      log << nlohmann::json{{"step", s.step},       {"lr", s.lr}, {"loss", s.loss}, {"triplet", s.triplet},
                            {"ce", s.ce}, {"nonzero", s.nonzero}}
                 .dump()
          << std::endl;
      if (on_log) on_log(s);
    }
    if (std::find(o.milestones.begin(), o.milestones.end(), s.step) != o.milestones.end())
      tr.save(cfg.output / ("ckpt-" + std::to_string(s.step)));
  }
  res.checkpoint = cfg.output / "ckpt-final";
  tr.save(res.checkpoint);
  if (cfg.eval.enabled) {
    const auto probe = embed_corpus(tr.model(), select_conditions(corpus, cfg.eval.probe_conditions));
    const auto gallery = embed_corpus(tr.model(), select_conditions(corpus, cfg.eval.gallery_conditions));
    res.report = eval::evaluate(cfg.eval.protocol, probe, gallery);
    std::ofstream rep(cfg.output / "report.json", std::ios::trunc);
    if (!rep) throw IoError("cannot write report in " + cfg.output.string());
    rep << eval::to_json(*res.report).dump(1) << '\n';
  }
  return res;
}

}  // namespace gk::app
