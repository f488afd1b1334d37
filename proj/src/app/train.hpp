// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "app/config.hpp"
#include "eval/report.hpp"
#include "net/checkpoint.hpp"
#include "prep/dataset.hpp"

namespace gk::app {

// Sequences in memory, frame-aligned across modalities.
struct Corpus {
  struct Item {
    prep::SequenceKey key;
    std::optional<nd::TensorF> silhouette;  // [T, 1, H, W]
    std::optional<nd::TensorF> skeleton;    // [T, 2, H, W]
    std::size_t frames() const { return silhouette ? silhouette->dim(0) : skeleton->dim(0); }
  };
  std::vector<Item> items;
};

// Loads the modalities `mode` consumes. For two-branch models only keys present
// in both indexes are kept, restricted to their common source frames.
Corpus load_corpus(const DataSection& data, net::Mode mode);

// Items whose condition is listed (all items for an empty list).
Corpus select_conditions(const Corpus& c, const std::vector<std::string>& conditions);

// [N, C, T, H, W] from N clips of shape [T, C, H, W].
nd::TensorF stack_clips(const std::vector<nd::TensorF>& clips);

struct StepLog {
  long step = 0;  // 1-based index of the completed step
  double lr = 0, loss = 0, triplet = 0, ce = 0;
  std::size_t nonzero = 0;
};

class Trainer {
 public:
  // The model's class count is filled in from the training subjects when absent.
  Trainer(const RunConfig& cfg, Corpus train);
  // Continues from a checkpoint written by save().
  Trainer(const RunConfig& cfg, Corpus train, const std::filesystem::path& checkpoint);

  StepLog step();
  long steps_done() const { return step_; }
  net::Model& model() { return *model_; }
  const std::vector<int>& labels() const { return labels_; }
  void save(const std::filesystem::path& dir) const;

 private:
  void init_labels();

  RunConfig cfg_;
  Corpus train_;
  std::vector<int> labels_;
  std::unique_ptr<net::Model> model_;
  prep::Rng rng_;
  long step_ = 0;
};

// Whole-sequence, eval-mode embeddings (post-BN) of every item.
eval::EmbeddingSet embed_corpus(net::Model& model, const Corpus& c);

struct TrainResult {
  std::vector<StepLog> log;
  std::optional<eval::EvalReport> report;
  std::filesystem::path checkpoint;
};

// Trains to cfg.optim.total_steps, writing metrics.jsonl, checkpoints at each
// milestone and at the end, and report.json when evaluation is configured.
TrainResult run_training(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume = std::nullopt,
                         const std::function<void(const StepLog&)>& on_log = {});

}  // namespace gk::app
