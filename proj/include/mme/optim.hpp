#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mme/corpus.hpp"
#include "mme/loss.hpp"
#include "mme/model.hpp"

namespace mme {

enum class TrainMode { Joint, Bridging, Merged };

struct TrainConfig {
  double learning_rate = 0.0005;
  double decay_factor = 10.0;
  int decay_every = 10;  // epochs
  int batch_size = 1000;
  int epochs = 30;
  uint64_t seed = 0;
  TrainMode mode = TrainMode::Joint;
  LossWeights weights;
  MarginConfig margin;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParamGrads m, v;  // moments, shaped like the parameters
  long step = 0;

  static AdamState zeros(const ModelConfig& config, int user_count);
};

// Which parameter blocks receive updates (bridging stage 2 freezes text
// and user). Order matches ModelParameters::for_each_block names.
struct TrainableMask {
  bool image = true;
  bool text = true;
  bool user = true;
  bool allows(const std::string& block_name) const;
};

// lr(epoch) = base / decay_factor^(epoch / decay_every)
double scheduled_lr(const TrainConfig& config, int epoch);

// Standard Adam with bias correction. `touched_users` limits the
// user_table update to rows seen in the batch; pass nullptr for dense.
void adam_step(ModelParameters& params, const ParamGrads& grads,
               AdamState& state, double lr, const AdamConfig& adam,
               const TrainableMask& mask,
               const std::vector<int>* touched_users);

struct CheckpointMeta {
  int epoch = 0;
  std::map<std::string, double> validation_ranks;  // task -> mean median rank
  std::map<std::string, int> gallery_sizes;
  double combined_score = 0.0;  // sum of rank/gallery over tasks with lambda>0
};

struct Checkpoint {
  ModelParameters params;
  CheckpointMeta meta;
};

struct TrainLogEntry {
  int epoch;
  int step;
  double loss;
  double lr;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;  // one per epoch
  std::vector<TrainLogEntry> log;
  int best = -1;  // index into checkpoints
};

struct TrainInputs {
  const Corpus* corpus;
  const CorpusSplits* splits;
  const Vocabulary* vocab;
  const WordEmbeddings* embeddings;
  const ImageFeatureStore* features;
};

TrainResult train(const TrainInputs& in, const ModelConfig& model_config,
                  const TrainConfig& train_config,
                  ModelParameters initial_params);

// argmin of the combined normalized validation score over tasks with
// lambda > 0; ties resolve to the earliest epoch
int select_checkpoint(const std::vector<CheckpointMeta>& metas,
                      const LossWeights& weights);

// Elementwise sum of text and (optional) image embedding; a missing image
// contributes a zero vector.
Vec fuse_sum_pool(const Vec& text_embedding, const Vec* image_embedding);

}  // namespace mme
