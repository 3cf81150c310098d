#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mme/corpus.hpp"
#include "mme/loss.hpp"
#include "mme/mat.hpp"
#include "mme/model.hpp"
#include "mme/optim.hpp"
#include "mme/rng.hpp"
#include "mme/synth.hpp"

namespace mme::test {

inline Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

// Small model setup shared by the gradient-check tests. Image feature
// pointers stay valid across moves (they point into Vec heap storage).
struct TinyModel {
  ModelConfig config;
  WordEmbeddings embeddings;
  std::vector<Vec> image_features;
  std::vector<BatchItem> items;
  ModelParameters params;

  static TinyModel make(uint64_t seed, int batch = 8) {
    TinyModel t;
    t.config.common_dim = 16;
    t.config.image_dim = 8;
    t.config.word_dim = 6;
    t.config.user_dim = 6;
    t.config.max_sentence_len = 5;
    t.config.blocks = {{2, 4}, {3, 4}};
    Rng rng(seed);

    const int vocab_size = 12;
    t.embeddings.vectors = Mat(vocab_size, t.config.word_dim);
    for (int i = 1; i < vocab_size; ++i)  // row 0 = pad stays zero
      for (int j = 0; j < t.config.word_dim; ++j)
        t.embeddings.vectors.at(i, j) = rng.normal();

    const int users = 10;
    t.params = ModelParameters::init(t.config, users, rng);
    // Generic-position biases: the default zero init leaves every all-pad
    // conv window exactly at the relu kink, where two-sided differences
    // disagree with the (valid) zero subgradient.
    for (auto& c : t.params.conv)
      for (double& v : c.bias) v = rng.uniform(-0.3, 0.3);
    for (double& v : t.params.image_bias) v = rng.uniform(-0.1, 0.1);
    for (double& v : t.params.text_bias) v = rng.uniform(-0.1, 0.1);
    for (double& v : t.params.user_bias) v = rng.uniform(-0.1, 0.1);

    t.image_features.reserve(batch);
    for (int i = 0; i < batch; ++i) {
      BatchItem item;
      item.user = static_cast<int>(rng.index(users));
      bool text = rng.uniform() < 0.8 || i % 3 == 0;
      bool image = rng.uniform() < 0.8 || !text;
      if (text) {
        int len = 1 + static_cast<int>(rng.index(t.config.max_sentence_len));
        for (int w = 0; w < len; ++w)
          item.token_ids.push_back(
              1 + static_cast<int>(rng.index(vocab_size - 1)));
        item.has_text = true;
      }
      if (image) {
        Vec f(t.config.image_dim);
        for (double& v : f) v = rng.normal();
        t.image_features.push_back(std::move(f));
        item.image_feature = t.image_features.back().data();
      }
      t.items.push_back(std::move(item));
    }
    return t;
  }
};

// loss(params) for finite differences; rng-free (uncapped negatives)
inline double batch_loss(const TinyModel& t, const ModelParameters& params,
                         const LossWeights& weights,
                         const MarginConfig& margin) {
  Rng rng(0);
  EncodedBatch batch = encode_batch(t.items, t.embeddings, params, t.config);
  return mixture_loss(batch, weights, margin, rng).loss;
}

// max relative error between analytic and central-difference gradients
// over every parameter of the mixture loss composed through all encoders
inline double max_grad_rel_error(const TinyModel& t,
                                 const LossWeights& weights,
                                 const MarginConfig& margin,
                                 double h = 1e-5) {
  ModelParameters params = t.params;  // working copy
  Rng rng(0);
  EncodedBatch batch = encode_batch(t.items, t.embeddings, params, t.config);
  MixtureResult mix = mixture_loss(batch, weights, margin, rng);
  ParamGrads grads = ModelParameters::zeros(t.config, params.user_count());
  backward_batch(batch, mix.g_text, mix.g_image, mix.g_user, t.embeddings,
                 params, t.config, grads);

  std::vector<std::vector<double>*> p_blocks, g_blocks;
  params.for_each_block([&](const std::string&, std::vector<double>& d) {
    p_blocks.push_back(&d);
  });
  grads.for_each_block([&](const std::string&, std::vector<double>& d) {
    g_blocks.push_back(&d);
  });

  double worst = 0.0;
  for (size_t b = 0; b < p_blocks.size(); ++b) {
    std::vector<double>& p = *p_blocks[b];
    for (size_t i = 0; i < p.size(); ++i) {
      double orig = p[i];
      p[i] = orig + h;
      double up = batch_loss(t, params, weights, margin);
      p[i] = orig - h;
      double down = batch_loss(t, params, weights, margin);
      p[i] = orig;
      double fd = (up - down) / (2 * h);
      double an = (*g_blocks[b])[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

// Planted-topic corpus with everything train()/eval need wired up.
struct SynthSetup {
  SynthCorpus synth;
  Vocabulary vocab;
  WordEmbeddings embeddings;
  CorpusSplits splits;

  TrainInputs inputs() const {
    return {&synth.corpus, &splits, &vocab, &embeddings, &synth.features};
  }
};

inline SynthSetup make_synth_setup(const SynthConfig& config,
                                   const SplitConfig& split_config) {
  SynthSetup s;
  s.synth = generate_synthetic_corpus(config);
  s.vocab = build_vocabulary(s.synth.corpus.posts, 1);
  s.embeddings.vectors = Mat(s.vocab.size(), config.word_dim);
  for (size_t w = 0; w < s.synth.words.size(); ++w) {
    int id = s.vocab.lookup(s.synth.words[w]);
    if (id < 0) continue;
    for (int j = 0; j < config.word_dim; ++j)
      s.embeddings.vectors.at(id, j) = s.synth.word_vectors.at(
          static_cast<int>(w), j);
  }
  s.splits = make_splits(s.synth.corpus.posts, split_config);
  return s;
}

inline ModelConfig synth_model_config(const SynthConfig& config,
                                      int common_dim = 32) {
  ModelConfig m;
  m.common_dim = common_dim;
  m.image_dim = config.image_feature_dim;
  m.word_dim = config.word_dim;
  m.user_dim = config.word_dim;
  m.max_sentence_len = 12;
  m.blocks = {{2, common_dim / 2}, {3, common_dim / 2}};
  return m;
}

inline ModelParameters synth_initial_params(const SynthSetup& s,
                                            const ModelConfig& model_config,
                                            uint64_t seed) {
  Rng rng(seed);
  auto params =
      ModelParameters::init(model_config, s.synth.corpus.user_count, rng);
  params.user_table = init_user_embeddings(
      s.synth.corpus, s.vocab, s.embeddings, model_config,
      s.synth.corpus.user_count, seed);
  return params;
}

}  // namespace mme::test
