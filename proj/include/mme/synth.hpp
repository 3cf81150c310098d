#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mme/corpus.hpp"

namespace mme {

struct SynthConfig {
  int topic_count = 5;
  int users_per_topic = 40;
  int posts_per_user = 25;
  int vocab_per_topic = 50;
  int word_dim = 32;
  int image_feature_dim = 32;
  double image_missing_rate = 0.5;
  double noise = 0.1;
  uint64_t seed = 1;

  void validate() const;
};

struct SynthCorpus {
  Corpus corpus;
  std::vector<std::string> words;  // without pad token
  Mat word_vectors;                // aligned with `words`
  ImageFeatureStore features;
  std::vector<int> topic_of_user;
};

// Planted-topic corpus: each topic owns a word subset and an image-feature
// direction; users belong to one topic; posts draw tokens from the topic
// vocabulary and carry a noisy copy of the topic image direction.
SynthCorpus generate_synthetic_corpus(const SynthConfig& config);

// Writes posts.tsv, features.bin (+ .idx), wordvecs.txt, topics.txt
void write_synth_corpus(const std::string& dir, const SynthCorpus& synth);

}  // namespace mme
