#include "mme/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mme/rng.hpp"

namespace mme {

void SynthConfig::validate() const {
  if (topic_count < 1 || users_per_topic < 1 || posts_per_user < 1 ||
      vocab_per_topic < 1 || word_dim < 1 || image_feature_dim < 1)
    throw std::invalid_argument("SynthConfig: all counts must be >= 1");
  if (image_missing_rate < 0 || image_missing_rate > 1)
    throw std::invalid_argument("SynthConfig: missing rate must be in [0,1]");
  if (noise < 0) throw std::invalid_argument("SynthConfig: negative noise");
}

namespace {

Vec random_unit(Rng& rng, int dim) {
  Vec v(dim);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm2(v.data(), dim);
  } while (n == 0.0);
  for (double& x : v) x /= n;
  return v;
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SynthCorpus generate_synthetic_corpus(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SynthCorpus out;

  const int topics = config.topic_count;
  const int users = topics * config.users_per_topic;
  const int posts = users * config.posts_per_user;

  // topic directions
  std::vector<Vec> word_dirs, image_dirs;
  for (int t = 0; t < topics; ++t) {
    word_dirs.push_back(random_unit(rng, config.word_dim));
    image_dirs.push_back(random_unit(rng, config.image_feature_dim));
  }

  // vocabulary: topic direction + per-word jitter
  out.word_vectors = Mat(topics * config.vocab_per_topic, config.word_dim);
  int wi = 0;
  for (int t = 0; t < topics; ++t) {
    for (int j = 0; j < config.vocab_per_topic; ++j, ++wi) {
      out.words.push_back("t" + std::to_string(t) + "w" + std::to_string(j));
      for (int d = 0; d < config.word_dim; ++d)
        out.word_vectors.at(wi, d) =
            word_dirs[t][d] + 0.3 * rng.normal() / std::sqrt(config.word_dim);
    }
  }

  out.topic_of_user.resize(users);
  for (int u = 0; u < users; ++u)
    out.topic_of_user[u] = u / config.users_per_topic;

  out.features.dim = config.image_feature_dim;
  std::vector<Vec> feature_rows;

  const int id_width = static_cast<int>(std::to_string(posts).size());
  out.corpus.user_count = users;
  int post_counter = 0;
  for (int u = 0; u < users; ++u) {
    int topic = out.topic_of_user[u];
    for (int p = 0; p < config.posts_per_user; ++p, ++post_counter) {
      Post post;
      post.post_id = "p" + zero_pad(post_counter, id_width);
      post.user_id = u;

      int len = 5 + static_cast<int>(rng.index(8));
      for (int w = 0; w < len; ++w) {
        int word = topic * config.vocab_per_topic +
                   static_cast<int>(rng.index(config.vocab_per_topic));
        post.tokens.push_back(out.words[word]);
      }
      post.has_text = true;

      if (rng.uniform() >= config.image_missing_rate) {
        Vec feat(config.image_feature_dim);
        for (int d = 0; d < config.image_feature_dim; ++d)
          feat[d] = image_dirs[topic][d] +
                    config.noise * rng.normal() /
                        std::sqrt(config.image_feature_dim);
        post.image_ref = "img" + zero_pad(post_counter, id_width);
        out.features.row[post.image_ref] =
            static_cast<int>(feature_rows.size());
        out.features.refs.push_back(post.image_ref);
        feature_rows.push_back(std::move(feat));
      }
      out.corpus.posts.push_back(std::move(post));
    }
  }
  out.features.features = feature_rows.empty()
                              ? Mat(0, config.image_feature_dim)
                              : mat_from_rows(feature_rows);
  out.corpus.rebuild_index();
  return out;
}

void write_synth_corpus(const std::string& dir, const SynthCorpus& synth) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_posts((fs::path(dir) / "posts.tsv").string(), synth.corpus.posts);
  save_image_features((fs::path(dir) / "features.bin").string(),
                      synth.features);
  save_word_embeddings((fs::path(dir) / "wordvecs.txt").string(), synth.words,
                       synth.word_vectors);
  std::ofstream topics((fs::path(dir) / "topics.txt").string());
  for (size_t u = 0; u < synth.topic_of_user.size(); ++u)
    topics << u << ' ' << synth.topic_of_user[u] << '\n';
}

}  // namespace mme
