#include <filesystem>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "mme/synth.hpp"

using namespace mme;

namespace {

SynthConfig tiny_config() {
  SynthConfig c;
  c.topic_count = 3;
  c.users_per_topic = 8;
  c.posts_per_user = 10;
  c.vocab_per_topic = 15;
  c.word_dim = 8;
  c.image_feature_dim = 8;
  c.seed = 6;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  auto a = generate_synthetic_corpus(tiny_config());
  auto b = generate_synthetic_corpus(tiny_config());
  REQUIRE(a.corpus.posts.size() == b.corpus.posts.size());
  for (size_t i = 0; i < a.corpus.posts.size(); ++i) {
    CHECK(a.corpus.posts[i].post_id == b.corpus.posts[i].post_id);
    CHECK(a.corpus.posts[i].tokens == b.corpus.posts[i].tokens);
    CHECK(a.corpus.posts[i].image_ref == b.corpus.posts[i].image_ref);
  }
  CHECK(a.word_vectors.data == b.word_vectors.data);
  CHECK(a.features.features.data == b.features.features.data);
  CHECK(a.topic_of_user == b.topic_of_user);
}

TEST_CASE("structure invariants") {
  auto s = generate_synthetic_corpus(tiny_config());
  CHECK(s.corpus.user_count == 24);
  CHECK(s.corpus.posts.size() == 240);
  CHECK(s.topic_of_user.size() == 24);
  CHECK(s.words.size() == 45);
  for (const Post& p : s.corpus.posts) {
    CHECK(p.has_text);
    CHECK(p.tokens.size() >= 5);
    CHECK(p.tokens.size() <= 12);
    if (p.has_image()) CHECK(s.features.contains(p.image_ref));
    // tokens come from the owner's topic vocabulary
    int topic = s.topic_of_user[p.user_id];
    std::string prefix = "t" + std::to_string(topic) + "w";
    for (const auto& t : p.tokens) CHECK(t.rfind(prefix, 0) == 0);
  }
}

TEST_CASE("image missing rate tracks the configured probability") {
  SynthConfig c;  // default size: 5000 posts
  c.word_dim = 8;
  c.image_feature_dim = 8;
  c.image_missing_rate = 0.9;
  auto s = generate_synthetic_corpus(c);
  long with_image = 0;
  for (const Post& p : s.corpus.posts)
    if (p.has_image()) ++with_image;
  double rate = static_cast<double>(with_image) / s.corpus.posts.size();
  CHECK(rate > 0.08);
  CHECK(rate < 0.12);
}

TEST_CASE("zero noise collapses each topic onto one image direction") {
  auto c = tiny_config();
  c.noise = 0.0;
  c.image_missing_rate = 0.2;
  auto s = generate_synthetic_corpus(c);
  std::map<int, std::string> first_ref;  // topic -> representative
  for (const Post& p : s.corpus.posts) {
    if (!p.has_image()) continue;
    int topic = s.topic_of_user[p.user_id];
    auto [it, fresh] = first_ref.emplace(topic, p.image_ref);
    if (fresh) continue;
    const double* a = s.features.vector(it->second);
    const double* b = s.features.vector(p.image_ref);
    for (int j = 0; j < s.features.dim; ++j) CHECK(a[j] == b[j]);
  }
  CHECK(first_ref.size() == 3);
}

TEST_CASE("images are closer to their own topic than to others") {
  auto s = generate_synthetic_corpus(tiny_config());
  // mean feature per topic
  Mat mean(3, s.features.dim);
  std::vector<long> n(3, 0);
  for (const Post& p : s.corpus.posts) {
    if (!p.has_image()) continue;
    int t = s.topic_of_user[p.user_id];
    axpy(1.0, s.features.vector(p.image_ref), mean.row(t), s.features.dim);
    n[t]++;
  }
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < s.features.dim; ++j) mean.at(t, j) /= n[t];
  for (const Post& p : s.corpus.posts) {
    if (!p.has_image()) continue;
    int t = s.topic_of_user[p.user_id];
    const double* f = s.features.vector(p.image_ref);
    double own = cosine_similarity(f, mean.row(t), s.features.dim);
    for (int o = 0; o < 3; ++o) {
      if (o == t) continue;
      CHECK(own > cosine_similarity(f, mean.row(o), s.features.dim));
    }
  }
}

TEST_CASE("written corpus round-trips through the loaders") {
  namespace fs = std::filesystem;
  auto dir = (fs::temp_directory_path() / "mme_synth_rt").string();
  fs::create_directories(dir);
  auto s = generate_synthetic_corpus(tiny_config());
  write_synth_corpus(dir, s);

  CleaningConfig cleaning;
  Corpus loaded = load_posts(dir + "/posts.tsv", cleaning,
                             /*already_clean=*/true);
  REQUIRE(loaded.posts.size() == s.corpus.posts.size());
  for (size_t i = 0; i < loaded.posts.size(); ++i) {
    CHECK(loaded.posts[i].post_id == s.corpus.posts[i].post_id);
    CHECK(loaded.posts[i].tokens == s.corpus.posts[i].tokens);
  }
  auto features = load_image_features(dir + "/features.bin");
  REQUIRE(features.count() == s.features.count());
  // files hold float32: loading back gives exactly the rounded values
  for (size_t i = 0; i < features.features.data.size(); ++i)
    CHECK(features.features.data[i] ==
          static_cast<double>(static_cast<float>(s.features.features.data[i])));
  validate_corpus(loaded, features);
}

TEST_CASE("config validation") {
  SynthConfig c = tiny_config();
  c.topic_count = 0;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.image_missing_rate = 1.5;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.noise = -0.1;
  CHECK_THROWS(c.validate());
}
