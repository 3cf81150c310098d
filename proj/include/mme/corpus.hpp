#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mme/mat.hpp"

namespace mme {

// A social-media post: user id plus optional text and/or image reference.
struct Post {
  std::string post_id;
  int user_id = -1;
  std::vector<std::string> tokens;  // cleaned tokens; empty + has_text=false
  bool has_text = false;
  std::string image_ref;  // empty when absent
  bool has_image() const { return !image_ref.empty(); }
};

struct CleaningConfig {
  std::set<std::string> stopwords;  // defaults filled by default_stopwords()
  int max_sentence_len = 20;
};

const std::set<std::string>& default_stopwords();

struct Vocabulary {
  std::vector<std::string> words;  // index 0 is the pad token
  std::unordered_map<std::string, int> index;
  int min_count = 5;
  static constexpr int kPadIndex = 0;
  static constexpr const char* kPadToken = "<pad>";

  int size() const { return static_cast<int>(words.size()); }
  int lookup(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? -1 : it->second;
  }
};

// |V| x d_w matrix aligned to a Vocabulary; row 0 (pad) is all zero.
struct WordEmbeddings {
  Mat vectors;
  int dim() const { return vectors.cols; }
};

struct ImageFeatureStore {
  int dim = 0;
  Mat features;                              // one row per image
  std::vector<std::string> refs;             // row -> image_ref
  std::unordered_map<std::string, int> row;  // image_ref -> row

  bool contains(const std::string& ref) const { return row.count(ref) > 0; }
  const double* vector(const std::string& ref) const {
    return features.row(row.at(ref));
  }
  int count() const { return features.rows; }
};

struct Corpus {
  std::vector<Post> posts;
  int user_count = 0;
  std::unordered_map<std::string, int> post_index;  // post_id -> position

  const Post& by_id(const std::string& id) const {
    return posts[post_index.at(id)];
  }
  void rebuild_index();
};

struct CorpusSplits {
  struct TaskSplit {
    std::vector<std::string> validation;
    std::vector<std::string> test;
  };
  std::vector<std::string> train;
  TaskSplit text_to_user;
  TaskSplit image_to_text;
  TaskSplit image_to_user;
};

struct SplitConfig {
  double test_fraction = 0.20;
  double validation_fraction = 0.02;
  int image_text_test_count = 5000;
  uint64_t seed = 0;
};

// --- operations ---

std::vector<std::string> clean_text(const std::string& raw,
                                    const CleaningConfig& config);

Vocabulary build_vocabulary(const std::vector<Post>& posts, int min_count);

// Keeps the earliest post_id among near-duplicate texts. Two text posts are
// duplicates when token-set Jaccard >= overlap_threshold and their image
// components are equal (both absent or same canonical image_ref).
std::vector<Post> dedup_text(const std::vector<Post>& posts,
                             double overlap_threshold);

class VectorIndex;

// Connected components over pairwise cosine >= sim_threshold; canonical
// representative is the smallest image_ref in the component.
std::map<std::string, std::string> dedup_images(const ImageFeatureStore& store,
                                                const VectorIndex& index,
                                                double sim_threshold);

CorpusSplits make_splits(const std::vector<Post>& posts,
                         const SplitConfig& config);

// --- file formats ---

// Posts: tab-separated lines "post_id \t user_id \t text \t image_ref"
// (text and image_ref may be empty, not both).
Corpus load_posts(const std::string& path, const CleaningConfig& cleaning,
                  bool already_clean = false);
void save_posts(const std::string& path, const std::vector<Post>& posts);

// Image features: binary header (magic 'MMEF', count, dim as LE int32)
// followed by row-major float32, plus a sidecar "<ref> <row>" text map at
// path + ".idx".
ImageFeatureStore load_image_features(const std::string& path);
void save_image_features(const std::string& path,
                         const ImageFeatureStore& store);

// Word vectors: first line "count dim", then "word v1 ... vd" per line.
// Returned embeddings are aligned to vocab; unknown words stay zero.
WordEmbeddings load_word_embeddings(const std::string& path,
                                    const Vocabulary& vocab);
void save_word_embeddings(const std::string& path,
                          const std::vector<std::string>& words,
                          const Mat& vectors);

CorpusSplits load_splits(const std::string& dir);
void save_splits(const std::string& dir, const CorpusSplits& splits);

// Validates post invariants and image_ref resolution; throws
// std::runtime_error naming the offending line/record.
void validate_corpus(const Corpus& corpus, const ImageFeatureStore& store);

}  // namespace mme
