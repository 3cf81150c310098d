#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mme/corpus.hpp"
#include "mme/mat.hpp"

namespace mme {

struct RetrievalTask {
  std::string name;  // text-to-user | image-to-text | image-to-user
  Mat queries;
  std::vector<std::vector<int>> ground_truth;  // gallery rows per query
  Mat gallery;
};

struct RetrievalReport {
  std::map<std::string, double> mean_median_rank;  // per task
  std::map<std::string, int> gallery_size;
  double joint_normalized = 0.0;
};

// Mid-rank of each ground-truth row under descending scores: ties get the
// mean rank of the tied block.
double rank_of(const double* scores, int n, int target);

// Per query: median of its ground-truth mid-ranks; mean over queries.
// Scores are cosine similarities between query and gallery rows.
double mean_median_rank(const RetrievalTask& task);

// Same metric on a precomputed score matrix (rows = queries); the oracle
// entry point used by tests.
double mean_median_rank_scores(const Mat& scores,
                               const std::vector<std::vector<int>>& gt);

// sum over tasks of mean_median_rank / gallery_size; requires all three
double joint_normalized_metric(
    const std::map<std::string, double>& ranks,
    const std::map<std::string, int>& gallery_sizes);

enum class BaselineMode { AvgText, AvgImage };

// Non-learned per-user vectors: mean word vector or mean image feature of
// the user's posts; users lacking the modality get a seeded random vector.
Mat baseline_user_embedding(const Corpus& corpus, BaselineMode mode,
                            const Vocabulary& vocab,
                            const WordEmbeddings& embeddings,
                            const ImageFeatureStore& features, uint64_t seed);

struct InterestLabels {
  static constexpr int kClasses = 3;  // shoes, fashion, hospitality
  std::vector<std::array<int, kClasses>> labels;  // per user, 0/1
};

// One-vs-rest linear max-margin classifiers (hinge + L2 penalty 1/(2C),
// C=1), 5-fold stratified CV, macro F1 over classes and folds.
double predict_user_interests(const Mat& user_embeddings,
                              const InterestLabels& labels, int folds,
                              uint64_t seed);

// binary F1 helper (positive class)
double f1_score(const std::vector<int>& truth, const std::vector<int>& pred);

}  // namespace mme
