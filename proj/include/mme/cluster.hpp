#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mme/corpus.hpp"
#include "mme/mat.hpp"

namespace mme {

struct ClusterModel {
  Mat centroids;                // k rows
  std::vector<int> assignment;  // per point
  double objective = 0.0;       // sum of squared distances
  std::vector<double> objective_history;  // per Lloyd iteration
};

// Lloyd iterations from seeded k-means++ initialization; empty clusters
// are reseeded to the farthest point.
ClusterModel kmeans(const Mat& vectors, int k, uint64_t seed,
                    int max_iters = 100, double tol = 1e-6);

struct ClusterReport {
  struct Entry {
    int cluster;
    std::vector<std::pair<std::string, long>> top_words;  // word, count
    std::vector<std::pair<std::string, double>> top_images;  // ref, cosine
  };
  std::vector<Entry> clusters;
};

// Per-cluster word frequencies (corpus-wide top `common_word_count` words
// removed) and nearest image embeddings to each centroid by cosine.
ClusterReport cluster_report(const ClusterModel& model, const Corpus& corpus,
                             int common_word_count, int top_words,
                             int top_images, const Mat& image_embeddings,
                             const std::vector<std::string>& image_refs);

void write_cluster_report(const std::string& path,
                          const ClusterReport& report);

// fraction of points whose cluster's majority label matches their own
double cluster_purity(const std::vector<int>& assignment,
                      const std::vector<int>& labels);

}  // namespace mme
