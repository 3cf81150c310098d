#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mme/mat.hpp"

namespace mme {

enum class Metric { Cosine, Euclidean };

struct Neighbor {
  int id = -1;        // position in the id list handed to build()
  double score = 0;   // cosine similarity or euclidean distance
};

// Exact k-NN index. Cosine vectors are stored pre-normalized and searched
// as euclidean on the unit sphere. A kd-tree accelerates low-dimensional
// data; results are always identical to a brute-force scan, including tie
// order (ties broken by ascending id).
class VectorIndex {
 public:
  VectorIndex(const Mat& vectors, Metric metric);

  int size() const { return data_.rows; }
  int dim() const { return data_.cols; }
  Metric metric() const { return metric_; }

  // Exactly k results, best first. Throws on k out of [1, size] or
  // dimension mismatch.
  std::vector<Neighbor> query_knn(const double* q, int k) const;
  std::vector<Neighbor> query_knn(const Vec& q, int k) const;

  // All ids with cosine >= threshold (cosine metric only), sorted by id.
  std::vector<int> query_radius_cosine(const double* q,
                                       double threshold) const;

 private:
  struct Node {
    int axis = -1;       // -1 for leaf
    double split = 0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  void build_tree();
  int build_node(int begin, int end, int depth);
  void search_node(int node, const double* q, int k,
                   std::vector<Neighbor>& heap, double& worst) const;

  Mat data_;  // normalized copy for cosine
  Metric metric_;
  bool use_tree_ = false;
  std::vector<Node> nodes_;
  std::vector<int> order_;  // permutation of point ids for leaf ranges
};

}  // namespace mme
