#include "mme/nnindex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mme {

namespace {

constexpr int kTreeMaxDim = 32;  // brute force wins above this
constexpr int kLeafSize = 16;

struct Cand {
  double dist;
  int id;
  bool operator<(const Cand& o) const {
    return dist != o.dist ? dist < o.dist : id < o.id;
  }
};

}  // namespace

VectorIndex::VectorIndex(const Mat& vectors, Metric metric)
    : data_(vectors), metric_(metric) {
  if (data_.rows == 0) throw std::invalid_argument("VectorIndex: empty input");
  if (metric_ == Metric::Cosine) {
    for (int i = 0; i < data_.rows; ++i) {
      double n = norm2(data_.row(i), data_.cols);
      if (n == 0.0)
        throw std::invalid_argument("VectorIndex: zero vector under cosine");
      for (int j = 0; j < data_.cols; ++j) data_.at(i, j) /= n;
    }
  }
  use_tree_ = data_.cols <= kTreeMaxDim;
  if (use_tree_) build_tree();
}

void VectorIndex::build_tree() {
  order_.resize(data_.rows);
  for (int i = 0; i < data_.rows; ++i) order_[i] = i;
  nodes_.reserve(2 * data_.rows / kLeafSize + 4);
  build_node(0, data_.rows, 0);
}

int VectorIndex::build_node(int begin, int end, int depth) {
  int node_id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[node_id].begin = begin;
    nodes_[node_id].end = end;
    return node_id;
  }
  // widest-spread axis
  int axis = 0;
  double best_spread = -1.0;
  for (int j = 0; j < data_.cols; ++j) {
    double lo = data_.at(order_[begin], j), hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      double v = data_.at(order_[i], j);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      axis = j;
    }
  }
  if (best_spread == 0.0) {  // all identical on every axis
    nodes_[node_id].begin = begin;
    nodes_[node_id].end = end;
    return node_id;
  }
  int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     double va = data_.at(a, axis), vb = data_.at(b, axis);
                     return va != vb ? va < vb : a < b;
                   });
  double split = data_.at(order_[mid], axis);
  int left = build_node(begin, mid, depth + 1);
  int right = build_node(mid, end, depth + 1);
  nodes_[node_id].axis = axis;
  nodes_[node_id].split = split;
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

void VectorIndex::search_node(int node_idx, const double* q, int k,
                              std::vector<Neighbor>& heap,
                              double& worst) const {
  (void)worst;
  const Node& node = nodes_[node_idx];
  auto cand_worse = [](const Neighbor& a, const Neighbor& b) {
    // max-heap on (dist, id): worst candidate on top
    return a.score != b.score ? a.score < b.score : a.id < b.id;
  };
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      int id = order_[i];
      double d2 = 0.0;
      const double* p = data_.row(id);
      for (int j = 0; j < data_.cols; ++j) {
        double diff = p[j] - q[j];
        d2 += diff * diff;
      }
      Neighbor cand{id, d2};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), cand_worse);
      } else if (cand_worse(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), cand_worse);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), cand_worse);
      }
    }
    return;
  }
  double delta = q[node.axis] - node.split;
  int near = delta <= 0 ? node.left : node.right;
  int far = delta <= 0 ? node.right : node.left;
  search_node(near, q, k, heap, worst);
  // descend the far side unless it provably cannot improve the heap
  if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().score)
    search_node(far, q, k, heap, worst);
}

std::vector<Neighbor> VectorIndex::query_knn(const double* q, int k) const {
  if (k < 1 || k > size())
    throw std::invalid_argument("query_knn: k out of range");
  Vec qn;
  if (metric_ == Metric::Cosine) {
    double n = norm2(q, data_.cols);
    if (n == 0.0)
      throw std::invalid_argument("query_knn: zero query under cosine");
    qn.assign(q, q + data_.cols);
    for (double& v : qn) v /= n;
    q = qn.data();
  }

  std::vector<Cand> best;
  if (use_tree_) {
    std::vector<Neighbor> heap;
    heap.reserve(k + 1);
    double worst = 0.0;
    search_node(0, q, k, heap, worst);
    for (const Neighbor& nb : heap) best.push_back({nb.score, nb.id});
  } else {
    best.resize(size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < size(); ++i) {
      double d2 = 0.0;
      const double* p = data_.row(i);
      for (int j = 0; j < data_.cols; ++j) {
        double diff = p[j] - q[j];
        d2 += diff * diff;
      }
      best[i] = {d2, i};
    }
    std::partial_sort(best.begin(), best.begin() + k, best.end());
    best.resize(k);
  }
  std::sort(best.begin(), best.end());

  std::vector<Neighbor> out;
  out.reserve(k);
  for (const Cand& c : best) {
    double score = metric_ == Metric::Cosine ? 1.0 - 0.5 * c.dist
                                             : std::sqrt(c.dist);
    out.push_back({c.id, score});
  }
  return out;
}

std::vector<Neighbor> VectorIndex::query_knn(const Vec& q, int k) const {
  if (static_cast<int>(q.size()) != data_.cols)
    throw std::invalid_argument("query_knn: dimension mismatch");
  return query_knn(q.data(), k);
}

std::vector<int> VectorIndex::query_radius_cosine(const double* q,
                                                  double threshold) const {
  if (metric_ != Metric::Cosine)
    throw std::logic_error("query_radius_cosine requires cosine metric");
  double n = norm2(q, data_.cols);
  if (n == 0.0) throw std::invalid_argument("zero query under cosine");
  std::vector<char> hit(size(), 0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < size(); ++i) {
    double s = dot(data_.row(i), q, data_.cols) / n;
    hit[i] = s >= threshold ? 1 : 0;
  }
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (hit[i]) out.push_back(i);
  return out;
}

}  // namespace mme
