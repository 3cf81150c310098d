#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "mme/nnindex.hpp"

using namespace mme;

namespace {

// brute-force oracle, independent of the index implementation
std::vector<Neighbor> brute_force(const Mat& data, const Vec& q, int k,
                                  Metric metric) {
  struct Scored {
    double key;  // sortable: ascending
    int id;
    double score;
  };
  std::vector<Scored> all;
  Vec qn = q;
  if (metric == Metric::Cosine) {
    double n = norm2(q.data(), static_cast<int>(q.size()));
    for (double& v : qn) v /= n;
  }
  for (int i = 0; i < data.rows; ++i) {
    Vec row(data.row(i), data.row(i) + data.cols);
    double score, key;
    if (metric == Metric::Cosine) {
      double rn = norm2(row.data(), data.cols);
      // same arithmetic path as the index: 1 - d^2/2 on normalized vectors
      double d2 = 0.0;
      for (int j = 0; j < data.cols; ++j) {
        double diff = row[j] / rn - qn[j];
        d2 += diff * diff;
      }
      score = 1.0 - 0.5 * d2;
      key = d2;
    } else {
      double d2 = 0.0;
      for (int j = 0; j < data.cols; ++j) {
        double diff = row[j] - q[j];
        d2 += diff * diff;
      }
      score = std::sqrt(d2);
      key = d2;
    }
    all.push_back({key, i, score});
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    return a.key != b.key ? a.key < b.key : a.id < b.id;
  });
  std::vector<Neighbor> out;
  for (int i = 0; i < k; ++i) out.push_back({all[i].id, all[i].score});
  return out;
}

}  // namespace

TEST_CASE("single vector index") {
  Mat data(1, 3);
  data.at(0, 0) = 1.0;
  VectorIndex index(data, Metric::Cosine);
  auto res = index.query_knn(Vec{2.0, 0.0, 0.0}, 1);
  REQUIRE(res.size() == 1);
  CHECK(res[0].id == 0);
  CHECK(res[0].score == doctest::Approx(1.0));
}

TEST_CASE("self match ranks first with cosine 1") {
  Rng rng(2);
  Mat data = test::random_mat(50, 8, rng);
  VectorIndex index(data, Metric::Cosine);
  Vec q(data.row(7), data.row(7) + 8);
  auto res = index.query_knn(q, 3);
  CHECK(res[0].id == 7);
  CHECK(res[0].score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("query_knn equals brute force, both metrics, tree and flat") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 20 + static_cast<int>(rng.index(300));
    // d <= 32 exercises the kd-tree; larger d the flat scan
    int d = trial % 2 == 0 ? 2 + static_cast<int>(rng.index(10))
                           : 40 + static_cast<int>(rng.index(24));
    Mat data = test::random_mat(n, d, rng);
    // plant exact duplicates so tie order matters
    for (int dup = 0; dup < n / 10; ++dup)
      std::copy(data.row(dup), data.row(dup) + d, data.row(n - 1 - dup));

    Metric metric = trial % 3 == 0 ? Metric::Euclidean : Metric::Cosine;
    VectorIndex index(data, metric);
    for (int q = 0; q < 5; ++q) {
      Vec query(d);
      if (rng.uniform() < 0.3) {
        int src = static_cast<int>(rng.index(n));
        query.assign(data.row(src), data.row(src) + d);
      } else {
        for (double& v : query) v = rng.normal();
      }
      int k = 1 + static_cast<int>(rng.index(n));
      auto got = index.query_knn(query, k);
      auto want = brute_force(data, query, k, metric);
      REQUIRE(got.size() == want.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == want[i].id);
        CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("full ranking at k = index size") {
  Rng rng(21);
  Mat data = test::random_mat(100, 6, rng);
  VectorIndex index(data, Metric::Cosine);
  Vec q(6);
  for (double& v : q) v = rng.normal();
  auto got = index.query_knn(q, 100);
  auto want = brute_force(data, q, 100, Metric::Cosine);
  for (int i = 0; i < 100; ++i) CHECK(got[i].id == want[i].id);
}

TEST_CASE("errors") {
  Mat data(2, 2);
  data.at(0, 0) = 1.0;
  data.at(1, 1) = 1.0;
  VectorIndex index(data, Metric::Euclidean);
  CHECK_THROWS(index.query_knn(Vec{0.0, 0.0}, 0));
  CHECK_THROWS(index.query_knn(Vec{0.0, 0.0}, 3));
  CHECK_THROWS(index.query_knn(Vec{0.0, 0.0, 1.0}, 1));
  CHECK_THROWS(VectorIndex(Mat(0, 2), Metric::Euclidean));
  CHECK_THROWS(mat_from_rows({{1.0, 2.0}, {1.0}}));
}
