#include "mme/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mme/loss.hpp"
#include "mme/rng.hpp"

namespace mme {

double rank_of(const double* scores, int n, int target) {
  double s = scores[target];
  int better = 0, tied = 0;
  for (int i = 0; i < n; ++i) {
    if (scores[i] > s) ++better;
    else if (scores[i] == s) ++tied;  // includes target itself
  }
  return better + (tied + 1) / 2.0;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double mean_median_rank_scores(const Mat& scores,
                               const std::vector<std::vector<int>>& gt) {
  if (scores.rows == 0 || scores.cols == 0)
    throw std::invalid_argument("mean_median_rank: empty queries or gallery");
  if (static_cast<size_t>(scores.rows) != gt.size())
    throw std::invalid_argument("mean_median_rank: ground truth mismatch");
  for (int q = 0; q < scores.rows; ++q) {
    if (gt[q].empty())
      throw std::invalid_argument("mean_median_rank: query without truth");
    for (int t : gt[q])
      if (t < 0 || t >= scores.cols)
        throw std::out_of_range("mean_median_rank: ground truth id missing");
  }
  std::vector<double> per_query(scores.rows);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < scores.rows; ++q) {
    std::vector<double> ranks;
    ranks.reserve(gt[q].size());
    for (int t : gt[q])
      ranks.push_back(rank_of(scores.row(q), scores.cols, t));
    per_query[q] = median(std::move(ranks));
  }
  return std::accumulate(per_query.begin(), per_query.end(), 0.0) /
         scores.rows;
}

double mean_median_rank(const RetrievalTask& task) {
  if (task.queries.rows == 0 || task.gallery.rows == 0)
    throw std::invalid_argument("mean_median_rank: empty queries or gallery");
  Mat scores(task.queries.rows, task.gallery.rows);
  Vec gnorm(task.gallery.rows);
  for (int g = 0; g < task.gallery.rows; ++g)
    gnorm[g] = norm2(task.gallery.row(g), task.gallery.cols);
#pragma omp parallel for schedule(static)
  for (int q = 0; q < task.queries.rows; ++q) {
    const double* xq = task.queries.row(q);
    double nq = norm2(xq, task.queries.cols);
    for (int g = 0; g < task.gallery.rows; ++g)
      scores.at(q, g) =
          dot(xq, task.gallery.row(g), task.queries.cols) / (nq * gnorm[g]);
  }
  return mean_median_rank_scores(scores, task.ground_truth);
}

double joint_normalized_metric(
    const std::map<std::string, double>& ranks,
    const std::map<std::string, int>& gallery_sizes) {
  for (const char* task : {"text-to-user", "image-to-text", "image-to-user"})
    if (!ranks.count(task))
      throw std::invalid_argument(std::string("joint metric: missing task ") +
                                  task);
  double s = 0.0;
  for (const auto& [task, rank] : ranks) s += rank / gallery_sizes.at(task);
  return s;
}

Mat baseline_user_embedding(const Corpus& corpus, BaselineMode mode,
                            const Vocabulary& vocab,
                            const WordEmbeddings& embeddings,
                            const ImageFeatureStore& features, uint64_t seed) {
  int K = corpus.user_count;
  int dim = mode == BaselineMode::AvgText ? embeddings.dim() : features.dim;
  Mat out(K, dim);
  std::vector<long> counts(K, 0);
  for (const Post& p : corpus.posts) {
    if (mode == BaselineMode::AvgText) {
      if (!p.has_text) continue;
      for (const std::string& t : p.tokens) {
        int wi = vocab.lookup(t);
        if (wi <= 0) continue;
        axpy(1.0, embeddings.vectors.row(wi), out.row(p.user_id), dim);
        counts[p.user_id]++;
      }
    } else {
      if (!p.has_image()) continue;
      axpy(1.0, features.vector(p.image_ref), out.row(p.user_id), dim);
      counts[p.user_id]++;
    }
  }
  Rng rng(seed);
  for (int u = 0; u < K; ++u) {
    if (counts[u] > 0) {
      for (int j = 0; j < dim; ++j)
        out.at(u, j) /= static_cast<double>(counts[u]);
    } else {
      for (int j = 0; j < dim; ++j) out.at(u, j) = rng.normal();
    }
  }
  return out;
}

double f1_score(const std::vector<int>& truth, const std::vector<int>& pred) {
  int tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    else if (pred[i] == 1) ++fp;
    else if (truth[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / (tp + fp);
  double recall = static_cast<double>(tp) / (tp + fn);
  return 2 * precision * recall / (precision + recall);
}

namespace {

// Deterministic full-batch subgradient descent on
//   J(w,b) = ||w||^2 / (2C) + (1/n) sum_i max(0, 1 - y_i (w.x_i + b))
struct LinearClassifier {
  Vec w;
  double b = 0.0;

  void fit(const Mat& x, const std::vector<int>& y, double c, int iters) {
    const int n = x.rows, d = x.cols;
    w.assign(d, 0.0);
    b = 0.0;
    Vec gw(d);
    for (int it = 1; it <= iters; ++it) {
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (int i = 0; i < n; ++i) {
        double yi = y[i] == 1 ? 1.0 : -1.0;
        double m = yi * (dot(w.data(), x.row(i), d) + b);
        if (m < 1.0) {
          axpy(-yi / n, x.row(i), gw.data(), d);
          gb -= yi / n;
        }
      }
      axpy(1.0 / c, w.data(), gw.data(), d);
      double lr = 1.0 / std::sqrt(static_cast<double>(it));
      axpy(-lr, gw.data(), w.data(), d);
      b -= lr * gb;
    }
  }

  int predict(const double* xi, int d) const {
    return dot(w.data(), xi, d) + b > 0 ? 1 : 0;
  }
};

}  // namespace

double predict_user_interests(const Mat& user_embeddings,
                              const InterestLabels& labels, int folds,
                              uint64_t seed) {
  const int n = user_embeddings.rows;
  const int d = user_embeddings.cols;
  if (static_cast<size_t>(n) != labels.labels.size())
    throw std::invalid_argument("predict_user_interests: label count");

  double total_f1 = 0.0;
  int scored = 0;
  for (int cls = 0; cls < InterestLabels::kClasses; ++cls) {
    // stratified fold assignment: shuffle within each label stratum, then
    // deal round-robin
    Rng rng(seed + static_cast<uint64_t>(cls) * 7919);
    std::vector<int> pos, neg;
    for (int i = 0; i < n; ++i)
      (labels.labels[i][cls] ? pos : neg).push_back(i);
    if (static_cast<int>(pos.size()) < folds ||
        static_cast<int>(neg.size()) < folds)
      throw std::invalid_argument(
          "predict_user_interests: class too small for fold count");
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<int> fold(n);
    for (size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = i % folds;
    for (size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = i % folds;

    for (int f = 0; f < folds; ++f) {
      std::vector<int> train_rows, test_rows;
      for (int i = 0; i < n; ++i)
        (fold[i] == f ? test_rows : train_rows).push_back(i);

      // standardize features on the training fold
      Vec mean(d, 0.0), sd(d, 0.0);
      for (int i : train_rows) axpy(1.0, user_embeddings.row(i), mean.data(), d);
      for (int j = 0; j < d; ++j) mean[j] /= train_rows.size();
      for (int i : train_rows)
        for (int j = 0; j < d; ++j) {
          double z = user_embeddings.at(i, j) - mean[j];
          sd[j] += z * z;
        }
      for (int j = 0; j < d; ++j)
        sd[j] = std::sqrt(sd[j] / train_rows.size()) + 1e-12;

      auto standardized = [&](const std::vector<int>& rows) {
        Mat m(static_cast<int>(rows.size()), d);
        for (size_t i = 0; i < rows.size(); ++i)
          for (int j = 0; j < d; ++j)
            m.at(static_cast<int>(i), j) =
                (user_embeddings.at(rows[i], j) - mean[j]) / sd[j];
        return m;
      };
      Mat xtrain = standardized(train_rows);
      Mat xtest = standardized(test_rows);
      std::vector<int> ytrain, ytest;
      for (int i : train_rows) ytrain.push_back(labels.labels[i][cls]);
      for (int i : test_rows) ytest.push_back(labels.labels[i][cls]);

      LinearClassifier clf;
      clf.fit(xtrain, ytrain, /*c=*/1.0, /*iters=*/500);
      std::vector<int> pred;
      for (int i = 0; i < xtest.rows; ++i)
        pred.push_back(clf.predict(xtest.row(i), d));
      total_f1 += f1_score(ytest, pred);
      ++scored;
    }
  }
  return total_f1 / scored;
}

}  // namespace mme
