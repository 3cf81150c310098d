#include "mme/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "mme/rng.hpp"

namespace mme {

namespace {

double sqdist(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

ClusterModel kmeans(const Mat& vectors, int k, uint64_t seed, int max_iters,
                    double tol) {
  const int n = vectors.rows, d = vectors.cols;
  if (k <= 0) throw std::invalid_argument("kmeans: k must be positive");
  if (k > n) throw std::invalid_argument("kmeans: k exceeds point count");

  Rng rng(seed);
  ClusterModel model;
  model.centroids = Mat(k, d);
  model.assignment.assign(n, -1);

  // k-means++ seeding
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.index(n));
  std::copy(vectors.row(first), vectors.row(first) + d,
            model.centroids.row(0));
  for (int c = 1; c < k; ++c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i],
                          sqdist(vectors.row(i), model.centroids.row(c - 1), d));
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += dist2[i];
    int chosen = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<int>(rng.index(n));
    }
    std::copy(vectors.row(chosen), vectors.row(chosen) + d,
              model.centroids.row(c));
  }

  double prev_obj = std::numeric_limits<double>::infinity();
  std::vector<double> point_dist(n);
  for (int iter = 0; iter < max_iters; ++iter) {
    // assignment step
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        double d2 = sqdist(vectors.row(i), model.centroids.row(c), d);
        if (d2 < best) {
          best = d2;
          best_c = c;
        }
      }
      model.assignment[i] = best_c;
      point_dist[i] = best;
    }
    double obj = 0.0;
    for (int i = 0; i < n; ++i) obj += point_dist[i];
    model.objective = obj;
    model.objective_history.push_back(obj);

    // update step
    Mat sums(k, d);
    std::vector<long> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      axpy(1.0, vectors.row(i), sums.row(model.assignment[i]), d);
      counts[model.assignment[i]]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // reseed to the farthest point from its centroid
        int far = 0;
        for (int i = 1; i < n; ++i)
          if (point_dist[i] > point_dist[far]) far = i;
        std::copy(vectors.row(far), vectors.row(far) + d,
                  model.centroids.row(c));
        point_dist[far] = 0.0;
      } else {
        for (int j = 0; j < d; ++j)
          model.centroids.at(c, j) = sums.at(c, j) / counts[c];
      }
    }

    if (prev_obj < std::numeric_limits<double>::infinity()) {
      double rel = prev_obj > 0 ? (prev_obj - obj) / prev_obj : 0.0;
      if (rel >= 0 && rel < tol) break;
    }
    prev_obj = obj;
  }

  // final assignment against the last centroid update
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (int c = 0; c < k; ++c) {
      double d2 = sqdist(vectors.row(i), model.centroids.row(c), d);
      if (d2 < best) {
        best = d2;
        best_c = c;
      }
    }
    model.assignment[i] = best_c;
    point_dist[i] = best;
  }
  model.objective = 0.0;
  for (int i = 0; i < n; ++i) model.objective += point_dist[i];
  return model;
}

ClusterReport cluster_report(const ClusterModel& model, const Corpus& corpus,
                             int common_word_count, int top_words,
                             int top_images, const Mat& image_embeddings,
                             const std::vector<std::string>& image_refs) {
  const int k = model.centroids.rows;

  // corpus-wide common words to drop
  std::map<std::string, long> global_counts;
  for (const Post& p : corpus.posts)
    for (const std::string& t : p.tokens) global_counts[t]++;
  std::vector<std::pair<long, std::string>> by_freq;
  for (const auto& [w, c] : global_counts) by_freq.push_back({c, w});
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::set<std::string> banned;
  for (int i = 0; i < common_word_count && i < static_cast<int>(by_freq.size());
       ++i)
    banned.insert(by_freq[i].second);

  ClusterReport report;
  for (int c = 0; c < k; ++c) {
    ClusterReport::Entry entry;
    entry.cluster = c;

    std::map<std::string, long> counts;
    for (const Post& p : corpus.posts) {
      if (p.user_id < 0 ||
          p.user_id >= static_cast<int>(model.assignment.size()))
        continue;
      if (model.assignment[p.user_id] != c) continue;
      for (const std::string& t : p.tokens)
        if (!banned.count(t)) counts[t]++;
    }
    std::vector<std::pair<long, std::string>> ranked;
    for (const auto& [w, cnt] : counts) ranked.push_back({cnt, w});
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first
                                          : a.second < b.second;
              });
    for (int i = 0; i < top_words && i < static_cast<int>(ranked.size()); ++i)
      entry.top_words.push_back({ranked[i].second, ranked[i].first});

    if (image_embeddings.rows > 0) {
      std::vector<std::pair<double, int>> sims;
      const double* cent = model.centroids.row(c);
      double cn = norm2(cent, model.centroids.cols);
      for (int i = 0; i < image_embeddings.rows; ++i) {
        double in = norm2(image_embeddings.row(i), image_embeddings.cols);
        if (cn == 0.0 || in == 0.0) continue;
        double s = dot(cent, image_embeddings.row(i), image_embeddings.cols) /
                   (cn * in);
        sims.push_back({s, i});
      }
      std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      for (int i = 0; i < top_images && i < static_cast<int>(sims.size()); ++i)
        entry.top_images.push_back({image_refs[sims[i].second],
                                    sims[i].first});
    }
    report.clusters.push_back(std::move(entry));
  }
  return report;
}

void write_cluster_report(const std::string& path,
                          const ClusterReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cluster report: " + path);
  for (const auto& entry : report.clusters) {
    out << "cluster " << entry.cluster << '\n';
    out << "  words:";
    for (const auto& [w, c] : entry.top_words) out << ' ' << w << ':' << c;
    out << '\n';
    out << "  images:";
    out.precision(6);
    for (const auto& [ref, s] : entry.top_images)
      out << ' ' << ref << ':' << s;
    out << '\n';
  }
}

double cluster_purity(const std::vector<int>& assignment,
                      const std::vector<int>& labels) {
  std::map<int, std::map<int, int>> tally;
  for (size_t i = 0; i < assignment.size(); ++i)
    tally[assignment[i]][labels[i]]++;
  long correct = 0;
  for (const auto& [cluster, hist] : tally) {
    int best = 0;
    for (const auto& [label, n] : hist) best = std::max(best, n);
    correct += best;
  }
  return static_cast<double>(correct) / assignment.size();
}

}  // namespace mme
