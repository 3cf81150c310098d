#include "mme/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mme {

void LossWeights::validate() const {
  if (text_user < 0 || image_text < 0 || image_user < 0)
    throw std::invalid_argument("LossWeights: weights must be nonnegative");
  if (std::abs(text_user + image_text + image_user - 1.0) > 1e-9)
    throw std::invalid_argument("LossWeights: weights must sum to 1");
}

double cosine_similarity(const double* a, const double* b, int n) {
  double na = norm2(a, n), nb = norm2(b, n);
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_similarity: zero vector");
  return dot(a, b, n) / (na * nb);
}

namespace {

// d S(a,b) / d a = b/(|a||b|) - S a/|a|^2, accumulated with weight c
void add_cosine_grad(double c, const double* a, const double* b, double na,
                     double nb, double s, double* out, int n) {
  double k1 = c / (na * nb);
  double k2 = -c * s / (na * na);
  for (int i = 0; i < n; ++i) out[i] += k1 * b[i] + k2 * a[i];
}

}  // namespace

double pair_ranking_loss(const Vec& anchor, const Vec& positive,
                         const std::vector<Vec>& negatives, double margin,
                         Vec* g_anchor, Vec* g_positive,
                         std::vector<Vec>* g_negatives) {
  const int n = static_cast<int>(anchor.size());
  double na = norm2(anchor.data(), n);
  double np = norm2(positive.data(), n);
  if (na == 0.0 || np == 0.0)
    throw std::invalid_argument("pair_ranking_loss: zero vector");
  double s_pos = dot(anchor.data(), positive.data(), n) / (na * np);

  double loss = 0.0;
  int active = 0;
  for (size_t i = 0; i < negatives.size(); ++i) {
    const Vec& neg = negatives[i];
    double nn = norm2(neg.data(), n);
    if (nn == 0.0)
      throw std::invalid_argument("pair_ranking_loss: zero vector");
    double s_neg = dot(anchor.data(), neg.data(), n) / (na * nn);
    double h = margin - s_pos + s_neg;
    if (h <= 0.0) continue;
    loss += h;
    ++active;
    if (g_anchor)
      add_cosine_grad(1.0, anchor.data(), neg.data(), na, nn, s_neg,
                      g_anchor->data(), n);
    if (g_negatives)
      add_cosine_grad(1.0, neg.data(), anchor.data(), nn, na, s_neg,
                      (*g_negatives)[i].data(), n);
  }
  if (active > 0) {
    if (g_anchor)
      add_cosine_grad(-static_cast<double>(active), anchor.data(),
                      positive.data(), na, np, s_pos, g_anchor->data(), n);
    if (g_positive)
      add_cosine_grad(-static_cast<double>(active), positive.data(),
                      anchor.data(), np, na, s_pos, g_positive->data(), n);
  }
  return loss;
}

std::vector<int> sample_in_batch_negatives(const EncodedBatch& batch,
                                           int anchor, PairType pair,
                                           const MarginConfig& margin,
                                           Rng& rng) {
  std::vector<int> candidates;
  for (int j = 0; j < batch.size; ++j) {
    switch (pair) {
      case PairType::TextUser:
      case PairType::ImageUser:
        // user negatives: any batch item by a different user
        if (batch.items[j].user != batch.items[anchor].user)
          candidates.push_back(j);
        break;
      case PairType::ImageText:
        // text negatives: any other item carrying text
        if (j != anchor && batch.has_text[j]) candidates.push_back(j);
        break;
    }
  }
  if (margin.max_negatives >= 0 &&
      static_cast<int>(candidates.size()) > margin.max_negatives) {
    auto picks = rng.sample_without_replacement(candidates.size(),
                                                margin.max_negatives);
    std::sort(picks.begin(), picks.end());
    std::vector<int> capped;
    for (size_t p : picks) capped.push_back(candidates[p]);
    return capped;
  }
  return candidates;
}

namespace {

struct PairTerm {
  PairType type;
  double weight;
  const Mat* anchor_emb;
  const Mat* target_emb;
  Mat* g_anchor;
  Mat* g_target;
};

// One ranking term over a minibatch. Phase 1 scores anchors in parallel;
// phase 2 accumulates gradients per target row in parallel. Both phases
// write disjoint slots so results do not depend on thread count.
double batch_ranking_term(const EncodedBatch& batch, const PairTerm& term,
                          const std::vector<int>& anchors,
                          const std::vector<std::vector<int>>& negatives,
                          const Vec& anchor_norms, const Vec& target_norms,
                          double margin, double scale) {
  const int D = term.anchor_emb->cols;
  const int A = static_cast<int>(anchors.size());
  const int B = batch.size;

  // active[a*B + t] = 1 when the hinge for (anchor a, negative t) is active
  std::vector<char> active(static_cast<size_t>(A) * B, 0);
  std::vector<double> sim(static_cast<size_t>(A) * B, 0.0);
  std::vector<double> s_pos(A, 0.0);
  std::vector<int> n_active(A, 0);
  std::vector<double> losses(A, 0.0);

#pragma omp parallel for schedule(static)
  for (int ai = 0; ai < A; ++ai) {
    int a = anchors[ai];
    const double* xa = term.anchor_emb->row(a);
    double na = anchor_norms[a];
    double sp = dot(xa, term.target_emb->row(a), D) / (na * target_norms[a]);
    s_pos[ai] = sp;
    double loss = 0.0;
    for (int t : negatives[ai]) {
      double s = dot(xa, term.target_emb->row(t), D) /
                 (na * target_norms[t]);
      sim[static_cast<size_t>(ai) * B + t] = s;
      double h = margin - sp + s;
      if (h > 0.0) {
        active[static_cast<size_t>(ai) * B + t] = 1;
        ++n_active[ai];
        loss += h;
      }
    }
    losses[ai] = loss;

    // anchor-side gradient (row `a` of g_anchor is owned by this anchor
    // within the term)
    if (n_active[ai] > 0) {
      double* ga = term.g_anchor->row(a);
      for (int t : negatives[ai]) {
        if (!active[static_cast<size_t>(ai) * B + t]) continue;
        add_cosine_grad(scale, xa, term.target_emb->row(t), na,
                        target_norms[t], sim[static_cast<size_t>(ai) * B + t],
                        ga, D);
      }
      add_cosine_grad(-scale * n_active[ai], xa, term.target_emb->row(a), na,
                      target_norms[a], sp, ga, D);
    }
  }

  // target-side gradients: each batch item owns its target row
  std::vector<int> anchor_of(B, -1);
  for (int ai = 0; ai < A; ++ai) anchor_of[anchors[ai]] = ai;

#pragma omp parallel for schedule(static)
  for (int t = 0; t < B; ++t) {
    double* gt = term.g_target->row(t);
    const double* xt = term.target_emb->row(t);
    double nt = target_norms[t];
    // as a negative
    for (int ai = 0; ai < A; ++ai) {
      if (!active[static_cast<size_t>(ai) * B + t]) continue;
      int a = anchors[ai];
      add_cosine_grad(scale, xt, term.anchor_emb->row(a), nt, anchor_norms[a],
                      sim[static_cast<size_t>(ai) * B + t], gt, D);
    }
    // as its own anchor's positive
    int ai = anchor_of[t];
    if (ai >= 0 && n_active[ai] > 0)
      add_cosine_grad(-scale * n_active[ai], xt, term.anchor_emb->row(t), nt,
                      anchor_norms[t], s_pos[ai], gt, D);
  }

  double total = 0.0;
  for (int ai = 0; ai < A; ++ai) total += losses[ai];
  return total;
}

Vec row_norms(const Mat& m) {
  Vec out(m.rows, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m.rows; ++i) out[i] = norm2(m.row(i), m.cols);
  return out;
}

}  // namespace

MixtureResult mixture_loss(const EncodedBatch& batch,
                           const LossWeights& weights,
                           const MarginConfig& margin, Rng& rng) {
  weights.validate();
  const int B = batch.size;
  const int D = batch.text_emb.cols;
  MixtureResult result;
  result.g_text = Mat(B, D);
  result.g_image = Mat(B, D);
  result.g_user = Mat(B, D);

  std::vector<int> tu_anchors, it_anchors, iu_anchors;
  for (int i = 0; i < B; ++i) {
    if (batch.has_text[i]) tu_anchors.push_back(i);
    if (batch.has_image[i] && batch.has_text[i]) it_anchors.push_back(i);
    if (batch.has_image[i]) iu_anchors.push_back(i);
  }
  result.pairs.text_user = static_cast<int>(tu_anchors.size());
  result.pairs.image_text = static_cast<int>(it_anchors.size());
  result.pairs.image_user = static_cast<int>(iu_anchors.size());
  if (result.pairs.text_user == 0 && result.pairs.image_text == 0 &&
      result.pairs.image_user == 0)
    throw std::invalid_argument("mixture_loss: no valid pairs in batch");

  Vec text_norms, image_norms, user_norms;
  auto need_norms = [&](const Mat& emb, Vec& norms) {
    if (norms.empty()) norms = row_norms(emb);
  };

  struct Plan {
    PairType type;
    double weight;
    const std::vector<int>* anchors;
  };
  const Plan plans[] = {
      {PairType::TextUser, weights.text_user, &tu_anchors},
      {PairType::ImageText, weights.image_text, &it_anchors},
      {PairType::ImageUser, weights.image_user, &iu_anchors},
  };

  for (const Plan& plan : plans) {
    int n_pairs = static_cast<int>(plan.anchors->size());
    if (plan.weight == 0.0 || n_pairs == 0) continue;
    double scale = plan.weight / n_pairs;

    std::vector<std::vector<int>> negs(n_pairs);
    for (int ai = 0; ai < n_pairs; ++ai)
      negs[ai] = sample_in_batch_negatives(batch, (*plan.anchors)[ai],
                                           plan.type, margin, rng);

    PairTerm term;
    term.type = plan.type;
    term.weight = plan.weight;
    switch (plan.type) {
      case PairType::TextUser:
        need_norms(batch.text_emb, text_norms);
        need_norms(batch.user_emb, user_norms);
        term.anchor_emb = &batch.text_emb;
        term.target_emb = &batch.user_emb;
        term.g_anchor = &result.g_text;
        term.g_target = &result.g_user;
        break;
      case PairType::ImageText:
        need_norms(batch.image_emb, image_norms);
        need_norms(batch.text_emb, text_norms);
        term.anchor_emb = &batch.image_emb;
        term.target_emb = &batch.text_emb;
        term.g_anchor = &result.g_image;
        term.g_target = &result.g_text;
        break;
      case PairType::ImageUser:
        need_norms(batch.image_emb, image_norms);
        need_norms(batch.user_emb, user_norms);
        term.anchor_emb = &batch.image_emb;
        term.target_emb = &batch.user_emb;
        term.g_anchor = &result.g_image;
        term.g_target = &result.g_user;
        break;
    }
    const Vec& a_norms =
        plan.type == PairType::TextUser ? text_norms : image_norms;
    const Vec& t_norms =
        plan.type == PairType::ImageText ? text_norms : user_norms;

    for (int a : *plan.anchors)
      if (a_norms[a] == 0.0)
        throw std::invalid_argument("mixture_loss: zero anchor embedding");
    for (int t = 0; t < B; ++t) {
      bool used = plan.type == PairType::ImageText ? batch.has_text[t] != 0
                                                   : true;
      if (used && t_norms[t] == 0.0)
        throw std::invalid_argument("mixture_loss: zero target embedding");
    }

    result.loss += scale * batch_ranking_term(batch, term, *plan.anchors,
                                              negs, a_norms, t_norms,
                                              margin.margin, scale);
  }
  return result;
}

MixtureResult merged_ranking_loss(const EncodedBatch& batch,
                                  const MarginConfig& margin, Rng& rng) {
  const int B = batch.size;
  const int D = batch.text_emb.cols;
  MixtureResult result;
  result.g_text = Mat(B, D);
  result.g_image = Mat(B, D);
  result.g_user = Mat(B, D);

  Mat fused(B, D);
  std::vector<int> anchors;
  for (int i = 0; i < B; ++i) {
    if (!batch.has_text[i] && !batch.has_image[i]) continue;
    anchors.push_back(i);
    for (int j = 0; j < D; ++j)
      fused.at(i, j) = batch.text_emb.at(i, j) + batch.image_emb.at(i, j);
  }
  result.pairs.text_user = static_cast<int>(anchors.size());
  if (anchors.empty())
    throw std::invalid_argument("merged_ranking_loss: no content in batch");

  std::vector<std::vector<int>> negs(anchors.size());
  for (size_t ai = 0; ai < anchors.size(); ++ai)
    negs[ai] = sample_in_batch_negatives(batch, anchors[ai],
                                         PairType::TextUser, margin, rng);

  Mat g_fused(B, D);
  PairTerm term;
  term.type = PairType::TextUser;
  term.weight = 1.0;
  term.anchor_emb = &fused;
  term.target_emb = &batch.user_emb;
  term.g_anchor = &g_fused;
  term.g_target = &result.g_user;

  Vec fused_norms = row_norms(fused);
  Vec user_norms = row_norms(batch.user_emb);
  for (int a : anchors)
    if (fused_norms[a] == 0.0)
      throw std::invalid_argument("merged_ranking_loss: zero fused embedding");
  for (int t = 0; t < B; ++t)
    if (user_norms[t] == 0.0)
      throw std::invalid_argument("merged_ranking_loss: zero user embedding");

  double scale = 1.0 / static_cast<double>(anchors.size());
  result.loss = scale * batch_ranking_term(batch, term, anchors, negs,
                                           fused_norms, user_norms,
                                           margin.margin, scale);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < B; ++i) {
    if (batch.has_text[i])
      axpy(1.0, g_fused.row(i), result.g_text.row(i), D);
    if (batch.has_image[i])
      axpy(1.0, g_fused.row(i), result.g_image.row(i), D);
  }
  return result;
}

}  // namespace mme
