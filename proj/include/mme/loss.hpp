#pragma once

#include <stdexcept>
#include <vector>

#include "mme/mat.hpp"
#include "mme/model.hpp"
#include "mme/rng.hpp"

namespace mme {

struct LossWeights {
  double text_user = 0.0;   // lambda1
  double image_text = 0.0;  // lambda2
  double image_user = 0.0;  // lambda3

  // nonnegative, summing to 1 within 1e-9
  void validate() const;
};

struct MarginConfig {
  double margin = 0.2;
  int max_negatives = -1;  // -1: all valid in-batch negatives
  bool bidirectional = false;
};

double cosine_similarity(const double* a, const double* b, int n);
inline double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  return cosine_similarity(a.data(), b.data(), static_cast<int>(a.size()));
}

enum class PairType { TextUser, ImageText, ImageUser };

// Indices of valid in-batch negatives for one anchor: target-modality items
// whose identity (user id for user targets, batch slot for text/image
// targets) differs from the positive.
std::vector<int> sample_in_batch_negatives(const EncodedBatch& batch,
                                           int anchor, PairType pair,
                                           const MarginConfig& margin,
                                           Rng& rng);

// Hinge ranking loss for one anchor: sum_n max(0, m - S(a,p) + S(a,n)).
// Gradients are accumulated into the provided buffers (may be null).
double pair_ranking_loss(const Vec& anchor, const Vec& positive,
                         const std::vector<Vec>& negatives, double margin,
                         Vec* g_anchor, Vec* g_positive,
                         std::vector<Vec>* g_negatives);

struct BatchPairs {
  int text_user = 0;
  int image_text = 0;
  int image_user = 0;
};

struct MixtureResult {
  double loss = 0.0;
  BatchPairs pairs;
  Mat g_text, g_image, g_user;  // d(loss)/d(embedding), rows per batch item
};

// L = l1/N_TU * L_TU + l2/N_IT * L_IT + l3/N_IU * L_IU, with any term that
// has zero valid pairs dropped. Throws when all three pair counts are zero.
MixtureResult mixture_loss(const EncodedBatch& batch,
                           const LossWeights& weights,
                           const MarginConfig& margin, Rng& rng);

// Merged-modality objective: anchor is the sum-pooled content embedding
// (text + image, zero for a missing image), ranked against users. The
// fused gradient flows to both content paths.
MixtureResult merged_ranking_loss(const EncodedBatch& batch,
                                  const MarginConfig& margin, Rng& rng);

}  // namespace mme
