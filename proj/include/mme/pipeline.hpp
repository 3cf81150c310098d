#pragma once

#include <string>
#include <vector>

#include "mme/corpus.hpp"
#include "mme/eval.hpp"
#include "mme/model.hpp"

namespace mme {

// Everything needed to embed corpus entities with a trained model.
struct EmbeddingContext {
  const Corpus* corpus;
  const Vocabulary* vocab;
  const WordEmbeddings* embeddings;
  const ImageFeatureStore* features;
  const ModelConfig* model_config;
  const ModelParameters* params;
};

// In-vocabulary token ids for a post (OOV words are dropped).
std::vector<int> token_ids_for(const Post& post, const Vocabulary& vocab);

// True when the post has at least one in-vocabulary token.
bool has_usable_text(const Post& post, const Vocabulary& vocab);

Mat embed_all_users(const EmbeddingContext& ctx);

// Retrieval tasks over a list of post ids (validation or test split).
RetrievalTask task_text_to_user(const EmbeddingContext& ctx,
                                const std::vector<std::string>& post_ids);
RetrievalTask task_image_to_text(const EmbeddingContext& ctx,
                                 const std::vector<std::string>& post_ids);
RetrievalTask task_image_to_user(const EmbeddingContext& ctx,
                                 const std::vector<std::string>& post_ids);

struct TaskSelection {
  bool text_to_user = true;
  bool image_to_text = true;
  bool image_to_user = true;
};

RetrievalReport evaluate_retrieval(const EmbeddingContext& ctx,
                                   const CorpusSplits& splits, bool use_test,
                                   const TaskSelection& which);

}  // namespace mme
