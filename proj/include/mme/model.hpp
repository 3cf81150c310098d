#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mme/corpus.hpp"
#include "mme/mat.hpp"
#include "mme/rng.hpp"

namespace mme {

struct ConvBlock {
  int kernel_width;
  int filter_count;
};

struct ModelConfig {
  int common_dim = 1024;   // D
  int image_dim = 2048;    // D_I
  int word_dim = 300;      // d_w
  int user_dim = 300;      // D_u
  int max_sentence_len = 20;
  std::vector<ConvBlock> blocks = {{2, 512}, {3, 256}, {4, 256}};
  bool bias_enabled = true;

  int text_feature_dim() const {
    int s = 0;
    for (const auto& b : blocks) s += b.filter_count;
    return s;
  }
  void validate() const;
};

// All trainable state. Convolution filters for a block are stored as a
// (filter_count) x (kernel_width * word_dim) matrix, one flattened window
// per row.
struct ModelParameters {
  Mat image_proj;  // D x D_I
  Vec image_bias;  // D
  struct ConvParams {
    Mat weights;  // filters x (kernel * word_dim)
    Vec bias;     // filters
  };
  std::vector<ConvParams> conv;
  Mat text_proj;   // D x D_T
  Vec text_bias;   // D
  Mat user_table;  // K x D_u
  Mat user_proj;   // D x D_u
  Vec user_bias;   // D

  int user_count() const { return user_table.rows; }

  static ModelParameters zeros(const ModelConfig& config, int user_count);
  static ModelParameters init(const ModelConfig& config, int user_count,
                              Rng& rng);

  // per-name iteration, used by the optimizer and checkpoint io
  template <typename F>
  void for_each_block(F&& f) {
    f("image_proj", image_proj.data);
    f("image_bias", image_bias);
    for (size_t i = 0; i < conv.size(); ++i) {
      f("conv" + std::to_string(i) + "_w", conv[i].weights.data);
      f("conv" + std::to_string(i) + "_b", conv[i].bias);
    }
    f("text_proj", text_proj.data);
    f("text_bias", text_bias);
    f("user_table", user_table.data);
    f("user_proj", user_proj.data);
    f("user_bias", user_bias);
  }
};

using ParamGrads = ModelParameters;

// Seeds each user row with the mean word vector of that user's posts;
// users with no text get a uniform +-1/sqrt(D_u) row.
Mat init_user_embeddings(const Corpus& corpus, const Vocabulary& vocab,
                         const WordEmbeddings& embeddings,
                         const ModelConfig& config, int user_count,
                         uint64_t seed);

// One minibatch element: resolved token ids, image feature pointer, user.
struct BatchItem {
  std::vector<int> token_ids;  // padded/truncated to max_sentence_len
  bool has_text = false;
  const double* image_feature = nullptr;  // null when absent
  int user = -1;
};

// Forward activations for one minibatch, kept for the backward pass.
struct EncodedBatch {
  int size = 0;
  std::vector<BatchItem> items;
  Mat text_emb, image_emb, user_emb;  // batch x D rows (zero when absent)
  std::vector<char> has_text, has_image;

  // caches
  Mat text_features;                           // batch x D_T pooled values
  std::vector<std::vector<int>> pool_argmax;   // per item, per concat slot
  std::vector<Vec> user_rows;                  // phi_U inputs
};

Vec encode_image(const double* feature, const ModelParameters& params,
                 const ModelConfig& config);
Vec encode_user(int user, const ModelParameters& params,
                const ModelConfig& config);
Vec encode_text(const std::vector<int>& token_ids,
                const WordEmbeddings& embeddings,
                const ModelParameters& params, const ModelConfig& config);

EncodedBatch encode_batch(std::vector<BatchItem> items,
                          const WordEmbeddings& embeddings,
                          const ModelParameters& params,
                          const ModelConfig& config);

// Accumulates exact gradients into `grads` given upstream gradients on the
// three embedding matrices (rows aligned with the batch).
void backward_batch(const EncodedBatch& batch, const Mat& g_text,
                    const Mat& g_image, const Mat& g_user,
                    const WordEmbeddings& embeddings,
                    const ModelParameters& params, const ModelConfig& config,
                    ParamGrads& grads);

// pads/truncates a token-id sequence to max_sentence_len
std::vector<int> pad_tokens(const std::vector<int>& ids, int max_len);

// Checkpoint file: magic + version + config + K + named float32 blocks.
// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParameters& params);
std::pair<ModelConfig, ModelParameters> load_checkpoint(
    const std::string& path);

}  // namespace mme
