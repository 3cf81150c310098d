#include "mme/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mme/io_util.hpp"
#include "mme/kernels.hpp"

namespace mme {

void ModelConfig::validate() const {
  if (common_dim < 1 || image_dim < 1 || word_dim < 1 || user_dim < 1 ||
      max_sentence_len < 1)
    throw std::invalid_argument("ModelConfig: all dims must be >= 1");
  if (blocks.empty())
    throw std::invalid_argument("ModelConfig: need at least one conv block");
  for (const auto& b : blocks)
    if (b.kernel_width < 1 || b.filter_count < 1 ||
        b.kernel_width > max_sentence_len)
      throw std::invalid_argument("ModelConfig: bad conv block");
}

ModelParameters ModelParameters::zeros(const ModelConfig& config,
                                       int user_count) {
  ModelParameters p;
  p.image_proj = Mat(config.common_dim, config.image_dim);
  p.image_bias.assign(config.common_dim, 0.0);
  for (const auto& b : config.blocks) {
    ConvParams c;
    c.weights = Mat(b.filter_count, b.kernel_width * config.word_dim);
    c.bias.assign(b.filter_count, 0.0);
    p.conv.push_back(std::move(c));
  }
  p.text_proj = Mat(config.common_dim, config.text_feature_dim());
  p.text_bias.assign(config.common_dim, 0.0);
  p.user_table = Mat(user_count, config.user_dim);
  p.user_proj = Mat(config.common_dim, config.user_dim);
  p.user_bias.assign(config.common_dim, 0.0);
  return p;
}

namespace {

void uniform_fill(Mat& m, double bound, Rng& rng) {
  for (double& v : m.data) v = rng.uniform(-bound, bound);
}

}  // namespace

ModelParameters ModelParameters::init(const ModelConfig& config,
                                      int user_count, Rng& rng) {
  ModelParameters p = zeros(config, user_count);
  uniform_fill(p.image_proj, 1.0 / std::sqrt(config.image_dim), rng);
  for (size_t i = 0; i < p.conv.size(); ++i)
    uniform_fill(p.conv[i].weights,
                 1.0 / std::sqrt(config.blocks[i].kernel_width *
                                 config.word_dim),
                 rng);
  uniform_fill(p.text_proj, 1.0 / std::sqrt(config.text_feature_dim()), rng);
  uniform_fill(p.user_table, 1.0 / std::sqrt(config.user_dim), rng);
  uniform_fill(p.user_proj, 1.0 / std::sqrt(config.user_dim), rng);
  return p;
}

Mat init_user_embeddings(const Corpus& corpus, const Vocabulary& vocab,
                         const WordEmbeddings& embeddings,
                         const ModelConfig& config, int user_count,
                         uint64_t seed) {
  if (config.user_dim != embeddings.dim())
    throw std::invalid_argument(
        "init_user_embeddings: user_dim must equal the word vector dim");
  Mat table(user_count, config.user_dim);
  std::vector<long> counts(user_count, 0);
  for (const Post& p : corpus.posts) {
    if (!p.has_text || p.user_id < 0 || p.user_id >= user_count) continue;
    for (const std::string& t : p.tokens) {
      int wi = vocab.lookup(t);
      if (wi <= 0) continue;
      axpy(1.0, embeddings.vectors.row(wi), table.row(p.user_id),
           config.user_dim);
      counts[p.user_id]++;
    }
  }
  Rng rng(seed);
  double bound = 1.0 / std::sqrt(config.user_dim);
  for (int u = 0; u < user_count; ++u) {
    if (counts[u] > 0) {
      for (int j = 0; j < config.user_dim; ++j)
        table.at(u, j) /= static_cast<double>(counts[u]);
    } else {
      for (int j = 0; j < config.user_dim; ++j)
        table.at(u, j) = rng.uniform(-bound, bound);
    }
  }
  return table;
}

Vec encode_image(const double* feature, const ModelParameters& params,
                 const ModelConfig& config) {
  Vec out(config.common_dim);
  kernels::matvec(params.image_proj, feature, out.data());
  if (config.bias_enabled) axpy(1.0, params.image_bias.data(), out.data(),
                                config.common_dim);
  return out;
}

Vec encode_user(int user, const ModelParameters& params,
                const ModelConfig& config) {
  if (user < 0 || user >= params.user_count())
    throw std::out_of_range("encode_user: user index out of range");
  Vec out(config.common_dim);
  kernels::matvec(params.user_proj, params.user_table.row(user), out.data());
  if (config.bias_enabled) axpy(1.0, params.user_bias.data(), out.data(),
                                config.common_dim);
  return out;
}

std::vector<int> pad_tokens(const std::vector<int>& ids, int max_len) {
  std::vector<int> out(ids.begin(),
                       ids.begin() + std::min<size_t>(ids.size(), max_len));
  out.resize(max_len, Vocabulary::kPadIndex);
  return out;
}

namespace {

// pooled features + argmax positions for one sentence
void text_forward(const std::vector<int>& token_ids,
                  const WordEmbeddings& embeddings,
                  const ModelParameters& params, const ModelConfig& config,
                  double* pooled, int* argmax) {
  if (embeddings.vectors.rows == 0)
    throw std::invalid_argument("encode_text: empty vocabulary");
  const int L = config.max_sentence_len;
  const int dw = config.word_dim;

  // sentence matrix, L x d_w
  std::vector<double> sent(static_cast<size_t>(L) * dw);
  for (int t = 0; t < L; ++t) {
    int wi = token_ids[t];
    if (wi < 0 || wi >= embeddings.vectors.rows)
      throw std::out_of_range("encode_text: token id out of vocabulary");
    std::memcpy(&sent[static_cast<size_t>(t) * dw], embeddings.vectors.row(wi),
                sizeof(double) * dw);
  }

  int offset = 0;
  for (size_t b = 0; b < config.blocks.size(); ++b) {
    const int w = config.blocks[b].kernel_width;
    const int nf = config.blocks[b].filter_count;
    const int windows = L - w + 1;
    const Mat& filt = params.conv[b].weights;
#pragma omp parallel for schedule(static)
    for (int f = 0; f < nf; ++f) {
      double best = 0.0;  // relu floor
      int best_t = -1;
      for (int t = 0; t < windows; ++t) {
        double z = dot(filt.row(f), &sent[static_cast<size_t>(t) * dw],
                       w * dw);
        if (config.bias_enabled) z += params.conv[b].bias[f];
        if (z > best) {
          best = z;
          best_t = t;
        }
      }
      pooled[offset + f] = best;
      argmax[offset + f] = best_t;
    }
    offset += nf;
  }
}

}  // namespace

Vec encode_text(const std::vector<int>& token_ids,
                const WordEmbeddings& embeddings,
                const ModelParameters& params, const ModelConfig& config) {
  std::vector<int> padded = pad_tokens(token_ids, config.max_sentence_len);
  Vec pooled(config.text_feature_dim());
  std::vector<int> argmax(config.text_feature_dim());
  text_forward(padded, embeddings, params, config, pooled.data(),
               argmax.data());
  Vec out(config.common_dim);
  kernels::matvec(params.text_proj, pooled.data(), out.data());
  if (config.bias_enabled) axpy(1.0, params.text_bias.data(), out.data(),
                                config.common_dim);
  return out;
}

EncodedBatch encode_batch(std::vector<BatchItem> items,
                          const WordEmbeddings& embeddings,
                          const ModelParameters& params,
                          const ModelConfig& config) {
  EncodedBatch batch;
  batch.size = static_cast<int>(items.size());
  batch.items = std::move(items);
  const int B = batch.size;
  const int D = config.common_dim;
  const int DT = config.text_feature_dim();
  batch.text_emb = Mat(B, D);
  batch.image_emb = Mat(B, D);
  batch.user_emb = Mat(B, D);
  batch.text_features = Mat(B, DT);
  batch.pool_argmax.assign(B, {});
  batch.user_rows.assign(B, {});
  batch.has_text.assign(B, 0);
  batch.has_image.assign(B, 0);

  for (int i = 0; i < B; ++i) {
    BatchItem& item = batch.items[i];
    if (item.user < 0 || item.user >= params.user_count())
      throw std::out_of_range("encode_batch: user index out of range");
    if (item.has_text)
      item.token_ids = pad_tokens(item.token_ids, config.max_sentence_len);
  }

  // items are independent; all writes land in per-item rows
  for (int i = 0; i < B; ++i) {
    const BatchItem& item = batch.items[i];
    if (item.has_text) {
      batch.has_text[i] = 1;
      batch.pool_argmax[i].assign(DT, -1);
      text_forward(item.token_ids, embeddings, params, config,
                   batch.text_features.row(i), batch.pool_argmax[i].data());
      kernels::matvec(params.text_proj, batch.text_features.row(i),
                      batch.text_emb.row(i));
      if (config.bias_enabled)
        axpy(1.0, params.text_bias.data(), batch.text_emb.row(i), D);
    }
    if (item.image_feature) {
      batch.has_image[i] = 1;
      kernels::matvec(params.image_proj, item.image_feature,
                      batch.image_emb.row(i));
      if (config.bias_enabled)
        axpy(1.0, params.image_bias.data(), batch.image_emb.row(i), D);
    }
    batch.user_rows[i].assign(params.user_table.row(item.user),
                              params.user_table.row(item.user) +
                                  config.user_dim);
    kernels::matvec(params.user_proj, batch.user_rows[i].data(),
                    batch.user_emb.row(i));
    if (config.bias_enabled)
      axpy(1.0, params.user_bias.data(), batch.user_emb.row(i), D);
  }
  return batch;
}

void backward_batch(const EncodedBatch& batch, const Mat& g_text,
                    const Mat& g_image, const Mat& g_user,
                    const WordEmbeddings& embeddings,
                    const ModelParameters& params, const ModelConfig& config,
                    ParamGrads& grads) {
  if (batch.pool_argmax.empty() && batch.size > 0)
    throw std::logic_error("backward_batch: missing cached activations");
  const int D = config.common_dim;
  const int DT = config.text_feature_dim();
  const int dw = config.word_dim;

  Vec g_feat(DT);
  Vec g_urow(config.user_dim);

  for (int i = 0; i < batch.size; ++i) {
    const BatchItem& item = batch.items[i];

    if (batch.has_image[i]) {
      const double* g = g_image.row(i);
      kernels::add_outer(grads.image_proj, g, item.image_feature);
      if (config.bias_enabled) axpy(1.0, g, grads.image_bias.data(), D);
    }

    if (batch.has_text[i]) {
      const double* g = g_text.row(i);
      kernels::add_outer(grads.text_proj, g, batch.text_features.row(i));
      if (config.bias_enabled) axpy(1.0, g, grads.text_bias.data(), D);
      kernels::matvec_t(params.text_proj, g, g_feat.data());

      // route pooled gradients to the winning window of each filter;
      // concat slots map to distinct filter rows, so this is parallel-safe
      int offset = 0;
      for (size_t b = 0; b < config.blocks.size(); ++b) {
        const int w = config.blocks[b].kernel_width;
        const int nf = config.blocks[b].filter_count;
#pragma omp parallel for schedule(static)
        for (int f = 0; f < nf; ++f) {
          int t = batch.pool_argmax[i][offset + f];
          if (t < 0) continue;  // relu floor won the pool
          double gv = g_feat[offset + f];
          if (gv == 0.0) continue;
          double* wrow = grads.conv[b].weights.row(f);
          for (int s = 0; s < w; ++s) {
            int wi = item.token_ids[t + s];
            axpy(gv, embeddings.vectors.row(wi), wrow + s * dw, dw);
          }
          if (config.bias_enabled) grads.conv[b].bias[f] += gv;
        }
        offset += nf;
      }
    }

    {
      const double* g = g_user.row(i);
      kernels::add_outer(grads.user_proj, g, batch.user_rows[i].data());
      if (config.bias_enabled) axpy(1.0, g, grads.user_bias.data(), D);
      kernels::matvec_t(params.user_proj, g, g_urow.data());
      axpy(1.0, g_urow.data(), grads.user_table.row(item.user),
           config.user_dim);
    }
  }
}

// --- checkpoint io ---

namespace {
constexpr char kMagic[4] = {'M', 'M', 'E', 'C'};
constexpr int32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const ModelParameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_le32(out, kVersion);
  write_le32(out, config.common_dim);
  write_le32(out, config.image_dim);
  write_le32(out, config.word_dim);
  write_le32(out, config.user_dim);
  write_le32(out, config.max_sentence_len);
  write_le32(out, config.bias_enabled ? 1 : 0);
  write_le32(out, static_cast<int32_t>(config.blocks.size()));
  for (const auto& b : config.blocks) {
    write_le32(out, b.kernel_width);
    write_le32(out, b.filter_count);
  }
  write_le32(out, params.user_table.rows);

  auto& mutable_params = const_cast<ModelParameters&>(params);
  mutable_params.for_each_block([&](const std::string& name,
                                    const std::vector<double>& data) {
    write_string(out, name);
    write_le32(out, static_cast<int32_t>(data.size()));
    for (double v : data) write_le_float(out, static_cast<float>(v));
  });
}

std::pair<ModelConfig, ModelParameters> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  if (read_le32(in) != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version");
  ModelConfig config;
  config.common_dim = read_le32(in);
  config.image_dim = read_le32(in);
  config.word_dim = read_le32(in);
  config.user_dim = read_le32(in);
  config.max_sentence_len = read_le32(in);
  config.bias_enabled = read_le32(in) != 0;
  int nblocks = read_le32(in);
  config.blocks.clear();
  for (int i = 0; i < nblocks; ++i) {
    int k = read_le32(in);
    int f = read_le32(in);
    config.blocks.push_back({k, f});
  }
  int user_count = read_le32(in);
  config.validate();

  ModelParameters params = ModelParameters::zeros(config, user_count);
  params.for_each_block([&](const std::string& name,
                            std::vector<double>& data) {
    std::string stored = read_string(in);
    if (stored != name)
      throw std::runtime_error(path + ": unexpected block '" + stored +
                               "', wanted '" + name + "'");
    int32_t n = read_le32(in);
    if (n != static_cast<int32_t>(data.size()))
      throw std::runtime_error(path + ": size mismatch for block '" + name +
                               "'");
    for (int32_t i = 0; i < n; ++i) data[i] = read_le_float(in);
  });
  return {config, params};
}

}  // namespace mme
