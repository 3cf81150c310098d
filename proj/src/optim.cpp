#include "mme/optim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "mme/pipeline.hpp"

namespace mme {

void TrainConfig::validate() const {
  if (learning_rate <= 0 || decay_factor <= 0 || decay_every <= 0 ||
      batch_size <= 0 || epochs <= 0)
    throw std::invalid_argument("TrainConfig: rates and sizes must be positive");
  if (margin.margin <= 0)
    throw std::invalid_argument("TrainConfig: margin must be positive");
  if (mode == TrainMode::Joint) weights.validate();
}

AdamState AdamState::zeros(const ModelConfig& config, int user_count) {
  AdamState s;
  s.m = ModelParameters::zeros(config, user_count);
  s.v = ModelParameters::zeros(config, user_count);
  s.step = 0;
  return s;
}

bool TrainableMask::allows(const std::string& name) const {
  if (name.rfind("image", 0) == 0) return image;
  if (name.rfind("conv", 0) == 0 || name.rfind("text", 0) == 0) return text;
  return user;
}

double scheduled_lr(const TrainConfig& config, int epoch) {
  return config.learning_rate /
         std::pow(config.decay_factor, epoch / config.decay_every);
}

namespace {

void adam_update_range(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v,
                       size_t begin, size_t end, double lr,
                       const AdamConfig& adam, double bc1, double bc2,
                       const std::string& name) {
  for (size_t i = begin; i < end; ++i)
    if (!std::isfinite(g[i]))
      throw std::runtime_error("adam_step: non-finite gradient in block '" +
                               name + "'");
#pragma omp parallel for schedule(static)
  for (long long i = static_cast<long long>(begin);
       i < static_cast<long long>(end); ++i) {
    m[i] = adam.beta1 * m[i] + (1 - adam.beta1) * g[i];
    v[i] = adam.beta2 * v[i] + (1 - adam.beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + adam.epsilon);
  }
}

}  // namespace

void adam_step(ModelParameters& params, const ParamGrads& grads,
               AdamState& state, double lr, const AdamConfig& adam,
               const TrainableMask& mask,
               const std::vector<int>* touched_users) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));

  struct BlockRef {
    std::string name;
    std::vector<double>* data;
  };
  auto collect = [](ModelParameters& mp) {
    std::vector<BlockRef> refs;
    mp.for_each_block([&](const std::string& name, std::vector<double>& d) {
      refs.push_back({name, &d});
    });
    return refs;
  };
  auto p_refs = collect(params);
  auto g_refs = collect(const_cast<ParamGrads&>(grads));
  auto m_refs = collect(state.m);
  auto v_refs = collect(state.v);

  for (size_t b = 0; b < p_refs.size(); ++b) {
    const std::string& name = p_refs[b].name;
    if (!mask.allows(name)) continue;
    if (name == "user_table" && touched_users) {
      int cols = params.user_table.cols;
      for (int u : *touched_users)
        adam_update_range(*p_refs[b].data, *g_refs[b].data, *m_refs[b].data,
                          *v_refs[b].data, static_cast<size_t>(u) * cols,
                          static_cast<size_t>(u + 1) * cols, lr, adam, bc1,
                          bc2, name);
    } else {
      adam_update_range(*p_refs[b].data, *g_refs[b].data, *m_refs[b].data,
                        *v_refs[b].data, 0, p_refs[b].data->size(), lr, adam,
                        bc1, bc2, name);
    }
  }
}

Vec fuse_sum_pool(const Vec& text_embedding, const Vec* image_embedding) {
  if (image_embedding && image_embedding->size() != text_embedding.size())
    throw std::invalid_argument("fuse_sum_pool: dimension mismatch");
  Vec out = text_embedding;
  if (image_embedding)
    axpy(1.0, image_embedding->data(), out.data(),
         static_cast<int>(out.size()));
  return out;
}

int select_checkpoint(const std::vector<CheckpointMeta>& metas,
                      const LossWeights& weights) {
  if (metas.empty())
    throw std::invalid_argument("select_checkpoint: empty series");
  auto score = [&](const CheckpointMeta& meta) {
    struct TaskWeight {
      const char* name;
      double lambda;
    };
    const TaskWeight tasks[] = {{"text-to-user", weights.text_user},
                                {"image-to-text", weights.image_text},
                                {"image-to-user", weights.image_user}};
    double s = 0.0;
    bool any = false;
    for (const auto& [name, lambda] : tasks) {
      if (lambda <= 0) continue;
      auto it = meta.validation_ranks.find(name);
      if (it == meta.validation_ranks.end()) continue;
      s += it->second / meta.gallery_sizes.at(name);
      any = true;
    }
    // fall back to the precomputed score when no weighted task has metrics
    return any ? s : meta.combined_score;
  };
  int best = 0;
  double best_score = score(metas[0]);
  for (size_t i = 1; i < metas.size(); ++i) {
    double s = score(metas[i]);
    if (s < best_score) {
      best = static_cast<int>(i);
      best_score = s;
    }
  }
  return best;
}

namespace {

struct Stage {
  LossWeights weights;
  TrainableMask mask;
  bool merged = false;
};

std::vector<Stage> stages_for(const TrainConfig& config) {
  switch (config.mode) {
    case TrainMode::Joint:
      return {{config.weights, {}, false}};
    case TrainMode::Bridging: {
      Stage s1{{1.0, 0.0, 0.0}, {}, false};
      Stage s2{{0.0, 1.0, 0.0}, {true, false, false}, false};
      return {s1, s2};
    }
    case TrainMode::Merged:
      return {{{1.0, 0.0, 0.0}, {}, true}};
  }
  return {};
}

TaskSelection validation_tasks(const TrainConfig& config) {
  TaskSelection sel;
  switch (config.mode) {
    case TrainMode::Joint:
      sel.text_to_user = config.weights.text_user > 0;
      sel.image_to_text = config.weights.image_text > 0;
      sel.image_to_user = config.weights.image_user > 0;
      break;
    case TrainMode::Bridging:
      sel = {true, true, false};
      break;
    case TrainMode::Merged:
      sel = {true, false, true};
      break;
  }
  return sel;
}

}  // namespace

TrainResult train(const TrainInputs& in, const ModelConfig& model_config,
                  const TrainConfig& train_config,
                  ModelParameters initial_params) {
  model_config.validate();
  train_config.validate();
  if (in.splits->train.empty())
    throw std::invalid_argument("train: empty training split");

  // resolve training posts once
  std::vector<const Post*> train_posts;
  for (const auto& id : in.splits->train)
    train_posts.push_back(&in.corpus->by_id(id));

  TrainResult result;
  ModelParameters params = std::move(initial_params);
  AdamConfig adam;
  Rng rng(train_config.seed);
  TaskSelection val_tasks = validation_tasks(train_config);

  int epoch_counter = 0;
  for (const Stage& stage : stages_for(train_config)) {
    AdamState state =
        AdamState::zeros(model_config, params.user_count());
    for (int e = 0; e < train_config.epochs; ++e, ++epoch_counter) {
      double lr = scheduled_lr(train_config, e);
      std::vector<int> order(train_posts.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      rng.shuffle(order);

      int step = 0;
      for (size_t start = 0; start < order.size();
           start += train_config.batch_size, ++step) {
        size_t end =
            std::min(order.size(), start + train_config.batch_size);
        std::vector<BatchItem> items;
        std::vector<int> touched;
        for (size_t i = start; i < end; ++i) {
          const Post* p = train_posts[order[i]];
          BatchItem item;
          item.user = p->user_id;
          if (p->has_text) {
            item.token_ids = token_ids_for(*p, *in.vocab);
            item.has_text = !item.token_ids.empty();
          }
          if (p->has_image())
            item.image_feature = in.features->vector(p->image_ref);
          if (!item.has_text && !item.image_feature) continue;
          touched.push_back(p->user_id);
          items.push_back(std::move(item));
        }
        if (items.empty()) continue;

        EncodedBatch batch = encode_batch(std::move(items), *in.embeddings,
                                          params, model_config);
        MixtureResult mix =
            stage.merged
                ? merged_ranking_loss(batch, train_config.margin, rng)
                : mixture_loss(batch, stage.weights, train_config.margin,
                               rng);
        if (!std::isfinite(mix.loss))
          throw std::runtime_error(
              "train: non-finite loss at epoch " +
              std::to_string(epoch_counter) + " step " + std::to_string(step));

        ParamGrads grads =
            ModelParameters::zeros(model_config, params.user_count());
        backward_batch(batch, mix.g_text, mix.g_image, mix.g_user,
                       *in.embeddings, params, model_config, grads);

        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()),
                      touched.end());
        adam_step(params, grads, state, lr, adam, stage.mask, &touched);
        result.log.push_back({epoch_counter, step, mix.loss, lr});
      }

      // validation metrics + checkpoint
      EmbeddingContext ctx{in.corpus,   in.vocab,      in.embeddings,
                           in.features, &model_config, &params};
      RetrievalReport report =
          evaluate_retrieval(ctx, *in.splits, /*use_test=*/false, val_tasks);
      CheckpointMeta meta;
      meta.epoch = epoch_counter;
      meta.validation_ranks = report.mean_median_rank;
      meta.gallery_sizes = report.gallery_size;
      for (const auto& [task, rank] : report.mean_median_rank)
        meta.combined_score += rank / report.gallery_size.at(task);
      result.checkpoints.push_back({params, meta});
    }
  }

  std::vector<CheckpointMeta> metas;
  for (const auto& c : result.checkpoints) metas.push_back(c.meta);
  result.best = select_checkpoint(metas, train_config.weights);
  return result;
}

}  // namespace mme
