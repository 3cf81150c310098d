#include "mme/pipeline.hpp"

#include <stdexcept>

namespace mme {

std::vector<int> token_ids_for(const Post& post, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const std::string& t : post.tokens) {
    int wi = vocab.lookup(t);
    if (wi > 0) ids.push_back(wi);
  }
  return ids;
}

bool has_usable_text(const Post& post, const Vocabulary& vocab) {
  return post.has_text && !token_ids_for(post, vocab).empty();
}

Mat embed_all_users(const EmbeddingContext& ctx) {
  const int K = ctx.params->user_count();
  Mat out(K, ctx.model_config->common_dim);
#pragma omp parallel for schedule(static)
  for (int u = 0; u < K; ++u) {
    Vec e = encode_user(u, *ctx.params, *ctx.model_config);
    std::copy(e.begin(), e.end(), out.row(u));
  }
  return out;
}

namespace {

std::vector<const Post*> resolve(const EmbeddingContext& ctx,
                                 const std::vector<std::string>& post_ids) {
  std::vector<const Post*> out;
  out.reserve(post_ids.size());
  for (const auto& id : post_ids) out.push_back(&ctx.corpus->by_id(id));
  return out;
}

Mat embed_texts(const EmbeddingContext& ctx,
                const std::vector<const Post*>& posts) {
  Mat out(static_cast<int>(posts.size()), ctx.model_config->common_dim);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < out.rows; ++i) {
    Vec e = encode_text(token_ids_for(*posts[i], *ctx.vocab), *ctx.embeddings,
                        *ctx.params, *ctx.model_config);
    std::copy(e.begin(), e.end(), out.row(i));
  }
  return out;
}

Mat embed_images(const EmbeddingContext& ctx,
                 const std::vector<const Post*>& posts) {
  Mat out(static_cast<int>(posts.size()), ctx.model_config->common_dim);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < out.rows; ++i) {
    Vec e = encode_image(ctx.features->vector(posts[i]->image_ref),
                         *ctx.params, *ctx.model_config);
    std::copy(e.begin(), e.end(), out.row(i));
  }
  return out;
}

}  // namespace

RetrievalTask task_text_to_user(const EmbeddingContext& ctx,
                                const std::vector<std::string>& post_ids) {
  RetrievalTask task;
  task.name = "text-to-user";
  std::vector<const Post*> posts;
  for (const Post* p : resolve(ctx, post_ids))
    if (has_usable_text(*p, *ctx.vocab)) posts.push_back(p);
  task.queries = embed_texts(ctx, posts);
  task.gallery = embed_all_users(ctx);
  for (const Post* p : posts) task.ground_truth.push_back({p->user_id});
  return task;
}

RetrievalTask task_image_to_text(const EmbeddingContext& ctx,
                                 const std::vector<std::string>& post_ids) {
  RetrievalTask task;
  task.name = "image-to-text";
  std::vector<const Post*> posts;
  for (const Post* p : resolve(ctx, post_ids))
    if (p->has_image() && has_usable_text(*p, *ctx.vocab)) posts.push_back(p);
  task.queries = embed_images(ctx, posts);
  task.gallery = embed_texts(ctx, posts);  // captions of the same pairs
  for (int i = 0; i < task.queries.rows; ++i) task.ground_truth.push_back({i});
  return task;
}

RetrievalTask task_image_to_user(const EmbeddingContext& ctx,
                                 const std::vector<std::string>& post_ids) {
  RetrievalTask task;
  task.name = "image-to-user";
  std::vector<const Post*> posts;
  for (const Post* p : resolve(ctx, post_ids))
    if (p->has_image()) posts.push_back(p);
  task.queries = embed_images(ctx, posts);
  task.gallery = embed_all_users(ctx);
  for (const Post* p : posts) task.ground_truth.push_back({p->user_id});
  return task;
}

RetrievalReport evaluate_retrieval(const EmbeddingContext& ctx,
                                   const CorpusSplits& splits, bool use_test,
                                   const TaskSelection& which) {
  RetrievalReport report;
  auto pick = [&](const CorpusSplits::TaskSplit& t) {
    return use_test ? t.test : t.validation;
  };
  auto run = [&](bool enabled, RetrievalTask (*builder)(
                                   const EmbeddingContext&,
                                   const std::vector<std::string>&),
                 const CorpusSplits::TaskSplit& split) {
    if (!enabled) return;
    const auto& ids = pick(split);
    if (ids.empty()) return;
    RetrievalTask task = builder(ctx, ids);
    if (task.queries.rows == 0) return;
    report.mean_median_rank[task.name] = mean_median_rank(task);
    report.gallery_size[task.name] = task.gallery.rows;
  };
  run(which.text_to_user, task_text_to_user, splits.text_to_user);
  run(which.image_to_text, task_image_to_text, splits.image_to_text);
  run(which.image_to_user, task_image_to_user, splits.image_to_user);
  if (report.mean_median_rank.size() == 3)
    report.joint_normalized =
        joint_normalized_metric(report.mean_median_rank, report.gallery_size);
  return report;
}

}  // namespace mme
