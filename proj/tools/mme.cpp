// Command-line front end: ingestion, dedup, splits, training, evaluation,
// clustering, ad-hoc retrieval, and synthetic corpus generation.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mme/cluster.hpp"
#include "mme/corpus.hpp"
#include "mme/eval.hpp"
#include "mme/nnindex.hpp"
#include "mme/optim.hpp"
#include "mme/pipeline.hpp"
#include "mme/synth.hpp"

using namespace mme;
namespace fs = std::filesystem;

namespace {

// shared file inputs; every subcommand loads only what it declares
struct DataPaths {
  std::string posts, features, wordvecs, splits;
  int min_count = 5;
  int max_sentence_len = 20;
};

void add_data_flags(CLI::App* cmd, DataPaths& paths, bool with_features,
                    bool with_wordvecs, bool with_splits) {
  cmd->add_option("--posts", paths.posts, "cleaned posts tsv")->required();
  if (with_features)
    cmd->add_option("--features", paths.features, "image feature file")
        ->required();
  if (with_wordvecs)
    cmd->add_option("--wordvecs", paths.wordvecs, "word vector text file")
        ->required();
  if (with_splits)
    cmd->add_option("--splits", paths.splits, "split directory")->required();
  cmd->add_option("--min-count", paths.min_count,
                  "vocabulary frequency threshold");
  cmd->add_option("--max-len", paths.max_sentence_len,
                  "sentence length cap");
}

struct Loaded {
  Corpus corpus;
  Vocabulary vocab;
  WordEmbeddings embeddings;
  ImageFeatureStore features;
  CorpusSplits splits;
};

Loaded load_data(const DataPaths& paths, bool with_features,
                 bool with_wordvecs, bool with_splits) {
  Loaded d;
  CleaningConfig cleaning;
  cleaning.stopwords = default_stopwords();
  cleaning.max_sentence_len = paths.max_sentence_len;
  d.corpus = load_posts(paths.posts, cleaning, /*already_clean=*/true);
  d.vocab = build_vocabulary(d.corpus.posts, paths.min_count);
  if (with_features) {
    d.features = load_image_features(paths.features);
    validate_corpus(d.corpus, d.features);
  }
  if (with_wordvecs)
    d.embeddings = load_word_embeddings(paths.wordvecs, d.vocab);
  if (with_splits) d.splits = load_splits(paths.splits);
  return d;
}

ModelConfig model_config_for(const Loaded& d, int common_dim, int max_len) {
  if (common_dim < 4 || common_dim % 4 != 0)
    throw std::invalid_argument("--dim must be a positive multiple of 4");
  ModelConfig mc;
  mc.common_dim = common_dim;
  mc.image_dim = d.features.dim > 0 ? d.features.dim : 1;
  mc.word_dim = d.embeddings.dim();
  mc.user_dim = d.embeddings.dim();
  mc.max_sentence_len = max_len;
  mc.blocks = {{2, common_dim / 2}, {3, common_dim / 4},
               {4, common_dim / 4}};
  return mc;
}

void write_report_csv(const std::string& path, const RetrievalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out.precision(17);
  out << "task,mean_median_rank,gallery_size\n";
  for (const auto& [task, rank] : report.mean_median_rank)
    out << task << ',' << rank << ',' << report.gallery_size.at(task) << '\n';
  if (report.joint_normalized > 0.0)
    out << "joint_normalized," << report.joint_normalized << ",\n";
}

// ---- subcommands ----

int cmd_synth(const std::string& out_dir, const SynthConfig& config) {
  auto synth = generate_synthetic_corpus(config);
  write_synth_corpus(out_dir, synth);
  std::cout << "wrote " << synth.corpus.posts.size() << " posts, "
            << synth.features.count() << " image features, "
            << synth.words.size() << " words to " << out_dir << "\n";
  return 0;
}

int cmd_ingest(const std::string& posts_path, const std::string& features_path,
               const std::string& out_dir, int min_count, int max_len) {
  CleaningConfig cleaning;
  cleaning.stopwords = default_stopwords();
  cleaning.max_sentence_len = max_len;
  Corpus corpus = load_posts(posts_path, cleaning, /*already_clean=*/false);
  if (!features_path.empty()) {
    auto features = load_image_features(features_path);
    validate_corpus(corpus, features);
  }
  auto vocab = build_vocabulary(corpus.posts, min_count);
  fs::create_directories(out_dir);
  save_posts((fs::path(out_dir) / "posts.tsv").string(), corpus.posts);
  std::cout << "ingested " << corpus.posts.size() << " posts, "
            << corpus.user_count << " users, vocabulary " << vocab.size()
            << "\n";
  return 0;
}

int cmd_dedup(const DataPaths& paths, const std::string& out_dir,
              double text_threshold, double image_threshold,
              bool with_features) {
  auto d = load_data(paths, with_features, false, false);
  size_t before = d.corpus.posts.size();

  if (with_features && d.features.count() > 0) {
    VectorIndex index(d.features.features, Metric::Cosine);
    auto canon = dedup_images(d.features, index, image_threshold);
    for (Post& p : d.corpus.posts)
      if (p.has_image()) p.image_ref = canon.at(p.image_ref);
  }
  auto kept = dedup_text(d.corpus.posts, text_threshold);

  fs::create_directories(out_dir);
  save_posts((fs::path(out_dir) / "posts.tsv").string(), kept);
  std::cout << "kept " << kept.size() << " of " << before << " posts\n";
  return 0;
}

int cmd_split(const DataPaths& paths, const std::string& out_dir,
              const SplitConfig& config) {
  auto d = load_data(paths, false, false, false);
  auto splits = make_splits(d.corpus.posts, config);
  save_splits(out_dir, splits);
  std::cout << "train " << splits.train.size() << ", text-to-user test "
            << splits.text_to_user.test.size() << ", image-to-text test "
            << splits.image_to_text.test.size() << ", image-to-user test "
            << splits.image_to_user.test.size() << "\n";
  return 0;
}

int cmd_train(const DataPaths& paths, const std::string& out_dir,
              int common_dim, const TrainConfig& train_config) {
  train_config.weights.validate();
  auto d = load_data(paths, true, true, true);
  ModelConfig mc = model_config_for(d, common_dim, paths.max_sentence_len);

  Rng rng(train_config.seed);
  auto params = ModelParameters::init(mc, d.corpus.user_count, rng);
  params.user_table = init_user_embeddings(d.corpus, d.vocab, d.embeddings,
                                           mc, d.corpus.user_count,
                                           train_config.seed);

  TrainInputs inputs{&d.corpus, &d.splits, &d.vocab, &d.embeddings,
                     &d.features};
  auto result = train(inputs, mc, train_config, std::move(params));

  fs::create_directories(out_dir);
  const auto& best = result.checkpoints[result.best];
  save_checkpoint((fs::path(out_dir) / "model.bin").string(), mc, best.params);

  std::ofstream log((fs::path(out_dir) / "train_log.csv").string());
  log.precision(17);
  log << "epoch,step,loss,lr\n";
  for (const auto& entry : result.log)
    log << entry.epoch << ',' << entry.step << ',' << entry.loss << ','
        << entry.lr << '\n';

  std::ofstream val((fs::path(out_dir) / "validation.csv").string());
  val.precision(17);
  val << "epoch,task,mean_median_rank,gallery_size\n";
  for (const auto& c : result.checkpoints)
    for (const auto& [task, rank] : c.meta.validation_ranks)
      val << c.meta.epoch << ',' << task << ',' << rank << ','
          << c.meta.gallery_sizes.at(task) << '\n';

  std::cout << "best epoch " << best.meta.epoch << ", checkpoint written to "
            << (fs::path(out_dir) / "model.bin").string() << "\n";
  return 0;
}

int cmd_eval_retrieval(const DataPaths& paths, const std::string& checkpoint,
                       const std::string& out_path, bool use_test) {
  auto d = load_data(paths, true, true, true);
  auto [mc, params] = load_checkpoint(checkpoint);
  EmbeddingContext ctx{&d.corpus, &d.vocab, &d.embeddings, &d.features, &mc,
                       &params};
  auto report = evaluate_retrieval(ctx, d.splits, use_test, {});
  write_report_csv(out_path, report);
  for (const auto& [task, rank] : report.mean_median_rank)
    std::cout << task << ": " << rank << " (gallery "
              << report.gallery_size.at(task) << ")\n";
  if (report.joint_normalized > 0.0)
    std::cout << "joint normalized: " << report.joint_normalized << "\n";
  return 0;
}

InterestLabels load_labels(const std::string& path, int user_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels file: " + path);
  InterestLabels labels;
  labels.labels.assign(user_count, {});
  int user;
  while (in >> user) {
    if (user < 0 || user >= user_count)
      throw std::runtime_error("labels: user id out of range");
    for (int c = 0; c < InterestLabels::kClasses; ++c) {
      int v;
      if (!(in >> v)) throw std::runtime_error("labels: truncated line");
      labels.labels[user][c] = v != 0;
    }
  }
  return labels;
}

int cmd_eval_interests(const DataPaths& paths, const std::string& checkpoint,
                       const std::string& labels_path,
                       const std::string& baseline, int folds, uint64_t seed,
                       const std::string& out_path) {
  auto d = load_data(paths, true, true, false);
  Mat users;
  if (!baseline.empty()) {
    BaselineMode mode = baseline == "avg-text" ? BaselineMode::AvgText
                                               : BaselineMode::AvgImage;
    users = baseline_user_embedding(d.corpus, mode, d.vocab, d.embeddings,
                                    d.features, seed);
  } else {
    auto [mc, params] = load_checkpoint(checkpoint);
    EmbeddingContext ctx{&d.corpus, &d.vocab, &d.embeddings, &d.features, &mc,
                         &params};
    users = embed_all_users(ctx);
  }
  auto labels = load_labels(labels_path, d.corpus.user_count);
  double f1 = predict_user_interests(users, labels, folds, seed);
  std::cout << "macro F1: " << f1 << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out.precision(17);
    out << "macro_f1\n" << f1 << "\n";
  }
  return 0;
}

int cmd_cluster(const DataPaths& paths, const std::string& checkpoint, int k,
                uint64_t seed, const std::string& out_path, int common_words,
                int top_words, int top_images) {
  auto d = load_data(paths, true, true, false);
  auto [mc, params] = load_checkpoint(checkpoint);
  EmbeddingContext ctx{&d.corpus, &d.vocab, &d.embeddings, &d.features, &mc,
                       &params};
  Mat users = embed_all_users(ctx);
  auto model = kmeans(users, k, seed);

  Mat image_embeddings(d.features.count(), mc.common_dim);
  for (int i = 0; i < d.features.count(); ++i) {
    Vec e = encode_image(d.features.features.row(i), params, mc);
    std::copy(e.begin(), e.end(), image_embeddings.row(i));
  }
  auto report = cluster_report(model, d.corpus, common_words, top_words,
                               top_images, image_embeddings, d.features.refs);
  write_cluster_report(out_path, report);
  std::cout << "k=" << k << " objective " << model.objective << ", report "
            << out_path << "\n";
  return 0;
}

int cmd_retrieve(const DataPaths& paths, const std::string& checkpoint,
                 const std::string& text, const std::string& image_ref,
                 int user_id, int k, const std::string& gallery_kind) {
  auto d = load_data(paths, true, true, false);
  auto [mc, params] = load_checkpoint(checkpoint);
  EmbeddingContext ctx{&d.corpus, &d.vocab, &d.embeddings, &d.features, &mc,
                       &params};

  Vec query;
  if (!text.empty()) {
    CleaningConfig cleaning;
    cleaning.stopwords = default_stopwords();
    cleaning.max_sentence_len = paths.max_sentence_len;
    Post p;
    p.tokens = clean_text(text, cleaning);
    p.has_text = true;
    auto ids = token_ids_for(p, d.vocab);
    if (ids.empty())
      throw std::invalid_argument("retrieve: query has no known words");
    query = encode_text(ids, d.embeddings, params, mc);
  } else if (!image_ref.empty()) {
    if (!d.features.contains(image_ref))
      throw std::invalid_argument("retrieve: unknown image ref " + image_ref);
    query = encode_image(d.features.vector(image_ref), params, mc);
  } else if (user_id >= 0) {
    query = encode_user(user_id, params, mc);
  } else {
    throw std::invalid_argument(
        "retrieve: provide --text, --image-ref, or --user-id");
  }

  std::vector<std::string> ids;
  Mat gallery;
  if (gallery_kind == "users") {
    gallery = embed_all_users(ctx);
    for (int u = 0; u < gallery.rows; ++u) ids.push_back(std::to_string(u));
  } else {
    std::vector<Vec> rows;
    for (const Post& p : d.corpus.posts) {
      if (!has_usable_text(p, d.vocab)) continue;
      rows.push_back(encode_text(token_ids_for(p, d.vocab), d.embeddings,
                                 params, mc));
      ids.push_back(p.post_id);
    }
    if (rows.empty()) throw std::runtime_error("retrieve: empty gallery");
    gallery = mat_from_rows(rows);
  }

  VectorIndex index(gallery, Metric::Cosine);
  for (const auto& hit : index.query_knn(query, k))
    std::cout << ids[hit.id] << ' ' << hit.score << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint multimodal embedding toolkit"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth_config;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a planted-topic corpus");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_config.seed, "rng seed");
  synth_cmd->add_option("--topics", synth_config.topic_count, "topic count");
  synth_cmd->add_option("--users-per-topic", synth_config.users_per_topic, "");
  synth_cmd->add_option("--posts-per-user", synth_config.posts_per_user, "");
  synth_cmd->add_option("--vocab-per-topic", synth_config.vocab_per_topic, "");
  synth_cmd->add_option("--word-dim", synth_config.word_dim, "");
  synth_cmd->add_option("--image-dim", synth_config.image_feature_dim, "");
  synth_cmd->add_option("--missing-rate", synth_config.image_missing_rate, "");
  synth_cmd->add_option("--noise", synth_config.noise, "");

  // ingest
  std::string ingest_posts, ingest_features, ingest_out;
  int ingest_min_count = 5, ingest_max_len = 20;
  auto* ingest_cmd = app.add_subcommand("ingest", "clean and validate raw posts");
  ingest_cmd->add_option("--posts", ingest_posts, "raw posts tsv")->required();
  ingest_cmd->add_option("--features", ingest_features, "image feature file");
  ingest_cmd->add_option("--out", ingest_out, "output directory")->required();
  ingest_cmd->add_option("--min-count", ingest_min_count, "");
  ingest_cmd->add_option("--max-len", ingest_max_len, "");

  // dedup
  DataPaths dedup_paths;
  std::string dedup_out;
  double text_threshold = 0.8, image_threshold = 0.95;
  bool dedup_has_features = false;
  auto* dedup_cmd = app.add_subcommand("dedup", "drop near-duplicate posts");
  dedup_cmd->add_option("--posts", dedup_paths.posts, "")->required();
  dedup_cmd->add_option("--features", dedup_paths.features, "");
  dedup_cmd->add_option("--out", dedup_out, "")->required();
  dedup_cmd->add_option("--threshold", text_threshold, "token jaccard cutoff");
  dedup_cmd->add_option("--image-threshold", image_threshold,
                        "image cosine cutoff");

  // split
  DataPaths split_paths;
  std::string split_out;
  SplitConfig split_config;
  auto* split_cmd = app.add_subcommand("split", "carve train/val/test splits");
  split_cmd->add_option("--posts", split_paths.posts, "")->required();
  split_cmd->add_option("--out", split_out, "")->required();
  split_cmd->add_option("--seed", split_config.seed, "");
  split_cmd->add_option("--test-fraction", split_config.test_fraction, "");
  split_cmd->add_option("--val-fraction", split_config.validation_fraction, "");
  split_cmd->add_option("--pairs", split_config.image_text_test_count,
                        "image-caption test pair count");

  // train
  DataPaths train_paths;
  std::string train_out, mode_name = "joint";
  int common_dim = 1024;
  TrainConfig train_config;
  train_config.weights = {0.1, 0.45, 0.45};
  auto* train_cmd = app.add_subcommand("train", "fit the joint embedding");
  add_data_flags(train_cmd, train_paths, true, true, true);
  train_cmd->add_option("--out", train_out, "")->required();
  train_cmd->add_option("--dim", common_dim, "common space dimension");
  train_cmd->add_option("--seed", train_config.seed, "");
  train_cmd->add_option("--lambda1", train_config.weights.text_user, "");
  train_cmd->add_option("--lambda2", train_config.weights.image_text, "");
  train_cmd->add_option("--lambda3", train_config.weights.image_user, "");
  train_cmd->add_option("--margin", train_config.margin.margin, "");
  train_cmd->add_option("--batch-size", train_config.batch_size, "");
  train_cmd->add_option("--lr", train_config.learning_rate, "");
  train_cmd->add_option("--epochs", train_config.epochs, "");
  train_cmd->add_option("--mode", mode_name, "joint|bridging|merged")
      ->check(CLI::IsMember({"joint", "bridging", "merged"}));

  // eval-retrieval
  DataPaths evalr_paths;
  std::string evalr_checkpoint, evalr_out;
  bool evalr_test = false;
  auto* evalr_cmd =
      app.add_subcommand("eval-retrieval", "cross-modal retrieval report");
  add_data_flags(evalr_cmd, evalr_paths, true, true, true);
  evalr_cmd->add_option("--checkpoint", evalr_checkpoint, "")->required();
  evalr_cmd->add_option("--out", evalr_out, "report csv path")->required();
  evalr_cmd->add_flag("--test", evalr_test, "use the test split");

  // eval-interests
  DataPaths evali_paths;
  std::string evali_checkpoint, evali_labels, evali_baseline, evali_out;
  int evali_folds = 5;
  uint64_t evali_seed = 0;
  auto* evali_cmd =
      app.add_subcommand("eval-interests", "user interest classification");
  add_data_flags(evali_cmd, evali_paths, true, true, false);
  evali_cmd->add_option("--checkpoint", evali_checkpoint, "");
  evali_cmd->add_option("--labels", evali_labels, "user label file")
      ->required();
  evali_cmd->add_option("--baseline", evali_baseline, "avg-text|avg-image")
      ->check(CLI::IsMember({"avg-text", "avg-image"}));
  evali_cmd->add_option("--folds", evali_folds, "");
  evali_cmd->add_option("--seed", evali_seed, "");
  evali_cmd->add_option("--out", evali_out, "");

  // cluster
  DataPaths cluster_paths;
  std::string cluster_checkpoint, cluster_out;
  int cluster_k = 5, common_words = 50, top_words = 10, top_images = 5;
  uint64_t cluster_seed = 0;
  auto* cluster_cmd = app.add_subcommand("cluster", "cluster user embeddings");
  add_data_flags(cluster_cmd, cluster_paths, true, true, false);
  cluster_cmd->add_option("--checkpoint", cluster_checkpoint, "")->required();
  cluster_cmd->add_option("--k", cluster_k, "");
  cluster_cmd->add_option("--seed", cluster_seed, "");
  cluster_cmd->add_option("--out", cluster_out, "report path")->required();
  cluster_cmd->add_option("--common-words", common_words,
                          "corpus-wide words to drop");
  cluster_cmd->add_option("--top-words", top_words, "");
  cluster_cmd->add_option("--top-images", top_images, "");

  // retrieve
  DataPaths retr_paths;
  std::string retr_checkpoint, retr_text, retr_image, retr_gallery = "users";
  int retr_user = -1, retr_k = 5;
  auto* retr_cmd = app.add_subcommand("retrieve", "ad-hoc top-k query");
  add_data_flags(retr_cmd, retr_paths, true, true, false);
  retr_cmd->add_option("--checkpoint", retr_checkpoint, "")->required();
  retr_cmd->add_option("--text", retr_text, "text query");
  retr_cmd->add_option("--image-ref", retr_image, "image reference query");
  retr_cmd->add_option("--user-id", retr_user, "user id query");
  retr_cmd->add_option("--k", retr_k, "");
  retr_cmd->add_option("--gallery", retr_gallery, "users|posts")
      ->check(CLI::IsMember({"users", "posts"}));

  // CLI11 only reads config files on the root app; fallthrough lets
  // `--config` appear after the subcommand name. Keys are flat
  // `subcommand.option=value` lines, and explicit flags override them.
  app.set_config("--config", "", "flat subcommand.option=value config file");
  for (CLI::App* sub : {synth_cmd, ingest_cmd, dedup_cmd, split_cmd, train_cmd,
                        evalr_cmd, evali_cmd, cluster_cmd, retr_cmd})
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) return cmd_synth(synth_out, synth_config);
    if (*ingest_cmd)
      return cmd_ingest(ingest_posts, ingest_features, ingest_out,
                        ingest_min_count, ingest_max_len);
    if (*dedup_cmd) {
      dedup_has_features = !dedup_paths.features.empty();
      return cmd_dedup(dedup_paths, dedup_out, text_threshold, image_threshold,
                       dedup_has_features);
    }
    if (*split_cmd) return cmd_split(split_paths, split_out, split_config);
    if (*train_cmd) {
      train_config.mode = mode_name == "bridging" ? TrainMode::Bridging
                          : mode_name == "merged" ? TrainMode::Merged
                                                  : TrainMode::Joint;
      return cmd_train(train_paths, train_out, common_dim, train_config);
    }
    if (*evalr_cmd)
      return cmd_eval_retrieval(evalr_paths, evalr_checkpoint, evalr_out,
                                evalr_test);
    if (*evali_cmd)
      return cmd_eval_interests(evali_paths, evali_checkpoint, evali_labels,
                                evali_baseline, evali_folds, evali_seed,
                                evali_out);
    if (*cluster_cmd)
      return cmd_cluster(cluster_paths, cluster_checkpoint, cluster_k,
                         cluster_seed, cluster_out, common_words, top_words,
                         top_images);
    if (*retr_cmd)
      return cmd_retrieve(retr_paths, retr_checkpoint, retr_text, retr_image,
                          retr_user, retr_k, retr_gallery);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
