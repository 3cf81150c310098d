#include "mme/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mme/io_util.hpp"
#include "mme/nnindex.hpp"
#include "mme/rng.hpp"

namespace mme {

Mat mat_from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return {};
  int cols = static_cast<int>(rows[0].size());
  Mat m(static_cast<int>(rows.size()), cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != cols)
      throw std::invalid_argument("mat_from_rows: mixed dimensions at row " +
                                  std::to_string(i));
    std::copy(rows[i].begin(), rows[i].end(), m.row(static_cast<int>(i)));
  }
  return m;
}

void Corpus::rebuild_index() {
  post_index.clear();
  for (size_t i = 0; i < posts.size(); ++i)
    post_index[posts[i].post_id] = static_cast<int>(i);
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> kStopwords = {
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "but",  "by",
      "for",  "from", "had",  "has",  "have", "he",   "her",  "his",  "i",
      "if",   "in",   "is",   "it",   "its",  "me",   "my",   "no",   "not",
      "of",   "on",   "or",   "our",  "she",  "so",   "that", "the",  "their",
      "them", "they", "this", "to",   "was",  "we",   "were", "what",
      "when", "who",  "will", "with", "you",  "your"};
  return kStopwords;
}

std::vector<std::string> clean_text(const std::string& raw,
                                    const CleaningConfig& config) {
  std::vector<std::string> out;
  std::istringstream stream(raw);
  std::string piece;
  while (stream >> piece) {
    std::string token;
    bool hashtag = piece[0] == '#';
    if (hashtag) token.push_back('#');
    for (char c : piece) {
      unsigned char u = static_cast<unsigned char>(c);
      if (std::isalnum(u))
        token.push_back(static_cast<char>(std::tolower(u)));
    }
    if (token.empty() || token == "#") continue;  // emoticon / punctuation
    std::string bare = hashtag ? token.substr(1) : token;
    if (config.stopwords.count(bare)) continue;
    out.push_back(std::move(token));
    if (static_cast<int>(out.size()) >= config.max_sentence_len) break;
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<Post>& posts, int min_count) {
  std::map<std::string, long> counts;
  for (const Post& p : posts)
    for (const std::string& t : p.tokens) counts[t]++;

  Vocabulary vocab;
  vocab.min_count = min_count;
  vocab.words.push_back(Vocabulary::kPadToken);
  for (const auto& [word, n] : counts)  // std::map: lexicographic order
    if (n >= min_count) vocab.words.push_back(word);
  for (size_t i = 0; i < vocab.words.size(); ++i)
    vocab.index[vocab.words[i]] = static_cast<int>(i);
  return vocab;
}

namespace {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& w : a) inter += b.count(w);
  return static_cast<double>(inter) / (a.size() + b.size() - inter);
}

}  // namespace

std::vector<Post> dedup_text(const std::vector<Post>& posts,
                             double overlap_threshold) {
  std::vector<int> order(posts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return posts[a].post_id < posts[b].post_id;
  });

  std::vector<Post> kept;
  std::vector<std::set<std::string>> kept_sets;
  for (int idx : order) {
    const Post& p = posts[idx];
    if (!p.has_text) {
      kept.push_back(p);
      kept_sets.emplace_back();
      continue;
    }
    std::set<std::string> toks(p.tokens.begin(), p.tokens.end());
    bool dup = false;
    for (size_t i = 0; i < kept.size() && !dup; ++i) {
      if (!kept[i].has_text) continue;
      if (kept[i].image_ref != p.image_ref) continue;
      if (jaccard(kept_sets[i], toks) >= overlap_threshold) dup = true;
    }
    if (!dup) {
      kept.push_back(p);
      kept_sets.push_back(std::move(toks));
    }
  }
  std::sort(kept.begin(), kept.end(),
            [](const Post& a, const Post& b) { return a.post_id < b.post_id; });
  return kept;
}

std::map<std::string, std::string> dedup_images(const ImageFeatureStore& store,
                                                const VectorIndex& index,
                                                double sim_threshold) {
  int n = store.count();
  std::map<std::string, std::string> canon;
  if (n == 0) return canon;

  // union-find over rows
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  for (int i = 0; i < n; ++i) {
    for (int j : index.query_radius_cosine(store.features.row(i),
                                           sim_threshold)) {
      int a = find(i), b = find(j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  // canonical = smallest image_ref in the component
  std::map<int, std::string> best;
  for (int i = 0; i < n; ++i) {
    int r = find(i);
    auto it = best.find(r);
    if (it == best.end() || store.refs[i] < it->second)
      best[r] = store.refs[i];
  }
  for (int i = 0; i < n; ++i) canon[store.refs[i]] = best[find(i)];
  return canon;
}

CorpusSplits make_splits(const std::vector<Post>& posts,
                         const SplitConfig& config) {
  Rng rng(config.seed);
  CorpusSplits splits;

  // unique images, each owning its posts
  std::map<std::string, std::vector<int>> image_posts;
  std::vector<int> text_only;
  for (size_t i = 0; i < posts.size(); ++i) {
    if (posts[i].has_image())
      image_posts[posts[i].image_ref].push_back(static_cast<int>(i));
    else
      text_only.push_back(static_cast<int>(i));
  }

  std::vector<std::string> images;
  for (const auto& [ref, _] : image_posts) images.push_back(ref);
  rng.shuffle(images);

  size_t n_img = images.size();
  size_t img_test = static_cast<size_t>(n_img * config.test_fraction);
  size_t img_val = static_cast<size_t>(n_img * config.validation_fraction);

  auto split_of_image = [&](size_t pos) {
    if (pos < img_test) return 0;             // test
    if (pos < img_test + img_val) return 1;   // validation
    return 2;                                 // train
  };

  int caption_pairs = 0;
  for (size_t pos = 0; pos < n_img; ++pos) {
    int which = split_of_image(pos);
    for (int pi : image_posts[images[pos]]) {
      const Post& p = posts[pi];
      if (which == 0) {
        splits.image_to_user.test.push_back(p.post_id);
        if (p.has_text && caption_pairs < config.image_text_test_count) {
          splits.image_to_text.test.push_back(p.post_id);
          ++caption_pairs;
        }
      } else if (which == 1) {
        splits.image_to_user.validation.push_back(p.post_id);
        if (p.has_text) splits.image_to_text.validation.push_back(p.post_id);
      } else {
        splits.train.push_back(p.post_id);
      }
    }
  }
  if (caption_pairs < config.image_text_test_count)
    throw std::runtime_error(
        "make_splits: only " + std::to_string(caption_pairs) +
        " unique image-caption pairs available, need " +
        std::to_string(config.image_text_test_count));

  rng.shuffle(text_only);
  size_t n_txt = text_only.size();
  size_t txt_test = static_cast<size_t>(n_txt * config.test_fraction);
  size_t txt_val = static_cast<size_t>(n_txt * config.validation_fraction);
  for (size_t pos = 0; pos < n_txt; ++pos) {
    const Post& p = posts[text_only[pos]];
    if (pos < txt_test)
      splits.text_to_user.test.push_back(p.post_id);
    else if (pos < txt_test + txt_val)
      splits.text_to_user.validation.push_back(p.post_id);
    else
      splits.train.push_back(p.post_id);
  }

  for (auto* list : {&splits.train, &splits.text_to_user.validation,
                     &splits.text_to_user.test,
                     &splits.image_to_text.validation,
                     &splits.image_to_text.test,
                     &splits.image_to_user.validation,
                     &splits.image_to_user.test})
    std::sort(list->begin(), list->end());
  return splits;
}

// --- file formats ---

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

Corpus load_posts(const std::string& path, const CleaningConfig& cleaning,
                  bool already_clean) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open posts file: " + path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  int max_user = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 4 tab-separated fields");
    Post p;
    p.post_id = fields[0];
    try {
      p.user_id = std::stoi(fields[1]);
    } catch (...) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": bad user_id '" + fields[1] + "'");
    }
    if (!fields[2].empty()) {
      if (already_clean) {
        std::istringstream ts(fields[2]);
        std::string t;
        while (ts >> t) p.tokens.push_back(t);
      } else {
        p.tokens = clean_text(fields[2], cleaning);
      }
      p.has_text = true;
    }
    p.image_ref = fields[3];
    if (!p.has_text && !p.has_image())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": post has neither text nor image");
    if (corpus.post_index.count(p.post_id))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": duplicate post_id '" + p.post_id + "'");
    max_user = std::max(max_user, p.user_id);
    corpus.post_index[p.post_id] = static_cast<int>(corpus.posts.size());
    corpus.posts.push_back(std::move(p));
  }
  corpus.user_count = max_user + 1;
  return corpus;
}

void save_posts(const std::string& path, const std::vector<Post>& posts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write posts file: " + path);
  for (const Post& p : posts) {
    out << p.post_id << '\t' << p.user_id << '\t';
    for (size_t i = 0; i < p.tokens.size(); ++i) {
      if (i) out << ' ';
      out << p.tokens[i];
    }
    out << '\t' << p.image_ref << '\n';
  }
}

ImageFeatureStore load_image_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MMEF", 4) != 0)
    throw std::runtime_error(path + ": bad magic");
  int32_t count = read_le32(in), dim = read_le32(in);
  if (count < 0 || dim <= 0)
    throw std::runtime_error(path + ": bad header");
  ImageFeatureStore store;
  store.dim = dim;
  store.features = Mat(count, dim);
  std::vector<float> buf(dim);
  for (int i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(dim) * 4);
    if (!in)
      throw std::runtime_error(path + ": truncated at row " +
                               std::to_string(i));
    for (int j = 0; j < dim; ++j) {
      if (!std::isfinite(buf[j]))
        throw std::runtime_error(path + ": non-finite value at row " +
                                 std::to_string(i));
      store.features.at(i, j) = buf[j];
    }
  }

  std::ifstream idx(path + ".idx");
  if (!idx) throw std::runtime_error("cannot open sidecar: " + path + ".idx");
  std::string ref;
  int rownum;
  while (idx >> ref >> rownum) {
    if (rownum < 0 || rownum >= count)
      throw std::runtime_error(path + ".idx: row out of range for '" + ref +
                               "'");
    store.row[ref] = rownum;
  }
  store.refs.resize(count);
  for (const auto& [r, i] : store.row) store.refs[i] = r;
  if (static_cast<int>(store.row.size()) != count)
    throw std::runtime_error(path + ".idx: entry count mismatch");
  return store;
}

void save_image_features(const std::string& path,
                         const ImageFeatureStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file: " + path);
  out.write("MMEF", 4);
  write_le32(out, store.features.rows);
  write_le32(out, store.features.cols);
  std::vector<float> buf(store.features.cols);
  for (int i = 0; i < store.features.rows; ++i) {
    for (int j = 0; j < store.features.cols; ++j)
      buf[j] = static_cast<float>(store.features.at(i, j));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()) * 4);
  }
  std::ofstream idx(path + ".idx");
  for (int i = 0; i < store.features.rows; ++i)
    idx << store.refs[i] << ' ' << i << '\n';
}

WordEmbeddings load_word_embeddings(const std::string& path,
                                    const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vectors: " + path);
  long count;
  int dim;
  if (!(in >> count >> dim) || dim <= 0)
    throw std::runtime_error(path + ": bad header line");
  WordEmbeddings emb;
  emb.vectors = Mat(vocab.size(), dim);
  std::string word;
  for (long i = 0; i < count; ++i) {
    if (!(in >> word))
      throw std::runtime_error(path + ": truncated at entry " +
                               std::to_string(i));
    int vi = vocab.lookup(word);
    double v;
    for (int j = 0; j < dim; ++j) {
      if (!(in >> v))
        throw std::runtime_error(path + ": bad vector for '" + word + "'");
      if (!std::isfinite(v))
        throw std::runtime_error(path + ": non-finite value for '" + word +
                                 "'");
      if (vi > 0) emb.vectors.at(vi, j) = v;  // row 0 (pad) stays zero
    }
  }
  return emb;
}

void save_word_embeddings(const std::string& path,
                          const std::vector<std::string>& words,
                          const Mat& vectors) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write word vectors: " + path);
  out << words.size() << ' ' << vectors.cols << '\n';
  out.precision(17);
  for (size_t i = 0; i < words.size(); ++i) {
    out << words[i];
    for (int j = 0; j < vectors.cols; ++j)
      out << ' ' << vectors.at(static_cast<int>(i), j);
    out << '\n';
  }
}

namespace {

std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ids.push_back(line);
  return ids;
}

void write_id_list(const std::string& path,
                   const std::vector<std::string>& ids) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file: " + path);
  for (const auto& id : ids) out << id << '\n';
}

}  // namespace

CorpusSplits load_splits(const std::string& dir) {
  namespace fs = std::filesystem;
  CorpusSplits s;
  s.train = read_id_list((fs::path(dir) / "train.txt").string());
  auto task = [&](const std::string& name, CorpusSplits::TaskSplit& t) {
    t.validation = read_id_list((fs::path(dir) / (name + ".val.txt")).string());
    t.test = read_id_list((fs::path(dir) / (name + ".test.txt")).string());
  };
  task("text_to_user", s.text_to_user);
  task("image_to_text", s.image_to_text);
  task("image_to_user", s.image_to_user);
  return s;
}

void save_splits(const std::string& dir, const CorpusSplits& splits) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_id_list((fs::path(dir) / "train.txt").string(), splits.train);
  auto task = [&](const std::string& name,
                  const CorpusSplits::TaskSplit& t) {
    write_id_list((fs::path(dir) / (name + ".val.txt")).string(),
                  t.validation);
    write_id_list((fs::path(dir) / (name + ".test.txt")).string(), t.test);
  };
  task("text_to_user", splits.text_to_user);
  task("image_to_text", splits.image_to_text);
  task("image_to_user", splits.image_to_user);
}

void validate_corpus(const Corpus& corpus, const ImageFeatureStore& store) {
  for (const Post& p : corpus.posts) {
    if (!p.has_text && !p.has_image())
      throw std::runtime_error("post " + p.post_id +
                               ": neither text nor image");
    if (p.user_id < 0 || p.user_id >= corpus.user_count)
      throw std::runtime_error("post " + p.post_id + ": user_id out of range");
    if (p.has_image() && !store.contains(p.image_ref))
      throw std::runtime_error("post " + p.post_id +
                               ": dangling image_ref '" + p.image_ref + "'");
  }
}

}  // namespace mme
