#include "diffetm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "diffetm/errors.hpp"

namespace diffetm::corpus {

namespace {

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

constexpr char kCacheMagic[8] = {'D', 'E', 'T', 'M', 'C', 'O', 'R', 'P'};

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::uint32_t> doc_freq)
    : tokens_(std::move(tokens)), doc_freq_(std::move(doc_freq)) {
  if (tokens_.size() != doc_freq_.size()) {
    throw ShapeMismatch("vocabulary: token and doc_freq lists differ in length");
  }
  index_of_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_of_.emplace(tokens_[i], static_cast<WordId>(i)).second) {
      throw DomainError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

std::optional<WordId> Vocabulary::find(std::string_view token) const {
  auto it = index_of_.find(std::string(token));
  if (it == index_of_.end()) return std::nullopt;
  return it->second;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw InvalidConfig("unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

std::vector<std::string> tokenize_line(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t begin = i;
    while (i < text.size() && !is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (begin < end && is_ascii_punct(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && is_ascii_punct(static_cast<unsigned char>(text[end - 1]))) --end;
    if (begin == end) continue;
    std::string tok(text.substr(begin, end - begin));
    for (char& c : tok) {
      auto u = static_cast<unsigned char>(c);
      if (u < 0x80) c = static_cast<char>(std::tolower(u));
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::vector<std::string> tokenize_line(std::string_view text,
                                       const std::unordered_set<std::string>& stop_words) {
  auto tokens = tokenize_line(text);
  if (stop_words.empty()) return tokens;
  std::erase_if(tokens, [&](const std::string& t) { return stop_words.contains(t); });
  return tokens;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_docs,
                            std::uint32_t min_df) {
  if (min_df < 1) throw InvalidConfig("min_df must be >= 1");
  if (token_docs.empty()) throw AllTokensPruned("no documents to build a vocabulary from");

  std::unordered_map<std::string, std::uint32_t> df;
  std::unordered_set<std::string_view> seen;
  for (const auto& doc : token_docs) {
    seen.clear();
    for (const auto& tok : doc) {
      if (seen.insert(tok).second) ++df[tok];
    }
  }

  std::vector<std::pair<std::string, std::uint32_t>> kept;
  for (auto& [tok, count] : df) {
    if (count >= min_df) kept.emplace_back(tok, count);
  }
  if (kept.empty()) {
    throw AllTokensPruned("no token reaches document frequency " + std::to_string(min_df) +
                          " across " + std::to_string(token_docs.size()) + " documents");
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens;
  std::vector<std::uint32_t> freqs;
  tokens.reserve(kept.size());
  freqs.reserve(kept.size());
  for (auto& [tok, count] : kept) {
    tokens.push_back(std::move(tok));
    freqs.push_back(count);
  }
  return Vocabulary(std::move(tokens), std::move(freqs));
}

std::optional<BowDocument> vectorize(const std::vector<std::string>& tokens,
                                     const Vocabulary& vocab) {
  std::map<WordId, std::uint32_t> counts;
  for (const auto& tok : tokens) {
    if (auto id = vocab.find(tok)) ++counts[*id];
  }
  if (counts.empty()) return std::nullopt;
  BowDocument doc;
  doc.counts.assign(counts.begin(), counts.end());
  for (const auto& [id, c] : doc.counts) doc.total += c;
  return doc;
}

std::vector<double> normalize(const BowDocument& bow, std::size_t vocab_size) {
  if (bow.total == 0) throw DomainError("normalize: empty document");
  std::vector<double> out(vocab_size, 0.0);
  const double total = static_cast<double>(bow.total);
  for (const auto& [id, c] : bow.counts) {
    if (id >= vocab_size) throw VocabularyMismatch("normalize: word id out of range");
    out[id] = static_cast<double>(c) / total;
  }
  return out;
}

CorpusSplits split_corpus(const std::vector<BowDocument>& docs,
                          std::array<double, 3> fractions, std::uint64_t seed,
                          std::size_t vocab_size) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw InvalidConfig("split fractions must be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw InvalidConfig("split fractions must sum to 1");
  }
  const std::size_t n = docs.size();
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[1]));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[2]));
  if (n_valid == 0 || n_test == 0 || n_valid + n_test >= n) {
    throw EmptySplit("splitting " + std::to_string(n) + " documents leaves an empty split");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CorpusSplits out;
  out.train.split = Split::train;
  out.valid.split = Split::valid;
  out.test.split = Split::test;
  for (auto* c : {&out.train, &out.valid, &out.test}) c->vocab_size = vocab_size;

  const std::size_t n_train = n - n_valid - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& doc = docs[order[i]];
    if (i < n_train) {
      out.train.docs.push_back(doc);
    } else if (i < n_train + n_valid) {
      out.valid.docs.push_back(doc);
    } else {
      out.test.docs.push_back(doc);
    }
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return lines;
}

std::unordered_set<std::string> load_stop_words(const std::filesystem::path& path) {
  std::unordered_set<std::string> out;
  for (const auto& line : read_lines(path)) {
    for (auto& tok : tokenize_line(line)) out.insert(std::move(tok));
  }
  return out;
}

void write_vocabulary_tsv(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.token(static_cast<WordId>(i)) << '\t' << i << '\t'
        << vocab.doc_freq(static_cast<WordId>(i)) << '\n';
  }
}

Vocabulary read_vocabulary_tsv(const std::filesystem::path& path) {
  std::vector<std::string> tokens;
  std::vector<std::uint32_t> freqs;
  std::size_t row = 0;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok, id_s, df_s;
    if (!std::getline(ss, tok, '\t') || !std::getline(ss, id_s, '\t') ||
        !std::getline(ss, df_s, '\t')) {
      throw CorruptCache("vocabulary row " + std::to_string(row) + ": expected 3 columns");
    }
    if (std::stoull(id_s) != row) {
      throw CorruptCache("vocabulary row " + std::to_string(row) + ": ids must be contiguous");
    }
    tokens.push_back(tok);
    freqs.push_back(static_cast<std::uint32_t>(std::stoul(df_s)));
    ++row;
  }
  return Vocabulary(std::move(tokens), std::move(freqs));
}

void write_corpus_cache(const BowCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  detail::LeWriter w(out);
  w.bytes(kCacheMagic, sizeof(kCacheMagic));
  w.u32(kCorpusCacheVersion);
  w.u32(static_cast<std::uint32_t>(corpus.split));
  w.u32(static_cast<std::uint32_t>(corpus.vocab_size));
  w.u64(corpus.docs.size());
  for (const auto& doc : corpus.docs) {
    w.u32(static_cast<std::uint32_t>(doc.counts.size()));
    for (const auto& [id, c] : doc.counts) {
      w.u32(id);
      w.u32(c);
    }
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

BowCorpus read_corpus_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  detail::LeReader r(in);
  const std::string where = "corpus cache '" + path.string() + "': ";

  char magic[8];
  if (!r.bytes(magic, sizeof(magic)) || !std::equal(magic, magic + 8, kCacheMagic)) {
    throw CorruptCache(where + "bad magic");
  }
  std::uint32_t version = 0, split = 0, vocab = 0;
  std::uint64_t n = 0;
  if (!r.u32(version)) throw CorruptCache(where + "truncated header");
  if (version != kCorpusCacheVersion) {
    throw CorruptCache(where + "unsupported version " + std::to_string(version));
  }
  if (!r.u32(split) || !r.u32(vocab) || !r.u64(n) || split > 2) {
    throw CorruptCache(where + "truncated header");
  }
  BowCorpus c;
  c.split = static_cast<Split>(split);
  c.vocab_size = vocab;
  c.docs.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t d = 0; d < n; ++d) {
    std::uint32_t len = 0;
    if (!r.u32(len) || len == 0) throw CorruptCache(where + "bad document " + std::to_string(d));
    BowDocument doc;
    doc.counts.reserve(len);
    for (std::uint32_t k = 0; k < len; ++k) {
      std::uint32_t id = 0, count = 0;
      if (!r.u32(id) || !r.u32(count)) throw CorruptCache(where + "truncated");
      if (id >= vocab || count == 0) {
        throw CorruptCache(where + "invalid entry in document " + std::to_string(d));
      }
      doc.counts.emplace_back(id, count);
      doc.total += count;
    }
    c.docs.push_back(std::move(doc));
  }
  if (!r.at_eof()) throw CorruptCache(where + "trailing bytes");
  return c;
}

namespace {

std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& lines,
                                                   const std::unordered_set<std::string>& stop) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(tokenize_line(line, stop));
  return out;
}

std::unordered_set<std::string> stop_words_of(const IngestOptions& opts) {
  return opts.stop_words ? load_stop_words(*opts.stop_words) : std::unordered_set<std::string>{};
}

}  // namespace

IngestResult ingest_single(const std::vector<std::string>& lines, const IngestOptions& opts) {
  const auto stop = stop_words_of(opts);
  auto token_docs = tokenize_all(lines, stop);
  IngestResult res;
  res.vocab = build_vocabulary(token_docs, opts.min_df);

  std::vector<BowDocument> docs;
  std::size_t dropped = 0;
  for (const auto& toks : token_docs) {
    if (auto d = vectorize(toks, res.vocab)) {
      docs.push_back(std::move(*d));
    } else {
      ++dropped;
    }
  }
  res.splits = split_corpus(docs, opts.fractions, opts.split_seed, res.vocab.size());
  res.report.vocab_size = res.vocab.size();
  res.report.documents_read["all"] = lines.size();
  res.report.documents_dropped["all"] = dropped;
  for (const auto* c : {&res.splits.train, &res.splits.valid, &res.splits.test}) {
    res.report.documents_kept[std::string(split_name(c->split))] = c->size();
  }
  return res;
}

IngestResult ingest_presplit(const std::vector<std::string>& train_lines,
                             const std::vector<std::string>& valid_lines,
                             const std::vector<std::string>& test_lines,
                             const IngestOptions& opts) {
  const auto stop = stop_words_of(opts);
  std::array<std::vector<std::vector<std::string>>, 3> tokenized{
      tokenize_all(train_lines, stop), tokenize_all(valid_lines, stop),
      tokenize_all(test_lines, stop)};

  std::vector<std::vector<std::string>> all;
  for (const auto& part : tokenized) all.insert(all.end(), part.begin(), part.end());

  IngestResult res;
  res.vocab = build_vocabulary(all, opts.min_df);
  res.report.vocab_size = res.vocab.size();
  res.report.presplit = true;

  std::array<BowCorpus*, 3> targets{&res.splits.train, &res.splits.valid, &res.splits.test};
  for (std::size_t s = 0; s < 3; ++s) {
    BowCorpus& c = *targets[s];
    c.split = static_cast<Split>(s);
    c.vocab_size = res.vocab.size();
    std::size_t dropped = 0;
    for (const auto& toks : tokenized[s]) {
      if (auto d = vectorize(toks, res.vocab)) {
        c.docs.push_back(std::move(*d));
      } else {
        ++dropped;
      }
    }
    const std::string name(split_name(c.split));
    res.report.documents_read[name] = tokenized[s].size();
    res.report.documents_dropped[name] = dropped;
    res.report.documents_kept[name] = c.size();
    if (c.docs.empty()) throw EmptySplit("split '" + name + "' has no documents after pruning");
  }
  return res;
}

}  // namespace diffetm::corpus
