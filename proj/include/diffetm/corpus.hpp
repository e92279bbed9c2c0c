#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <optional>
#include <vector>

namespace diffetm::corpus {

using WordId = std::uint32_t;

/// Token <-> id mapping with per-token document frequencies. Ids are assigned
/// by descending document frequency, ties broken lexicographically.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, std::vector<std::uint32_t> doc_freq);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(WordId id) const { return tokens_.at(id); }
  std::uint32_t doc_freq(WordId id) const { return doc_freq_.at(id); }
  std::optional<WordId> find(std::string_view token) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint32_t>& doc_freqs() const { return doc_freq_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && doc_freq_ == other.doc_freq_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint32_t> doc_freq_;
  std::unordered_map<std::string, WordId> index_of_;
};

/// Sparse bag-of-words: (id, count) pairs sorted by id, all counts > 0.
struct BowDocument {
  std::vector<std::pair<WordId, std::uint32_t>> counts;
  std::uint64_t total = 0;

  bool operator==(const BowDocument&) const = default;
};

enum class Split { train, valid, test };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct BowCorpus {
  Split split = Split::train;
  std::size_t vocab_size = 0;
  std::vector<BowDocument> docs;

  std::size_t size() const { return docs.size(); }
  bool operator==(const BowCorpus&) const = default;
};

struct CorpusSplits {
  BowCorpus train, valid, test;
};

/// Lowercases, splits on whitespace and strips punctuation at token
/// boundaries. Non-ASCII bytes are kept as-is.
std::vector<std::string> tokenize_line(std::string_view text);

/// Tokenizes and removes stop words.
std::vector<std::string> tokenize_line(std::string_view text,
                                       const std::unordered_set<std::string>& stop_words);

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_docs,
                            std::uint32_t min_df);

/// Returns nullopt ("dropped") when no token is in the vocabulary.
std::optional<BowDocument> vectorize(const std::vector<std::string>& tokens,
                                     const Vocabulary& vocab);

std::vector<double> normalize(const BowDocument& bow, std::size_t vocab_size);

/// Seeded shuffle then partition. Valid and test sizes are round(N*f),
/// train takes the remainder.
CorpusSplits split_corpus(const std::vector<BowDocument>& docs,
                          std::array<double, 3> fractions, std::uint64_t seed,
                          std::size_t vocab_size);

std::unordered_set<std::string> load_stop_words(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Vocabulary TSV: token \t id \t doc_freq, one row per id in order.
void write_vocabulary_tsv(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary read_vocabulary_tsv(const std::filesystem::path& path);

inline constexpr std::uint32_t kCorpusCacheVersion = 1;

// Corpus cache: "DETMCORP", u32 version, u32 split, u32 V, u64 N, then per
// document u32 length followed by length (u32 id, u32 count) pairs. All
// little-endian.
void write_corpus_cache(const BowCorpus& corpus, const std::filesystem::path& path);
BowCorpus read_corpus_cache(const std::filesystem::path& path);

struct IngestOptions {
  std::uint32_t min_df = 1;
  std::optional<std::filesystem::path> stop_words;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
};

struct IngestReport {
  std::size_t vocab_size = 0;
  std::map<std::string, std::size_t> documents_read;
  std::map<std::string, std::size_t> documents_dropped;
  std::map<std::string, std::size_t> documents_kept;
  bool presplit = false;
};

struct IngestResult {
  Vocabulary vocab;
  CorpusSplits splits;
  IngestReport report;
};

/// Single raw file: build vocabulary over all documents, vectorize, drop
/// empty documents, then split_corpus.
IngestResult ingest_single(const std::vector<std::string>& lines, const IngestOptions& opts);

/// Pre-split raw files: vocabulary over the union, no reshuffling.
IngestResult ingest_presplit(const std::vector<std::string>& train_lines,
                             const std::vector<std::string>& valid_lines,
                             const std::vector<std::string>& test_lines,
                             const IngestOptions& opts);

}  // namespace diffetm::corpus
