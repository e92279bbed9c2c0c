#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffetm/corpus.hpp"
#include "diffetm/model.hpp"

namespace diffetm::metrics {

using corpus::WordId;

inline constexpr std::size_t kCoherenceTopN = 10;
inline constexpr std::size_t kDiversityTopN = 25;

/// Per-topic word ids ordered by descending probability (ties: ascending id).
struct TopicTopWords {
  std::vector<std::vector<WordId>> topics;
  std::size_t num_topics() const { return topics.size(); }
};

TopicTopWords top_words(const grad::Tensor& beta, std::size_t n);

/// Binary document co-occurrence over a reference corpus. Stores a sorted
/// posting list per word; joint counts are list intersections.
class CooccurrenceStats {
 public:
  explicit CooccurrenceStats(const corpus::BowCorpus& reference);

  std::size_t num_docs() const { return num_docs_; }
  std::size_t vocab_size() const { return postings_.size(); }
  std::size_t doc_freq(WordId w) const;
  std::size_t joint_freq(WordId a, WordId b) const;

 private:
  std::size_t num_docs_ = 0;
  std::vector<std::vector<std::uint32_t>> postings_;
};

/// NPMI of one word pair from document-occurrence probabilities. Zero joint
/// count gives -1 and joint probability 1 gives 0.
double npmi(const CooccurrenceStats& stats, WordId a, WordId b);

/// Mean over topics of the mean NPMI over unordered pairs of each list.
double npmi_coherence(const TopicTopWords& top, const CooccurrenceStats& stats);

/// Distinct ids across all lists divided by the number of slots.
double topic_diversity(const TopicTopWords& top);

double topic_quality(double coherence, double diversity);

/// exp(-Σ X log X' / Σ X) on the deterministic path.
double perplexity(const model::DiffEtm& model, const corpus::BowCorpus& split,
                  std::size_t batch_size = 1000);

struct MetricsReport {
  double coherence = 0.0;
  double diversity = 0.0;
  double perplexity = 0.0;
  nlohmann::json config;
  std::string corpus_id;
  std::string checkpoint_id;

  /// Always the product of the other two fields.
  double quality() const { return topic_quality(coherence, diversity); }
  nlohmann::json to_json() const;
};

/// Coherence from `reference` (the training split), diversity from top-25
/// lists, perplexity on `heldout`.
MetricsReport evaluate(const model::DiffEtm& model, const corpus::BowCorpus& reference,
                       const corpus::BowCorpus& heldout, std::size_t batch_size = 1000);

/// TSV: topic_id, rank, token, probability.
void write_top_words_tsv(const grad::Tensor& beta, const TopicTopWords& top,
                         const corpus::Vocabulary& vocab, const std::filesystem::path& path);

}  // namespace diffetm::metrics
