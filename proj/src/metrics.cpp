#include "diffetm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "diffetm/errors.hpp"

namespace diffetm::metrics {

TopicTopWords top_words(const grad::Tensor& beta, std::size_t n) {
  TopicTopWords out;
  const std::size_t V = beta.cols();
  const std::size_t keep = std::min(n, V);
  std::vector<WordId> ids(V);
  for (std::size_t k = 0; k < beta.rows(); ++k) {
    std::iota(ids.begin(), ids.end(), WordId{0});
    auto row = beta.row(k);
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                      [&](WordId a, WordId b) {
                        if (row[a] != row[b]) return row[a] > row[b];
                        return a < b;
                      });
    out.topics.emplace_back(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

CooccurrenceStats::CooccurrenceStats(const corpus::BowCorpus& reference)
    : num_docs_(reference.size()), postings_(reference.vocab_size) {
  for (std::size_t d = 0; d < reference.size(); ++d) {
    for (const auto& [id, count] : reference.docs[d].counts) {
      if (id >= postings_.size()) {
        throw VocabularyMismatch("co-occurrence: word id exceeds reference vocabulary");
      }
      postings_[id].push_back(static_cast<std::uint32_t>(d));
    }
  }
}

std::size_t CooccurrenceStats::doc_freq(WordId w) const {
  if (w >= postings_.size()) {
    throw VocabularyMismatch("word id " + std::to_string(w) + " exceeds reference vocabulary " +
                             std::to_string(postings_.size()));
  }
  return postings_[w].size();
}

std::size_t CooccurrenceStats::joint_freq(WordId a, WordId b) const {
  doc_freq(a);
  doc_freq(b);
  const auto& pa = postings_[a];
  const auto& pb = postings_[b];
  std::size_t i = 0, j = 0, n = 0;
  while (i < pa.size() && j < pb.size()) {
    if (pa[i] < pb[j]) {
      ++i;
    } else if (pb[j] < pa[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

double npmi(const CooccurrenceStats& stats, WordId a, WordId b) {
  const std::size_t joint = stats.joint_freq(a, b);
  if (joint == 0) return -1.0;
  const double n = static_cast<double>(stats.num_docs());
  const double p_ab = static_cast<double>(joint) / n;
  if (p_ab >= 1.0) return 0.0;
  const double p_a = static_cast<double>(stats.doc_freq(a)) / n;
  const double p_b = static_cast<double>(stats.doc_freq(b)) / n;
  return std::log(p_ab / (p_a * p_b)) / -std::log(p_ab);
}

double npmi_coherence(const TopicTopWords& top, const CooccurrenceStats& stats) {
  if (top.topics.empty()) return 0.0;
  double total = 0.0;
  for (const auto& words : top.topics) {
    if (words.size() < 2) throw DomainError("npmi_coherence: each topic needs >= 2 words");
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = i + 1; j < words.size(); ++j) {
        s += npmi(stats, words[i], words[j]);
        ++pairs;
      }
    }
    total += s / static_cast<double>(pairs);
  }
  return total / static_cast<double>(top.topics.size());
}

double topic_diversity(const TopicTopWords& top) {
  std::unordered_set<WordId> distinct;
  std::size_t slots = 0;
  for (const auto& words : top.topics) {
    distinct.insert(words.begin(), words.end());
    slots += words.size();
  }
  if (slots == 0) return 0.0;
  return static_cast<double>(distinct.size()) / static_cast<double>(slots);
}

double topic_quality(double coherence, double diversity) { return coherence * diversity; }

double perplexity(const model::DiffEtm& model, const corpus::BowCorpus& split,
                  std::size_t batch_size) {
  if (split.docs.empty()) throw EmptySplit("perplexity: split is empty");
  return model::evaluate_corpus(model, split, batch_size, model::EvalPath::deterministic)
      .perplexity();
}

nlohmann::json MetricsReport::to_json() const {
  return {{"coherence", coherence},  {"diversity", diversity},
          {"quality", quality()},    {"perplexity", perplexity},
          {"config", config},        {"corpus_id", corpus_id},
          {"checkpoint_id", checkpoint_id}};
}

MetricsReport evaluate(const model::DiffEtm& model, const corpus::BowCorpus& reference,
                       const corpus::BowCorpus& heldout, std::size_t batch_size) {
  if (reference.vocab_size != model.vocab_size() || heldout.vocab_size != model.vocab_size()) {
    throw VocabularyMismatch("model vocabulary " + std::to_string(model.vocab_size()) +
                             " does not match corpus vocabulary " +
                             std::to_string(heldout.vocab_size));
  }
  const grad::Tensor beta = model::topic_word_matrix(model);
  const CooccurrenceStats stats(reference);
  MetricsReport r;
  r.coherence = npmi_coherence(top_words(beta, kCoherenceTopN), stats);
  r.diversity = topic_diversity(top_words(beta, kDiversityTopN));
  r.perplexity = perplexity(model, heldout, batch_size);
  return r;
}

void write_top_words_tsv(const grad::Tensor& beta, const TopicTopWords& top,
                         const corpus::Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.precision(9);
  out << "topic_id\trank\ttoken\tprobability\n";
  for (std::size_t k = 0; k < top.topics.size(); ++k) {
    for (std::size_t r = 0; r < top.topics[k].size(); ++r) {
      const WordId w = top.topics[k][r];
      out << k << '\t' << r + 1 << '\t' << vocab.token(w) << '\t' << beta(k, w) << '\n';
    }
  }
}

}  // namespace diffetm::metrics
