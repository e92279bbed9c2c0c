#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "diffetm/errors.hpp"
#include "diffetm/metrics.hpp"
#include "support/synthetic_corpus.hpp"

using namespace diffetm;
using namespace diffetm::metrics;
using corpus::BowCorpus;
using corpus::BowDocument;
using grad::Tensor;
using diffetm::testing::random_bow_corpus;

namespace {

// Documents given as word-id sets; counts are 1.
BowCorpus corpus_of(std::size_t vocab, const std::vector<std::vector<corpus::WordId>>& docs) {
  BowCorpus c;
  c.vocab_size = vocab;
  for (auto words : docs) {
    std::sort(words.begin(), words.end());
    BowDocument d;
    for (auto w : words) d.counts.emplace_back(w, 1);
    d.total = words.size();
    c.docs.push_back(d);
  }
  return c;
}

model::ModelConfig small_config(std::uint64_t seed = 1) {
  model::ModelConfig c;
  c.num_topics = 4;
  c.embedding_size = 6;
  c.hidden_size = 12;
  c.seed = seed;
  return c;
}

// Naive per-token log-likelihood: X'_dj = Σ_k θ_dk β_kj, summed by loops.
double oracle_perplexity(const model::DiffEtm& m, const BowCorpus& split) {
  const model::Batch b = model::make_batch(split);
  model::Tape t(false);
  model::ParamBinder bind(t, m.params());
  model::Rng rng(0);
  const Tensor theta =
      model::latents_of(model::forward_batch(bind, m, b, rng, model::EvalPath::deterministic)).theta;
  const Tensor beta = model::topic_word_matrix(m);
  double ll = 0.0, tokens = 0.0;
  for (std::size_t d = 0; d < split.size(); ++d) {
    for (const auto& [w, c] : split.docs[d].counts) {
      double xp = 0.0;
      for (std::size_t k = 0; k < theta.cols(); ++k) xp += theta(d, k) * beta(k, w);
      ll += c * std::log(xp);
      tokens += c;
    }
  }
  return std::exp(-ll / tokens);
}

}  // namespace

TEST_CASE("top_words") {
  CHECK(top_words(Tensor{{0.1, 0.7, 0.2}}, 2).topics == std::vector<std::vector<corpus::WordId>>{{1, 2}});
  CHECK(top_words(Tensor(1, 4, 0.25), 3).topics == std::vector<std::vector<corpus::WordId>>{{0, 1, 2}});
  const auto all = top_words(Tensor{{0.1, 0.3, 0.2, 0.4}, {0.25, 0.25, 0.25, 0.25}}, 9);
  CHECK(all.topics[0] == std::vector<corpus::WordId>{3, 1, 2, 0});
  CHECK(all.topics[1] == std::vector<corpus::WordId>{0, 1, 2, 3});

  SUBCASE("lists are unique and sorted by probability (property)") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> dim(1, 40);
    std::uniform_int_distribution<int> level(0, 4);  // coarse values force ties
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t K = dim(rng), V = dim(rng), n = dim(rng);
      Tensor beta(K, V);
      for (double& v : beta.data()) v = level(rng);
      const auto top = top_words(beta, n);
      for (std::size_t k = 0; k < K; ++k) {
        const auto& ids = top.topics[k];
        CHECK(ids.size() == std::min(n, V));
        CHECK(std::set<corpus::WordId>(ids.begin(), ids.end()).size() == ids.size());
        for (std::size_t i = 1; i < ids.size(); ++i) {
          const double a = beta(k, ids[i - 1]), b = beta(k, ids[i]);
          CHECK((a > b || (a == b && ids[i - 1] < ids[i])));
        }
      }
    }
  }
}

TEST_CASE("npmi") {
  SUBCASE("four-document toy corpus against a hand count") {
    // docs {ab, ab, a, b}
    const BowCorpus c = corpus_of(2, {{0, 1}, {0, 1}, {0}, {1}});
    const CooccurrenceStats stats(c);
    std::size_t n_a = 0, n_b = 0, n_ab = 0;
    for (const auto& d : c.docs) {
      bool a = false, b = false;
      for (const auto& [w, cnt] : d.counts) (w == 0 ? a : b) = true;
      n_a += a;
      n_b += b;
      n_ab += a && b;
    }
    const double N = c.size(), pa = n_a / N, pb = n_b / N, pab = n_ab / N;
    CHECK(pa == 0.75);
    CHECK(pab == 0.5);
    const double oracle = std::log(pab / (pa * pb)) / -std::log(pab);
    CHECK(std::abs(npmi(stats, 0, 1) - oracle) <= 1e-12);
    CHECK(std::abs(npmi(stats, 0, 1) - (-0.1699)) <= 1e-4);
  }
  SUBCASE("perfect association") {
    const CooccurrenceStats stats(corpus_of(3, {{0, 1}, {0, 1}, {2}, {2}}));
    CHECK(npmi(stats, 0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("independence") {
    const CooccurrenceStats stats(corpus_of(2, {{0, 1}, {0}, {1}, {}}));
    CHECK(std::abs(npmi(stats, 0, 1)) <= 1e-15);
  }
  SUBCASE("degenerate cases") {
    const CooccurrenceStats stats(corpus_of(3, {{0, 1}, {0, 1}, {2}}));
    CHECK(npmi(stats, 0, 2) == -1.0);
    const CooccurrenceStats always(corpus_of(2, {{0, 1}, {0, 1}}));
    CHECK(npmi(always, 0, 1) == 0.0);
  }
  SUBCASE("out-of-range id") {
    const CooccurrenceStats stats(corpus_of(2, {{0, 1}}));
    CHECK_THROWS_AS(npmi(stats, 0, 2), VocabularyMismatch);
    TopicTopWords top{{{0, 5}}};
    CHECK_THROWS_AS(npmi_coherence(top, stats), VocabularyMismatch);
  }
  SUBCASE("coherence averages pairs then topics") {
    const CooccurrenceStats stats(corpus_of(3, {{0, 1}, {0, 1}, {2}, {2}}));
    TopicTopWords top{{{0, 1}, {0, 1, 2}}};
    // topic 1 pairs: (0,1)=1, (0,2)=-1, (1,2)=-1
    CHECK(npmi_coherence(top, stats) == doctest::Approx((1.0 + (-1.0 / 3.0)) / 2.0).epsilon(1e-14));
  }
  SUBCASE("bounds and symmetry (property)") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
      const BowCorpus c = random_bow_corpus(15, 12, rng(), 6);
      const CooccurrenceStats stats(c);
      for (corpus::WordId a = 0; a < 12; ++a)
        for (corpus::WordId b = 0; b < 12; ++b) {
          CHECK(stats.joint_freq(a, b) == stats.joint_freq(b, a));
          CHECK(stats.joint_freq(a, b) <= std::min(stats.doc_freq(a), stats.doc_freq(b)));
          if (a == b) continue;
          const double v = npmi(stats, a, b);
          CHECK(v >= -1.0 - 1e-12);
          CHECK(v <= 1.0 + 1e-12);
        }
    }
  }
}

TEST_CASE("topic diversity") {
  TopicTopWords disjoint, same, single;
  for (corpus::WordId i = 0; i < 25; ++i) {
    disjoint.topics.resize(2);
    disjoint.topics[0].push_back(i);
    disjoint.topics[1].push_back(100 + i);
  }
  same.topics = {disjoint.topics[0], disjoint.topics[0]};
  single.topics = {disjoint.topics[0]};
  CHECK(topic_diversity(disjoint) == 1.0);
  CHECK(topic_diversity(same) == 0.5);
  CHECK(topic_diversity(single) == 1.0);

  SUBCASE("range and the disjointness characterization (property)") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> ktopics(1, 8);
    for (int trial = 0; trial < 100; ++trial) {
      Tensor beta(ktopics(rng), 60);
      for (double& v : beta.data()) v = std::uniform_real_distribution<double>(0, 1)(rng);
      const auto top = top_words(beta, kDiversityTopN);
      const double d = topic_diversity(top);
      CHECK(d > 0.0);
      CHECK(d <= 1.0);
      bool disjoint_lists = true;
      std::set<corpus::WordId> seen;
      for (const auto& t : top.topics)
        for (auto w : t) disjoint_lists &= seen.insert(w).second;
      CHECK((d == 1.0) == disjoint_lists);
    }
  }
}

TEST_CASE("topic quality") {
  CHECK(std::abs(topic_quality(0.2003, 0.7504) - 0.1503) <= 5e-5);
  CHECK(std::abs(topic_quality(0.1865, 0.4864) - 0.0907) <= 5e-5);
  CHECK(topic_quality(0.37, 0.0) == 0.0);
  MetricsReport r;
  r.coherence = 0.123456789;
  r.diversity = 0.87654321;
  CHECK(std::abs(r.to_json().at("quality").get<double>() - r.coherence * r.diversity) <= 1e-12);
}

TEST_CASE("perplexity") {
  const BowCorpus split = random_bow_corpus(3, 20, 5, 12);
  SUBCASE("zero-logit model") {
    model::DiffEtm m(small_config(), 20);
    m.params().value("topic_embeddings").fill(0.0);
    CHECK(std::abs(perplexity(m, split) / 20.0 - 1.0) <= 1e-12);
  }
  SUBCASE("perfect fit on one-word documents") {
    model::DiffEtm m(small_config(), 20);
    auto& alpha = m.params().value("topic_embeddings");
    auto& rho = m.params().value("word_embeddings");
    alpha.fill(0.0);
    rho.fill(0.0);
    for (std::size_t k = 0; k < alpha.rows(); ++k) alpha(k, 0) = 40.0;
    rho(7, 0) = 40.0;  // logit 1600 for word 7, 0 elsewhere
    const BowCorpus one_word = corpus_of(20, {{7}, {7}, {7}});
    CHECK(perplexity(m, one_word) == 1.0);
  }
  SUBCASE("three-document split matches the double-loop oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      model::DiffEtm m(small_config(seed), 20);
      CHECK(std::abs(perplexity(m, split) - oracle_perplexity(m, split)) <= 1e-9);
    }
  }
  SUBCASE("order, duplication and lower bound (property)") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      model::DiffEtm m(small_config(trial), 20);
      BowCorpus c = random_bow_corpus(9, 20, rng(), 30);
      const double base = perplexity(m, c, 4);
      CHECK(base >= 1.0);
      BowCorpus shuffled = c;
      std::shuffle(shuffled.docs.begin(), shuffled.docs.end(), rng);
      CHECK(std::abs(perplexity(m, shuffled, 4) - base) <= 1e-9);
      BowCorpus twice = c;
      twice.docs.insert(twice.docs.end(), c.docs.begin(), c.docs.end());
      CHECK(std::abs(perplexity(m, twice, 4) - base) <= 1e-9);
    }
  }
  SUBCASE("empty split") {
    model::DiffEtm m(small_config(), 20);
    BowCorpus empty;
    empty.vocab_size = 20;
    CHECK_THROWS_AS(perplexity(m, empty), EmptySplit);
  }
}

TEST_CASE("evaluate and top-words file") {
  const BowCorpus ref = random_bow_corpus(40, 30, 1, 10);
  const BowCorpus held = random_bow_corpus(10, 30, 2, 10);
  model::DiffEtm m(small_config(), 30);
  const MetricsReport r = evaluate(m, ref, held, 16);
  CHECK(r.quality() == r.coherence * r.diversity);
  CHECK(r.coherence >= -1.0);
  CHECK(r.coherence <= 1.0);
  CHECK(r.diversity <= 1.0);
  CHECK(r.perplexity == perplexity(m, held, 16));
  const MetricsReport again = evaluate(m, ref, held, 16);
  CHECK(again.to_json() == r.to_json());

  std::vector<std::string> tokens;
  std::vector<std::uint32_t> df;
  for (int i = 0; i < 30; ++i) {
    tokens.push_back("t" + std::to_string(i));
    df.push_back(1);
  }
  const corpus::Vocabulary vocab(tokens, df);
  const Tensor beta = model::topic_word_matrix(m);
  const auto dir = std::filesystem::temp_directory_path() / "diffetm_test_metrics";
  std::filesystem::create_directories(dir);
  write_top_words_tsv(beta, top_words(beta, 3), vocab, dir / "top.tsv");
  std::ifstream in(dir / "top.tsv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "topic_id\trank\ttoken\tprobability");
  int rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 4 * 3);
}
