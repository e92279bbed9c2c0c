#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "diffetm/corpus.hpp"
#include "diffetm/errors.hpp"

using namespace diffetm;
using namespace diffetm::corpus;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("diffetm_test_corpus_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<BowDocument> numbered_docs(std::size_t n) {
  // Each doc carries its index as a unique count so identity survives shuffling.
  std::vector<BowDocument> docs;
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back({{{0, static_cast<std::uint32_t>(i + 1)}}, i + 1});
  }
  return docs;
}

std::vector<std::vector<std::string>> random_token_docs(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ndocs(1, 30), len(0, 20), word(0, 25);
  std::vector<std::vector<std::string>> docs(ndocs(rng));
  for (auto& d : docs) {
    const int l = len(rng);
    for (int i = 0; i < l; ++i) d.push_back(std::string(1, static_cast<char>('a' + word(rng))));
  }
  return docs;
}

}  // namespace

TEST_CASE("tokenize_line") {
  CHECK(tokenize_line("The cat sat.") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize_line("").empty());
  CHECK(tokenize_line("A a A") == std::vector<std::string>{"a", "a", "a"});
  CHECK(tokenize_line("  \"Hello,\"  world!!  ") == std::vector<std::string>{"hello", "world"});
  CHECK(tokenize_line("... -- !!").empty());
  CHECK(tokenize_line("don't e-mail") == std::vector<std::string>{"don't", "e-mail"});
  CHECK(tokenize_line("The cat", {"the"}) == std::vector<std::string>{"cat"});
}

TEST_CASE("build_vocabulary") {
  SUBCASE("min_df prunes rare tokens") {
    Vocabulary v = build_vocabulary({{"a", "b"}, {"a", "c"}}, 2);
    REQUIRE(v.size() == 1);
    CHECK(v.token(0) == "a");
    CHECK(v.doc_freq(0) == 2);
  }
  SUBCASE("lexicographic tie-break") {
    Vocabulary v = build_vocabulary({{"b"}, {"a"}}, 1);
    REQUIRE(v.size() == 2);
    CHECK(v.token(0) == "a");
    CHECK(v.token(1) == "b");
    CHECK(*v.find("b") == 1);
    CHECK_FALSE(v.find("z").has_value());
  }
  SUBCASE("threshold above corpus size") {
    CHECK_THROWS_AS(build_vocabulary({{"a"}, {"b"}}, 3), AllTokensPruned);
  }
  SUBCASE("ids follow descending document frequency") {
    Vocabulary v = build_vocabulary({{"x", "y", "y"}, {"y"}, {"z", "y", "x"}}, 1);
    CHECK(v.tokens() == std::vector<std::string>{"y", "x", "z"});
    CHECK(v.doc_freqs() == std::vector<std::uint32_t>{3, 2, 1});
  }
}

TEST_CASE("vectorize") {
  Vocabulary ab({"a", "b"}, {1, 1});
  auto bow = vectorize({"a", "a", "b"}, ab);
  REQUIRE(bow);
  CHECK(bow->counts == std::vector<std::pair<WordId, std::uint32_t>>{{0, 2}, {1, 1}});
  CHECK(bow->total == 3);
  Vocabulary a({"a"}, {1});
  CHECK_FALSE(vectorize({"z"}, a).has_value());
  CHECK_FALSE(vectorize({}, a).has_value());
}

TEST_CASE("normalize") {
  CHECK(normalize({{{0, 2}, {1, 1}}, 3}, 2) == std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
  CHECK(normalize({{{3, 5}}, 5}, 4) == std::vector<double>{0, 0, 0, 1});
  CHECK(normalize({{{0, 1}, {1, 1}, {2, 2}}, 4}, 3) == std::vector<double>{0.25, 0.25, 0.5});
}

TEST_CASE("split_corpus sizes") {
  auto s = split_corpus(numbered_docs(10), {0.8, 0.1, 0.1}, 7, 1);
  CHECK(s.train.size() == 8);
  CHECK(s.valid.size() == 1);
  CHECK(s.test.size() == 1);
  s = split_corpus(numbered_docs(3), {0.34, 0.33, 0.33}, 0, 1);
  CHECK(s.train.size() == 1);
  CHECK(s.valid.size() == 1);
  CHECK(s.test.size() == 1);
  CHECK_THROWS_AS(split_corpus(numbered_docs(2), {0.8, 0.1, 0.1}, 0, 1), EmptySplit);
  CHECK(s.train.split == Split::train);
  CHECK(s.test.split == Split::test);
}

TEST_CASE("split_corpus properties") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> nd(10, 400);
  std::uniform_real_distribution<double> f(0.05, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = nd(rng);
    const double fv = f(rng), ft = f(rng);
    const std::array<double, 3> fr{1.0 - fv - ft, fv, ft};
    const std::uint64_t seed = rng();
    auto docs = numbered_docs(n);
    CorpusSplits a, b;
    try {
      a = split_corpus(docs, fr, seed, 1);
    } catch (const EmptySplit&) {
      continue;
    }
    b = split_corpus(docs, fr, seed, 1);
    CHECK(a.train == b.train);
    CHECK(a.valid == b.valid);
    CHECK(a.test == b.test);

    const BowCorpus* parts[] = {&a.train, &a.valid, &a.test};
    std::multiset<std::uint64_t> ids;
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(static_cast<double>(parts[k]->size()) - n * fr[k]) <= 1.0 + 1e-9);
      for (const auto& d : parts[k]->docs) ids.insert(d.total);
    }
    std::multiset<std::uint64_t> expected;
    for (const auto& d : docs) expected.insert(d.total);
    CHECK(ids == expected);
  }
}

TEST_CASE("vocabulary pruning is monotone and vectorize preserves counts (property)") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const auto docs = random_token_docs(rng);
    std::optional<Vocabulary> prev;
    for (std::uint32_t m = 1; m <= 4; ++m) {
      Vocabulary v;
      try {
        v = build_vocabulary(docs, m);
      } catch (const AllTokensPruned&) {
        break;
      }
      if (prev) {
        for (const auto& t : v.tokens()) CHECK(prev->find(t).has_value());
      }
      for (const auto& d : docs) {
        const auto in_vocab = std::count_if(d.begin(), d.end(), [&](const std::string& t) { return v.find(t).has_value(); });
        auto bow = vectorize(d, v);
        if (in_vocab == 0) {
          CHECK_FALSE(bow.has_value());
          continue;
        }
        REQUIRE(bow);
        std::uint64_t sum = 0;
        for (auto [id, c] : bow->counts) sum += c;
        CHECK(sum == static_cast<std::uint64_t>(in_vocab));
        CHECK(bow->total == sum);
        const auto x = normalize(*bow, v.size());
        double s = 0.0;
        for (double e : x) {
          CHECK(e >= 0.0);
          s += e;
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
      }
      prev = v;
    }
  }
}

TEST_CASE("vocabulary TSV round trip") {
  const fs::path dir = temp_dir("vocab");
  Vocabulary v({"alpha", "beta", "gamma"}, {5, 3, 3});
  write_vocabulary_tsv(v, dir / "vocab.tsv");
  CHECK(read_vocabulary_tsv(dir / "vocab.tsv") == v);
  std::ifstream in(dir / "vocab.tsv");
  std::string first;
  std::getline(in, first);
  CHECK(first == "alpha\t0\t5");
}

TEST_CASE("corpus cache") {
  const fs::path dir = temp_dir("cache");
  BowCorpus c{Split::valid, 7, {{{{0, 2}, {6, 1}}, 3}, {{{3, 4}}, 4}}};
  write_corpus_cache(c, dir / "valid.bin");
  CHECK(read_corpus_cache(dir / "valid.bin") == c);

  SUBCASE("magic bytes") {
    std::ifstream in(dir / "valid.bin", std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::string(magic, 8) == "DETMCORP");
  }
  SUBCASE("truncation is detected") {
    const auto size = fs::file_size(dir / "valid.bin");
    fs::resize_file(dir / "valid.bin", size - 3);
    CHECK_THROWS_AS(read_corpus_cache(dir / "valid.bin"), CorruptCache);
  }
  SUBCASE("bad magic is detected") {
    std::fstream f(dir / "valid.bin", std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(read_corpus_cache(dir / "valid.bin"), CorruptCache);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_corpus_cache(dir / "nope.bin"), IoError);
  }
}

TEST_CASE("ingestion") {
  std::vector<std::string> lines;
  for (int i = 0; i < 20; ++i) lines.push_back("apple banana doc" + std::to_string(i));
  lines.push_back("!!!");
  IngestOptions opts;
  opts.min_df = 2;
  opts.split_seed = 3;
  auto r = ingest_single(lines, opts);
  CHECK(r.vocab.size() == 2);
  CHECK(r.report.documents_dropped.at("all") == 1);
  CHECK(r.splits.train.size() + r.splits.valid.size() + r.splits.test.size() == 20);
  CHECK(r.splits.train.size() == 16);
  auto again = ingest_single(lines, opts);
  CHECK(again.splits.train == r.splits.train);
  CHECK(again.splits.test == r.splits.test);

  SUBCASE("pre-split files keep their assignment") {
    auto p = ingest_presplit({"a b", "a c"}, {"b c"}, {"a"}, {});
    CHECK(p.report.presplit);
    CHECK(p.splits.train.size() == 2);
    CHECK(p.splits.valid.size() == 1);
    CHECK(p.splits.test.size() == 1);
    CHECK(p.vocab.token(0) == "a");
    CHECK_THROWS_AS(ingest_presplit({"a b"}, {"zzz"}, {"a"}, {.min_df = 2}), EmptySplit);
  }
}
