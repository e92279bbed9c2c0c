#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "diffetm/metrics.hpp"
#include "diffetm/run_config.hpp"

namespace diffetm::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kCheckpointError = 4,
  kDiverged = 5,
};

/// Maps a library error to its exit code.
int exit_code_for(const std::exception& e);

struct IngestOutputs {
  std::filesystem::path corpus_dir;
  corpus::IngestReport report;
};

struct TrainOutputs {
  std::filesystem::path run_dir;
  trainer::TrainReport report;
};

struct SweepRow {
  std::uint32_t T = 0;
  bool ok = false;
  std::string error;
  metrics::MetricsReport metrics;
  std::filesystem::path run_dir;
};

// Each command validates its inputs before writing anything, writes its
// artifacts plus a manifest.json (effective config, seed, artifact hashes),
// and throws a diffetm::Error subclass on failure.

/// Writes train.bin, valid.bin, test.bin, vocab.tsv and ingest_report.json
/// into corpus_dir.
IngestOutputs cmd_ingest(const RunConfig& config);

/// Trains into output_dir/<run_id>/. A Diverged error still leaves the
/// partial train_report.json behind.
TrainOutputs cmd_train(const RunConfig& config);

/// Writes metrics.json and top_words.tsv into output_dir.
metrics::MetricsReport cmd_eval(const RunConfig& config);

/// Writes topics.tsv (top_n words per topic) into output_dir and prints it.
void cmd_topics(const RunConfig& config, std::ostream& out);

/// One training run per T; writes output_dir/sweep_t.csv with columns
/// T,coherence,diversity,quality,perplexity. Failed runs get nan values and
/// are listed in the sweep manifest.
std::vector<SweepRow> cmd_sweep_t(const RunConfig& config);

/// Closed-form KL on the kl_split for every improving checkpoint of
/// run_dir; writes run_dir/kl_test.csv (epoch,kl,perplexity) where
/// perplexity is the validation perplexity that selected the checkpoint.
trainer::KlTrajectory cmd_kl_test(const RunConfig& config);

/// Loads the three corpus caches from corpus_dir and checks that they
/// share one vocabulary.
corpus::CorpusSplits load_corpus_dir(const std::filesystem::path& dir);

}  // namespace diffetm::cli
