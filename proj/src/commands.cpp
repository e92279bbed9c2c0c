#include "diffetm/commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "diffetm/checkpoint.hpp"
#include "diffetm/errors.hpp"
#include "diffetm/hashing.hpp"

namespace diffetm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// manifest.json: command, effective config, seed and SHA-256 of every
/// artifact (paths relative to `dir`).
void write_manifest(const fs::path& dir, const std::string& file_name, const std::string& command,
                    const RunConfig& config, const std::vector<std::string>& artifacts,
                    const json& extra = json::object()) {
  json j;
  j["command"] = command;
  j["config"] = config.to_json();
  j["seed"] = config.model.seed;
  json hashes = json::object();
  for (const auto& rel : artifacts) hashes[rel] = sha256_file(dir / rel);
  j["artifacts"] = hashes;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json(dir / file_name, j);
}

void require_file(const fs::path& p, const std::string& key) {
  if (p.empty()) throw InvalidConfig("config key '" + key + "' is required for this command");
  if (!fs::is_regular_file(p)) {
    throw InvalidConfig("config key '" + key + "': file '" + p.string() + "' does not exist");
  }
}

json model_config_json(const model::ModelConfig& c) {
  return {{"num_topics", c.num_topics},
          {"embedding_size", c.embedding_size},
          {"hidden_size", c.hidden_size},
          {"diffusion_steps", c.diffusion_steps},
          {"beta_0", c.beta_0},
          {"beta_T", c.beta_T},
          {"kl_weight", c.kl_weight},
          {"mode", std::string(model::mode_name(c.mode))},
          {"seed", c.seed}};
}

const corpus::BowCorpus& pick_split(const corpus::CorpusSplits& s, const std::string& name) {
  switch (corpus::parse_split(name)) {
    case corpus::Split::train: return s.train;
    case corpus::Split::valid: return s.valid;
    case corpus::Split::test: return s.test;
  }
  return s.test;
}

struct TrainedRun {
  fs::path run_dir;
  trainer::TrainReport report;
  model::DiffEtm model;
};

TrainedRun run_training(const RunConfig& config, const corpus::CorpusSplits& splits) {
  config.model.validate();
  config.train.validate();
  const fs::path run_dir = config.output_dir / config.run_id();
  fs::create_directories(run_dir);
  write_json(run_dir / "config.json", config.to_json());

  model::DiffEtm m(config.model, splits.train.vocab_size);
  trainer::TrainConfig tc = config.train;
  tc.output_dir = run_dir;

  auto finish = [&](const trainer::TrainReport& report, const std::string& status) {
    write_json(run_dir / "train_report.json", report.to_json(!config.train.deterministic));
    std::vector<std::string> artifacts{"config.json", "train_report.json"};
    if (status == "ok") {
      trainer::write_kl_trajectory(trainer::kl_trajectory(report), run_dir / "kl_trajectory.csv");
      artifacts.push_back("kl_trajectory.csv");
      artifacts.push_back("best.ckpt");
      for (const auto& c : report.checkpoints) artifacts.push_back(c);
    }
    write_json(run_dir / "timing.json", {{"wall_clock_seconds", report.wall_clock_seconds}});
    write_manifest(run_dir, "manifest.json", "train", config, artifacts, {{"status", status}});
  };

  try {
    auto report = trainer::train(m, tc, splits.train, splits.valid);
    finish(report, "ok");
    return {run_dir, std::move(report), std::move(m)};
  } catch (const trainer::Diverged& e) {
    finish(e.partial_report(), "diverged");
    throw;
  }
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvalidConfig*>(&e) || dynamic_cast<const InvalidSchedule*>(&e)) {
    return kConfigError;
  }
  if (dynamic_cast<const AllTokensPruned*>(&e) || dynamic_cast<const EmptySplit*>(&e) ||
      dynamic_cast<const CorruptCache*>(&e) || dynamic_cast<const VocabularyMismatch*>(&e)) {
    return kDataError;
  }
  if (dynamic_cast<const CorruptCheckpoint*>(&e)) return kCheckpointError;
  if (dynamic_cast<const trainer::Diverged*>(&e)) return kDiverged;
  return kFailure;
}

corpus::CorpusSplits load_corpus_dir(const fs::path& dir) {
  for (const char* name : {"train.bin", "valid.bin", "test.bin"}) {
    if (!fs::is_regular_file(dir / name)) {
      throw InvalidConfig("config key 'corpus_dir': '" + (dir / name).string() +
                          "' does not exist (run ingest first)");
    }
  }
  corpus::CorpusSplits s{corpus::read_corpus_cache(dir / "train.bin"),
                         corpus::read_corpus_cache(dir / "valid.bin"),
                         corpus::read_corpus_cache(dir / "test.bin")};
  if (s.valid.vocab_size != s.train.vocab_size || s.test.vocab_size != s.train.vocab_size) {
    throw VocabularyMismatch("corpus splits in '" + dir.string() + "' bind different vocabularies");
  }
  if (fs::is_regular_file(dir / "vocab.tsv")) {
    const auto vocab = corpus::read_vocabulary_tsv(dir / "vocab.tsv");
    if (vocab.size() != s.train.vocab_size) {
      throw VocabularyMismatch("vocab.tsv has " + std::to_string(vocab.size()) +
                               " tokens but the caches use " + std::to_string(s.train.vocab_size));
    }
  }
  return s;
}

IngestOutputs cmd_ingest(const RunConfig& config) {
  const bool single = !config.input.empty();
  const bool presplit =
      !config.train_file.empty() || !config.valid_file.empty() || !config.test_file.empty();
  if (single == presplit) {
    throw InvalidConfig("ingest needs either 'input' or all of 'train_file', 'valid_file', "
                        "'test_file'");
  }
  if (single) {
    require_file(config.input, "input");
  } else {
    require_file(config.train_file, "train_file");
    require_file(config.valid_file, "valid_file");
    require_file(config.test_file, "test_file");
  }
  if (!config.stop_words.empty()) require_file(config.stop_words, "stop_words");
  if (config.min_df < 1) throw InvalidConfig("config key 'min_df': expected an integer >= 1");
  if (config.corpus_dir.empty()) throw InvalidConfig("config key 'corpus_dir' is required");

  corpus::IngestOptions opts;
  opts.min_df = config.min_df;
  if (!config.stop_words.empty()) opts.stop_words = config.stop_words;
  opts.fractions = config.split_fractions;
  opts.split_seed = config.split_seed;

  corpus::IngestResult res =
      single ? corpus::ingest_single(corpus::read_lines(config.input), opts)
             : corpus::ingest_presplit(corpus::read_lines(config.train_file),
                                       corpus::read_lines(config.valid_file),
                                       corpus::read_lines(config.test_file), opts);

  const fs::path dir = config.corpus_dir;
  fs::create_directories(dir);
  corpus::write_corpus_cache(res.splits.train, dir / "train.bin");
  corpus::write_corpus_cache(res.splits.valid, dir / "valid.bin");
  corpus::write_corpus_cache(res.splits.test, dir / "test.bin");
  corpus::write_vocabulary_tsv(res.vocab, dir / "vocab.tsv");
  write_json(dir / "ingest_report.json", {{"vocab_size", res.report.vocab_size},
                                          {"documents_read", res.report.documents_read},
                                          {"documents_dropped", res.report.documents_dropped},
                                          {"documents_kept", res.report.documents_kept},
                                          {"presplit", res.report.presplit}});
  write_manifest(dir, "manifest.json", "ingest", config,
                 {"train.bin", "valid.bin", "test.bin", "vocab.tsv", "ingest_report.json"});
  return {dir, res.report};
}

TrainOutputs cmd_train(const RunConfig& config) {
  config.model.validate();
  config.train.validate();
  const auto splits = load_corpus_dir(config.corpus_dir);
  auto run = run_training(config, splits);
  return {run.run_dir, std::move(run.report)};
}

metrics::MetricsReport cmd_eval(const RunConfig& config) {
  require_file(config.checkpoint, "checkpoint");
  corpus::parse_split(config.eval_split);
  const auto splits = load_corpus_dir(config.corpus_dir);
  const model::DiffEtm m = trainer::load_checkpoint(config.checkpoint);
  const auto& heldout = pick_split(splits, config.eval_split);
  if (m.vocab_size() != heldout.vocab_size) {
    throw VocabularyMismatch("checkpoint vocabulary " + std::to_string(m.vocab_size()) +
                             " does not match corpus vocabulary " +
                             std::to_string(heldout.vocab_size));
  }

  metrics::MetricsReport report =
      metrics::evaluate(m, splits.train, heldout, config.train.batch_size);
  report.config = model_config_json(m.config());
  report.corpus_id = sha256_file(config.corpus_dir / (config.eval_split + ".bin")).substr(0, 16);
  report.checkpoint_id = sha256_file(config.checkpoint).substr(0, 16);

  const fs::path out = config.output_dir;
  fs::create_directories(out);
  write_json(out / "metrics.json", report.to_json());
  std::vector<std::string> artifacts{"metrics.json"};
  const fs::path vocab_path = config.corpus_dir / "vocab.tsv";
  if (fs::is_regular_file(vocab_path)) {
    const auto vocab = corpus::read_vocabulary_tsv(vocab_path);
    const auto beta = model::topic_word_matrix(m);
    metrics::write_top_words_tsv(beta, metrics::top_words(beta, metrics::kCoherenceTopN), vocab,
                                 out / "top_words.tsv");
    artifacts.push_back("top_words.tsv");
  }
  write_manifest(out, "manifest.json", "eval", config, artifacts);
  return report;
}

void cmd_topics(const RunConfig& config, std::ostream& os) {
  require_file(config.checkpoint, "checkpoint");
  require_file(config.corpus_dir / "vocab.tsv", "corpus_dir");
  if (config.top_n < 1) throw InvalidConfig("config key 'top_n': expected an integer >= 1");
  const auto vocab = corpus::read_vocabulary_tsv(config.corpus_dir / "vocab.tsv");
  const model::DiffEtm m = trainer::load_checkpoint(config.checkpoint);
  if (m.vocab_size() != vocab.size()) {
    throw VocabularyMismatch("checkpoint vocabulary " + std::to_string(m.vocab_size()) +
                             " does not match vocab.tsv size " + std::to_string(vocab.size()));
  }
  const auto beta = model::topic_word_matrix(m);
  const auto top = metrics::top_words(beta, config.top_n);
  const fs::path out = config.output_dir;
  fs::create_directories(out);
  metrics::write_top_words_tsv(beta, top, vocab, out / "topics.tsv");
  write_manifest(out, "manifest.json", "topics", config, {"topics.tsv"});
  for (std::size_t k = 0; k < top.topics.size(); ++k) {
    os << "topic " << k << ":";
    for (auto w : top.topics[k]) os << ' ' << vocab.token(w);
    os << '\n';
  }
}

std::vector<SweepRow> cmd_sweep_t(const RunConfig& config) {
  if (config.t_values.empty()) throw InvalidConfig("config key 't_values': must be non-empty");
  corpus::parse_split(config.eval_split);
  config.model.validate();
  config.train.validate();
  const auto splits = load_corpus_dir(config.corpus_dir);
  const auto& heldout = pick_split(splits, config.eval_split);

  const fs::path out = config.output_dir;
  fs::create_directories(out);
  std::vector<SweepRow> rows;
  json failures = json::object();
  for (std::uint32_t T : config.t_values) {
    SweepRow row;
    row.T = T;
    RunConfig c = config;
    c.model.diffusion_steps = T;
    c.model.mode = model::Mode::diffusion;
    c.output_dir = out / "runs";
    try {
      auto run = run_training(c, splits);
      row.metrics = metrics::evaluate(run.model, splits.train, heldout, c.train.batch_size);
      row.metrics.config = model_config_json(c.model);
      row.run_dir = run.run_dir;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      failures[std::to_string(T)] = row.error;
      std::cerr << "sweep-t: T=" << T << " failed: " << e.what() << '\n';
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "T,coherence,diversity,quality,perplexity\n";
  const double nan = std::nan("");
  for (const auto& r : rows) {
    csv << r.T << ',' << fmt_double(r.ok ? r.metrics.coherence : nan) << ','
        << fmt_double(r.ok ? r.metrics.diversity : nan) << ','
        << fmt_double(r.ok ? r.metrics.quality() : nan) << ','
        << fmt_double(r.ok ? r.metrics.perplexity : nan) << '\n';
  }
  write_text(out / "sweep_t.csv", csv.str());
  json run_dirs = json::object();
  for (const auto& r : rows) {
    if (r.ok) run_dirs[std::to_string(r.T)] = fs::relative(r.run_dir, out).generic_string();
  }
  write_manifest(out, "manifest.json", "sweep-t", config, {"sweep_t.csv"},
                 {{"failures", failures}, {"runs", run_dirs}});
  return rows;
}

trainer::KlTrajectory cmd_kl_test(const RunConfig& config) {
  if (config.run_dir.empty()) throw InvalidConfig("config key 'run_dir' is required");
  require_file(config.run_dir / "train_report.json", "run_dir");
  corpus::parse_split(config.kl_split);
  const auto splits = load_corpus_dir(config.corpus_dir);
  const auto& split = pick_split(splits, config.kl_split);
  const auto report = trainer::TrainReport::from_json(read_json(config.run_dir / "train_report.json"));

  trainer::KlTrajectory out;
  std::vector<std::string> used;
  for (const auto& point : trainer::kl_trajectory(report)) {
    std::ostringstream name;
    name << "checkpoints/epoch_";
    name.width(4);
    name.fill('0');
    name << point.epoch << ".ckpt";
    const fs::path ckpt = config.run_dir / name.str();
    if (!fs::is_regular_file(ckpt)) {
      std::cerr << "kl-test: skipping epoch " << point.epoch << " (checkpoint not retained)\n";
      continue;
    }
    const model::DiffEtm m = trainer::load_checkpoint(ckpt);
    const auto ev = model::evaluate_corpus(m, split, config.train.batch_size);
    out.push_back({point.epoch, ev.mean_kl(), point.perplexity});
    used.push_back(name.str());
  }
  trainer::write_kl_trajectory(out, config.run_dir / "kl_test.csv");
  std::vector<std::string> artifacts{"kl_test.csv"};
  write_manifest(config.run_dir, "kl_test_manifest.json", "kl-test", config, artifacts,
                 {{"checkpoints", used}});
  return out;
}

}  // namespace diffetm::cli
