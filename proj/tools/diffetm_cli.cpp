#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "diffetm/commands.hpp"
#include "diffetm/errors.hpp"

using namespace diffetm;

int main(int argc, char** argv) {
  CLI::App app{"DiffETM: diffusion-enhanced embedded topic model"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, preset_name, out_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file (flat key/value)");
  app.add_option("--preset", preset_name, "Named parameter preset")
      ->check(CLI::IsMember(cli::preset_names()));
  app.add_option("--seed", seed, "Override the model seed");
  app.add_option("--out", out_dir, "Override the output directory (corpus_dir for ingest)");
  app.add_flag("--deterministic", deterministic, "Force deterministic reports");
  app.add_flag("-q,--quiet", quiet, "Do not print the effective config");

  auto* ingest = app.add_subcommand("ingest", "Build vocabulary and corpus caches from raw text");
  auto* train = app.add_subcommand("train", "Train a model on an ingested corpus");
  auto* eval = app.add_subcommand("eval", "Compute coherence, diversity, quality, perplexity");
  auto* topics = app.add_subcommand("topics", "Print and save the top words per topic");
  auto* sweep = app.add_subcommand("sweep-t", "Train and evaluate one model per diffusion step");
  auto* kltest = app.add_subcommand("kl-test", "Test-set KL for every improving checkpoint");

  CLI11_PARSE(app, argc, argv);

  try {
    cli::RunConfig config = preset_name.empty() ? cli::RunConfig{} : cli::preset(preset_name);
    if (!config_path.empty()) config = cli::load_config_file(config_path, config);
    if (seed) config.model.seed = *seed;
    if (deterministic) config.train.deterministic = true;
    if (!out_dir.empty()) {
      if (ingest->parsed()) {
        config.corpus_dir = out_dir;
      } else {
        config.output_dir = out_dir;
      }
    }
    if (!quiet) std::cerr << "effective config: " << config.to_json().dump() << '\n';

    if (ingest->parsed()) {
      const auto res = cli::cmd_ingest(config);
      std::cout << "V=" << res.report.vocab_size;
      for (const auto& [split, n] : res.report.documents_kept) std::cout << ' ' << split << '=' << n;
      for (const auto& [split, n] : res.report.documents_dropped) {
        std::cout << " dropped_" << split << '=' << n;
      }
      std::cout << "\nwrote " << res.corpus_dir.string() << '\n';
    } else if (train->parsed()) {
      const auto res = cli::cmd_train(config);
      std::cout << "best epoch " << res.report.best_epoch << " validation perplexity "
                << res.report.best_perplexity << "\nwrote " << res.run_dir.string() << '\n';
    } else if (eval->parsed()) {
      const auto r = cli::cmd_eval(config);
      std::cout << r.to_json().dump(2) << '\n';
    } else if (topics->parsed()) {
      cli::cmd_topics(config, std::cout);
    } else if (sweep->parsed()) {
      const auto rows = cli::cmd_sweep_t(config);
      bool all_ok = true;
      for (const auto& r : rows) all_ok = all_ok && r.ok;
      std::cout << "wrote " << (config.output_dir / "sweep_t.csv").string() << '\n';
      if (!all_ok) return cli::kFailure;
    } else if (kltest->parsed()) {
      const auto traj = cli::cmd_kl_test(config);
      std::cout << "epoch,kl,perplexity\n";
      for (const auto& p : traj) std::cout << p.epoch << ',' << p.kl << ',' << p.perplexity << '\n';
    }
  } catch (const diffetm::Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
  return cli::kOk;
}
