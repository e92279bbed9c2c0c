#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffetm/corpus.hpp"
#include "diffetm/errors.hpp"
#include "diffetm/model.hpp"

namespace diffetm::trainer {

struct TrainConfig {
  std::uint32_t epochs = 300;
  std::uint32_t batch_size = 1000;
  double learning_rate = 0.008;
  std::uint32_t eval_every = 1;
  /// Improving checkpoints kept on disk besides best.ckpt; 0 keeps all.
  std::uint32_t max_checkpoints = 0;
  /// Omits wall-clock time from the report so equal inputs give equal bytes.
  bool deterministic = true;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
  /// Empty disables all file output.
  std::filesystem::path output_dir;

  void validate() const;
};

struct EpochLosses {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct KlPoint {
  std::uint32_t epoch = 0;
  double kl = 0.0;
  double perplexity = 0.0;
};

using KlTrajectory = std::vector<KlPoint>;

struct TrainReport {
  std::vector<EpochLosses> train_losses;  // one per epoch
  std::vector<std::uint32_t> eval_epochs;  // 1-based epochs that ran validation
  std::vector<double> valid_perplexity;    // parallel to eval_epochs
  std::vector<double> valid_kl;            // closed-form KL on (mu, logvar)
  std::vector<double> valid_empirical_kl;  // Gaussian fit of realized z vs N(0, I)
  std::uint32_t best_epoch = 0;
  double best_perplexity = 0.0;
  std::vector<std::string> checkpoints;    // files written for improving epochs
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json(bool include_timing) const;
  static TrainReport from_json(const nlohmann::json& j);
};

/// Raised when the training loss stops being finite. Carries the report up
/// to the failing epoch.
class Diverged : public Error {
 public:
  Diverged(const std::string& what, TrainReport partial)
      : Error(what), partial_(std::move(partial)) {}
  const char* kind() const noexcept override { return "Diverged"; }
  const TrainReport& partial_report() const { return partial_; }

 private:
  TrainReport partial_;
};

struct Validation {
  double perplexity = 0.0;
  double kl = 0.0;
};

/// Deterministic-path perplexity and mean closed-form KL on a split.
Validation validate(const model::DiffEtm& model, const corpus::BowCorpus& valid,
                    std::size_t batch_size);

/// KL(N(m, s²) || N(0, I)) summed over topic coordinates, where m and s² are
/// the per-coordinate moments of z drawn on the sampled path.
double empirical_z_kl(const model::DiffEtm& model, const corpus::BowCorpus& corpus,
                      std::size_t batch_size, std::uint64_t noise_seed);

/// Runs the training loop. On return `model` holds the parameters of the
/// best validation epoch. With a non-empty output_dir, writes
/// checkpoints/epoch_NNNN.ckpt for every improving epoch and best.ckpt.
TrainReport train(model::DiffEtm& model, const TrainConfig& config,
                  const corpus::BowCorpus& train_split, const corpus::BowCorpus& valid_split);

/// Epochs that improved the best validation perplexity so far.
KlTrajectory kl_trajectory(const TrainReport& report);

/// CSV with header epoch,kl,perplexity.
void write_kl_trajectory(const KlTrajectory& trajectory, const std::filesystem::path& path);
KlTrajectory read_kl_trajectory(const std::filesystem::path& path);

}  // namespace diffetm::trainer
