#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diffetm/autodiff.hpp"
#include "diffetm/corpus.hpp"

namespace diffetm::model {

using grad::ParamStore;
using grad::Tape;
using grad::Tensor;
using grad::Var;
using Rng = std::mt19937_64;

/// How the hidden noise ε is produced.
///  - diffusion: ε ~ q(X_T | X_0), X_0 from the diffusion encoder
///  - no_diffusion: ε = X_0 (the "-Diffusion" ablation)
///  - standard_etm: ε ~ N(0, I), X_0 unused (classic ETM)
enum class Mode { diffusion, no_diffusion, standard_etm };

/// deterministic replaces ε by its conditional mean; sampled draws it.
enum class EvalPath { deterministic, sampled };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);
std::string_view eval_path_name(EvalPath p);
EvalPath parse_eval_path(std::string_view s);

struct ModelConfig {
  std::uint32_t num_topics = 50;       // K
  std::uint32_t embedding_size = 300;  // E
  std::uint32_t hidden_size = 800;     // H
  std::uint32_t diffusion_steps = 100; // T
  double beta_0 = 0.0;
  double beta_T = 0.02;
  double kl_weight = 1.0;              // lambda
  Mode mode = Mode::diffusion;
  EvalPath eval_path = EvalPath::deterministic;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NoiseSchedule {
  std::vector<double> beta;       // beta_1..beta_T
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // running product of alpha

  std::size_t steps() const { return beta.size(); }
  /// ᾱ_T, or 1 for an empty schedule.
  double final_alpha_bar() const { return alpha_bar.empty() ? 1.0 : alpha_bar.back(); }
};

/// β_t ramps linearly from beta_0 (t=1) to beta_T (t=T).
NoiseSchedule linear_schedule(std::uint32_t steps, double beta_0, double beta_T);

/// Parameter names, in initialization order.
namespace names {
inline constexpr std::string_view kEncoder = "diffusion_encoder";
inline constexpr std::string_view kMuNet = "mu_net";
inline constexpr std::string_view kSigmaNet = "sigma_net";
inline constexpr std::string_view kTopicEmbeddings = "topic_embeddings";  // alpha, K x E
inline constexpr std::string_view kWordEmbeddings = "word_embeddings";    // rho, V x E
std::string layer_weight(std::string_view net, int layer);
std::string layer_bias(std::string_view net, int layer);
}  // namespace names

/// Config, noise schedule and all trainable arrays of one model instance.
class DiffEtm {
 public:
  DiffEtm(ModelConfig config, std::size_t vocab_size);

  const ModelConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  std::size_t vocab_size() const { return vocab_size_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  ModelConfig config_;
  NoiseSchedule schedule_;
  std::size_t vocab_size_;
  ParamStore params_;
};

/// Binds parameters onto a tape. A mutable store gives gradient-tracking
/// leaves; a const store only works with a non-recording tape.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store) : tape_(tape), mutable_(&store), store_(store) {}
  ParamBinder(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Var operator()(const std::string& name) const;
  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  ParamStore* mutable_ = nullptr;
  const ParamStore& store_;
};

/// Documents of one mini-batch, as raw counts and as row-normalized
/// frequencies.
struct Batch {
  Tensor counts;
  Tensor normalized;
  std::size_t size() const { return counts.rows(); }
};

Batch make_batch(const corpus::BowCorpus& corpus, std::span<const std::size_t> doc_indices);
Batch make_batch(const corpus::BowCorpus& corpus);

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

// Tensor-level forward diffusion, independent of any tape.
Tensor sample_eps(const Tensor& x0, const NoiseSchedule& schedule, Rng& rng, Mode mode);

// Graph builders.
Var mlp3(const ParamBinder& bind, std::string_view net, Var x);
Var encode_x0(const ParamBinder& bind, Var x_norm);
Var sample_eps(Tape& tape, Var x0, const NoiseSchedule& schedule, Rng& rng, Mode mode,
               EvalPath path);
std::pair<Var, Var> encode_mu_logvar(const ParamBinder& bind, Var x_norm);
Var reparameterize(Var eps, Var mu, Var logvar);
Var doc_topic_dist(Var z);
Var topic_word_dist(Var alpha_emb, Var rho_emb);
Var reconstruct(Var theta, Var beta);

inline constexpr double kLogFloor = 1e-12;

/// -(1/n) Σ_d Σ_j X_dj log X'_dj. A floor of 0 disables clamping. Counts are
/// treated as constants.
Var reconstruction_loss(Var counts, Var x_prime, double log_floor = kLogFloor);
/// (1/n) Σ_d 0.5 Σ_k (μ² + σ² − log σ² − 1), σ² = exp(logvar).
Var kl_loss(Var mu, Var logvar);
Var total_loss(Var recon, Var kl, double kl_weight);

struct ForwardResult {
  Var x0;  // unset (tape == nullptr) in standard_etm mode
  Var eps, mu, logvar, z, theta, beta, x_prime;
  Var recon, kl, total;
};

/// Full pass over one batch. Noise is drawn from `rng` only on the sampled
/// path of the diffusion and standard_etm modes.
ForwardResult forward_batch(const ParamBinder& bind, const DiffEtm& model, const Batch& batch,
                            Rng& rng, EvalPath path);

struct LatentBatch {
  Tensor x0, eps, mu, logvar, z, theta;
};
LatentBatch latents_of(const ForwardResult& r);

/// Per-token and per-document sums over a whole split on the given path.
struct CorpusEvaluation {
  double log_likelihood = 0.0;  // Σ_d Σ_j X_dj log X'_dj
  double token_count = 0.0;
  double kl_sum = 0.0;          // Σ_d KL_d
  double recon_sum = 0.0;
  std::size_t doc_count = 0;

  double perplexity() const;
  double mean_kl() const { return doc_count ? kl_sum / static_cast<double>(doc_count) : 0.0; }
};

CorpusEvaluation evaluate_corpus(const DiffEtm& model, const corpus::BowCorpus& corpus,
                                 std::size_t batch_size, EvalPath path = EvalPath::deterministic,
                                 std::uint64_t noise_seed = 0);

/// β = softmax(α ρᵀ), K x V, computed without a tape.
Tensor topic_word_matrix(const DiffEtm& model);

/// Deterministic RNG stream derived from a seed and a stream tag.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace diffetm::model
