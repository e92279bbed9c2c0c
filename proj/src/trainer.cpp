#include "diffetm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "diffetm/checkpoint.hpp"
#include "diffetm/optim.hpp"

namespace diffetm::trainer {

namespace fs = std::filesystem;
using model::EvalPath;

namespace {
constexpr std::uint64_t kShuffleStream = 0x2;
constexpr std::uint64_t kNoiseStream = 0x3;
constexpr std::uint64_t kEmpiricalStream = 0x4;

std::string checkpoint_name(std::uint32_t epoch) {
  std::ostringstream ss;
  ss << "checkpoints/epoch_";
  ss.width(4);
  ss.fill('0');
  ss << epoch << ".ckpt";
  return ss.str();
}
}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidConfig("epochs: must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch_size: must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("learning_rate: must be >= 0");
  if (eval_every < 1) throw InvalidConfig("eval_every: must be >= 1");
  if (!(clip_norm >= 0.0)) throw InvalidConfig("clip_norm: must be >= 0");
}

nlohmann::json TrainReport::to_json(bool include_timing) const {
  nlohmann::json j;
  auto& losses = j["train_losses"] = nlohmann::json::array();
  for (const auto& l : train_losses) {
    losses.push_back({{"recon", l.recon}, {"kl", l.kl}, {"total", l.total}});
  }
  j["eval_epochs"] = eval_epochs;
  j["valid_perplexity"] = valid_perplexity;
  j["valid_kl"] = valid_kl;
  j["valid_empirical_kl"] = valid_empirical_kl;
  j["best_epoch"] = best_epoch;
  j["best_perplexity"] = best_perplexity;
  j["checkpoints"] = checkpoints;
  j["seed"] = seed;
  if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

TrainReport TrainReport::from_json(const nlohmann::json& j) {
  TrainReport r;
  for (const auto& l : j.at("train_losses")) {
    r.train_losses.push_back({l.at("recon"), l.at("kl"), l.at("total")});
  }
  r.eval_epochs = j.at("eval_epochs").get<std::vector<std::uint32_t>>();
  r.valid_perplexity = j.at("valid_perplexity").get<std::vector<double>>();
  r.valid_kl = j.at("valid_kl").get<std::vector<double>>();
  r.valid_empirical_kl = j.at("valid_empirical_kl").get<std::vector<double>>();
  r.best_epoch = j.at("best_epoch");
  r.best_perplexity = j.at("best_perplexity");
  r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  r.seed = j.at("seed");
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  return r;
}

Validation validate(const model::DiffEtm& model, const corpus::BowCorpus& valid,
                    std::size_t batch_size) {
  const auto ev = model::evaluate_corpus(model, valid, batch_size, EvalPath::deterministic);
  return {ev.perplexity(), ev.mean_kl()};
}

double empirical_z_kl(const model::DiffEtm& model, const corpus::BowCorpus& corpus,
                      std::size_t batch_size, std::uint64_t noise_seed) {
  const std::size_t K = model.config().num_topics;
  std::vector<double> sum(K, 0.0), sum_sq(K, 0.0);
  model::Rng rng = model::make_rng(noise_seed, kEmpiricalStream);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    idx.resize(std::min(batch_size, corpus.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = model::make_batch(corpus, idx);
    model::Tape tape(false);
    model::ParamBinder bind(tape, model.params());
    const auto r = model::forward_batch(bind, model, batch, rng, EvalPath::sampled);
    const auto& z = r.z.value();
    for (std::size_t d = 0; d < z.rows(); ++d) {
      for (std::size_t k = 0; k < K; ++k) {
        sum[k] += z(d, k);
        sum_sq[k] += z(d, k) * z(d, k);
      }
    }
  }
  const double n = static_cast<double>(corpus.size());
  if (n == 0) return 0.0;
  double kl = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double m = sum[k] / n;
    const double var = std::max(sum_sq[k] / n - m * m, 1e-12);
    kl += 0.5 * (m * m + var - std::log(var) - 1.0);
  }
  return kl;
}

TrainReport train(model::DiffEtm& model, const TrainConfig& config,
                  const corpus::BowCorpus& train_split, const corpus::BowCorpus& valid_split) {
  config.validate();
  if (train_split.docs.empty()) throw EmptySplit("training split is empty");
  if (valid_split.docs.empty()) throw EmptySplit("validation split is empty");
  if (train_split.vocab_size != model.vocab_size() ||
      valid_split.vocab_size != model.vocab_size()) {
    throw VocabularyMismatch("corpus splits and model disagree on vocabulary size");
  }

  const auto start_time = std::chrono::steady_clock::now();
  const std::uint64_t seed = model.config().seed;
  const bool write_files = !config.output_dir.empty();
  if (write_files) fs::create_directories(config.output_dir / "checkpoints");

  auto& params = model.params();
  grad::Adam adam(params, grad::AdamOptions{.lr = config.learning_rate});
  model::Rng shuffle_rng = model::make_rng(seed, kShuffleStream);
  model::Rng noise_rng = model::make_rng(seed, kNoiseStream);

  TrainReport report;
  report.seed = seed;
  std::vector<grad::Tensor> best_values;
  std::deque<std::string> retained;

  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  };

  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);
  params.zero_grad();

  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLosses sums;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto batch = model::make_batch(train_split, idx);

      model::Tape tape;
      model::ParamBinder bind(tape, params);
      const auto r = model::forward_batch(bind, model, batch, noise_rng, EvalPath::sampled);
      const double total = r.total.value()[0];
      if (!std::isfinite(total)) {
        report.wall_clock_seconds = elapsed();
        throw Diverged("training loss became non-finite at epoch " + std::to_string(epoch) +
                           "; lower the learning rate or set clip_norm",
                       report);
      }
      tape.backward(r.total);
      if (config.clip_norm > 0.0) grad::clip_gradient_norm(params, config.clip_norm);
      adam.step(params);

      const double n = static_cast<double>(batch.size());
      sums.recon += r.recon.value()[0] * n;
      sums.kl += r.kl.value()[0] * n;
      sums.total += total * n;
    }
    const double n_docs = static_cast<double>(train_split.size());
    report.train_losses.push_back({sums.recon / n_docs, sums.kl / n_docs, sums.total / n_docs});

    if (epoch % config.eval_every != 0 && epoch != config.epochs) continue;

    const Validation v = validate(model, valid_split, config.batch_size);
    if (!std::isfinite(v.perplexity)) {
      report.wall_clock_seconds = elapsed();
      throw Diverged("validation perplexity became non-finite at epoch " +
                         std::to_string(epoch),
                     report);
    }
    report.eval_epochs.push_back(epoch);
    report.valid_perplexity.push_back(v.perplexity);
    report.valid_kl.push_back(v.kl);
    report.valid_empirical_kl.push_back(
        empirical_z_kl(model, valid_split, config.batch_size, seed + epoch));

    if (report.best_epoch == 0 || v.perplexity < report.best_perplexity) {
      report.best_epoch = epoch;
      report.best_perplexity = v.perplexity;
      best_values.clear();
      for (const auto& p : params.entries()) best_values.push_back(p.value);
      if (write_files) {
        const std::string rel = checkpoint_name(epoch);
        save_checkpoint(model, config.output_dir / rel);
        save_checkpoint(model, config.output_dir / "best.ckpt");
        retained.push_back(rel);
        if (config.max_checkpoints > 0 && retained.size() > config.max_checkpoints) {
          fs::remove(config.output_dir / retained.front());
          retained.pop_front();
        }
      }
    }
  }

  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size() && i < best_values.size(); ++i) {
    entries[i].value = best_values[i];
  }
  report.checkpoints.assign(retained.begin(), retained.end());
  report.wall_clock_seconds = elapsed();
  return report;
}

KlTrajectory kl_trajectory(const TrainReport& report) {
  KlTrajectory out;
  for (std::size_t i = 0; i < report.eval_epochs.size(); ++i) {
    const double ppl = report.valid_perplexity.at(i);
    if (out.empty() || ppl < out.back().perplexity) {
      out.push_back({report.eval_epochs[i], report.valid_kl.at(i), ppl});
    }
  }
  return out;
}

void write_kl_trajectory(const KlTrajectory& trajectory, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "epoch,kl,perplexity\n";
  for (const auto& p : trajectory) out << p.epoch << ',' << p.kl << ',' << p.perplexity << '\n';
}

KlTrajectory read_kl_trajectory(const fs::path& path) {
  const auto lines = corpus::read_lines(path);
  if (lines.empty() || lines.front() != "epoch,kl,perplexity") {
    throw IoError("'" + path.string() + "' is not a KL trajectory CSV");
  }
  KlTrajectory out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::istringstream ss(lines[i]);
    KlPoint p;
    char c1 = 0, c2 = 0;
    if (!(ss >> p.epoch >> c1 >> p.kl >> c2 >> p.perplexity) || c1 != ',' || c2 != ',') {
      throw IoError("'" + path.string() + "': malformed row " + std::to_string(i));
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace diffetm::trainer
