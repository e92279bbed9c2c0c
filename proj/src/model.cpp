#include "diffetm/model.hpp"

#include <algorithm>
#include <cmath>

#include "diffetm/errors.hpp"

namespace diffetm::model {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::diffusion: return "diffusion";
    case Mode::no_diffusion: return "no_diffusion";
    case Mode::standard_etm: return "standard_etm";
  }
  return "diffusion";
}

Mode parse_mode(std::string_view s) {
  if (s == "diffusion") return Mode::diffusion;
  if (s == "no_diffusion") return Mode::no_diffusion;
  if (s == "standard_etm") return Mode::standard_etm;
  throw InvalidConfig("mode: expected one of diffusion, no_diffusion, standard_etm; got '" +
                      std::string(s) + "'");
}

std::string_view eval_path_name(EvalPath p) {
  return p == EvalPath::deterministic ? "deterministic" : "sampled";
}

EvalPath parse_eval_path(std::string_view s) {
  if (s == "deterministic") return EvalPath::deterministic;
  if (s == "sampled") return EvalPath::sampled;
  throw InvalidConfig("eval_path: expected deterministic or sampled; got '" + std::string(s) +
                      "'");
}

void ModelConfig::validate() const {
  if (num_topics < 2) throw InvalidConfig("num_topics: must be >= 2");
  if (embedding_size < 1) throw InvalidConfig("embedding_size: must be >= 1");
  if (hidden_size < 1) throw InvalidConfig("hidden_size: must be >= 1");
  if (!(kl_weight >= 0.0)) throw InvalidConfig("kl_weight: must be >= 0");
  if (!(beta_0 >= 0.0)) throw InvalidConfig("beta_0: must be >= 0");
  if (!(beta_0 <= beta_T)) throw InvalidConfig("beta_0: must be <= beta_T");
  if (!(beta_T < 1.0)) throw InvalidConfig("beta_T: must be < 1");
}

NoiseSchedule linear_schedule(std::uint32_t steps, double beta_0, double beta_T) {
  if (!(beta_T < 1.0)) throw InvalidSchedule("beta_T must be < 1");
  if (!(beta_0 >= 0.0) || !(beta_0 <= beta_T)) {
    throw InvalidSchedule("beta_0 must satisfy 0 <= beta_0 <= beta_T");
  }
  NoiseSchedule s;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double running = 1.0;
  for (std::uint32_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
    s.beta[t] = beta_0 + frac * (beta_T - beta_0);
    s.alpha[t] = 1.0 - s.beta[t];
    running *= s.alpha[t];
    s.alpha_bar[t] = running;
  }
  return s;
}

namespace names {
std::string layer_weight(std::string_view net, int layer) {
  return std::string(net) + ".l" + std::to_string(layer) + ".weight";
}
std::string layer_bias(std::string_view net, int layer) {
  return std::string(net) + ".l" + std::to_string(layer) + ".bias";
}
}  // namespace names

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

namespace {

// Uniform in ±1/sqrt(fan_in), the usual fan-in scaled initializer.
Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void add_mlp3(ParamStore& store, std::string_view net, std::size_t in, std::size_t hidden,
              std::size_t out, Rng& rng) {
  const std::size_t dims[4] = {in, hidden, hidden, out};
  for (int l = 1; l <= 3; ++l) {
    store.add(names::layer_weight(net, l), init_uniform(dims[l - 1], dims[l], dims[l - 1], rng));
    store.add(names::layer_bias(net, l), init_uniform(1, dims[l], dims[l - 1], rng));
  }
}

constexpr std::uint64_t kInitStream = 0x1;

}  // namespace

DiffEtm::DiffEtm(ModelConfig config, std::size_t vocab_size)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size_ == 0) throw InvalidConfig("vocabulary size must be > 0");
  schedule_ = linear_schedule(config_.diffusion_steps, config_.beta_0, config_.beta_T);

  // Every mode allocates every array in the same order, so equal seeds give
  // equal initial values across modes.
  Rng rng = make_rng(config_.seed, kInitStream);
  const std::size_t K = config_.num_topics, H = config_.hidden_size, E = config_.embedding_size;
  add_mlp3(params_, names::kEncoder, vocab_size_, H, K, rng);
  add_mlp3(params_, names::kMuNet, vocab_size_, H, K, rng);
  add_mlp3(params_, names::kSigmaNet, vocab_size_, H, K, rng);
  params_.add(std::string(names::kTopicEmbeddings), init_uniform(K, E, E, rng));
  params_.add(std::string(names::kWordEmbeddings), init_uniform(vocab_size_, E, E, rng));
}

Var ParamBinder::operator()(const std::string& name) const {
  if (tape_.recording()) {
    if (mutable_ == nullptr) {
      throw DomainError("a gradient-recording tape needs a mutable parameter store");
    }
    return tape_.param(*mutable_, name);
  }
  return tape_.constant(store_.value(name));
}

Batch make_batch(const corpus::BowCorpus& corpus, std::span<const std::size_t> doc_indices) {
  const std::size_t V = corpus.vocab_size;
  Batch b{Tensor(doc_indices.size(), V), Tensor(doc_indices.size(), V)};
  for (std::size_t r = 0; r < doc_indices.size(); ++r) {
    const auto& doc = corpus.docs.at(doc_indices[r]);
    if (doc.total == 0) throw DomainError("make_batch: empty document");
    const double total = static_cast<double>(doc.total);
    for (const auto& [id, c] : doc.counts) {
      if (id >= V) throw VocabularyMismatch("make_batch: word id exceeds vocabulary");
      b.counts(r, id) = static_cast<double>(c);
      b.normalized(r, id) = static_cast<double>(c) / total;
    }
  }
  return b;
}

Batch make_batch(const corpus::BowCorpus& corpus) {
  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(corpus, all);
}

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor sample_eps(const Tensor& x0, const NoiseSchedule& schedule, Rng& rng, Mode mode) {
  switch (mode) {
    case Mode::no_diffusion:
      return x0;
    case Mode::standard_etm:
      return standard_normal(x0.rows(), x0.cols(), rng);
    case Mode::diffusion: {
      const double abar = schedule.final_alpha_bar();
      if (abar == 1.0) return x0;
      const double signal = std::sqrt(abar), noise = std::sqrt(1.0 - abar);
      Tensor n = standard_normal(x0.rows(), x0.cols(), rng);
      Tensor out = Tensor::zeros_like(x0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * n[i];
      return out;
    }
  }
  return x0;
}

Var mlp3(const ParamBinder& bind, std::string_view net, Var x) {
  Var h = grad::relu(grad::affine(x, bind(names::layer_weight(net, 1)),
                                  bind(names::layer_bias(net, 1))));
  h = grad::relu(grad::affine(h, bind(names::layer_weight(net, 2)),
                              bind(names::layer_bias(net, 2))));
  return grad::affine(h, bind(names::layer_weight(net, 3)), bind(names::layer_bias(net, 3)));
}

Var encode_x0(const ParamBinder& bind, Var x_norm) { return mlp3(bind, names::kEncoder, x_norm); }

Var sample_eps(Tape& tape, Var x0, const NoiseSchedule& schedule, Rng& rng, Mode mode,
               EvalPath path) {
  switch (mode) {
    case Mode::no_diffusion:
      return x0;
    case Mode::standard_etm: {
      const Tensor& shape = x0.value();
      if (path == EvalPath::deterministic) return tape.constant(Tensor(shape.rows(), shape.cols()));
      return tape.constant(standard_normal(shape.rows(), shape.cols(), rng));
    }
    case Mode::diffusion: {
      const double abar = schedule.final_alpha_bar();
      if (abar == 1.0) return x0;
      Var mean = grad::scale(x0, std::sqrt(abar));
      if (path == EvalPath::deterministic) return mean;
      Tensor n = standard_normal(x0.value().rows(), x0.value().cols(), rng);
      const double noise = std::sqrt(1.0 - abar);
      for (double& v : n.data()) v *= noise;
      return grad::add(mean, tape.constant(std::move(n)));
    }
  }
  return x0;
}

std::pair<Var, Var> encode_mu_logvar(const ParamBinder& bind, Var x_norm) {
  return {mlp3(bind, names::kMuNet, x_norm), mlp3(bind, names::kSigmaNet, x_norm)};
}

Var reparameterize(Var eps, Var mu, Var logvar) {
  Var sigma = grad::exp(grad::scale(logvar, 0.5));
  return grad::add(grad::hadamard(eps, sigma), mu);
}

Var doc_topic_dist(Var z) { return grad::softmax_rows(z); }

Var topic_word_dist(Var alpha_emb, Var rho_emb) {
  return grad::softmax_rows(grad::matmul_nt(alpha_emb, rho_emb));
}

Var reconstruct(Var theta, Var beta) { return grad::matmul(theta, beta); }

Var reconstruction_loss(Var counts, Var x_prime, double log_floor) {
  const double n = static_cast<double>(counts.value().rows());
  if (n == 0) throw DomainError("reconstruction_loss: empty batch");
  Var ll = grad::weighted_log_sum(x_prime, counts.value(), log_floor);
  return grad::scale(ll, -1.0 / n);
}

Var kl_loss(Var mu, Var logvar) {
  const Tensor& m = mu.value();
  if (!m.same_shape(logvar.value())) {
    throw ShapeMismatch("kl_loss: mu " + m.shape_str() + " vs logvar " +
                        logvar.value().shape_str());
  }
  const double n = static_cast<double>(m.rows());
  if (n == 0) throw DomainError("kl_loss: empty batch");
  // μ² + exp(lv) − lv − 1, summed
  Var terms = grad::sub(grad::add(grad::square(mu), grad::exp(logvar)), logvar);
  Var s = grad::add_scalar(grad::sum_all(terms), -static_cast<double>(m.size()));
  return grad::scale(s, 0.5 / n);
}

Var total_loss(Var recon, Var kl, double kl_weight) {
  if (!(kl_weight >= 0.0)) throw InvalidConfig("kl_weight: must be >= 0");
  return grad::add(recon, grad::scale(kl, kl_weight));
}

ForwardResult forward_batch(const ParamBinder& bind, const DiffEtm& model, const Batch& batch,
                            Rng& rng, EvalPath path) {
  const auto& cfg = model.config();
  if (batch.counts.cols() != model.vocab_size()) {
    throw ShapeMismatch("forward_batch: batch has " + std::to_string(batch.counts.cols()) +
                        " columns, model vocabulary is " + std::to_string(model.vocab_size()));
  }
  Tape& tape = bind.tape();
  ForwardResult r;
  Var x = tape.constant(batch.normalized);
  if (cfg.mode == Mode::standard_etm) {
    const Tensor shape(batch.size(), cfg.num_topics);
    Var placeholder = tape.constant(shape);
    r.eps = sample_eps(tape, placeholder, model.schedule(), rng, cfg.mode, path);
  } else {
    r.x0 = encode_x0(bind, x);
    r.eps = sample_eps(tape, r.x0, model.schedule(), rng, cfg.mode, path);
  }
  std::tie(r.mu, r.logvar) = encode_mu_logvar(bind, x);
  r.z = reparameterize(r.eps, r.mu, r.logvar);
  r.theta = doc_topic_dist(r.z);
  r.beta = topic_word_dist(bind(std::string(names::kTopicEmbeddings)),
                           bind(std::string(names::kWordEmbeddings)));
  r.x_prime = reconstruct(r.theta, r.beta);
  r.recon = reconstruction_loss(tape.constant(batch.counts), r.x_prime);
  r.kl = kl_loss(r.mu, r.logvar);
  r.total = total_loss(r.recon, r.kl, cfg.kl_weight);
  return r;
}

LatentBatch latents_of(const ForwardResult& r) {
  LatentBatch out;
  if (r.x0.tape() != nullptr) out.x0 = r.x0.value();
  out.eps = r.eps.value();
  out.mu = r.mu.value();
  out.logvar = r.logvar.value();
  out.z = r.z.value();
  out.theta = r.theta.value();
  return out;
}

double CorpusEvaluation::perplexity() const {
  if (token_count <= 0.0) throw DomainError("perplexity: no tokens");
  return std::exp(-log_likelihood / token_count);
}

CorpusEvaluation evaluate_corpus(const DiffEtm& model, const corpus::BowCorpus& corpus,
                                 std::size_t batch_size, EvalPath path,
                                 std::uint64_t noise_seed) {
  if (corpus.vocab_size != model.vocab_size()) {
    throw VocabularyMismatch("corpus vocabulary " + std::to_string(corpus.vocab_size) +
                             " != model vocabulary " + std::to_string(model.vocab_size()));
  }
  if (batch_size == 0) throw InvalidConfig("batch_size: must be >= 1");
  CorpusEvaluation ev;
  Rng rng = make_rng(noise_seed, 0x5);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    const std::size_t end = std::min(corpus.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const Batch batch = make_batch(corpus, idx);
    Tape tape(false);
    ParamBinder bind(tape, model.params());
    const ForwardResult r = forward_batch(bind, model, batch, rng, path);
    const double n = static_cast<double>(batch.size());
    ev.recon_sum += r.recon.value()[0] * n;
    ev.kl_sum += r.kl.value()[0] * n;
    ev.log_likelihood -= r.recon.value()[0] * n;
    for (double c : batch.counts.data()) ev.token_count += c;
    ev.doc_count += batch.size();
  }
  return ev;
}

Tensor topic_word_matrix(const DiffEtm& model) {
  Tape tape(false);
  ParamBinder bind(tape, model.params());
  Var beta = topic_word_dist(bind(std::string(names::kTopicEmbeddings)),
                             bind(std::string(names::kWordEmbeddings)));
  return beta.value();
}

}  // namespace diffetm::model
