#include "diffetm/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include "binary_io.hpp"
#include "diffetm/errors.hpp"

namespace diffetm::trainer {

namespace {
constexpr char kMagic[8] = {'D', 'E', 'T', 'M', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const model::DiffEtm& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  detail::LeWriter w(out);
  const auto& cfg = model.config();
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32(cfg.num_topics);
  w.u32(cfg.embedding_size);
  w.u32(cfg.hidden_size);
  w.u32(cfg.diffusion_steps);
  w.f64(cfg.beta_0);
  w.f64(cfg.beta_T);
  w.f64(cfg.kl_weight);
  w.u32(static_cast<std::uint32_t>(cfg.mode));
  w.u64(cfg.seed);
  w.u32(static_cast<std::uint32_t>(model.vocab_size()));
  const auto& entries = model.params().entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& p : entries) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rows()));
    w.u32(static_cast<std::uint32_t>(p.value.cols()));
    for (double v : p.value.data()) w.f32(static_cast<float>(v));
  }
  out.flush();
  if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

model::DiffEtm load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  detail::LeReader r(in);
  const std::string where = "checkpoint '" + path.string() + "': ";
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw CorruptCheckpoint(where + what);
  };

  char magic[8];
  need(r.bytes(magic, sizeof(magic)) && std::equal(magic, magic + 8, kMagic), "bad magic");
  std::uint32_t version = 0;
  need(r.u32(version), "truncated header");
  if (version != kCheckpointVersion) {
    throw CorruptCheckpoint(where + "unsupported format version " + std::to_string(version) +
                            " (this build reads version " + std::to_string(kCheckpointVersion) +
                            ")");
  }
  model::ModelConfig cfg;
  std::uint32_t mode = 0, vocab = 0, count = 0;
  need(r.u32(cfg.num_topics) && r.u32(cfg.embedding_size) && r.u32(cfg.hidden_size) &&
           r.u32(cfg.diffusion_steps) && r.f64(cfg.beta_0) && r.f64(cfg.beta_T) &&
           r.f64(cfg.kl_weight) && r.u32(mode) && r.u64(cfg.seed) && r.u32(vocab) &&
           r.u32(count),
       "truncated config block");
  need(mode <= 2, "invalid mode");
  cfg.mode = static_cast<model::Mode>(mode);

  std::optional<model::DiffEtm> m;
  try {
    m.emplace(cfg, vocab);
  } catch (const Error& e) {
    throw CorruptCheckpoint(where + "invalid config block: " + e.what());
  }
  auto& entries = m->params().entries();
  need(count == entries.size(), "parameter count does not match config");
  for (auto& p : entries) {
    std::string name;
    std::uint32_t rows = 0, cols = 0;
    need(r.str(name) && r.u32(rows) && r.u32(cols), "truncated parameter header");
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw CorruptCheckpoint(where + "unexpected parameter '" + name + "'");
    }
    for (double& v : p.value.data()) {
      float f;
      need(r.f32(f), "truncated parameter data");
      v = static_cast<double>(f);
    }
  }
  need(r.at_eof(), "trailing bytes");
  return std::move(*m);
}

}  // namespace diffetm::trainer
