#include "diffetm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "diffetm/errors.hpp"

namespace diffetm::grad {

double evaluate_loss(ParamStore& store, const LossBuilder& loss) {
  Tape tape(false);
  Var out = loss(tape, store);
  if (out.value().size() != 1) throw NotScalar("loss is not scalar: " + out.value().shape_str());
  return out.value()[0];
}

FiniteDiffResult finite_diff_check(ParamStore& store, const std::string& name,
                                   const LossBuilder& loss, const FiniteDiffOptions& opts) {
  store.zero_grad();
  {
    Tape tape;
    Var out = loss(tape, store);
    tape.backward(out);
  }
  const Tensor analytic = store.grad(name);
  store.zero_grad();

  Tensor& value = store.value(name);
  std::vector<std::size_t> coords(value.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  FiniteDiffResult res;
  for (std::size_t i : coords) {
    const double orig = value[i];
    value[i] = orig + opts.step;
    const double plus = evaluate_loss(store, loss);
    value[i] = orig - opts.step;
    const double minus = evaluate_loss(store, loss);
    value[i] = orig;

    const double numeric = (plus - minus) / (2.0 * opts.step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (err > res.max_rel_error || res.coords_checked == 0) {
      res.max_rel_error = err;
      res.worst_index = i;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
    ++res.coords_checked;
  }
  return res;
}

}  // namespace diffetm::grad
