#include "vitlp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vitlp {

namespace {

double eval_finite(const std::function<Tensor()>& loss) {
  const double v = loss().item();
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           const GradCheckOptions& opts) {
  for (auto& p : params) p.zero_grad();
  Tensor l = loss();
  if (!std::isfinite(l.item())) throw NonFiniteError("grad_check: loss evaluated to a non-finite value");
  l.backward();

  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(p.size(), 0.0);
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.samples_per_param > 0 && opts.samples_per_param < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.samples_per_param);
    }
    auto values = p.mutable_data();
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + opts.eps;
      const double plus = eval_finite(loss);
      values[c] = saved - opts.eps;
      const double minus = eval_finite(loss);
      values[c] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double err = std::abs(analytic[c] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = std::to_string(pi) + "[" + std::to_string(c) + "]";
      }
    }
  }
  return result;
}

}  // namespace vitlp
