#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtlsed/errors.hpp"
#include "mtlsed/model.hpp"
#include "mtlsed/random.hpp"

namespace mtlsed {

GradCheckResult grad_check(const std::vector<nn::Parameter<double>*>& params,
                           const std::function<nn::Var(nn::Tape<double>&)>& loss, double epsilon,
                           std::uint64_t seed) {
  require(epsilon >= 1e-6 && epsilon <= 1e-3, "grad_check: epsilon must lie in [1e-6, 1e-3]");
  auto evaluate = [&] {
    nn::Tape<double> tape;
    const double v = tape.scalar(loss(tape));
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: loss is not finite");
    return v;
  };

  for (auto* p : params) p->zero_grad();
  {
    nn::Tape<double> tape;
    nn::Var root = loss(tape);
    if (!std::isfinite(tape.scalar(root))) throw std::runtime_error("grad_check: loss is not finite");
    tape.backward(root);
  }

  GradCheckResult result;
  Rng rng = make_rng(seed, {});
  for (auto* p : params) {
    const std::size_t n = p->value.size();
    const std::size_t want = std::max<std::size_t>((n + 99) / 100, std::min<std::size_t>(n, 32));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(idx, rng);
    idx.resize(want);
    for (std::size_t i : idx) {
      double& w = p->value.data[i];
      const double saved = w;
      w = saved + epsilon;
      const double up = evaluate();
      w = saved - epsilon;
      const double down = evaluate();
      w = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p->name + "[" + std::to_string(i) + "]";
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mtlsed
