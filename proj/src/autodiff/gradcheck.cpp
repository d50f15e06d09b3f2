#include <algorithm>
#include <cmath>

#include "deltaphi/autodiff.hpp"
#include "deltaphi/error.hpp"

namespace dphi::ad {
namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  const Var out = f(tape, leaves);
  DPHI_REQUIRE(out.value().size() == 1, "gradient_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

double gradient_check(const ScalarFunction& f, std::vector<Tensor> params, double eps) {
  DPHI_REQUIRE(eps >= 1e-7 && eps <= 1e-3, "gradient_check: epsilon must lie in [1e-7, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    const Var loss = f(tape, leaves);
    tape.backward(loss);
    for (const Var& v : leaves) analytic.push_back(tape.grad(v));
  }

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const double saved = params[p][k];
      params[p][k] = saved + eps;
      const double up = evaluate(f, params);
      params[p][k] = saved - eps;
      const double down = evaluate(f, params);
      params[p][k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = analytic[p][k];
      const double dev =
          std::abs(exact - numeric) / (std::max(std::abs(exact), std::abs(numeric)) + 1e-6);
      worst = std::max(worst, dev);
    }
  }
  return worst;
}

}  // namespace dphi::ad
