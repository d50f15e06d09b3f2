#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "deltaphi/datagen.hpp"
#include "deltaphi/error.hpp"
#include "deltaphi/parallel.hpp"

namespace dphi {

void validate(const DarcyConfig& c) {
  DPHI_REQUIRE(c.resolution >= 8, "DarcyConfig: resolution must be >= 8");
  DPHI_REQUIRE(c.num_samples >= 1, "DarcyConfig: num_samples must be positive");
  DPHI_REQUIRE(c.coefficient_low > 0.0 && c.coefficient_low < c.coefficient_high,
               "DarcyConfig: need 0 < coefficient_low < coefficient_high");
  DPHI_REQUIRE(c.correlation_length > 0.0, "DarcyConfig: correlation_length must be positive");
}

GridField generate_darcy_coefficient(const DarcyConfig& config, std::size_t index) {
  validate(config);
  DPHI_REQUIRE(index < config.num_samples, "generate_darcy_coefficient: index out of range");
  GridField field = gaussian_random_field(config.resolution, config.correlation_length,
                                          sample_seed(config.seed, index));
  std::vector<double> sorted(field.data());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
  for (double& v : field.values()) v = v > median ? config.coefficient_high : config.coefficient_low;
  return field;
}

namespace {

// Nodes sit at x = j/n, the same points as the periodic fields, so Fourier
// resampling lines solutions up across resolutions. Row and column 0 carry
// the boundary; the x = 1 side is their periodic image and is not stored.
// Every reduction pairs mirror-image nodes j and n - j before accumulating,
// so reflecting the coefficient reflects the iterates bit for bit.
class DarcyOperator {
 public:
  explicit DarcyOperator(const GridField& a) : n_(a.height()) {
    const double h = 1.0 / static_cast<double>(n_);
    inv_h2_ = 1.0 / (h * h);
    east_.assign(n_ * n_, 0.0);
    south_.assign(n_ * n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        east_[i * n_ + j] = harmonic(a.at(0, i, j), a.at(0, i, (j + 1) % n_));
        south_[i * n_ + j] = harmonic(a.at(0, i, j), a.at(0, (i + 1) % n_, j));
      }
  }

  std::size_t n() const { return n_; }

  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 1; i < n_; ++i)
      for (std::size_t j = 1; j < n_; ++j) {
        const std::size_t k = i * n_ + j;
        const double ae = east_[k], aw = east_[k - 1];
        const double as = south_[k], an = south_[k - n_];
        const double ue = j + 1 < n_ ? u[k + 1] : 0.0;
        const double us = i + 1 < n_ ? u[k + n_] : 0.0;
        const double diag = (ae + aw) + (an + as);
        const double off = (ae * ue + aw * u[k - 1]) + (an * u[k - n_] + as * us);
        out[k] = (diag * u[k] - off) * inv_h2_;
      }
  }

  double dot(const std::vector<double>& x, const std::vector<double>& y) const {
    double total = row_dot(x, y, 0);
    for (std::size_t i = 1; i <= n_ / 2; ++i) {
      const std::size_t mi = n_ - i;
      total += i == mi ? row_dot(x, y, i) : row_dot(x, y, i) + row_dot(x, y, mi);
    }
    return total;
  }

 private:
  static double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

  double row_dot(const std::vector<double>& x, const std::vector<double>& y, std::size_t i) const {
    const std::size_t base = i * n_;
    double s = x[base] * y[base];
    for (std::size_t j = 1; j <= n_ / 2; ++j) {
      const std::size_t mj = n_ - j;
      const double left = x[base + j] * y[base + j];
      s += j == mj ? left : left + x[base + mj] * y[base + mj];
    }
    return s;
  }

  std::size_t n_;
  double inv_h2_;
  std::vector<double> east_, south_;
};

std::vector<double> interior_rhs(const GridField& forcing) {
  const std::size_t n = forcing.height();
  std::vector<double> f(n * n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 1; j < n; ++j) f[i * n + j] = forcing.at(0, i, j);
  return f;
}

void check_darcy_inputs(const GridField& a, const GridField& forcing) {
  DPHI_REQUIRE(a.channels() == 1, "solve_darcy: coefficient must have one channel");
  DPHI_REQUIRE(a.height() == a.width(), "solve_darcy: grid must be square");
  DPHI_REQUIRE(forcing.shape() == a.shape(), "solve_darcy: forcing shape mismatch");
  for (double v : a.values())
    DPHI_REQUIRE(v > 0.0 && std::isfinite(v), "solve_darcy: coefficient must be strictly positive");
}

}  // namespace

GridField solve_darcy(const GridField& coefficient, double forcing) {
  return solve_darcy(coefficient, GridField(coefficient.shape(), forcing));
}

GridField solve_darcy(const GridField& coefficient, const GridField& forcing) {
  check_darcy_inputs(coefficient, forcing);
  const DarcyOperator op(coefficient);
  const std::size_t n = op.n();
  const std::vector<double> f = interior_rhs(forcing);
  const double f_norm = std::sqrt(op.dot(f, f));
  GridField solution(coefficient.shape(), 0.0);
  if (f_norm == 0.0) return solution;

  constexpr double kTolerance = 1e-10;
  const std::size_t max_iterations = 10 * n * n;
  std::vector<double> u(n * n, 0.0), r(f), p(f), ap(n * n);
  double rr = op.dot(r, r);
  std::size_t iterations = 0;
  while (true) {
    while (std::sqrt(rr) > kTolerance * f_norm) {
      if (iterations++ >= max_iterations)
        throw SolverFailure("solve_darcy: conjugate gradient did not converge in " +
                            std::to_string(max_iterations) + " iterations");
      op.apply(p, ap);
      const double alpha = rr / op.dot(p, ap);
      for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] += alpha * p[k];
        r[k] -= alpha * ap[k];
      }
      const double rr_next = op.dot(r, r);
      const double beta = rr_next / rr;
      rr = rr_next;
      for (std::size_t k = 0; k < p.size(); ++k) p[k] = r[k] + beta * p[k];
    }
    // The recursive residual drifts from the true one; restart from the
    // true residual until it also meets the tolerance.
    op.apply(u, ap);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = f[k] - ap[k];
    rr = op.dot(r, r);
    if (std::sqrt(rr) <= kTolerance * f_norm) break;
    p = r;
  }
  std::copy(u.begin(), u.end(), solution.values().begin());
  return solution;
}

double darcy_residual(const GridField& coefficient, const GridField& solution, const GridField& forcing) {
  check_darcy_inputs(coefficient, forcing);
  DPHI_REQUIRE(solution.shape() == coefficient.shape(), "darcy_residual: solution shape mismatch");
  const DarcyOperator op(coefficient);
  const std::vector<double> f = interior_rhs(forcing);
  std::vector<double> u(solution.data()), au(u.size());
  const std::size_t n = op.n();
  for (std::size_t k = 0; k < n; ++k) u[k] = u[k * n] = 0.0;
  op.apply(u, au);
  for (std::size_t k = 0; k < au.size(); ++k) au[k] -= f[k];
  const double f_norm = std::sqrt(op.dot(f, f));
  const double r_norm = std::sqrt(op.dot(au, au));
  if (f_norm == 0.0) return r_norm;
  return r_norm / f_norm;
}

TrajectorySample generate_darcy_sample(const DarcyConfig& config, std::size_t index) {
  GridField a = generate_darcy_coefficient(config, index);
  GridField u = solve_darcy(a, config.forcing);
  return {std::move(a), std::move(u), index};
}

Dataset generate_darcy_dataset(const DarcyConfig& config) {
  validate(config);
  std::vector<TrajectorySample> samples(config.num_samples);
  parallel_for(config.num_samples, [&](std::size_t i) { samples[i] = generate_darcy_sample(config, i); });
  return Dataset(std::move(samples));
}

}  // namespace dphi
