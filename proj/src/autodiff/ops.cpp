#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "deltaphi/autodiff.hpp"
#include "deltaphi/error.hpp"

namespace dphi::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstVecMap as_vec(const Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.size())}; }
VecMap as_vec(std::span<double> s) { return {s.data(), static_cast<Eigen::Index>(s.size())}; }

// Eigen's vectorized reductions peel a prologue that depends on the data
// address, so their rounding varies between runs. Reductions that feed the
// training trajectory are summed in fixed order instead.
double ordered_sum(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += v[k];
  return s;
}

double ordered_norm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += v[k] * v[k];
  return std::sqrt(s);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  DPHI_REQUIRE(a.same_shape(b), std::string(op) + ": shape mismatch");
}

void require_spatial(const Tensor& x, const char* op) {
  DPHI_REQUIRE(x.rank() == 3, std::string(op) + ": expected [channels, height, width]");
}

template <class F, class DF>
Var unary_pointwise(Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = f(xv[k]);
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi, df](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& in = t.value({&t, xi});
    auto gx = t.grad_accumulator(xi);
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g[k] * df(in[k]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor y(a.value().shape());
  as_vec(y.values()) = as_vec(a.value()) + as_vec(b.value());
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = as_vec(t.grad_ref(self));
    if (t.wants_grad(ai)) as_vec(t.grad_accumulator(ai)) += g;
    if (t.wants_grad(bi)) as_vec(t.grad_accumulator(bi)) += g;
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor y(a.value().shape());
  as_vec(y.values()) = as_vec(a.value()) - as_vec(b.value());
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = as_vec(t.grad_ref(self));
    if (t.wants_grad(ai)) as_vec(t.grad_accumulator(ai)) += g;
    if (t.wants_grad(bi)) as_vec(t.grad_accumulator(bi)) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor y(a.value().shape());
  as_vec(y.values()) = as_vec(a.value()).cwiseProduct(as_vec(b.value()));
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = as_vec(t.grad_ref(self));
    if (t.wants_grad(ai))
      as_vec(t.grad_accumulator(ai)) += g.cwiseProduct(as_vec(t.value({&t, bi})));
    if (t.wants_grad(bi))
      as_vec(t.grad_accumulator(bi)) += g.cwiseProduct(as_vec(t.value({&t, ai})));
  });
}

Var scale(Var a, double s) {
  Tensor y(a.value().shape());
  as_vec(y.values()) = s * as_vec(a.value());
  const std::size_t ai = a.id;
  return a.tape->record(std::move(y), {a}, [ai, s](Tape& t, std::size_t self) {
    as_vec(t.grad_accumulator(ai)) += s * as_vec(t.grad_ref(self));
  });
}

Var channel_linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_spatial(xv, "channel_linear");
  DPHI_REQUIRE(wv.rank() == 2 && wv.dim(1) == xv.dim(0),
               "channel_linear: weight must be [out, in] with in = input channels");
  DPHI_REQUIRE(bv.rank() == 1 && bv.dim(0) == wv.dim(0), "channel_linear: bias must be [out]");
  const auto cin = static_cast<Eigen::Index>(xv.dim(0));
  const auto cout = static_cast<Eigen::Index>(wv.dim(0));
  const auto points = static_cast<Eigen::Index>(xv.dim(1) * xv.dim(2));

  Tensor y({wv.dim(0), xv.dim(1), xv.dim(2)});
  MatMap ym(y.data(), cout, points);
  ym.noalias() = ConstMatMap(wv.data(), cout, cin) * ConstMatMap(xv.data(), cin, points);
  ym.colwise() += ConstVecMap(bv.data(), cout);

  const std::size_t xi = x.id, wi = weight.id, bi = bias.id;
  return x.tape->record(std::move(y), {x, weight, bias},
                        [=](Tape& t, std::size_t self) {
                          ConstMatMap g(t.grad_ref(self).data(), cout, points);
                          if (t.wants_grad(xi))
                            MatMap(t.grad_accumulator(xi).data(), cin, points).noalias() +=
                                ConstMatMap(t.value({&t, wi}).data(), cout, cin).transpose() * g;
                          if (t.wants_grad(wi))
                            MatMap(t.grad_accumulator(wi).data(), cout, cin).noalias() +=
                                g * ConstMatMap(t.value({&t, xi}).data(), cin, points).transpose();
                          if (t.wants_grad(bi)) {
                            auto gb = t.grad_accumulator(bi);
                            for (Eigen::Index o = 0; o < cout; ++o)
                              gb[static_cast<std::size_t>(o)] +=
                                  ordered_sum(g.row(o).data(), static_cast<std::size_t>(points));
                          }
                        });
}

namespace {

// Column matrix of 3x3 neighbourhoods: row (c * 9 + di * 3 + dj), column p.
RowMat im2col3x3(const Tensor& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(c * 9), static_cast<Eigen::Index>(h * w));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (int di = 0; di < 3; ++di)
      for (int dj = 0; dj < 3; ++dj) {
        double* row = cols.row(static_cast<Eigen::Index>(ch * 9 + di * 3 + dj)).data();
        for (std::size_t i = 0; i < h; ++i) {
          const long si = static_cast<long>(i) + di - 1;
          if (si < 0 || si >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < w; ++j) {
            const long sj = static_cast<long>(j) + dj - 1;
            if (sj < 0 || sj >= static_cast<long>(w)) continue;
            row[i * w + j] = x[(ch * h + static_cast<std::size_t>(si)) * w + static_cast<std::size_t>(sj)];
          }
        }
      }
  return cols;
}

void col2im3x3(const RowMat& cols, std::span<double> gx, std::size_t c, std::size_t h, std::size_t w) {
  for (std::size_t ch = 0; ch < c; ++ch)
    for (int di = 0; di < 3; ++di)
      for (int dj = 0; dj < 3; ++dj) {
        const double* row = cols.row(static_cast<Eigen::Index>(ch * 9 + di * 3 + dj)).data();
        for (std::size_t i = 0; i < h; ++i) {
          const long si = static_cast<long>(i) + di - 1;
          if (si < 0 || si >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < w; ++j) {
            const long sj = static_cast<long>(j) + dj - 1;
            if (sj < 0 || sj >= static_cast<long>(w)) continue;
            gx[(ch * h + static_cast<std::size_t>(si)) * w + static_cast<std::size_t>(sj)] += row[i * w + j];
          }
        }
      }
}

}  // namespace

Var conv3x3(Var x, Var weight) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_spatial(xv, "conv3x3");
  DPHI_REQUIRE(wv.rank() == 4 && wv.dim(1) == xv.dim(0) && wv.dim(2) == 3 && wv.dim(3) == 3,
               "conv3x3: weight must be [out, in, 3, 3]");
  const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2), cout = wv.dim(0);
  const auto k = static_cast<Eigen::Index>(cin * 9);
  const auto points = static_cast<Eigen::Index>(h * w);
  const auto co = static_cast<Eigen::Index>(cout);

  const RowMat cols = im2col3x3(xv);
  Tensor y({cout, h, w});
  MatMap(y.data(), co, points).noalias() = ConstMatMap(wv.data(), co, k) * cols;

  const std::size_t xi = x.id, wi = weight.id;
  return x.tape->record(std::move(y), {x, weight}, [=](Tape& t, std::size_t self) {
    ConstMatMap g(t.grad_ref(self).data(), co, points);
    if (t.wants_grad(wi))
      MatMap(t.grad_accumulator(wi).data(), co, k).noalias() +=
          g * im2col3x3(t.value({&t, xi})).transpose();
    if (t.wants_grad(xi)) {
      const RowMat gcols = ConstMatMap(t.value({&t, wi}).data(), co, k).transpose() * g;
      col2im3x3(gcols, t.grad_accumulator(xi), cin, h, w);
    }
  });
}

Var gelu(Var x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary_pointwise(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

Var relu(Var x) {
  return unary_pointwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var mean_reduce(Var x) {
  const Tensor& xv = x.value();
  const double n = static_cast<double>(xv.size());
  Tensor y = Tensor::scalar(ordered_sum(xv.data(), xv.size()) / n);
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi, n](Tape& t, std::size_t self) {
    as_vec(t.grad_accumulator(xi)).array() += t.grad_ref(self)[0] / n;
  });
}

Var l2_norm(Var x) {
  const Tensor& xv = x.value();
  const double norm = ordered_norm(xv.data(), xv.size());
  const std::size_t xi = x.id;
  return x.tape->record(Tensor::scalar(norm), {x}, [xi, norm](Tape& t, std::size_t self) {
    // d||x||/dx = x / ||x||; the subgradient at the origin is taken as 0.
    if (norm == 0.0) return;
    as_vec(t.grad_accumulator(xi)) += (t.grad_ref(self)[0] / norm) * as_vec(t.value({&t, xi}));
  });
}

}  // namespace dphi::ad
