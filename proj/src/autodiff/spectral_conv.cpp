#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numbers>

#include "deltaphi/autodiff.hpp"
#include "deltaphi/error.hpp"

namespace dphi::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Idx = Eigen::Index;

// Truncated DFT factors for one (H, W, modes) configuration. The forward
// transform of a real plane x (H x W) onto the retained block is
//   X = (Ch - i Sh) x (Cw - i Sw)
// and the half-spectrum inverse is
//   y = Re[(Ch^T + i Sh^T)/H * Y * (Gwr + i Gwi)]
// where Gw carries the 1/W normalization and the factor 2 for columns whose
// conjugate partner is not stored.
struct SpectralBasis {
  Idx h, w, rows, cols;
  RowMat ch, sh;    // rows x h
  RowMat cw, sw;    // w x cols
  RowMat gwr, gwi;  // cols x w

  SpectralBasis(std::size_t height, std::size_t width, std::size_t modes_h, std::size_t modes_w)
      : h(static_cast<Idx>(height)),
        w(static_cast<Idx>(width)),
        rows(static_cast<Idx>(2 * modes_h)),
        cols(static_cast<Idx>(modes_w)),
        ch(rows, h), sh(rows, h), cw(w, cols), sw(w, cols), gwr(cols, w), gwi(cols, w) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (Idx r = 0; r < rows; ++r) {
      const Idx ky = r < static_cast<Idx>(modes_h) ? r : h - rows + r;
      for (Idx i = 0; i < h; ++i) {
        // Reduce the phase index first so large grids keep full precision.
        const double phase = two_pi * static_cast<double>((ky * i) % h) / static_cast<double>(h);
        ch(r, i) = std::cos(phase);
        sh(r, i) = std::sin(phase);
      }
    }
    for (Idx k = 0; k < cols; ++k) {
      const bool self_conjugate = k == 0 || 2 * k == w;
      const double weight = (self_conjugate ? 1.0 : 2.0) / static_cast<double>(w);
      for (Idx j = 0; j < w; ++j) {
        const double phase = two_pi * static_cast<double>((k * j) % w) / static_cast<double>(w);
        cw(j, k) = std::cos(phase);
        sw(j, k) = std::sin(phase);
        gwr(k, j) = weight * std::cos(phase);
        gwi(k, j) = weight * std::sin(phase);
      }
    }
  }
};

struct SpectralSaved {
  std::shared_ptr<const SpectralBasis> basis;
  RowMat xr, xi;  // in x (rows * cols)
};

}  // namespace

Var spectral_conv(Var x, Var weight, std::size_t modes_h, std::size_t modes_w) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  DPHI_REQUIRE(xv.rank() == 3, "spectral_conv: expected [channels, height, width]");
  const std::size_t height = xv.dim(1), width = xv.dim(2);
  DPHI_REQUIRE(modes_h >= 1 && modes_w >= 1, "spectral_conv: modes must be positive");
  DPHI_REQUIRE(2 * modes_h <= height, "spectral_conv: modes_h exceeds height / 2");
  DPHI_REQUIRE(modes_w <= width / 2 + 1, "spectral_conv: modes_w exceeds width / 2 + 1");
  DPHI_REQUIRE(wv.rank() == 5 && wv.dim(0) == xv.dim(0) && wv.dim(2) == 2 * modes_h &&
                   wv.dim(3) == modes_w && wv.dim(4) == 2,
               "spectral_conv: weight must be [in, out, 2 * modes_h, modes_w, 2]");

  const Idx cin = static_cast<Idx>(xv.dim(0));
  const Idx cout = static_cast<Idx>(wv.dim(1));
  auto basis = std::make_shared<const SpectralBasis>(height, width, modes_h, modes_w);
  const SpectralBasis& b = *basis;
  const Idx m = b.rows * b.cols;

  // Forward DFT of every input channel onto the retained block.
  Eigen::Map<const RowMat> xin(xv.data(), cin * b.h, b.w);
  const RowMat a_all = xin * b.cw;
  const RowMat b_all = xin * b.sw;
  auto saved = std::make_shared<SpectralSaved>();
  saved->basis = basis;
  saved->xr.resize(cin, m);
  saved->xi.resize(cin, m);
  for (Idx c = 0; c < cin; ++c) {
    const auto ac = a_all.middleRows(c * b.h, b.h);
    const auto bc = b_all.middleRows(c * b.h, b.h);
    Eigen::Map<RowMat>(saved->xr.row(c).data(), b.rows, b.cols).noalias() = b.ch * ac - b.sh * bc;
    Eigen::Map<RowMat>(saved->xi.row(c).data(), b.rows, b.cols).noalias() = -(b.ch * bc + b.sh * ac);
  }

  // Per-mode complex channel mixing.
  RowMat yr = RowMat::Zero(cout, m), yi = RowMat::Zero(cout, m);
  const double* wp = wv.data();
  for (Idx i = 0; i < cin; ++i) {
    const double* xr = saved->xr.row(i).data();
    const double* xi = saved->xi.row(i).data();
    for (Idx o = 0; o < cout; ++o) {
      const double* wio = wp + (i * cout + o) * m * 2;
      double* pr = yr.row(o).data();
      double* pi = yi.row(o).data();
      for (Idx k = 0; k < m; ++k) {
        const double wr = wio[2 * k], wi = wio[2 * k + 1];
        pr[k] += xr[k] * wr - xi[k] * wi;
        pi[k] += xr[k] * wi + xi[k] * wr;
      }
    }
  }

  // Inverse transform of the retained block back to the grid.
  RowMat zr(cout * b.h, b.cols), zi(cout * b.h, b.cols);
  const double inv_h = 1.0 / static_cast<double>(b.h);
  for (Idx o = 0; o < cout; ++o) {
    Eigen::Map<const RowMat> yro(yr.row(o).data(), b.rows, b.cols);
    Eigen::Map<const RowMat> yio(yi.row(o).data(), b.rows, b.cols);
    zr.middleRows(o * b.h, b.h).noalias() = inv_h * (b.ch.transpose() * yro - b.sh.transpose() * yio);
    zi.middleRows(o * b.h, b.h).noalias() = inv_h * (b.ch.transpose() * yio + b.sh.transpose() * yro);
  }
  Tensor y({static_cast<std::size_t>(cout), height, width});
  Eigen::Map<RowMat> ym(y.data(), cout * b.h, b.w);
  ym.noalias() = zr * b.gwr;
  ym.noalias() -= zi * b.gwi;

  const std::size_t x_id = x.id, w_id = weight.id;
  return x.tape->record(std::move(y), {x, weight}, [=](Tape& t, std::size_t self) {
    const SpectralBasis& bb = *saved->basis;
    Eigen::Map<const RowMat> g(t.grad_ref(self).data(), cout * bb.h, bb.w);
    const RowMat gzr = g * bb.gwr.transpose();
    const RowMat gzi = -(g * bb.gwi.transpose());
    RowMat gyr(cout, m), gyi(cout, m);
    for (Idx o = 0; o < cout; ++o) {
      const auto gzro = gzr.middleRows(o * bb.h, bb.h);
      const auto gzio = gzi.middleRows(o * bb.h, bb.h);
      Eigen::Map<RowMat>(gyr.row(o).data(), bb.rows, bb.cols).noalias() =
          inv_h * (bb.ch * gzro + bb.sh * gzio);
      Eigen::Map<RowMat>(gyi.row(o).data(), bb.rows, bb.cols).noalias() =
          inv_h * (bb.ch * gzio - bb.sh * gzro);
    }

    const bool want_w = t.wants_grad(w_id);
    const bool want_x = t.wants_grad(x_id);
    const double* wq = t.value({&t, w_id}).data();
    double* gw = want_w ? t.grad_accumulator(w_id).data() : nullptr;
    RowMat gxr = RowMat::Zero(cin, m), gxi = RowMat::Zero(cin, m);
    for (Idx i = 0; i < cin; ++i) {
      const double* xr = saved->xr.row(i).data();
      const double* xi = saved->xi.row(i).data();
      double* dxr = gxr.row(i).data();
      double* dxi = gxi.row(i).data();
      for (Idx o = 0; o < cout; ++o) {
        const double* gr = gyr.row(o).data();
        const double* gi = gyi.row(o).data();
        const double* wio = wq + (i * cout + o) * m * 2;
        if (want_w) {
          double* dw = gw + (i * cout + o) * m * 2;
          for (Idx k = 0; k < m; ++k) {
            dw[2 * k] += gr[k] * xr[k] + gi[k] * xi[k];
            dw[2 * k + 1] += gi[k] * xr[k] - gr[k] * xi[k];
          }
        }
        if (want_x) {
          for (Idx k = 0; k < m; ++k) {
            const double wr = wio[2 * k], wi = wio[2 * k + 1];
            dxr[k] += gr[k] * wr + gi[k] * wi;
            dxi[k] += gi[k] * wr - gr[k] * wi;
          }
        }
      }
    }
    if (!want_x) return;

    RowMat ga(cin * bb.h, bb.cols), gb(cin * bb.h, bb.cols);
    for (Idx c = 0; c < cin; ++c) {
      Eigen::Map<const RowMat> dxr(gxr.row(c).data(), bb.rows, bb.cols);
      Eigen::Map<const RowMat> dxi(gxi.row(c).data(), bb.rows, bb.cols);
      ga.middleRows(c * bb.h, bb.h).noalias() = bb.ch.transpose() * dxr - bb.sh.transpose() * dxi;
      gb.middleRows(c * bb.h, bb.h).noalias() = -(bb.sh.transpose() * dxr + bb.ch.transpose() * dxi);
    }
    Eigen::Map<RowMat> gx(t.grad_accumulator(x_id).data(), cin * bb.h, bb.w);
    gx.noalias() += ga * bb.cw.transpose();
    gx.noalias() += gb * bb.sw.transpose();
  });
}

}  // namespace dphi::ad
