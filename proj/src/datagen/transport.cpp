#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "deltaphi/datagen.hpp"
#include "deltaphi/error.hpp"
#include "deltaphi/fft.hpp"
#include "deltaphi/parallel.hpp"

namespace dphi {

void validate(const TimeSeriesConfig& c) {
  DPHI_REQUIRE(c.resolution >= 8, "TimeSeriesConfig: resolution must be >= 8");
  DPHI_REQUIRE(c.num_samples >= 1, "TimeSeriesConfig: num_samples must be positive");
  DPHI_REQUIRE(c.input_steps >= 3, "TimeSeriesConfig: input_steps must be >= 3");
  DPHI_REQUIRE(c.output_steps >= 1, "TimeSeriesConfig: output_steps must be positive");
  DPHI_REQUIRE(c.viscosity >= 0.0 && c.dt > 0.0, "TimeSeriesConfig: need viscosity >= 0 and dt > 0");
  DPHI_REQUIRE(c.correlation_length > 0.0, "TimeSeriesConfig: correlation_length must be positive");
}

namespace {

using cplx = std::complex<double>;

// Pseudo-spectral right-hand side of the conservative advection term
// -div(v w); the k = 0 mode is identically zero, so the mean is conserved.
class TransportRhs {
 public:
  TransportRhs(std::size_t n, double amplitude) : n_(n), fft_(n, n), vx_(n * n), vy_(n * n), wavenumber_(n) {
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double x = static_cast<double>(j) / static_cast<double>(n);
        const double y = static_cast<double>(i) / static_cast<double>(n);
        vx_[i * n + j] = amplitude * std::sin(two_pi * y);
        vy_[i * n + j] = amplitude * std::sin(two_pi * x);
      }
    for (std::size_t k = 0; k < n; ++k) {
      // The Nyquist mode has no well-defined derivative on a real grid.
      const bool nyquist = n % 2 == 0 && 2 * k == n;
      wavenumber_[k] = nyquist ? 0.0 : two_pi * static_cast<double>(signed_frequency(k, n));
    }
    active_ = amplitude != 0.0;
  }

  const Fft2d& fft() const { return fft_; }

  void operator()(const std::vector<cplx>& spectrum, std::vector<cplx>& out) const {
    const std::size_t m = n_ * n_;
    if (!active_) {
      std::fill(out.begin(), out.end(), cplx(0.0));
      return;
    }
    std::vector<cplx> w(spectrum);
    fft_.inverse(w);
    std::vector<cplx> fx(m), fy(m);
    const double norm = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double wk = w[k].real() * norm;
      fx[k] = vx_[k] * wk;
      fy[k] = vy_[k] * wk;
    }
    fft_.forward(fx);
    fft_.forward(fy);
    const cplx i_unit(0.0, 1.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t k = i * n_ + j;
        out[k] = -i_unit * (wavenumber_[j] * fx[k] + wavenumber_[i] * fy[k]);
      }
  }

  double laplacian_symbol(std::size_t i, std::size_t j) const {
    const double two_pi = 2.0 * std::numbers::pi;
    const double ky = two_pi * static_cast<double>(signed_frequency(i, n_));
    const double kx = two_pi * static_cast<double>(signed_frequency(j, n_));
    return kx * kx + ky * ky;
  }

 private:
  std::size_t n_;
  Fft2d fft_;
  std::vector<double> vx_, vy_, wavenumber_;
  bool active_ = true;
};

}  // namespace

std::vector<GridField> evolve_transport(const GridField& initial, const TimeSeriesConfig& config,
                                        std::size_t steps) {
  DPHI_REQUIRE(initial.channels() == 1 && initial.height() == initial.width(),
               "evolve_transport: initial field must be square and single-channel");
  DPHI_REQUIRE(config.dt > 0.0 && config.viscosity >= 0.0, "evolve_transport: invalid dt or viscosity");
  const std::size_t n = initial.height();
  const std::size_t m = n * n;
  const TransportRhs rhs(n, config.velocity_amplitude);

  std::vector<double> decay_full(m), decay_half(m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double rate = config.viscosity * rhs.laplacian_symbol(i, j);
      decay_full[i * n + j] = std::exp(-rate * config.dt);
      decay_half[i * n + j] = std::exp(-0.5 * rate * config.dt);
    }

  std::vector<cplx> state(m);
  for (std::size_t k = 0; k < m; ++k) state[k] = initial.values()[k];
  rhs.fft().forward(state);
  const double initial_norm = initial.l2_norm();

  std::vector<GridField> frames;
  frames.reserve(steps + 1);
  frames.push_back(initial);
  std::vector<cplx> k1(m), k2(m), k3(m), k4(m), stage(m), spatial(m);
  const double dt = config.dt;
  for (std::size_t step = 0; step < steps; ++step) {
    // Lawson integrating-factor RK4: diffusion is integrated exactly.
    rhs(state, k1);
    for (std::size_t k = 0; k < m; ++k) stage[k] = decay_half[k] * (state[k] + 0.5 * dt * k1[k]);
    rhs(stage, k2);
    for (std::size_t k = 0; k < m; ++k) stage[k] = decay_half[k] * state[k] + 0.5 * dt * k2[k];
    rhs(stage, k3);
    for (std::size_t k = 0; k < m; ++k) stage[k] = decay_full[k] * state[k] + dt * decay_half[k] * k3[k];
    rhs(stage, k4);
    for (std::size_t k = 0; k < m; ++k)
      state[k] = decay_full[k] * state[k] +
                 dt / 6.0 * (decay_full[k] * k1[k] + 2.0 * decay_half[k] * (k2[k] + k3[k]) + k4[k]);

    spatial = state;
    rhs.fft().inverse(spatial);
    GridField frame(initial.shape());
    auto v = frame.values();
    for (std::size_t k = 0; k < m; ++k) v[k] = spatial[k].real() / static_cast<double>(m);
    const double norm = frame.l2_norm();
    if (!std::isfinite(norm) || norm > 10.0 * initial_norm)
      throw SolverFailure("evolve_transport: unstable at step " + std::to_string(step + 1) +
                          " (norm " + std::to_string(norm) + ", initial " + std::to_string(initial_norm) +
                          "); reduce dt");
    frames.push_back(std::move(frame));
  }
  return frames;
}

TrajectorySample generate_timeseries(const TimeSeriesConfig& config, std::size_t index) {
  validate(config);
  DPHI_REQUIRE(index < config.num_samples, "generate_timeseries: index out of range");
  const GridField initial =
      gaussian_random_field(config.resolution, config.correlation_length, sample_seed(config.seed, index));
  const std::size_t total = config.input_steps + config.output_steps;
  const auto frames = evolve_transport(initial, config, total - 1);
  const std::size_t n = config.resolution;
  GridField a(GridShape{n, n, config.input_steps});
  GridField u(GridShape{n, n, config.output_steps});
  for (std::size_t t = 0; t < total; ++t) {
    auto dst = t < config.input_steps ? a.channel(t) : u.channel(t - config.input_steps);
    std::copy(frames[t].values().begin(), frames[t].values().end(), dst.begin());
  }
  return {std::move(a), std::move(u), index};
}

Dataset generate_timeseries_dataset(const TimeSeriesConfig& config) {
  validate(config);
  std::vector<TrajectorySample> samples(config.num_samples);
  parallel_for(config.num_samples, [&](std::size_t i) { samples[i] = generate_timeseries(config, i); });
  return Dataset(std::move(samples));
}

}  // namespace dphi
