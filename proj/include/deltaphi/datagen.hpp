#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "deltaphi/field.hpp"

namespace dphi {

/// Steady Darcy flow -div(a grad u) = f on the unit square, u = 0 on the
/// boundary, with a two-level random coefficient a.
struct DarcyConfig {
  std::size_t resolution = 32;
  std::size_t num_samples = 100;
  std::uint64_t seed = 0;
  double coefficient_low = 3.0;
  double coefficient_high = 12.0;
  // Blob scale comparable to the classic thresholded (-Laplacian + 9)^-2
  // coefficient fields.
  double correlation_length = 0.3;
  double forcing = 1.0;
};

/// Scalar transport by a fixed divergence-free velocity
/// v = amplitude * (sin 2 pi y, sin 2 pi x) with diffusion, periodic domain.
struct TimeSeriesConfig {
  std::size_t resolution = 32;
  std::size_t num_samples = 100;
  std::uint64_t seed = 0;
  std::size_t input_steps = 10;
  std::size_t output_steps = 10;
  double viscosity = 1e-3;
  double dt = 1e-2;
  double velocity_amplitude = 1.0;
  double correlation_length = 0.1;
};

void validate(const DarcyConfig& config);
void validate(const TimeSeriesConfig& config);

struct TrajectorySample {
  GridField input;
  GridField output;
  std::size_t id = 0;
};

/// Ordered collection of samples with uniform shapes.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<TrajectorySample> samples);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const TrajectorySample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  const GridShape& input_shape() const;
  const GridShape& output_shape() const;

  std::vector<GridField> inputs() const;
  std::vector<GridField> outputs() const;

  /// Samples at the given positions, renumbered 0..n-1.
  Dataset subset(std::span<const std::size_t> positions) const;

 private:
  std::vector<TrajectorySample> samples_;
};

/// Zero-mean, unit-RMS periodic Gaussian random field on an n x n grid with
/// squared-exponential covariance of the given length.
GridField gaussian_random_field(std::size_t n, double correlation_length, std::uint64_t seed);

/// Per-sample seed: config seed XOR sample index.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return seed ^ index; }

GridField generate_darcy_coefficient(const DarcyConfig& config, std::size_t index);

/// Five-point finite-difference solve with harmonic-mean edge coefficients on
/// an n x n grid with nodes at x = j/n. Row and column 0 are the boundary and
/// exactly zero; the x = 1 side is their periodic image, as for every other
/// field in the library.
/// Conjugate gradients to relative residual 1e-10 within 10 * n^2 iterations.
GridField solve_darcy(const GridField& coefficient, double forcing);
GridField solve_darcy(const GridField& coefficient, const GridField& forcing);

/// ||A u - f|| / ||f|| over interior nodes (0 when f vanishes and u = 0).
double darcy_residual(const GridField& coefficient, const GridField& solution, const GridField& forcing);

TrajectorySample generate_darcy_sample(const DarcyConfig& config, std::size_t index);
Dataset generate_darcy_dataset(const DarcyConfig& config);

/// Integrates the transport equation from `initial` for `steps` steps of size
/// config.dt using a Fourier pseudo-spectral discretization with an
/// integrating-factor RK4 step. Returns steps + 1 frames, the first being
/// `initial`. Throws SolverFailure if the L2 norm grows beyond 10x.
std::vector<GridField> evolve_transport(const GridField& initial, const TimeSeriesConfig& config,
                                        std::size_t steps);

TrajectorySample generate_timeseries(const TimeSeriesConfig& config, std::size_t index);
Dataset generate_timeseries_dataset(const TimeSeriesConfig& config);

// Binary dataset format, little-endian:
//   "DPHI" | u32 version = 1 | u32 num_samples | u32 height | u32 width |
//   u32 input_channels | u32 output_channels |
//   per sample: f64 input[h*w*c_in], f64 output[h*w*c_out]
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dphi
