#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "deltaphi/datagen.hpp"
#include "deltaphi/error.hpp"
#include "deltaphi/fft.hpp"

namespace dphi {

GridField gaussian_random_field(std::size_t n, double correlation_length, std::uint64_t seed) {
  DPHI_REQUIRE(n >= 2, "gaussian_random_field: n must be >= 2");
  DPHI_REQUIRE(correlation_length > 0.0, "gaussian_random_field: correlation length must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::complex<double>> spec(n * n);
  for (auto& z : spec) z = normal(rng);

  const Fft2d fft(n, n);
  fft.forward(spec);
  // Amplitude sqrt(S(f)) for the squared-exponential kernel exp(-r^2 / 2l^2).
  const double decay = std::numbers::pi * std::numbers::pi * correlation_length * correlation_length;
  for (std::size_t i = 0; i < n; ++i) {
    const double fy = static_cast<double>(signed_frequency(i, n));
    for (std::size_t j = 0; j < n; ++j) {
      const double fx = static_cast<double>(signed_frequency(j, n));
      spec[i * n + j] *= std::exp(-decay * (fx * fx + fy * fy));
    }
  }
  spec[0] = 0.0;
  fft.inverse(spec);

  GridField out(GridShape{n, n, 1});
  auto v = out.values();
  double sq = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    v[k] = spec[k].real();
    sq += v[k] * v[k];
  }
  const double rms = std::sqrt(sq / static_cast<double>(v.size()));
  if (rms > 0.0)
    for (double& x : v) x /= rms;
  return out;
}

}  // namespace dphi
