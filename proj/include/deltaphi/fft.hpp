#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace dphi {

/// Complex 2D DFT of fixed extent backed by FFTW. Plans are created once per
/// object (plan creation is serialized internally); `forward`/`inverse` are
/// safe to call concurrently on distinct buffers.
///
/// forward: X[k] = sum_n x[n] exp(-2 pi i k.n / N)
/// inverse: x[n] = sum_k X[k] exp(+2 pi i k.n / N)   (unnormalized)
class Fft2d {
 public:
  Fft2d(std::size_t height, std::size_t width);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  void forward(std::span<std::complex<double>> data) const;
  void inverse(std::span<std::complex<double>> data) const;

 private:
  std::size_t height_;
  std::size_t width_;
  void* forward_plan_;
  void* inverse_plan_;
};

/// Signed frequency of DFT bin k on an axis of length n: k for k < n/2 and
/// k - n above. For even n the Nyquist bin n/2 reports +n/2.
inline long signed_frequency(std::size_t k, std::size_t n) {
  return 2 * k <= n ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace dphi
