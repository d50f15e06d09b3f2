#include "deltaphi/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "deltaphi/error.hpp"

namespace dphi {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

Fft2d::Fft2d(std::size_t height, std::size_t width) : height_(height), width_(width) {
  DPHI_REQUIRE(height > 0 && width > 0, "Fft2d: empty extent");
  // ESTIMATE planning is deterministic; UNALIGNED lets execute() take any
  // caller buffer.
  std::vector<std::complex<double>> scratch(height * width);
  std::lock_guard lock(planner_mutex());
  const int h = static_cast<int>(height);
  const int w = static_cast<int>(width);
  forward_plan_ = fftw_plan_dft_2d(h, w, as_fftw(scratch.data()), as_fftw(scratch.data()),
                                   FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_plan_ = fftw_plan_dft_2d(h, w, as_fftw(scratch.data()), as_fftw(scratch.data()),
                                   FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
}

Fft2d::~Fft2d() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void Fft2d::forward(std::span<std::complex<double>> data) const {
  DPHI_REQUIRE(data.size() == height_ * width_, "Fft2d::forward: size mismatch");
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), as_fftw(data.data()), as_fftw(data.data()));
}

void Fft2d::inverse(std::span<std::complex<double>> data) const {
  DPHI_REQUIRE(data.size() == height_ * width_, "Fft2d::inverse: size mismatch");
  fftw_execute_dft(static_cast<fftw_plan>(inverse_plan_), as_fftw(data.data()), as_fftw(data.data()));
}

}  // namespace dphi
