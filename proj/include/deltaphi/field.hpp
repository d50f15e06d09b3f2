#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dphi {

/// Extent of a regular 2D multi-channel grid. Points sit on the unit square.
struct GridShape {
  std::size_t height = 2;
  std::size_t width = 2;
  std::size_t channels = 1;

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  bool same_grid(const GridShape& o) const { return height == o.height && width == o.width; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Validates the GridShape invariants; throws ContractViolation.
void validate(const GridShape& shape);

/// Multi-channel scalar field. Storage is channel-major, then row-major:
/// value(c, i, j) lives at (c * height + i) * width + j, where i indexes the
/// row (y) and j the column (x).
class GridField {
 public:
  GridField() = default;
  explicit GridField(GridShape shape, double fill = 0.0);
  GridField(GridShape shape, std::vector<double> values);

  const GridShape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return values_[(c * shape_.height + i) * shape_.width + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return values_[(c * shape_.height + i) * shape_.width + j];
  }

  std::span<double> channel(std::size_t c) {
    return {values_.data() + c * shape_.plane(), shape_.plane()};
  }
  std::span<const double> channel(std::size_t c) const {
    return {values_.data() + c * shape_.plane(), shape_.plane()};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool all_finite() const;
  double l2_norm() const;

  /// Channels [first, first + count) as a new field.
  GridField slice_channels(std::size_t first, std::size_t count) const;

  friend bool operator==(const GridField&, const GridField&) = default;

 private:
  GridShape shape_{};
  std::vector<double> values_;
};

/// Stacks fields with identical grids along the channel axis.
GridField concat_channels(std::span<const GridField> parts);

GridField operator+(const GridField& a, const GridField& b);
GridField operator-(const GridField& a, const GridField& b);
GridField operator*(double s, const GridField& a);

/// ||pred - truth||_2 / ||truth||_2 over all channels and points.
/// Throws ContractViolation on shape mismatch, DegenerateInput if truth is zero.
double relative_l2(const GridField& pred, const GridField& truth);

/// Band-limited resampling through the 2D DFT. Upsampling zero-fills the new
/// high frequencies, downsampling discards frequencies above the target
/// Nyquist limit. Nyquist bins of even-length axes are split/folded so that
/// real inputs give real outputs and down(up(f)) == f.
GridField fourier_resample(const GridField& field, const GridShape& target);

struct NormalizedVector {
  std::vector<double> values;
  bool degenerate = false;
};

/// Mean-centres `values` and scales to unit L2 norm (zero vector and
/// `degenerate` when the centred norm is below 1e-12).
NormalizedVector normalize_vector(std::span<const double> values);

/// Flattens all channels jointly, subtracts the mean and scales to unit L2
/// norm. A near-constant field (norm < 1e-12) yields the zero vector and
/// sets `degenerate`.
NormalizedVector flatten_normalized(const GridField& field);

}  // namespace dphi
