#include "deltaphi/field.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <utility>

#include "deltaphi/error.hpp"
#include "deltaphi/fft.hpp"

namespace dphi {

void validate(const GridShape& shape) {
  DPHI_REQUIRE(shape.height >= 2 && shape.width >= 2,
               "GridShape: height and width must be >= 2");
  DPHI_REQUIRE(shape.channels >= 1, "GridShape: channels must be >= 1");
}

GridField::GridField(GridShape shape, double fill) : shape_(shape) {
  validate(shape_);
  values_.assign(shape_.size(), fill);
}

GridField::GridField(GridShape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  validate(shape_);
  DPHI_REQUIRE(values_.size() == shape_.size(),
               "GridField: value count " + std::to_string(values_.size()) +
                   " does not match shape " + std::to_string(shape_.size()));
}

bool GridField::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

double GridField::l2_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

GridField GridField::slice_channels(std::size_t first, std::size_t count) const {
  DPHI_REQUIRE(count >= 1 && first + count <= shape_.channels,
               "slice_channels: range outside channel count");
  GridShape s = shape_;
  s.channels = count;
  const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(first * shape_.plane());
  return GridField(s, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(s.size())));
}

GridField concat_channels(std::span<const GridField> parts) {
  DPHI_REQUIRE(!parts.empty(), "concat_channels: nothing to concatenate");
  GridShape s = parts.front().shape();
  s.channels = 0;
  for (const auto& p : parts) {
    DPHI_REQUIRE(p.shape().same_grid(s), "concat_channels: grid mismatch");
    s.channels += p.channels();
  }
  std::vector<double> values;
  values.reserve(s.size());
  for (const auto& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  return GridField(s, std::move(values));
}

namespace {

template <class Op>
GridField zip(const GridField& a, const GridField& b, Op op) {
  DPHI_REQUIRE(a.shape() == b.shape(), "field arithmetic: shape mismatch");
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = op(av[k], bv[k]);
  return GridField(a.shape(), std::move(out));
}

}  // namespace

GridField operator+(const GridField& a, const GridField& b) {
  return zip(a, b, [](double x, double y) { return x + y; });
}

GridField operator-(const GridField& a, const GridField& b) {
  return zip(a, b, [](double x, double y) { return x - y; });
}

GridField operator*(double s, const GridField& a) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= s;
  return GridField(a.shape(), std::move(out));
}

double relative_l2(const GridField& pred, const GridField& truth) {
  DPHI_REQUIRE(pred.shape() == truth.shape(), "relative_l2: shape mismatch");
  double diff = 0.0;
  double norm = 0.0;
  auto p = pred.values();
  auto t = truth.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - t[k];
    diff += d * d;
    norm += t[k] * t[k];
  }
  if (norm == 0.0) throw DegenerateInput("relative_l2: reference field has zero norm");
  return std::sqrt(diff) / std::sqrt(norm);
}

namespace {

struct Tap {
  std::size_t source;
  double weight;
};

// For each destination bin, the source bins feeding it.
std::vector<std::vector<Tap>> spectral_axis_map(std::size_t n_src, std::size_t n_dst) {
  std::vector<std::vector<Tap>> map(n_dst);
  if (n_dst == n_src) {
    for (std::size_t k = 0; k < n_src; ++k) map[k].push_back({k, 1.0});
  } else if (n_dst > n_src) {
    for (std::size_t k = 0; k < n_src; ++k) {
      const long f = signed_frequency(k, n_src);
      if (n_src % 2 == 0 && 2 * k == n_src) {
        map[k].push_back({k, 0.5});
        map[n_dst - k].push_back({k, 0.5});
      } else {
        map[f >= 0 ? f : static_cast<long>(n_dst) + f].push_back({k, 1.0});
      }
    }
  } else {
    for (std::size_t d = 0; d < n_dst; ++d) {
      const long f = signed_frequency(d, n_dst);
      if (n_dst % 2 == 0 && 2 * d == n_dst) {
        map[d].push_back({d, 1.0});
        map[d].push_back({n_src - d, 1.0});
      } else {
        map[d].push_back({static_cast<std::size_t>(f >= 0 ? f : static_cast<long>(n_src) + f), 1.0});
      }
    }
  }
  return map;
}

}  // namespace

GridField fourier_resample(const GridField& field, const GridShape& target) {
  validate(target);
  DPHI_REQUIRE(target.channels == field.channels(), "fourier_resample: channel count mismatch");
  if (target == field.shape()) return field;

  const std::size_t h = field.height(), w = field.width();
  const std::size_t th = target.height, tw = target.width;
  const auto rows = spectral_axis_map(h, th);
  const auto cols = spectral_axis_map(w, tw);
  const Fft2d src_fft(h, w);
  const Fft2d dst_fft(th, tw);
  const double scale = 1.0 / static_cast<double>(h * w);

  GridField out(target);
  std::vector<std::complex<double>> spec(h * w);
  std::vector<std::complex<double>> dst(th * tw);
  for (std::size_t c = 0; c < field.channels(); ++c) {
    auto in = field.channel(c);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = in[k];
    src_fft.forward(spec);
    for (std::size_t i = 0; i < th; ++i) {
      for (std::size_t j = 0; j < tw; ++j) {
        std::complex<double> acc = 0.0;
        for (const Tap& r : rows[i])
          for (const Tap& q : cols[j]) acc += r.weight * q.weight * spec[r.source * w + q.source];
        dst[i * tw + j] = acc * scale;
      }
    }
    dst_fft.inverse(dst);
    auto o = out.channel(c);
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = dst[k].real();
  }
  return out;
}

NormalizedVector flatten_normalized(const GridField& field) { return normalize_vector(field.values()); }

NormalizedVector normalize_vector(std::span<const double> values) {
  NormalizedVector out;
  out.values.assign(values.begin(), values.end());
  if (out.values.empty()) {
    out.degenerate = true;
    return out;
  }
  const double n = static_cast<double>(out.values.size());
  const double mean = std::accumulate(out.values.begin(), out.values.end(), 0.0) / n;
  double norm = 0.0;
  for (double& v : out.values) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-12) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    out.degenerate = true;
    return out;
  }
  for (double& v : out.values) v /= norm;
  return out;
}

}  // namespace dphi
