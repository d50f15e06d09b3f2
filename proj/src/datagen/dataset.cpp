#include <string>

#include "deltaphi/binary_io.hpp"
#include "deltaphi/datagen.hpp"
#include "deltaphi/error.hpp"

namespace dphi {

Dataset::Dataset(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) return;
  const GridShape in = samples_.front().input.shape();
  const GridShape out = samples_.front().output.shape();
  DPHI_REQUIRE(in.same_grid(out), "Dataset: input and output grids differ");
  for (const auto& s : samples_) {
    DPHI_REQUIRE(s.input.shape() == in && s.output.shape() == out,
                 "Dataset: sample " + std::to_string(s.id) + " has a non-uniform shape");
  }
}

const GridShape& Dataset::input_shape() const {
  DPHI_REQUIRE(!samples_.empty(), "Dataset: empty");
  return samples_.front().input.shape();
}

const GridShape& Dataset::output_shape() const {
  DPHI_REQUIRE(!samples_.empty(), "Dataset: empty");
  return samples_.front().output.shape();
}

std::vector<GridField> Dataset::inputs() const {
  std::vector<GridField> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.input);
  return out;
}

std::vector<GridField> Dataset::outputs() const {
  std::vector<GridField> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.output);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> positions) const {
  std::vector<TrajectorySample> picked;
  picked.reserve(positions.size());
  for (std::size_t p : positions) {
    DPHI_REQUIRE(p < samples_.size(), "Dataset::subset: position out of range");
    picked.push_back(samples_[p]);
    picked.back().id = picked.size() - 1;
  }
  return Dataset(std::move(picked));
}

namespace {
constexpr std::uint32_t kDatasetVersion = 1;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  DPHI_REQUIRE(!dataset.empty(), "save_dataset: dataset is empty");
  const GridShape in = dataset.input_shape();
  const GridShape out = dataset.output_shape();
  io::ByteWriter w;
  w.magic("DPHI");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.size()));
  w.u32(static_cast<std::uint32_t>(in.height));
  w.u32(static_cast<std::uint32_t>(in.width));
  w.u32(static_cast<std::uint32_t>(in.channels));
  w.u32(static_cast<std::uint32_t>(out.channels));
  for (const auto& s : dataset) {
    w.f64s(s.input.values());
    w.f64s(s.output.values());
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("DPHI");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion)
    throw ParseError("unsupported dataset version " + std::to_string(version), version_at);
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("sample count");
  if (count == 0) throw ParseError("dataset declares zero samples", count_at);
  const std::size_t dims_at = r.offset();
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t cin = r.u32("input channels");
  const std::uint32_t cout = r.u32("output channels");
  if (h < 2 || w < 2 || cin < 1 || cout < 1) throw ParseError("invalid grid dimensions", dims_at);

  const GridShape in_shape{h, w, cin};
  const GridShape out_shape{h, w, cout};
  const std::size_t per_sample = 8 * (in_shape.size() + out_shape.size());
  if (r.remaining() / per_sample < count)
    throw ParseError("truncated input: payload shorter than declared sample count",
                     r.offset() + (r.remaining() / per_sample) * per_sample);

  std::vector<TrajectorySample> samples(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::vector<double> a(in_shape.size()), u(out_shape.size());
    r.f64s(a, "input values");
    r.f64s(u, "output values");
    samples[k] = {GridField(in_shape, std::move(a)), GridField(out_shape, std::move(u)), k};
  }
  r.expect_end();
  return Dataset(std::move(samples));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

}  // namespace dphi
