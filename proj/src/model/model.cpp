#include "deltaphi/model.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "deltaphi/binary_io.hpp"
#include "deltaphi/error.hpp"

namespace dphi {

std::string_view to_string(Architecture a) { return a == Architecture::fno ? "fno" : "resnet"; }
std::string_view to_string(Activation a) { return a == Activation::gelu ? "gelu" : "relu"; }
std::string_view to_string(TrainingMode m) { return m == TrainingMode::direct ? "direct" : "residual"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "fno") return Architecture::fno;
  if (name == "resnet") return Architecture::resnet;
  throw ContractViolation("unknown architecture '" + std::string(name) + "' (expected fno or resnet)");
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  throw ContractViolation("unknown activation '" + std::string(name) + "' (expected gelu or relu)");
}

TrainingMode parse_training_mode(std::string_view name) {
  if (name == "direct") return TrainingMode::direct;
  if (name == "residual") return TrainingMode::residual;
  throw ContractViolation("unknown mode '" + std::string(name) + "' (expected direct or residual)");
}

void validate(const OperatorSpec& spec) {
  DPHI_REQUIRE(spec.width > 0 && spec.depth > 0 && spec.in_channels > 0 && spec.out_channels > 0,
               "OperatorSpec: width, depth and channel counts must be positive");
  DPHI_REQUIRE(spec.architecture == Architecture::resnet || spec.modes > 0, "OperatorSpec: modes must be positive");
}

void validate_resolution(const OperatorSpec& spec, std::size_t height, std::size_t width) {
  if (spec.architecture != Architecture::fno) return;
  DPHI_REQUIRE(spec.modes <= height / 2 && spec.modes <= width / 2,
               "OperatorSpec: modes " + std::to_string(spec.modes) + " exceed the Nyquist limit of a " +
                   std::to_string(height) + "x" + std::to_string(width) + " grid");
}

namespace {

std::vector<std::vector<std::size_t>> parameter_shapes(const OperatorSpec& s) {
  const std::size_t w = s.width;
  std::vector<std::vector<std::size_t>> shapes;
  shapes.push_back({w, s.in_channels + kCoordinateChannels});
  shapes.push_back({w});
  for (std::size_t l = 0; l < s.depth; ++l) {
    if (s.architecture == Architecture::fno)
      shapes.push_back({w, w, 2 * s.modes, s.modes, 2});
    else
      shapes.push_back({w, w, 3, 3});
    shapes.push_back({w, w});
    shapes.push_back({w});
  }
  shapes.push_back({s.out_channels, w});
  shapes.push_back({s.out_channels});
  return shapes;
}

// Fan-in per tensor position; a complex spectral weight contributes a real and
// an imaginary term to each output coefficient.
std::size_t fan_in(const OperatorSpec& s, std::size_t position) {
  if (position < 2) return s.in_channels + kCoordinateChannels;
  const std::size_t last_layer_end = 2 + 3 * s.depth;
  if (position >= last_layer_end) return s.width;
  if ((position - 2) % 3 == 0) return s.architecture == Architecture::fno ? 2 * s.width : 9 * s.width;
  return s.width;
}

ad::Tensor to_tensor(const GridField& f) {
  return ad::Tensor({f.channels(), f.height(), f.width()}, std::vector<double>(f.values().begin(), f.values().end()));
}

ad::Tensor lifted_input(const GridField& f, const Normalizer& norm) {
  const std::size_t c = f.channels(), h = f.height(), w = f.width();
  ad::Tensor t({c + kCoordinateChannels, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto src = f.channel(ch);
    double* dst = t.data() + ch * h * w;
    const double mu = norm.input_mean[ch], inv = 1.0 / norm.input_std[ch];
    for (std::size_t k = 0; k < h * w; ++k) dst[k] = (src[k] - mu) * inv;
  }
  double* gy = t.data() + c * h * w;
  double* gx = gy + h * w;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      gy[i * w + j] = static_cast<double>(i) / static_cast<double>(h);
      gx[i * w + j] = static_cast<double>(j) / static_cast<double>(w);
    }
  return t;
}

ad::Tensor channel_broadcast(std::span<const double> per_channel, std::size_t h, std::size_t w) {
  ad::Tensor t({per_channel.size(), h, w});
  for (std::size_t c = 0; c < per_channel.size(); ++c)
    std::fill_n(t.data() + c * h * w, h * w, per_channel[c]);
  return t;
}

double spread_or_one(double s) { return s > 0.0 && std::isfinite(s) ? s : 1.0; }

}  // namespace

Normalizer Normalizer::identity(std::size_t in_channels, std::size_t out_channels) {
  return {std::vector<double>(in_channels, 0.0), std::vector<double>(in_channels, 1.0),
          std::vector<double>(out_channels, 0.0), std::vector<double>(out_channels, 1.0)};
}

Normalizer fit_normalizer(std::span<const GridField> inputs, std::span<const GridField> targets, TrainingMode mode) {
  DPHI_REQUIRE(!inputs.empty() && !targets.empty(), "fit_normalizer: no samples");
  const auto moments = [](std::span<const GridField> fields, std::vector<double>& mean, std::vector<double>& spread,
                          bool centred) {
    const std::size_t channels = fields.front().channels();
    mean.assign(channels, 0.0);
    spread.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0.0, count = 0.0;
      for (const auto& f : fields) {
        DPHI_REQUIRE(f.channels() == channels, "fit_normalizer: channel counts differ");
        for (double v : f.channel(c)) sum += v;
        count += static_cast<double>(f.shape().plane());
      }
      const double mu = centred ? sum / count : 0.0;
      double sq = 0.0;
      for (const auto& f : fields)
        for (double v : f.channel(c)) sq += (v - mu) * (v - mu);
      mean[c] = mu;
      spread[c] = spread_or_one(std::sqrt(sq / count));
    }
  };
  Normalizer n;
  moments(inputs, n.input_mean, n.input_std, true);
  moments(targets, n.output_shift, n.output_scale, mode == TrainingMode::direct);
  return n;
}

std::size_t parameter_count(const OperatorSpec& s) {
  validate(s);
  const std::size_t w = s.width;
  const std::size_t kernel = s.architecture == Architecture::fno ? w * w * (2 * s.modes) * s.modes * 2 : w * w * 9;
  return (s.in_channels + kCoordinateChannels) * w + w + s.depth * (kernel + w * w + w) + w * s.out_channels +
         s.out_channels;
}

std::size_t OperatorModel::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

OperatorModel init_model(const OperatorSpec& spec, std::uint64_t seed) {
  validate(spec);
  OperatorModel model{spec, {}, Normalizer::identity(spec.in_channels, spec.out_channels)};
  std::mt19937_64 rng(seed);
  const auto shapes = parameter_shapes(spec);
  for (std::size_t p = 0; p < shapes.size(); ++p) {
    // U(-a, a) has variance a^2 / 3.
    const double a = std::sqrt(3.0 / static_cast<double>(fan_in(spec, p)));
    std::uniform_real_distribution<double> dist(-a, a);
    ad::Tensor t(shapes[p]);
    for (double& v : t.values()) v = dist(rng);
    model.params.push_back(std::move(t));
  }
  return model;
}

ad::Var forward_graph(ad::Tape& tape, const OperatorModel& model, std::span<const ad::Var> params,
                      const GridField& input, const GridField* aux_solution) {
  const OperatorSpec& s = model.spec;
  DPHI_REQUIRE(params.size() == model.params.size(), "forward: parameter count mismatch");
  DPHI_REQUIRE(input.channels() == s.in_channels,
               "forward: input has " + std::to_string(input.channels()) + " channels, model expects " +
                   std::to_string(s.in_channels));
  validate_resolution(s, input.height(), input.width());

  const auto act = [&](ad::Var v) { return s.activation == Activation::gelu ? ad::gelu(v) : ad::relu(v); };
  const Normalizer& norm = model.normalizer;
  DPHI_REQUIRE(norm.input_mean.size() == s.in_channels && norm.input_std.size() == s.in_channels &&
                   norm.output_shift.size() == s.out_channels && norm.output_scale.size() == s.out_channels,
               "forward: normalizer does not match the spec");
  const std::size_t h = input.height(), w = input.width();
  ad::Var v = ad::channel_linear(tape.constant(lifted_input(input, norm)), params[0], params[1]);
  for (std::size_t l = 0; l < s.depth; ++l) {
    const std::size_t base = 2 + 3 * l;
    const ad::Var kernel = s.architecture == Architecture::fno
                               ? ad::spectral_conv(v, params[base], s.modes, s.modes)
                               : ad::conv3x3(v, params[base]);
    v = kernel + ad::channel_linear(v, params[base + 1], params[base + 2]);
    v = act(v);
  }
  ad::Var out = ad::channel_linear(v, params[params.size() - 2], params.back());
  out = out * tape.constant(channel_broadcast(norm.output_scale, h, w));
  if (aux_solution) {
    DPHI_REQUIRE(aux_solution->channels() == s.out_channels && aux_solution->height() == h &&
                     aux_solution->width() == w,
                 "forward: auxiliary solution shape does not match the output");
    return out + tape.constant(to_tensor(*aux_solution));
  }
  return out + tape.constant(channel_broadcast(norm.output_shift, h, w));
}

GridField forward(const OperatorModel& model, const GridField& input, TrainingMode mode,
                  const GridField* aux_solution) {
  DPHI_REQUIRE(mode == TrainingMode::direct || aux_solution != nullptr,
               "forward: residual mode requires the auxiliary solution");
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(model.params.size());
  for (const auto& p : model.params) leaves.push_back(tape.constant(p));
  const ad::Var out =
      forward_graph(tape, model, leaves, input, mode == TrainingMode::residual ? aux_solution : nullptr);
  const ad::Tensor& y = out.value();
  GridField result({input.height(), input.width(), model.spec.out_channels});
  std::copy(y.values().begin(), y.values().end(), result.values().begin());
  return result;
}

double relative_gain(double direct_error, double residual_error) {
  DPHI_REQUIRE(direct_error > 0.0, "relative_gain: direct error must be positive");
  return (direct_error - residual_error) / direct_error;
}

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::vector<std::uint8_t> encode_checkpoint(const OperatorModel& model) {
  const OperatorSpec& s = model.spec;
  DPHI_REQUIRE(model.num_parameters() == parameter_count(s), "save_checkpoint: parameters do not match the spec");
  io::ByteWriter out;
  out.magic("DPHM");
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(s.architecture));
  out.u32(static_cast<std::uint32_t>(s.width));
  out.u32(static_cast<std::uint32_t>(s.depth));
  out.u32(static_cast<std::uint32_t>(s.modes));
  out.u32(static_cast<std::uint32_t>(s.in_channels));
  out.u32(static_cast<std::uint32_t>(s.out_channels));
  out.u32(static_cast<std::uint32_t>(s.activation));
  for (const auto& p : model.params) out.f64s(p.values());
  const Normalizer& n = model.normalizer;
  DPHI_REQUIRE(n.input_mean.size() == s.in_channels && n.input_std.size() == s.in_channels &&
                   n.output_shift.size() == s.out_channels && n.output_scale.size() == s.out_channels,
               "save_checkpoint: normalizer does not match the spec");
  out.f64s(n.input_mean);
  out.f64s(n.input_std);
  out.f64s(n.output_shift);
  out.f64s(n.output_scale);
  return out.take();
}

OperatorModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  in.expect_magic("DPHM");
  const std::size_t version_at = in.offset();
  if (in.u32("version") != kCheckpointVersion) throw ParseError("unsupported checkpoint version", version_at);
  OperatorSpec s;
  const std::size_t arch_at = in.offset();
  const std::uint32_t arch = in.u32("architecture");
  if (arch > 1) throw ParseError("unknown architecture code", arch_at);
  s.architecture = static_cast<Architecture>(arch);
  s.width = in.u32("width");
  s.depth = in.u32("depth");
  s.modes = in.u32("modes");
  s.in_channels = in.u32("in_channels");
  s.out_channels = in.u32("out_channels");
  const std::size_t act_at = in.offset();
  const std::uint32_t act = in.u32("activation");
  if (act > 1) throw ParseError("unknown activation code", act_at);
  s.activation = static_cast<Activation>(act);
  try {
    validate(s);
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("invalid spec: ") + e.what(), act_at);
  }
  // Checked before allocating so a corrupt header cannot request huge tensors.
  if (in.remaining() / 8 < parameter_count(s)) throw ParseError("truncated input: parameters", in.offset());
  OperatorModel model{s, {}, Normalizer::identity(s.in_channels, s.out_channels)};
  for (const auto& shape : parameter_shapes(s)) {
    ad::Tensor t(shape);
    in.f64s(t.values(), "parameters");
    model.params.push_back(std::move(t));
  }
  Normalizer& n = model.normalizer;
  in.f64s(n.input_mean, "normalizer");
  in.f64s(n.input_std, "normalizer");
  in.f64s(n.output_shift, "normalizer");
  in.f64s(n.output_scale, "normalizer");
  in.expect_end();
  return model;
}

void save_checkpoint(const OperatorModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

OperatorModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace dphi
