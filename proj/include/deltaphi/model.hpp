#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deltaphi/autodiff.hpp"
#include "deltaphi/datagen.hpp"
#include "deltaphi/field.hpp"
#include "deltaphi/residual.hpp"
#include "deltaphi/retrieval.hpp"

namespace dphi {

enum class Architecture { fno, resnet };
enum class Activation { gelu, relu };
enum class TrainingMode { direct, residual };

std::string_view to_string(Architecture a);
std::string_view to_string(Activation a);
std::string_view to_string(TrainingMode m);
Architecture parse_architecture(std::string_view name);
Activation parse_activation(std::string_view name);
TrainingMode parse_training_mode(std::string_view name);

struct OperatorSpec {
  Architecture architecture = Architecture::fno;
  std::size_t width = 32;
  std::size_t depth = 4;
  std::size_t modes = 12;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Activation activation = Activation::gelu;

  friend bool operator==(const OperatorSpec&, const OperatorSpec&) = default;
};

void validate(const OperatorSpec& spec);
/// FNO modes must fit below Nyquist: modes <= floor(n / 2) on both axes.
void validate_resolution(const OperatorSpec& spec, std::size_t height, std::size_t width);

/// The lifting map sees the input channels plus two grid-coordinate channels.
inline constexpr std::size_t kCoordinateChannels = 2;

/// Closed form:
///   P: (in + 2) * width + width
///   per layer: kernel + width * width + width, where the kernel is
///     fno:    width^2 * (2 * modes) * modes * 2
///     resnet: width^2 * 9
///   Q: width * out + out
std::size_t parameter_count(const OperatorSpec& spec);

/// Per-channel affine maps fitted on the training set. Inputs are
/// standardized before lifting; Q's output is multiplied by output_scale, then
/// output_shift is added in direct mode and u_k in residual mode.
struct Normalizer {
  std::vector<double> input_mean, input_std;
  std::vector<double> output_shift, output_scale;

  static Normalizer identity(std::size_t in_channels, std::size_t out_channels);
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

/// Fits input statistics on `inputs`. Direct mode: output shift/scale are the
/// mean/std of `targets`. Residual mode: `targets` are residuals u_i - u_k,
/// shift is 0 and scale is their RMS. Zero spreads fall back to 1.
Normalizer fit_normalizer(std::span<const GridField> inputs, std::span<const GridField> targets, TrainingMode mode);

/// Parameters in declaration order:
///   P.weight [width, in + 2], P.bias [width],
///   per layer: kernel, W.weight [width, width], W.bias [width],
///   Q.weight [out, width], Q.bias [out].
struct OperatorModel {
  OperatorSpec spec;
  std::vector<ad::Tensor> params;
  Normalizer normalizer;

  std::size_t num_parameters() const;
  ad::Tensor& q_weight() { return params[params.size() - 2]; }
  ad::Tensor& q_bias() { return params.back(); }
  friend bool operator==(const OperatorModel&, const OperatorModel&) = default;
};

/// Uniform weights with variance 1 / fan_in; deterministic per seed. The
/// normalizer starts as the identity.
OperatorModel init_model(const OperatorSpec& spec, std::uint64_t seed);

/// Records the network on `tape`. `params` are the tape leaves for
/// model.params. Residual mode adds `aux_solution` to the scaled Q output.
ad::Var forward_graph(ad::Tape& tape, const OperatorModel& model, std::span<const ad::Var> params,
                      const GridField& input, const GridField* aux_solution);

GridField forward(const OperatorModel& model, const GridField& input, TrainingMode mode,
                  const GridField* aux_solution = nullptr);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t lr_step = 100;
  double lr_gamma = 0.5;
  std::size_t k = 20;
  TrainingMode mode = TrainingMode::direct;
  std::uint64_t seed = 0;
  AuxiliaryPolicy policy;
  /// Redraw k_i every epoch; false freezes the first draw.
  bool resample_each_epoch = true;
  /// Test evaluation period in epochs; 0 evaluates only after the last epoch.
  std::size_t eval_every = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

/// lr0 * gamma^floor(epoch / step), epochs counted from 0.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> test_error;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double final_test_error = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  OperatorSpec spec;
  TrainConfig config;
};

struct TrainResult {
  OperatorModel model;
  TrainReport report;
};

/// Training inputs for residual mode are assembled from the retrieval index
/// over `train_set`; `index` may be null in direct mode.
TrainResult train(const Dataset& train_set, const Dataset& test_set, const OperatorSpec& spec,
                  const TrainConfig& config, const RetrievalIndex* index);

/// Batch loss: mean relative L2 of the prediction against the truths. In
/// residual mode the prediction already includes u_k, so this is the error of
/// the reconstructed solution.
ad::Var batch_loss(ad::Tape& tape, const OperatorModel& model, std::span<const ad::Var> params,
                   std::span<const GridField> inputs, std::span<const GridField> truths,
                   std::span<const GridField> aux_solutions);

struct AuxRule {
  enum class Kind { best, random_topk };
  Kind kind = Kind::best;
  std::size_t k = 10;

  static AuxRule best() { return {}; }
  static AuxRule random_topk(std::size_t k) { return {Kind::random_topk, k}; }
};

struct EvalMetrics {
  std::vector<double> per_sample;
  double mean = 0.0;
  /// Residual mode only: retrieved auxiliary ids and degenerate-query flags.
  std::vector<std::size_t> aux_ids;
  std::vector<bool> degenerate;
};

/// Source of auxiliary trajectories: the training set and an index over its
/// inputs. Unused in direct mode.
struct AuxiliarySource {
  const Dataset* train = nullptr;
  const RetrievalIndex* index = nullptr;
};

/// `rng` is required for AuxRule::random_topk.
EvalMetrics evaluate(const OperatorModel& model, const Dataset& test_set, AuxiliarySource source,
                     TrainingMode mode, const AuxiliaryPolicy& policy, AuxRule rule = AuxRule::best(),
                     std::mt19937_64* rng = nullptr);

/// Zero-shot evaluation on a test grid at least as fine as the training grid.
/// Residual mode retrieves on the coarse index and upsamples the auxiliary
/// channels. Only FNO weights are resolution independent; resnet is rejected.
EvalMetrics evaluate_cross_resolution(const OperatorModel& model, const Dataset& test_set,
                                      AuxiliarySource source, TrainingMode mode,
                                      const AuxiliaryPolicy& policy);

/// (e_direct - e_residual) / e_direct.
double relative_gain(double direct_error, double residual_error);
/// Percentage with two decimals, e.g. "10.54%".
std::string format_percent(double fraction);

std::vector<std::uint8_t> encode_checkpoint(const OperatorModel& model);
OperatorModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const OperatorModel& model, const std::filesystem::path& path);
OperatorModel load_checkpoint(const std::filesystem::path& path);

}  // namespace dphi
