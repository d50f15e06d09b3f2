#include "deltaphi/residual.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "deltaphi/error.hpp"

namespace dphi {
namespace {

// fl(u - uk) + uk can miss u by one rounding when the subtraction is inexact.
// Nudge the stored residual by a few ulps so reconstruction is exact whenever
// some representable residual allows it.
double exact_residual(double u, double uk) {
  const double r = u - uk;
  if (r + uk == u) return r;
  constexpr double inf = std::numeric_limits<double>::infinity();
  double up = r, down = r;
  for (int step = 0; step < 4; ++step) {
    up = std::nextafter(up, inf);
    if (up + uk == u) return up;
    down = std::nextafter(down, -inf);
    if (down + uk == u) return down;
  }
  return r;
}

}  // namespace

void validate(const AuxiliaryPolicy& policy) {
  DPHI_REQUIRE(policy.keep_last_input_steps != 0 || policy.include_aux_solution || policy.include_score_channel,
               "AuxiliaryPolicy: at least one auxiliary source must be enabled");
}

std::size_t kept_aux_input_channels(const AuxiliaryPolicy& policy, std::size_t input_channels) {
  if (policy.keep_last_input_steps == AuxiliaryPolicy::kAllSteps) return input_channels;
  DPHI_REQUIRE(policy.keep_last_input_steps <= input_channels,
               "AuxiliaryPolicy: keeps " + std::to_string(policy.keep_last_input_steps) +
                   " input steps but the input has " + std::to_string(input_channels) + " channels");
  return policy.keep_last_input_steps;
}

std::size_t assembled_channels(const AuxiliaryPolicy& policy, std::size_t input_channels,
                               std::size_t output_channels) {
  validate(policy);
  return input_channels + kept_aux_input_channels(policy, input_channels) +
         (policy.include_aux_solution ? output_channels : 0) + (policy.include_score_channel ? 1 : 0);
}

ResidualPair make_residual_pair(const GridField& input, const GridField* truth, const TrajectorySample& aux,
                                double score, const AuxiliaryPolicy& policy, std::size_t primary_id) {
  validate(policy);
  DPHI_REQUIRE(aux.input.shape() == input.shape(), "make_residual_pair: auxiliary input shape mismatch");
  ResidualPair pair;
  pair.primary_input = input;
  const std::size_t kept = kept_aux_input_channels(policy, aux.input.channels());
  if (kept > 0) pair.aux_input = aux.input.slice_channels(aux.input.channels() - kept, kept);
  pair.aux_solution = aux.output;
  pair.score = score;
  if (truth) {
    DPHI_REQUIRE(truth->shape() == aux.output.shape(), "make_residual_pair: output shape mismatch");
    GridField residual(truth->shape());
    for (std::size_t k = 0; k < residual.size(); ++k)
      residual.values()[k] = exact_residual(truth->values()[k], aux.output.values()[k]);
    pair.target_residual = std::move(residual);
  }
  pair.primary_id = primary_id;
  pair.aux_id = aux.id;
  return pair;
}

std::vector<ResidualPair> build_residual_dataset(const Dataset& dataset, const RetrievalIndex& index,
                                                 std::size_t k, const AuxiliaryPolicy& policy,
                                                 std::mt19937_64& rng) {
  DPHI_REQUIRE(dataset.size() >= 2, "build_residual_dataset: need at least two samples");
  DPHI_REQUIRE(index.size() == dataset.size(), "build_residual_dataset: index does not cover the dataset");
  std::vector<ResidualPair> pairs;
  pairs.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t ki = sample_training_auxiliary(index, i, k, rng);
    const auto& s = dataset[i];
    pairs.push_back(make_residual_pair(s.input, &s.output, dataset[ki], index.cosine_distance_between(i, ki),
                                       policy, i));
    pairs.back().aux_id = ki;
  }
  return pairs;
}

GridField assemble_input(const ResidualPair& pair, const AuxiliaryPolicy& policy) {
  validate(policy);
  const std::size_t expected_aux =
      policy.keep_last_input_steps == 0
          ? 0
          : (policy.keep_last_input_steps == AuxiliaryPolicy::kAllSteps ? pair.primary_input.channels()
                                                                        : policy.keep_last_input_steps);
  const std::size_t have_aux = pair.aux_input ? pair.aux_input->channels() : 0;
  DPHI_REQUIRE(have_aux == expected_aux, "assemble_input: auxiliary input channels do not match the policy");

  std::vector<GridField> parts{pair.primary_input};
  if (pair.aux_input) parts.push_back(*pair.aux_input);
  if (policy.include_aux_solution) parts.push_back(pair.aux_solution);
  if (policy.include_score_channel)
    parts.emplace_back(GridShape{pair.primary_input.height(), pair.primary_input.width(), 1}, pair.score);
  return concat_channels(parts);
}

GridField reconstruct_solution(const GridField& predicted_residual, const GridField& aux_solution) {
  DPHI_REQUIRE(predicted_residual.shape() == aux_solution.shape(), "reconstruct_solution: shape mismatch");
  return predicted_residual + aux_solution;
}

GridField integrate_cross_resolution(const GridField& aux, const GridShape& target) {
  DPHI_REQUIRE(target.height >= aux.height() && target.width >= aux.width(),
               "integrate_cross_resolution: target grid is coarser than the auxiliary field");
  GridShape t = target;
  t.channels = aux.channels();
  return fourier_resample(aux, t);
}

}  // namespace dphi
