#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "deltaphi/datagen.hpp"
#include "deltaphi/field.hpp"
#include "deltaphi/retrieval.hpp"

namespace dphi {

/// Which auxiliary sources feed the residual operator next to a_i.
struct AuxiliaryPolicy {
  static constexpr std::size_t kAllSteps = std::numeric_limits<std::size_t>::max();

  /// Trailing channels of a_k to keep; kAllSteps keeps all, 0 omits a_k.
  std::size_t keep_last_input_steps = kAllSteps;
  bool include_aux_solution = true;
  bool include_score_channel = true;

  friend bool operator==(const AuxiliaryPolicy&, const AuxiliaryPolicy&) = default;
};

void validate(const AuxiliaryPolicy& policy);

/// Number of a_k channels the policy keeps out of `input_channels`.
std::size_t kept_aux_input_channels(const AuxiliaryPolicy& policy, std::size_t input_channels);

/// Channel count of assemble_input for the given dataset channel counts.
std::size_t assembled_channels(const AuxiliaryPolicy& policy, std::size_t input_channels,
                               std::size_t output_channels);

struct ResidualPair {
  GridField primary_input;              // a_i
  std::optional<GridField> aux_input;   // policy-selected channels of a_k
  GridField aux_solution;               // u_k
  double score = 0.0;                   // cosine distance between a_i and a_k
  std::optional<GridField> target_residual;  // u_i - u_k, when u_i is known
  std::size_t primary_id = 0;
  std::size_t aux_id = 0;
};

/// Pairs (a_i, u_i) with the auxiliary trajectory `aux`. `truth` may be
/// omitted at inference time.
ResidualPair make_residual_pair(const GridField& input, const GridField* truth, const TrajectorySample& aux,
                                double score, const AuxiliaryPolicy& policy, std::size_t primary_id = 0);

/// One residual pair per training sample with k_i drawn uniformly from the K
/// nearest neighbours of a_i. Each call with a fresh rng state redraws k_i.
std::vector<ResidualPair> build_residual_dataset(const Dataset& dataset, const RetrievalIndex& index,
                                                 std::size_t k, const AuxiliaryPolicy& policy,
                                                 std::mt19937_64& rng);

/// Channel stack [a_i | kept a_k | u_k | constant score field], omitting
/// whatever the policy disables.
GridField assemble_input(const ResidualPair& pair, const AuxiliaryPolicy& policy);

/// u_hat = predicted residual + u_k.
GridField reconstruct_solution(const GridField& predicted_residual, const GridField& aux_solution);

/// Fourier-upsamples a coarse auxiliary field onto the query grid.
GridField integrate_cross_resolution(const GridField& aux, const GridShape& target);

}  // namespace dphi
