#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "deltaphi/datagen.hpp"
#include "deltaphi/field.hpp"

namespace dphi {

/// All metrics are distances on mean-centred, unit-normalized vectors:
/// zero for identical inputs, larger means less similar.
enum class SimilarityMetric { cosine_distance, euclidean, manhattan };

std::string_view to_string(SimilarityMetric metric);
/// Accepts "cosine", "cosine_distance", "euclidean", "manhattan".
SimilarityMetric parse_metric(std::string_view name);

struct Distance {
  double value = 0.0;
  /// Cosine distance with a zero-norm operand: reported as 2 (maximal).
  bool degenerate = false;
};

Distance distance(std::span<const double> x, std::span<const double> y, SimilarityMetric metric);

struct Neighbor {
  std::size_t id;
  double distance;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ascending by distance, ties by ascending id.
struct RankedNeighbors {
  std::vector<Neighbor> items;
  bool degenerate_query = false;
};

/// Immutable retrieval memory over a set of input fields.
class RetrievalIndex {
 public:
  RetrievalIndex(std::span<const GridField> inputs, SimilarityMetric metric);
  RetrievalIndex(const Dataset& dataset, SimilarityMetric metric);

  std::size_t size() const { return vectors_.size(); }
  SimilarityMetric metric() const { return metric_; }
  const GridShape& shape() const { return shape_; }
  std::span<const double> vector(std::size_t id) const { return vectors_.at(id); }
  bool degenerate(std::size_t id) const { return degenerate_.at(id); }

  /// Full ranking of the index against a normalized query vector.
  RankedNeighbors rank_neighbors(std::span<const double> query,
                                 std::optional<std::size_t> exclude_id = std::nullopt) const;
  RankedNeighbors rank_neighbors(const GridField& query,
                                 std::optional<std::size_t> exclude_id = std::nullopt) const;

  /// Ranking of stored sample `id` against all others (self excluded),
  /// computed once at construction.
  const RankedNeighbors& neighbors_of(std::size_t id) const { return self_rankings_.at(id); }

  /// Cosine distance between two stored samples, in [0, 2].
  double cosine_distance_between(std::size_t a, std::size_t b) const;

 private:
  SimilarityMetric metric_;
  GridShape shape_;
  std::vector<std::vector<double>> vectors_;
  std::vector<bool> degenerate_;
  std::vector<RankedNeighbors> self_rankings_;
};

/// Uniform draw among the K nearest neighbours of stored sample i (self
/// excluded). K larger than N - 1 is clamped with a warning.
std::size_t sample_training_auxiliary(const RetrievalIndex& index, std::size_t i, std::size_t k,
                                      std::mt19937_64& rng);

struct Retrieval {
  std::size_t id = 0;
  double distance = 0.0;
  bool degenerate = false;
};

/// Nearest stored sample (ties: smaller id). A degenerate (constant) query
/// returns id 0 with the flag set.
Retrieval retrieve_inference(const RetrievalIndex& index, const GridField& query);

/// Retrieval for a query finer than the index grid: Fourier-truncates the
/// query to the index resolution first.
Retrieval retrieve_cross_resolution(const RetrievalIndex& index, const GridField& query);

struct KSuggestion {
  std::size_t k = 1;
  double worst_test_distance = 0.0;
  /// No rank satisfied the criterion; k was set to N - 1.
  bool saturated = false;
};

/// Smallest rank r such that every training input's r-th nearest distinct
/// neighbour is at least as far as the worst nearest-neighbour distance of
/// any test input.
KSuggestion suggest_initial_k(std::span<const GridField> train_inputs, std::span<const GridField> test_inputs,
                              SimilarityMetric metric);

}  // namespace dphi
