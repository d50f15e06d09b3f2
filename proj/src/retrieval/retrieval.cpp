#include "deltaphi/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deltaphi/error.hpp"
#include "deltaphi/log.hpp"

namespace dphi {

std::string_view to_string(SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::cosine_distance: return "cosine";
    case SimilarityMetric::euclidean: return "euclidean";
    case SimilarityMetric::manhattan: return "manhattan";
  }
  return "unknown";
}

SimilarityMetric parse_metric(std::string_view name) {
  if (name == "cosine" || name == "cosine_distance") return SimilarityMetric::cosine_distance;
  if (name == "euclidean") return SimilarityMetric::euclidean;
  if (name == "manhattan") return SimilarityMetric::manhattan;
  throw ContractViolation("unknown similarity metric '" + std::string(name) + "'");
}

Distance distance(std::span<const double> x, std::span<const double> y, SimilarityMetric metric) {
  DPHI_REQUIRE(x.size() == y.size(), "distance: vector length mismatch");
  switch (metric) {
    case SimilarityMetric::cosine_distance: {
      // 1 - cos(x, y) evaluated as |x/|x| - y/|y||^2 / 2: exactly zero for
      // identical inputs and accurate for near-identical ones.
      double xx = 0.0, yy = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        xx += x[k] * x[k];
        yy += y[k] * y[k];
      }
      if (xx == 0.0 || yy == 0.0) return {2.0, true};
      const double inv_x = 1.0 / std::sqrt(xx), inv_y = 1.0 / std::sqrt(yy);
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] * inv_x - y[k] * inv_y;
        s += d * d;
      }
      return {std::min(0.5 * s, 2.0), false};
    }
    case SimilarityMetric::euclidean: {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      return {std::sqrt(s), false};
    }
    case SimilarityMetric::manhattan: {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += std::abs(x[k] - y[k]);
      return {s, false};
    }
  }
  return {};
}

namespace {

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

}  // namespace

RetrievalIndex::RetrievalIndex(std::span<const GridField> inputs, SimilarityMetric metric) : metric_(metric) {
  DPHI_REQUIRE(!inputs.empty(), "RetrievalIndex: no samples");
  shape_ = inputs.front().shape();
  vectors_.reserve(inputs.size());
  for (const auto& f : inputs) {
    DPHI_REQUIRE(f.shape() == shape_, "RetrievalIndex: non-uniform input shapes");
    auto n = flatten_normalized(f);
    vectors_.push_back(std::move(n.values));
    degenerate_.push_back(n.degenerate);
  }
  self_rankings_.reserve(vectors_.size());
  for (std::size_t i = 0; i < vectors_.size(); ++i) self_rankings_.push_back(rank_neighbors(vectors_[i], i));
}

RetrievalIndex::RetrievalIndex(const Dataset& dataset, SimilarityMetric metric)
    : RetrievalIndex(dataset.inputs(), metric) {}

RankedNeighbors RetrievalIndex::rank_neighbors(std::span<const double> query,
                                               std::optional<std::size_t> exclude_id) const {
  DPHI_REQUIRE(query.size() == shape_.size(), "rank_neighbors: query length does not match the index");
  RankedNeighbors out;
  out.items.reserve(vectors_.size());
  for (std::size_t j = 0; j < vectors_.size(); ++j) {
    if (exclude_id && *exclude_id == j) continue;
    const Distance d = distance(query, vectors_[j], metric_);
    out.degenerate_query = out.degenerate_query || (d.degenerate && !degenerate_[j]);
    out.items.push_back({j, d.value});
  }
  std::sort(out.items.begin(), out.items.end(), neighbor_less);
  return out;
}

RankedNeighbors RetrievalIndex::rank_neighbors(const GridField& query, std::optional<std::size_t> exclude_id) const {
  DPHI_REQUIRE(query.shape() == shape_, "rank_neighbors: query shape does not match the index");
  const auto n = flatten_normalized(query);
  auto ranked = rank_neighbors(n.values, exclude_id);
  ranked.degenerate_query = n.degenerate;
  return ranked;
}

double RetrievalIndex::cosine_distance_between(std::size_t a, std::size_t b) const {
  return distance(vector(a), vector(b), SimilarityMetric::cosine_distance).value;
}

std::size_t sample_training_auxiliary(const RetrievalIndex& index, std::size_t i, std::size_t k,
                                      std::mt19937_64& rng) {
  const std::size_t n = index.size();
  DPHI_REQUIRE(n >= 2, "sample_training_auxiliary: index needs at least two samples");
  DPHI_REQUIRE(k >= 1, "sample_training_auxiliary: K must be positive");
  if (k > n - 1) {
    log_warning("sampling range K=" + std::to_string(k) + " exceeds N-1=" + std::to_string(n - 1) +
                "; clamping");
    k = n - 1;
  }
  const auto& ranked = index.neighbors_of(i).items;
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  return ranked[pick(rng)].id;
}

Retrieval retrieve_inference(const RetrievalIndex& index, const GridField& query) {
  DPHI_REQUIRE(query.shape() == index.shape(), "retrieve_inference: query shape does not match the index");
  const auto n = flatten_normalized(query);
  if (n.degenerate) {
    return {0, distance(n.values, index.vector(0), index.metric()).value, true};
  }
  Retrieval best{0, 0.0, false};
  bool first = true;
  for (std::size_t j = 0; j < index.size(); ++j) {
    const double d = distance(n.values, index.vector(j), index.metric()).value;
    if (first || d < best.distance) {
      best = {j, d, false};
      first = false;
    }
  }
  return best;
}

Retrieval retrieve_cross_resolution(const RetrievalIndex& index, const GridField& query) {
  const GridShape& target = index.shape();
  DPHI_REQUIRE(query.channels() == target.channels, "retrieve_cross_resolution: channel mismatch");
  DPHI_REQUIRE(query.height() >= target.height && query.width() >= target.width,
               "retrieve_cross_resolution: query resolution is below the index resolution");
  return retrieve_inference(index, fourier_resample(query, target));
}

KSuggestion suggest_initial_k(std::span<const GridField> train_inputs, std::span<const GridField> test_inputs,
                              SimilarityMetric metric) {
  DPHI_REQUIRE(train_inputs.size() >= 2, "suggest_initial_k: need at least two training inputs");
  DPHI_REQUIRE(!test_inputs.empty(), "suggest_initial_k: no test inputs");
  const RetrievalIndex index(train_inputs, metric);

  KSuggestion out;
  for (const auto& q : test_inputs) out.worst_test_distance = std::max(out.worst_test_distance, retrieve_inference(index, q).distance);

  const std::size_t n = index.size();
  std::size_t k = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& items = index.neighbors_of(i).items;
    const auto it = std::find_if(items.begin(), items.end(),
                                 [&](const Neighbor& nb) { return out.worst_test_distance <= nb.distance; });
    if (it == items.end()) {
      log_warning("suggest_initial_k: no rank satisfies the criterion; using N-1=" + std::to_string(n - 1));
      out.k = n - 1;
      out.saturated = true;
      return out;
    }
    k = std::max(k, static_cast<std::size_t>(it - items.begin()) + 1);
  }
  out.k = k;
  return out;
}

}  // namespace dphi
