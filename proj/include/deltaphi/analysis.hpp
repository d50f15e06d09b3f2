#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deltaphi/datagen.hpp"
#include "deltaphi/residual.hpp"
#include "deltaphi/retrieval.hpp"

namespace dphi {

/// Mean output distance to the r-th most similar training input, r = 1..R.
struct RankCurve {
  std::vector<double> mean_distance;  // entry r - 1
  std::size_t retrieval_size = 0;

  friend bool operator==(const RankCurve&, const RankCurve&) = default;
};

/// For every test sample, ranks the training inputs by `metric` and records
/// relative_l2(u_test, u_{k,r}); averages over the test set per rank.
RankCurve similarity_rank_curve(const Dataset& train_set, const Dataset& test_set, std::size_t max_rank,
                                SimilarityMetric metric = SimilarityMetric::cosine_distance);

/// Same, with every training sample used as a query against the others.
RankCurve similarity_rank_curve_leave_one_out(const Dataset& train_set, std::size_t max_rank,
                                              SimilarityMetric metric = SimilarityMetric::cosine_distance);

/// Spearman rank correlation; ties receive their average rank.
double spearman(std::span<const double> x, std::span<const double> y);

using Point2 = std::array<double, 2>;

struct PcaBasis {
  std::vector<double> mean;
  std::array<std::vector<double>, 2> axes;  // orthonormal
  std::array<double, 2> variance{};          // along each axis, 1/n normalization
  /// Fewer than two nonzero principal directions; the missing axes were
  /// completed arbitrarily.
  bool rank_deficient = false;

  std::vector<Point2> project(std::span<const std::vector<double>> labels) const;
};

/// Top-2 principal axes of the labels (each a flattened field). Axes are
/// sign-normalized so their largest-magnitude component is positive.
PcaBasis pca_project(std::span<const std::vector<double>> labels);

/// Axis-aligned ellipse in PCA coordinates.
struct Ellipse {
  Point2 center{};
  Point2 semi_axes{};
  double area() const;
};

struct LabelSet {
  std::vector<Point2> points;
  Point2 mean{}, stddev{}, min{}, max{};
  Ellipse std_ellipse() const;    // centred at the mean, 1 sigma per axis
  Ellipse range_ellipse() const;  // spans [min, max] per axis
};

LabelSet summarize(std::vector<Point2> points);

struct LabelDistribution {
  PcaBasis basis;
  LabelSet train, test;
};

struct LabelStudy {
  LabelDistribution direct;    // labels u
  LabelDistribution residual;  // labels u_i - u_k
};

/// The residual study fits PCA on the pairs' target residuals and projects
/// u_test - u_k with k from inference-time retrieval.
LabelStudy label_distribution_study(const Dataset& train_set, std::span<const ResidualPair> residual_pairs,
                                    const Dataset& test_set, const RetrievalIndex& index);

// CSV artifacts. Numbers are written with 17 significant digits so parsing
// restores them exactly.
std::string rank_curve_csv(const RankCurve& curve);
RankCurve parse_rank_curve_csv(std::string_view text);

struct PointRow {
  std::string set;
  std::size_t point_index = 0;
  double pc1 = 0.0, pc2 = 0.0;
  friend bool operator==(const PointRow&, const PointRow&) = default;
};

struct StatRow {
  std::string set, stat, axis;
  double value = 0.0;
  friend bool operator==(const StatRow&, const StatRow&) = default;
};

/// Rows for sets named "train" and "test".
std::vector<PointRow> point_rows(const LabelDistribution& d);
/// mean/std/min/max for pc1 and pc2 of each set.
std::vector<StatRow> stat_rows(const LabelDistribution& d);

std::string points_csv(std::span<const PointRow> rows);
std::vector<PointRow> parse_points_csv(std::string_view text);
std::string stats_csv(std::span<const StatRow> rows);
std::vector<StatRow> parse_stats_csv(std::string_view text);

std::string rank_curve_svg(const RankCurve& curve);
std::string label_distribution_svg(const LabelDistribution& d, std::string_view title);

}  // namespace dphi
