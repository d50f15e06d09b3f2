#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../oracles/retrieval_oracle.hpp"
#include "deltaphi/analysis.hpp"
#include "deltaphi/datagen.hpp"
#include "deltaphi/error.hpp"
#include "test_support.hpp"

using namespace dphi;
using dphi::test::random_field;

namespace {

Dataset random_dataset(std::size_t n, std::mt19937_64& rng) {
  std::vector<TrajectorySample> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({random_field({6, 6, 1}, rng), random_field({6, 6, 1}, rng, 0.5, 2.0), i});
  return Dataset(std::move(s));
}

Dataset darcy(std::size_t n, std::uint64_t seed) {
  DarcyConfig cfg;
  cfg.num_samples = n;
  cfg.seed = seed;
  return generate_darcy_dataset(cfg);
}

std::vector<std::vector<double>> random_labels(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& l : out)
    for (double& v : l) v = g(rng);
  return out;
}

// Top eigenvector of the centred covariance by power iteration.
std::vector<double> power_iteration(const std::vector<std::vector<double>>& labels) {
  const std::size_t n = labels.size(), d = labels[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& l : labels)
    for (std::size_t k = 0; k < d; ++k) mean[k] += l[k] / static_cast<double>(n);
  std::vector<double> v(d, 1.0);
  for (int it = 0; it < 20000; ++it) {
    std::vector<double> next(d, 0.0);
    for (const auto& l : labels) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += (l[k] - mean[k]) * v[k];
      for (std::size_t k = 0; k < d; ++k) next[k] += dot * (l[k] - mean[k]);
    }
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : next) x /= norm;
    v = next;
  }
  return v;
}

double captured_variance(const std::vector<std::vector<double>>& labels, const std::vector<double>& a,
                         const std::vector<double>& b) {
  const std::size_t d = a.size();
  std::vector<double> mean(d, 0.0);
  for (const auto& l : labels)
    for (std::size_t k = 0; k < d; ++k) mean[k] += l[k] / static_cast<double>(labels.size());
  double total = 0.0;
  for (const auto& l : labels) {
    double pa = 0.0, pb = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      pa += (l[k] - mean[k]) * a[k];
      pb += (l[k] - mean[k]) * b[k];
    }
    total += pa * pa + pb * pb;
  }
  return total;
}

}  // namespace

TEST_CASE("spearman") {
  const std::vector<double> r{1, 2, 3, 4, 5};
  CHECK(spearman(r, std::vector<double>{0.1, 0.4, 0.5, 2.0, 9.0}) == doctest::Approx(1.0));
  CHECK(spearman(r, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ties: y ranks are 1, 2.5, 2.5, 4, 5.
  // Centred ranks (-2,-1,0,1,2) and (-2,-.5,-.5,1,2): rho = 9.5 / sqrt(10 * 9.5).
  CHECK(spearman(r, std::vector<double>{1, 2, 2, 3, 4}) == doctest::Approx(9.5 / std::sqrt(10.0 * 9.5)).epsilon(1e-14));
  CHECK_THROWS_AS(spearman(r, std::vector<double>{1, 1, 1, 1, 1}), DegenerateInput);
  CHECK_THROWS_AS(spearman(r, std::vector<double>{1, 2}), ContractViolation);
}

TEST_CASE("rank curve matches a brute-force oracle") {
  std::mt19937_64 rng(1);
  const auto train = random_dataset(30, rng);
  const auto test = random_dataset(10, rng);
  const auto curve = similarity_rank_curve(train, test, 8);
  REQUIRE(curve.mean_distance.size() == 8);
  CHECK(curve.retrieval_size == 30);
  const auto inputs = train.inputs();
  for (std::size_t r = 0; r < 8; ++r) {
    double expected = 0.0;
    for (const auto& q : test) {
      const auto ranked = oracle::brute_rank(inputs, q.input, SimilarityMetric::cosine_distance, std::nullopt);
      expected += relative_l2(train[ranked[r].second].output, q.output);
    }
    CHECK(curve.mean_distance[r] == doctest::Approx(expected / 10.0).epsilon(1e-13));
    CHECK(curve.mean_distance[r] >= 0.0);
  }
  CHECK_THROWS_AS(similarity_rank_curve(train, test, 31), ContractViolation);
}

TEST_CASE("leave-one-out rank 1 is the nearest distinct neighbour") {
  std::mt19937_64 rng(2);
  const auto train = random_dataset(20, rng);
  const auto curve = similarity_rank_curve_leave_one_out(train, 3);
  const auto inputs = train.inputs();
  double expected = 0.0;
  for (const auto& q : train) {
    const auto ranked = oracle::brute_rank(inputs, q.input, SimilarityMetric::cosine_distance, q.id);
    expected += relative_l2(train[ranked[0].second].output, q.output);
  }
  CHECK(curve.mean_distance[0] == doctest::Approx(expected / 20.0).epsilon(1e-13));
  CHECK(curve.retrieval_size == 19);
  CHECK_THROWS_AS(similarity_rank_curve_leave_one_out(train, 20), ContractViolation);
}

TEST_CASE("duplicated dataset has zero rank-1 distance") {
  std::mt19937_64 rng(3);
  const auto base = random_dataset(12, rng);
  std::vector<TrajectorySample> twice(base.samples());
  for (const auto& s : base) twice.push_back({s.input, s.output, twice.size()});
  const Dataset dup(std::move(twice));
  CHECK(similarity_rank_curve_leave_one_out(dup, 2).mean_distance[0] == 0.0);
  CHECK(similarity_rank_curve(dup, base, 2).mean_distance[0] == 0.0);
}

TEST_CASE("rank curve is invariant to dataset order") {
  std::mt19937_64 rng(4);
  const auto train = random_dataset(25, rng);
  const auto test = random_dataset(8, rng);
  std::vector<std::size_t> p(25), q(8);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::iota(q.begin(), q.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  std::shuffle(q.begin(), q.end(), rng);
  const auto a = similarity_rank_curve(train, test, 10);
  const auto b = similarity_rank_curve(train.subset(p), test.subset(q), 10);
  for (std::size_t r = 0; r < 10; ++r) CHECK(a.mean_distance[r] == doctest::Approx(b.mean_distance[r]).epsilon(1e-13));
}

TEST_CASE("generated Darcy distances grow with similarity rank") {
  const auto train = darcy(200, 31);
  const auto test = darcy(50, 31 ^ 0x9E3779B97F4A7C15ULL);
  const auto curve = similarity_rank_curve(train, test, 40);
  std::vector<double> ranks(40);
  std::iota(ranks.begin(), ranks.end(), 1.0);
  CHECK(spearman(ranks, curve.mean_distance) > 0.5);
}

TEST_CASE("pca top axis matches power iteration") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto labels = random_labels(10, 50, rng);
    const auto basis = pca_project(labels);
    const auto v = power_iteration(labels);
    double dot = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * basis.axes[0][k];
    const double sign = dot < 0.0 ? -1.0 : 1.0;
    double err = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) err = std::max(err, std::abs(sign * v[k] - basis.axes[0][k]));
    CHECK(err < 1e-8);
    CHECK_FALSE(basis.rank_deficient);
  }
}

TEST_CASE("pca captures at least as much variance as random projections") {
  std::mt19937_64 rng(6);
  const auto labels = random_labels(40, 12, rng);
  const auto basis = pca_project(labels);
  const double best = captured_variance(labels, basis.axes[0], basis.axes[1]);
  CHECK(best / 40.0 == doctest::Approx(basis.variance[0] + basis.variance[1]).epsilon(1e-12));
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(12), b(12);
    for (double& x : a) x = g(rng);
    for (double& x : b) x = g(rng);
    double na = 0.0;
    for (double x : a) na += x * x;
    for (double& x : a) x /= std::sqrt(na);
    double ab = 0.0;
    for (std::size_t k = 0; k < 12; ++k) ab += a[k] * b[k];
    double nb = 0.0;
    for (std::size_t k = 0; k < 12; ++k) {
      b[k] -= ab * a[k];
      nb += b[k] * b[k];
    }
    for (double& x : b) x /= std::sqrt(nb);
    CHECK(captured_variance(labels, a, b) <= best * (1.0 + 1e-12));
  }
}

TEST_CASE("pca edge cases") {
  SUBCASE("labels on a line") {
    std::vector<std::vector<double>> labels;
    for (int i = 0; i < 6; ++i) labels.push_back({1.0 + i, 2.0 - 2.0 * i, 0.5 * i});
    const auto basis = pca_project(labels);
    CHECK(basis.rank_deficient);
    CHECK(basis.variance[1] < 1e-24);
    double dot = 0.0;
    for (std::size_t k = 0; k < 3; ++k) dot += basis.axes[0][k] * basis.axes[1][k];
    CHECK(std::abs(dot) < 1e-14);
  }
  SUBCASE("identical labels") {
    const std::vector<std::vector<double>> labels(4, {1.0, 2.0, 3.0});
    const auto basis = pca_project(labels);
    CHECK(basis.rank_deficient);
    CHECK(basis.variance[0] == 0.0);
    const auto s = summarize(basis.project(labels));
    CHECK(s.std_ellipse().area() == 0.0);
    CHECK(s.range_ellipse().area() == 0.0);
  }
  SUBCASE("planar labels keep pairwise distances") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // Orthonormal pair in R^5.
    const std::vector<double> e1{0.6, 0.8, 0.0, 0.0, 0.0}, e2{0.0, 0.0, 0.0, 1.0, 0.0};
    std::vector<std::vector<double>> labels;
    for (int i = 0; i < 8; ++i) {
      const double s = u(rng), t = u(rng);
      std::vector<double> l(5);
      for (std::size_t k = 0; k < 5; ++k) l[k] = 3.0 + s * e1[k] + t * e2[k];
      labels.push_back(l);
    }
    const auto pts = pca_project(labels).project(labels);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < 5; ++k) d2 += (labels[i][k] - labels[j][k]) * (labels[i][k] - labels[j][k]);
        const double p2 = std::pow(pts[i][0] - pts[j][0], 2) + std::pow(pts[i][1] - pts[j][1], 2);
        CHECK(std::abs(std::sqrt(d2) - std::sqrt(p2)) < 1e-12);
      }
  }
  CHECK_THROWS_AS(pca_project(std::vector<std::vector<double>>(2, {1.0, 2.0})), ContractViolation);
  CHECK_THROWS_AS(pca_project(std::vector<std::vector<double>>(3, {1.0})), ContractViolation);
}

TEST_CASE("summary ellipses hold the stated statistics") {
  const auto s = summarize({{0.0, 1.0}, {2.0, 3.0}, {4.0, -1.0}});
  CHECK(s.mean == Point2{2.0, 1.0});
  CHECK(s.stddev[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(s.range_ellipse().center == Point2{2.0, 1.0});
  CHECK(s.range_ellipse().semi_axes == Point2{2.0, 2.0});
  CHECK(s.std_ellipse().area() == doctest::Approx(std::numbers::pi * s.stddev[0] * s.stddev[1]));
}

TEST_CASE("label distribution study") {
  SUBCASE("duplicated train and test sets put residual test labels at zero") {
    const auto train = darcy(12, 40);
    const RetrievalIndex index(train, SimilarityMetric::cosine_distance);
    std::mt19937_64 rng(0);
    const auto pairs = build_residual_dataset(train, index, 3, AuxiliaryPolicy{}, rng);
    const auto study = label_distribution_study(train, pairs, train, index);
    const auto zero = study.residual.basis.project(std::vector<std::vector<double>>{std::vector<double>(32 * 32, 0.0)});
    for (const auto& p : study.residual.test.points) CHECK(p == zero[0]);
    CHECK(study.residual.test.std_ellipse().area() == 0.0);
  }

  SUBCASE("residual transform concentrates the test labels") {
    const auto train = darcy(100, 41);
    const auto test = darcy(100, 41 ^ 0x9E3779B97F4A7C15ULL);
    const RetrievalIndex index(train, SimilarityMetric::cosine_distance);
    std::mt19937_64 rng(1);
    const auto pairs = build_residual_dataset(train, index, 20, AuxiliaryPolicy{}, rng);
    const auto study = label_distribution_study(train, pairs, test, index);
    CHECK(study.residual.test.std_ellipse().area() < study.direct.test.std_ellipse().area());
  }
}

TEST_CASE("csv artifacts round trip") {
  const RankCurve curve{{1.0 / 3.0, 2.5e-300, 0.1 + 0.2, 7.0}, 42};
  const auto text = rank_curve_csv(curve);
  CHECK(text.rfind("rank,mean_distance,retrieval_size\n1,", 0) == 0);
  CHECK(parse_rank_curve_csv(text) == curve);

  std::mt19937_64 rng(9);
  LabelDistribution d;
  std::normal_distribution<double> g;
  std::vector<Point2> a, b;
  for (int i = 0; i < 7; ++i) a.push_back({g(rng), g(rng)});
  for (int i = 0; i < 4; ++i) b.push_back({g(rng), g(rng)});
  d.train = summarize(a);
  d.test = summarize(b);
  const auto points = point_rows(d);
  CHECK(points.size() == 11);
  CHECK(parse_points_csv(points_csv(points)) == points);
  const auto stats = stat_rows(d);
  CHECK(stats.size() == 16);
  CHECK(parse_stats_csv(stats_csv(stats)) == stats);

  CHECK_THROWS_AS(parse_rank_curve_csv("rank,value\n1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_rank_curve_csv("rank,mean_distance,retrieval_size\n1,abc,3\n"), ParseError);
  CHECK_THROWS_AS(parse_rank_curve_csv("rank,mean_distance,retrieval_size\n2,0.1,3\n"), ParseError);
  CHECK_THROWS_AS(parse_points_csv("set,point_index,pc1,pc2\ntrain,0,1\n"), ParseError);
}

TEST_CASE("svg output is well formed") {
  const RankCurve curve{{0.1, 0.2, 0.15}, 10};
  const auto svg = rank_curve_svg(curve);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  LabelDistribution d;
  d.train = summarize({{0.0, 0.0}, {1.0, 1.0}});
  d.test = summarize({{0.5, 0.5}});
  const auto s2 = label_distribution_svg(d, "labels");
  CHECK(std::count(s2.begin(), s2.end(), '<') == std::count(s2.begin(), s2.end(), '>'));
  CHECK(s2.find("<ellipse") != std::string::npos);
}
