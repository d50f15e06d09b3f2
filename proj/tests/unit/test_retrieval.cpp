#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "../oracles/retrieval_oracle.hpp"
#include "deltaphi/error.hpp"
#include "deltaphi/log.hpp"
#include "deltaphi/retrieval.hpp"
#include "test_support.hpp"

using namespace dphi;
using dphi::test::random_field;

namespace {

const SimilarityMetric kMetrics[] = {SimilarityMetric::cosine_distance, SimilarityMetric::euclidean,
                                     SimilarityMetric::manhattan};

std::vector<GridField> random_fields(std::size_t n, GridShape shape, std::mt19937_64& rng) {
  std::vector<GridField> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_field(shape, rng));
  return out;
}

}  // namespace

TEST_CASE("distance reference values") {
  const std::vector<double> x{1.0, 0.0}, y{0.0, 1.0};
  for (auto m : kMetrics) CHECK(distance(x, x, m).value == 0.0);
  CHECK(distance(x, y, SimilarityMetric::cosine_distance).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(distance(x, y, SimilarityMetric::euclidean).value == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(distance(x, y, SimilarityMetric::manhattan).value == 2.0);
  const auto z = distance(x, std::vector<double>{0.0, 0.0}, SimilarityMetric::cosine_distance);
  CHECK(z.value == 2.0);
  CHECK(z.degenerate);
  CHECK_THROWS_AS(distance(x, std::vector<double>{1.0}, SimilarityMetric::euclidean), ContractViolation);
  CHECK(parse_metric("cosine") == SimilarityMetric::cosine_distance);
  CHECK_THROWS_AS(parse_metric("chebyshev"), ContractViolation);
}

TEST_CASE("rank_neighbors equals the brute-force sort") {
  std::mt19937_64 rng(20);
  const auto train = random_fields(50, {6, 6, 2}, rng);
  for (auto m : kMetrics) {
    const RetrievalIndex index(train, m);
    for (std::size_t q = 0; q < 5; ++q) {
      const auto ranked = index.rank_neighbors(train[q], q);
      const auto brute = dphi::oracle::brute_rank(train, train[q], m, q);
      REQUIRE(ranked.items.size() == brute.size());
      for (std::size_t r = 0; r < brute.size(); ++r) {
        CHECK(ranked.items[r].id == brute[r].second);
        CHECK(ranked.items[r].distance == doctest::Approx(brute[r].first).epsilon(1e-12));
      }
      CHECK(index.neighbors_of(q).items == ranked.items);
    }
  }
}

TEST_CASE("rank_neighbors tie rule and self exclusion") {
  std::mt19937_64 rng(21);
  auto fields = random_fields(6, {4, 4, 1}, rng);
  fields[4] = fields[1];  // exact duplicate with larger id
  const RetrievalIndex index(fields, SimilarityMetric::euclidean);
  const auto ranked = index.rank_neighbors(fields[1]);
  CHECK(ranked.items[0].id == 1);
  CHECK(ranked.items[1].id == 4);
  CHECK(ranked.items[1].distance == 0.0);
  const auto excl = index.neighbors_of(4);
  CHECK(excl.items[0].id == 1);
  for (const auto& nb : excl.items) CHECK(nb.id != 4);
  for (std::size_t r = 1; r < excl.items.size(); ++r) CHECK(excl.items[r - 1].distance <= excl.items[r].distance);
}

TEST_CASE("training auxiliary sampling") {
  std::mt19937_64 data_rng(22);
  const auto fields = random_fields(40, {5, 5, 1}, data_rng);
  const RetrievalIndex index(fields, SimilarityMetric::cosine_distance);

  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) CHECK(sample_training_auxiliary(index, 3, 1, rng) == index.neighbors_of(3).items[0].id);
  bool never_self = true;
  for (int t = 0; t < 10000; ++t) never_self = never_self && sample_training_auxiliary(index, t % 40, 20, rng) != std::size_t(t % 40);
  CHECK(never_self);

  // Chi-square goodness of fit against uniform over the top 20.
  std::map<std::size_t, int> counts;
  const int draws = 100000;
  std::mt19937_64 chi_rng(99);
  for (int t = 0; t < draws; ++t) ++counts[sample_training_auxiliary(index, 5, 20, chi_rng)];
  REQUIRE(counts.size() == 20);
  double chi2 = 0.0;
  const double expected = draws / 20.0;
  for (const auto& nb : std::span(index.neighbors_of(5).items).first(20)) {
    const double c = counts[nb.id];
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(chi2 < 36.191);  // 19 degrees of freedom, upper 1% point

  std::mt19937_64 a(5), b(5);
  for (int t = 0; t < 50; ++t) CHECK(sample_training_auxiliary(index, 2, 10, a) == sample_training_auxiliary(index, 2, 10, b));

  std::vector<std::string> warnings;
  auto previous = set_log_sink([&](LogLevel, const std::string& m) { warnings.push_back(m); });
  std::mt19937_64 c(1);
  for (int t = 0; t < 200; ++t) CHECK(sample_training_auxiliary(index, 0, 1000, c) != 0);
  set_log_sink(previous);
  CHECK(warnings.size() == 200);
}

TEST_CASE("retrieve_inference") {
  std::mt19937_64 rng(23);
  const auto train = random_fields(100, {6, 6, 1}, rng);
  for (auto m : kMetrics) {
    const RetrievalIndex index(train, m);
    CHECK(retrieve_inference(index, train[37]).id == 37);
    for (int q = 0; q < 10; ++q) {
      const auto query = random_field({6, 6, 1}, rng);
      CHECK(retrieve_inference(index, query).id == dphi::oracle::brute_rank(train, query, m, std::nullopt).front().second);
    }
    const auto r = retrieve_inference(index, GridField({6, 6, 1}, 2.5));
    CHECK(r.id == 0);
    CHECK(r.degenerate);
  }
  const RetrievalIndex index(train, SimilarityMetric::cosine_distance);
  CHECK_THROWS_AS(retrieve_inference(index, GridField({8, 8, 1}, 1.0)), ContractViolation);
}

TEST_CASE("cosine retrieval ignores positive rescaling of the query") {
  std::mt19937_64 rng(24);
  const auto train = random_fields(30, {5, 5, 1}, rng);
  const RetrievalIndex index(train, SimilarityMetric::cosine_distance);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_field({5, 5, 1}, rng);
    const double alpha = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    CHECK(retrieve_inference(index, alpha * q).id == retrieve_inference(index, q).id);
  }
}

TEST_CASE("cross-resolution retrieval") {
  std::mt19937_64 rng(25);
  const auto train = random_fields(40, {32, 32, 1}, rng);
  const RetrievalIndex index(train, SimilarityMetric::cosine_distance);
  const auto q = random_field({32, 32, 1}, rng);
  CHECK(retrieve_cross_resolution(index, q).id == retrieve_inference(index, q).id);
  CHECK(retrieve_cross_resolution(index, fourier_resample(train[11], {64, 64, 1})).id == 11);

  for (int t = 0; t < 10; ++t) {
    const auto high = random_field({64, 64, 1}, rng);
    const auto brute = dphi::oracle::brute_rank(train, fourier_resample(high, {32, 32, 1}),
                                                SimilarityMetric::cosine_distance, std::nullopt);
    CHECK(retrieve_cross_resolution(index, high).id == brute.front().second);
  }
  CHECK_THROWS_AS(retrieve_cross_resolution(index, GridField({16, 16, 1}, 1.0)), ContractViolation);
}

TEST_CASE("suggest_initial_k") {
  std::mt19937_64 rng(26);
  const auto train = random_fields(20, {5, 5, 1}, rng);
  for (auto m : kMetrics) {
    CHECK(suggest_initial_k(train, train, m).k == 1);
    const std::vector<GridField> pair(train.begin(), train.begin() + 2);
    auto previous = set_log_sink(nullptr);
    CHECK(suggest_initial_k(pair, random_fields(5, {5, 5, 1}, rng), m).k == 1);
    set_log_sink(previous);
  }
  for (int trial = 0; trial < 5; ++trial) {
    const auto tr = random_fields(20, {5, 5, 1}, rng);
    // Queries close to the training data keep the answer away from saturation.
    std::vector<GridField> te;
    for (int q = 0; q < 6; ++q) te.push_back(tr[q] + 0.6 * random_field({5, 5, 1}, rng));
    for (auto m : kMetrics) {
      auto previous = set_log_sink(nullptr);
      const auto got = suggest_initial_k(tr, te, m);
      set_log_sink(previous);
      CHECK(got.k == dphi::oracle::brute_initial_k(tr, te, m));
    }
  }
}
