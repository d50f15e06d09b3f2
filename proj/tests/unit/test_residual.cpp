#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "deltaphi/datagen.hpp"
#include "deltaphi/error.hpp"
#include "deltaphi/residual.hpp"
#include "test_support.hpp"

using namespace dphi;
using dphi::test::random_field;

namespace {

Dataset small_darcy(std::size_t n, std::size_t res, std::uint64_t seed) {
  DarcyConfig cfg;
  cfg.resolution = res;
  cfg.num_samples = n;
  cfg.seed = seed;
  return generate_darcy_dataset(cfg);
}

double mean_residual_norm(const Dataset& ds, const RetrievalIndex& index, std::size_t k) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    for (const auto& p : build_residual_dataset(ds, index, k, AuxiliaryPolicy{}, rng)) {
      total += p.target_residual->l2_norm();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("two samples pair with each other") {
  const auto ds = small_darcy(2, 8, 1);
  const RetrievalIndex index(ds, SimilarityMetric::cosine_distance);
  std::mt19937_64 rng(0);
  const auto pairs = build_residual_dataset(ds, index, 1, AuxiliaryPolicy{}, rng);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].aux_id == 1);
  CHECK(pairs[1].aux_id == 0);
  CHECK(pairs[0].score >= 0.0);
  CHECK(pairs[0].score <= 2.0);
  CHECK_THROWS_AS(build_residual_dataset(ds.subset(std::vector<std::size_t>{0}),
                                         RetrievalIndex(ds.subset(std::vector<std::size_t>{0}),
                                                        SimilarityMetric::cosine_distance),
                                         1, AuxiliaryPolicy{}, rng),
                  ContractViolation);
}

TEST_CASE("duplicated outputs give a zero residual") {
  const auto base = small_darcy(3, 8, 2);
  std::vector<TrajectorySample> samples(base.samples());
  samples.push_back(samples[0]);
  samples.back().id = 3;
  // Perturb the duplicate's input so retrieval is non-trivial but the nearest
  // neighbour of sample 3 is still sample 0.
  samples.back().input.at(0, 2, 2) += 1e-3;
  const Dataset ds(std::move(samples));
  const RetrievalIndex index(ds, SimilarityMetric::cosine_distance);
  std::mt19937_64 rng(0);
  const auto pairs = build_residual_dataset(ds, index, 1, AuxiliaryPolicy{}, rng);
  CHECK(pairs[3].aux_id == 0);
  CHECK(*pairs[3].target_residual == GridField(pairs[3].aux_solution.shape(), 0.0));
}

TEST_CASE("residual pairs reconstruct the original solution") {
  const auto ds = small_darcy(20, 16, 3);
  const RetrievalIndex index(ds, SimilarityMetric::cosine_distance);
  std::mt19937_64 rng(1);
  std::size_t exact = 0, inexact = 0;
  for (const auto& p : build_residual_dataset(ds, index, 5, AuxiliaryPolicy{}, rng)) {
    CHECK(p.aux_id != p.primary_id);
    const auto rebuilt = reconstruct_solution(*p.target_residual, p.aux_solution);
    const auto& u = ds[p.primary_id].output;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double want = u.values()[k], uk = p.aux_solution.values()[k], got = rebuilt.values()[k];
      if (got == want) {
        ++exact;
        continue;
      }
      // Only acceptable when no double r near u - uk satisfies fl(r + uk) == u,
      // which happens once the residual's spacing is coarser than u's.
      const double r = want - uk;
      CHECK(std::abs(got - want) <= std::abs(want - std::nextafter(want, got)));
      double lo = r, hi = r;
      bool representable = false;
      for (int step = 0; step < 16; ++step) {
        lo = std::nextafter(lo, -1.0);
        hi = std::nextafter(hi, 1.0);
        representable = representable || lo + uk == want || hi + uk == want;
      }
      CHECK_FALSE(representable);
      ++inexact;
    }
  }
  CHECK(exact > 100 * inexact);
}

TEST_CASE("reconstruction on arbitrary data is exact up to one rounding") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto u = random_field({6, 6, 2}, rng, -1e3, 1e3);
    const auto uk = random_field({6, 6, 2}, rng, -1.0, 1.0);
    const auto rebuilt = reconstruct_solution(u - uk, uk);
    for (std::size_t k = 0; k < u.size(); ++k)
      CHECK(std::abs(rebuilt.values()[k] - u.values()[k]) <= std::abs(u.values()[k]) * 2.3e-16);
  }
}

TEST_CASE("nearer auxiliaries give smaller residual targets") {
  const auto ds = small_darcy(40, 16, 5);
  const RetrievalIndex index(ds, SimilarityMetric::cosine_distance);
  CHECK(mean_residual_norm(ds, index, 1) < mean_residual_norm(ds, index, ds.size() - 1));
}

TEST_CASE("residual dataset resampling is seeded") {
  const auto ds = small_darcy(30, 8, 6);
  const RetrievalIndex index(ds, SimilarityMetric::cosine_distance);
  auto ids = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> out;
    for (const auto& p : build_residual_dataset(ds, index, 20, AuxiliaryPolicy{}, rng)) out.push_back(p.aux_id);
    return out;
  };
  CHECK(ids(3) == ids(3));
  int differing = 0;
  for (std::uint64_t s = 0; s < 20; ++s) differing += ids(s) != ids(s + 100);
  CHECK(differing == 20);
}

TEST_CASE("assembled channel counts for every policy") {
  const std::size_t kAll = AuxiliaryPolicy::kAllSteps;
  struct Row {
    std::size_t keep;
    bool solution, score;
    std::size_t darcy, series;
  };
  // Darcy: 1 input / 1 output channel. Time series: 10 input / 10 output.
  const Row table[] = {
      {kAll, true, true, 4, 31},  {kAll, true, false, 3, 30}, {kAll, false, true, 3, 21},
      {kAll, false, false, 2, 20}, {3, true, true, 0, 24},    {3, true, false, 0, 23},
      {3, false, true, 0, 14},    {3, false, false, 0, 13},   {0, true, true, 3, 21},
      {0, true, false, 2, 20},    {0, false, true, 2, 11},
  };
  for (const Row& r : table) {
    const AuxiliaryPolicy p{r.keep, r.solution, r.score};
    if (r.darcy != 0) CHECK(assembled_channels(p, 1, 1) == r.darcy);
    CHECK(assembled_channels(p, 10, 10) == r.series);
  }
  CHECK_THROWS_AS(assembled_channels(AuxiliaryPolicy{0, false, false}, 1, 1), ContractViolation);
  CHECK_THROWS_AS(assembled_channels(AuxiliaryPolicy{3, true, true}, 1, 1), ContractViolation);
}

TEST_CASE("assemble_input layout") {
  TimeSeriesConfig cfg;
  cfg.resolution = 8;
  cfg.num_samples = 2;
  const auto a = generate_timeseries(cfg, 0);
  const auto b = generate_timeseries(cfg, 1);
  const AuxiliaryPolicy partial{3, true, true};
  const auto pair = make_residual_pair(a.input, &a.output, b, 0.25, partial);
  const auto stacked = assemble_input(pair, partial);
  REQUIRE(stacked.channels() == 24);
  CHECK(stacked.slice_channels(0, 10) == a.input);
  CHECK(stacked.slice_channels(10, 3) == b.input.slice_channels(7, 3));
  CHECK(stacked.slice_channels(13, 10) == b.output);
  CHECK(stacked.slice_channels(23, 1) == GridField({8, 8, 1}, 0.25));

  const AuxiliaryPolicy no_score{0, true, false};
  const auto p2 = make_residual_pair(a.input, nullptr, b, 0.5, no_score);
  CHECK_FALSE(p2.target_residual.has_value());
  CHECK(assemble_input(p2, no_score).channels() == 20);
  // A pair built for one policy cannot be assembled under another.
  CHECK_THROWS_AS(assemble_input(pair, no_score), ContractViolation);
}

TEST_CASE("reconstruct_solution contract") {
  std::mt19937_64 rng(7);
  const auto r = random_field({5, 5, 1}, rng);
  const auto u = random_field({5, 5, 1}, rng);
  CHECK(reconstruct_solution(GridField(u.shape(), 0.0), u) == u);
  const auto r2 = random_field({5, 5, 1}, rng);
  const auto u2 = random_field({5, 5, 1}, rng);
  const auto lhs = reconstruct_solution(2.0 * r + r2, 2.0 * u + u2);
  const auto rhs = 2.0 * reconstruct_solution(r, u) + reconstruct_solution(r2, u2);
  CHECK(dphi::test::max_abs_diff(lhs, rhs) < 1e-14);
  CHECK_THROWS_AS(reconstruct_solution(r, GridField({5, 6, 1}, 0.0)), ContractViolation);
}

TEST_CASE("cross-resolution integration") {
  std::mt19937_64 rng(8);
  const auto aux = random_field({16, 16, 2}, rng);
  CHECK(dphi::test::max_abs_diff(integrate_cross_resolution(aux, {16, 16, 2}), aux) < 1e-12);
  const auto c = integrate_cross_resolution(GridField({16, 16, 1}, -0.5), {64, 64, 1});
  for (double v : c.values()) CHECK(std::abs(v + 0.5) < 1e-14);

  const double two_pi = 2.0 * std::numbers::pi;
  const auto aux_u = [&](double x, double y) { return std::sin(two_pi * x) + 0.3 * std::cos(two_pi * 2 * y); };
  const auto resid = [&](double x, double y) { return 0.2 * std::sin(two_pi * (x + y)); };
  const auto u_hat = reconstruct_solution(dphi::test::periodic_samples(64, resid),
                                          integrate_cross_resolution(dphi::test::periodic_samples(16, aux_u), {64, 64, 1}));
  const auto exact = dphi::test::periodic_samples(64, [&](double x, double y) { return aux_u(x, y) + resid(x, y); });
  CHECK(dphi::test::max_abs_diff(u_hat, exact) < 1e-10);
  CHECK_THROWS_AS(integrate_cross_resolution(aux, {8, 8, 2}), ContractViolation);
}
