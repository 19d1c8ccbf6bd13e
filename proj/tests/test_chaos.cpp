#include <gtest/gtest.h>

#include <atomic>

#include "vortexline/chaos.hpp"

using namespace vortexline;

TEST(Stretching, GroundStateIsExactlyZero) {
  const WavefunctionSpec spec({{1.0, {0, 0, 0}}}, demo_omega());
  IntegratorOptions o;
  o.sample_dt = 0.1;
  const auto traj = integrate_with_deviation(spec, Vec3(0.4, -0.2, 0.3), Vec3::UnitX(), 0.0, 3.0, o);
  const auto s = stretching_numbers(traj);
  ASSERT_EQ(s.alphas.size(), 30u);
  for (double a : s.alphas) EXPECT_EQ(a, 0.0);
  for (double c : s.chi) EXPECT_EQ(c, 0.0);
}

TEST(Stretching, DoublingGivesLog2) {
  std::vector<double> len{1.0};
  for (int k = 0; k < 10; ++k) len.push_back(2.0 * len.back());
  const auto s = stretching_numbers(len, 0.5);
  for (double a : s.alphas) EXPECT_NEAR(a, std::log(2.0), 1e-15);
  EXPECT_NEAR(s.chi.back(), std::log(2.0) / 0.5, 1e-14);
}

TEST(Stretching, ChiIsRunningMean) {
  const std::vector<double> len{1.0, 3.0, 1.5, 4.5, 0.9, 2.0};
  const auto s = stretching_numbers(len, 0.2);
  double sum = 0.0;
  for (std::size_t k = 0; k < s.alphas.size(); ++k) {
    sum += s.alphas[k];
    EXPECT_NEAR(s.chi[k], sum / ((k + 1) * 0.2), 1e-14);
    EXPECT_NEAR(finite_time_lcn(s, k + 1), s.chi[k], 1e-14);
  }
  // telescoping: sum of alphas is ln(final / initial)
  EXPECT_NEAR(sum, std::log(2.0), 1e-14);
  EXPECT_THROW(finite_time_lcn(s, 0), Error);
}

TEST(Correlation, SyntheticSpikeMatched) {
  DeviationSeries s;
  s.t0 = 0.1;
  std::vector<std::optional<double>> d;
  for (int k = 1; k <= 40; ++k) {
    s.times.push_back(0.1 * k);
    s.alphas.push_back(k == 10 ? 2.0 : (k == 30 ? -1.5 : 0.01 * ((k % 3) - 1)));
    d.push_back(std::abs(k - 11) * 0.1 + 0.05);
  }
  const auto r = correlate_events(s, d);
  ASSERT_EQ(r.summary.jumps, 2u);
  EXPECT_TRUE(r.events[0].matched);
  EXPECT_NEAR(r.events[0].t_min_dist, 1.1, 1e-12);
  EXPECT_NEAR(r.events[0].d_min, 0.05, 1e-12);
  // the second spike is far from the only minimum
  EXPECT_FALSE(r.events[1].matched);
  EXPECT_EQ(r.summary.far_jumps, 1u);
  EXPECT_NEAR(r.summary.fraction_matched, 0.5, 1e-15);
}

TEST(Correlation, MissingDistanceCountsAsFar) {
  DeviationSeries s;
  s.t0 = 0.1;
  s.times = {0.1, 0.2, 0.3};
  s.alphas = {0.0, 1.0, 0.0};
  const std::vector<std::optional<double>> d{0.5, std::nullopt, 0.5};
  CorrelationOptions o;
  o.jump_threshold = 0.5;
  const auto r = correlate_events(s, d, o);
  ASSERT_EQ(r.summary.jumps, 1u);
  EXPECT_EQ(r.summary.far_jumps, 1u);
}

TEST(Correlation, IntervalMinimum) {
  DeviationSeries s;
  s.t0 = 0.1;
  s.times = {0.1, 0.2};
  std::vector<DistanceSample> fine;
  for (int k = 0; k <= 10; ++k) fine.push_back({0.02 * k, 1.0 - 0.01 * k * (k % 2), {}, {}, false});
  const auto m = interval_minimum(s, fine);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_NEAR(*m[0], 0.95, 1e-15);  // k = 5 in (0, 0.1]
  EXPECT_NEAR(*m[1], 0.91, 1e-15);  // k = 9 in (0.1, 0.2]
}

TEST(Correlation, MedianAbs) {
  EXPECT_EQ(median_abs({-3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median_abs({-4.0, 1.0, 2.0, -3.0}), 2.5);
  EXPECT_EQ(median_abs({}), 0.0);
}

TEST(Parallel, EveryIndexOnceAndLowestErrorRethrown) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 31) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "7");
  }
}

TEST(Distance, LineLostWhenNoNodes) {
  // the ground state has no nodal lines at all
  const WavefunctionSpec spec({{1.0, {0, 0, 0}}}, demo_omega());
  IntegratorOptions o;
  o.sample_dt = 0.5;
  const auto traj = integrate_trajectory(spec, Vec3(0.2, 0.1, 0.0), 0.0, 1.0, o);
  DistanceOptions d;
  d.scan_resolution = 3;
  const auto dist = distance_to_xline(spec, traj, line_snapshots(spec, 0.0, 1.0, d), d);
  ASSERT_EQ(dist.size(), traj.samples.size());
  for (const auto& s : dist) EXPECT_FALSE(s.d.has_value());
}
