#include "japs/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace japs;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(Steering, BroadsideIsFlat) {
  const CVec a = steering_vector(0.0, 2, 0.5);
  EXPECT_NEAR(std::abs(a(0) - Complex(1.0 / std::sqrt(2.0), 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a(1) - Complex(1.0 / std::sqrt(2.0), 0.0)), 0.0, 1e-15);
}

TEST(Steering, EndfireAlternates) {
  const CVec a = steering_vector(kPi / 2, 2, 0.5);
  EXPECT_NEAR(std::abs(a(0) - Complex(1.0 / std::sqrt(2.0), 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a(1) - Complex(-1.0 / std::sqrt(2.0), 0.0)), 0.0, 1e-15);
}

TEST(Steering, UnitNormEverywhere) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-kPi / 2, kPi / 2), sp(0.1, 2.0);
  std::uniform_int_distribution<int> n(1, 32);
  for (int k = 0; k < 1000; ++k) EXPECT_NEAR(steering_vector(ang(rng), n(rng), sp(rng)).norm(), 1.0, 1e-14);
}

TEST(PathLoss, Examples) {
  EXPECT_DOUBLE_EQ(path_loss(1.0, 2.4, 1e-3, 1.0), 1e-3);
  EXPECT_NEAR(path_loss(10.0, 2.4, 1e-3, 1.0), 1e-3 * std::pow(10.0, -2.4), 1e-18);
  EXPECT_NEAR(path_loss(10.0, 2.4, 1e-3, 1.0), 3.981e-6, 1e-9);
  EXPECT_DOUBLE_EQ(path_loss(123.0, 0.0, 0.25, 1.0), 0.25);
}

TEST(Rician, InfiniteFactorReturnsLos) {
  Engine rng(1);
  const CVec los = steering_vector(0.3, 4, 0.5);
  EXPECT_LT((draw_rician(los, 1e12, rng) - los).norm(), 1e-6);
}

TEST(Rician, RayleighMoments) {
  Engine rng(2);
  const CVec los = steering_vector(0.3, 4, 0.5);
  const int n = 10000;
  CVec mean = CVec::Zero(4);
  RVec second = RVec::Zero(4);
  for (int k = 0; k < n; ++k) {
    const CVec h = draw_rician(los, 0.0, rng);
    mean += h;
    second += h.cwiseAbs2();
  }
  mean /= n;
  second /= n;
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT(std::abs(mean(i)), 0.05);
    EXPECT_NEAR(second(i) - std::norm(mean(i)), 1.0, 0.05);
  }
}

TEST(Rician, UnitAveragePower) {
  Engine rng(3);
  const CVec los = steering_vector(0.0, 1, 0.5);
  double s = 0.0;
  for (int k = 0; k < 10000; ++k) s += draw_rician(los, 1.0, rng).squaredNorm();
  EXPECT_NEAR(s / 10000, 1.0, 0.05);
}

TEST(Topology, CircularSbsOnRadius) {
  ScenarioConfig c;
  c.topology = Topology::Circular;
  const Geometry g = generate_topology(c.topology, c, SeedTree(5));
  ASSERT_EQ(g.sbs.size(), 3u);
  for (const auto& s : g.sbs) EXPECT_NEAR((s - g.pbs).norm(), 200.0, 1e-9);
  EXPECT_LE((g.target - g.pbs).norm(), 200.0);
}

TEST(Topology, LinearSpacing) {
  ScenarioConfig c;
  c.topology = Topology::Linear;
  const Geometry g = generate_topology(c.topology, c, SeedTree(5));
  for (int j = 1; j < 3; ++j) EXPECT_NEAR((g.sbs[j] - g.sbs[j - 1]).norm(), 60.0, 1e-9);
  for (const auto& s : g.sbs) EXPECT_NEAR(std::abs(s.x() - g.pbs.x()), 200.0, 1e-9);
  EXPECT_NEAR(std::abs(g.target.x() - g.sbs[0].x()), 80.0, 1e-9);
}

TEST(Topology, RandomPresetPlacement) {
  ScenarioConfig c;
  const Geometry g = generate_topology(c.topology, c, SeedTree(9));
  EXPECT_DOUBLE_EQ(g.pbs.x(), 0.0);
  EXPECT_DOUBLE_EQ(g.pbs.y(), 250.0);
  EXPECT_DOUBLE_EQ(g.target.x(), 250.0);
  EXPECT_DOUBLE_EQ(g.target.y(), 250.0);
  const double deg = kPi / 180.0;
  EXPECT_NEAR(g.thetaDl[0], -55 * deg, 1e-9);
  EXPECT_NEAR(g.thetaDl[1], 30 * deg, 1e-9);
  EXPECT_NEAR(g.thetaUl[0][0], -70 * deg, 1e-9);
  EXPECT_NEAR(g.thetaUl[1][0], 20 * deg, 1e-9);
  for (const auto& s : g.sbs) EXPECT_TRUE(s.x() >= 0 && s.x() <= 500 && s.y() >= 0 && s.y() <= 500);
}

TEST(Topology, DeterministicAndValid) {
  for (Topology kind : {Topology::Random, Topology::Circular, Topology::Linear}) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      ScenarioConfig c;
      c.topology = kind;
      c.fixedUeAngles = seed % 2 == 0;
      const Geometry a = generate_topology(kind, c, SeedTree(seed));
      const Geometry b = generate_topology(kind, c, SeedTree(seed));
      EXPECT_EQ(a.target, b.target);
      EXPECT_EQ(a.dlUe, b.dlUe);
      EXPECT_EQ(a.sbs, b.sbs);
      auto in_range = [](double x) { return std::abs(x) < kPi / 2; };
      EXPECT_TRUE(in_range(a.theta));
      for (double x : a.phi) EXPECT_TRUE(in_range(x));
      for (double x : a.thetaDl) EXPECT_TRUE(in_range(x));
      for (const auto& v : a.thetaUl) {
        for (double x : v) EXPECT_TRUE(in_range(x));
      }
      for (double x : a.dTarget) EXPECT_GT(x, 0.0);
      for (double x : a.distDl) EXPECT_GT(x, 0.0);
      for (const auto& v : a.distUl) {
        for (double x : v) EXPECT_GT(x, 0.0);
      }
    }
  }
}

TEST(Topology, RegionTooSmall) {
  ScenarioConfig c;
  c.regionSize = 300.0;
  c.topology = Topology::Circular;
  EXPECT_THROW(generate_topology(c.topology, c, SeedTree(1)), RegionTooSmall);
  c.topology = Topology::Linear;
  c.regionSize = 150.0;
  EXPECT_THROW(generate_topology(c.topology, c, SeedTree(1)), RegionTooSmall);
}

TEST(Topology, AddingSbsKeepsOtherDraws) {
  ScenarioConfig c3, c4;
  c4.J = 4;
  const Geometry a = generate_topology(Topology::Random, c3, SeedTree(11));
  const Geometry b = generate_topology(Topology::Random, c4, SeedTree(11));
  for (int j = 0; j < 3; ++j) EXPECT_EQ(a.sbs[j], b.sbs[j]);
}

TEST(Channels, StructuralInvariants) {
  ScenarioConfig c;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario s = make_scenario(c, seed);
    const ChannelSet& ch = s.channels;
    ASSERT_EQ(ch.aBlocks.size(), 4u);
    for (int i = 0; i <= ch.J; ++i) {
      Eigen::JacobiSVD<CMat> svd(ch.aBlocks[i]);
      const RVec sv = svd.singularValues();
      EXPECT_GT(sv(0), 0.0);
      EXPECT_LT(sv(1), 1e-12 * sv(0));  // rank one
      EXPECT_NEAR(ch.aBlocks[i].norm(), std::abs(ch.alpha[i]), 1e-12 * std::abs(ch.alpha[i]));
      EXPECT_EQ(ch.aStacked.middleRows(ch.row_offset(i), ch.row_count(i)), ch.aBlocks[i]);
      if (i > 0) {
        EXPECT_TRUE(ch.gEffective.middleRows(ch.row_offset(i), ch.row_count(i)).isZero(0.0));
      }
    }
    EXPECT_EQ(ch.b0, ch.aStacked + ch.gEffective);
    for (Eigen::Index r = 0; r < ch.hSi.rows(); ++r) {
      for (Eigen::Index m = 0; m < ch.hSi.cols(); ++m) EXPECT_NEAR(std::abs(ch.hSi(r, m)), std::pow(10.0, -5.5), 1e-18);
    }
    EXPECT_EQ(ch.hDl.size(), 2u);
    EXPECT_EQ(ch.hUl.size(), 2u);
    EXPECT_EQ(ch.hUl[0].size(), 24);
  }
}

TEST(Channels, BitIdenticalForSameSeed) {
  ScenarioConfig c;
  const Scenario a = make_scenario(c, 77), b = make_scenario(c, 77);
  EXPECT_EQ(a.channels.hDl, b.channels.hDl);
  EXPECT_EQ(a.channels.hUl, b.channels.hUl);
  EXPECT_EQ(a.channels.aStacked, b.channels.aStacked);
  EXPECT_EQ(a.channels.hCross, b.channels.hCross);
  const Scenario d = make_scenario(c, 78);
  EXPECT_NE(a.channels.hDl, d.channels.hDl);
}

TEST(Channels, SwerlingMeanRcs) {
  // |sigma| = 2 d |alpha|; average over realizations at the PBS receiver.
  ScenarioConfig c;
  double s = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const SeedTree seeds(trial_seed(123, k));
    const Geometry g = generate_topology(c.topology, c, seeds);
    const ChannelSet ch = build_channels(g, c, seeds);
    s += 2.0 * g.dTarget[0] * std::abs(ch.alpha[0]);
  }
  EXPECT_NEAR(s / n, c.sigma0, 0.05 * c.sigma0);
}

TEST(Channels, MaskZeroesReceivers) {
  ScenarioConfig c;
  const ChannelSet ch = make_scenario(c, 4).channels;
  const ChannelSet active = apply_receiver_mask(ch, ReceiverMask::pbs_only(ch.J));
  EXPECT_TRUE(active.aStacked.bottomRows(ch.J * ch.N1).isZero(0.0));
  EXPECT_EQ(active.aStacked.topRows(ch.N0), ch.aStacked.topRows(ch.N0));
  const ChannelSet passive = apply_receiver_mask(ch, ReceiverMask::sbs_only(ch.J));
  EXPECT_TRUE(passive.aStacked.topRows(ch.N0).isZero(0.0));
  EXPECT_TRUE(passive.hSi.isZero(0.0));
  for (const auto& h : passive.hUl) EXPECT_TRUE(h.head(ch.N0).isZero(0.0));
  const RVec rows = mask_rows(ch, ReceiverMask::sbs_only(ch.J));
  EXPECT_EQ(rows.sum(), ch.J * ch.N1);
}
