#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace japs;

namespace {

CMat diag2(double a, double b) {
  CMat m = CMat::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// Lagrangian-dual form of one rate term, in bits.
double dual_term(double delta, double signal, double interference) {
  return kLog2e * (std::log1p(delta) - delta + (1.0 + delta) * signal / (signal + interference));
}

struct State {
  ChannelSet c;
  BeamformerSolution s;
};

State random_state(std::mt19937_64& rng) {
  State st{oracle::random_channels(rng), {}};
  st.s = oracle::random_solution(st.c, rng);
  st.s.u = optimal_receive_filter(st.c, st.s.total_covariance(), st.s.p, ReceiverMask::all(st.c.J));
  return st;
}

// Dual bisection over lambda with a per-user grid search for the primal,
// independent of the closed form. Returns the best feasible grid objective.
double grid_oracle(const PowerSubproblem& ps) {
  const std::size_t U = ps.mu1.size();
  auto primal = [&](double lam) {
    std::vector<double> p(U);
    for (std::size_t u = 0; u < U; ++u) {
      const double step = 1e-4 * ps.pMax[u];
      double best = 0.0, bestV = 0.0;
      for (int k = 0; k <= 10000; ++k) {
        const double x = k * step;
        const double v = ps.mu1[u] * x - ps.mu2[u] * std::sqrt(x) + lam * ps.mu3[u] * x;
        if (v < bestV) {
          bestV = v;
          best = x;
        }
      }
      p[u] = best;
    }
    return p;
  };
  std::vector<double> p = primal(0.0);
  if (ps.coupling(p) <= 0.0) return ps.objective(p);
  double lo = 0.0, hi = 1.0;
  while (ps.coupling(primal(hi)) > 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ps.coupling(primal(mid)) > 0.0 ? lo : hi) = mid;
  }
  return ps.objective(primal(hi));
}

}  // namespace

TEST(Rayleigh, DiagonalCases) {
  auto r = max_generalized_rayleigh(diag2(2, 1), CMat::Identity(2, 2), full_support(2));
  EXPECT_NEAR(r.value, 2.0, 1e-14);
  EXPECT_NEAR(std::abs(r.vector(0)), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(r.vector(1)), 0.0, 1e-14);
  r = max_generalized_rayleigh(diag2(1, 2), diag2(1, 4), full_support(2));
  EXPECT_NEAR(r.value, 1.0, 1e-14);
  EXPECT_NEAR(std::abs(r.vector(0)), 1.0, 1e-14);
}

TEST(Rayleigh, SupportRestriction) {
  RVec support(2);
  support << 0.0, 1.0;
  const auto r = max_generalized_rayleigh(diag2(2, 1), CMat::Identity(2, 2), support);
  EXPECT_NEAR(r.value, 1.0, 1e-14);
  EXPECT_EQ(r.vector(0), Complex(0.0));
  const auto none = max_generalized_rayleigh(diag2(2, 1), CMat::Identity(2, 2), RVec::Zero(2));
  EXPECT_EQ(none.value, 0.0);
  EXPECT_TRUE(none.vector.isZero(0.0));
}

TEST(Rayleigh, BeatsRandomUnitVectors) {
  std::mt19937_64 rng(12);
  for (int inst = 0; inst < 20; ++inst) {
    const CMat q = oracle::random_psd(12, 3, rng);
    CMat d = oracle::random_psd(12, 12, rng);
    d.diagonal().array() += 0.1;
    const auto r = max_generalized_rayleigh(q, d, full_support(12));
    EXPECT_NEAR(quad_form(q, r.vector) / quad_form(d, r.vector), r.value, 1e-10 * r.value);
    EXPECT_NEAR(r.vector.norm(), 1.0, 1e-12);
    EXPECT_NEAR(r.vector(0).imag(), 0.0, 1e-14);
    EXPECT_GE(r.vector(0).real(), 0.0);
    for (int k = 0; k < 10000; ++k) {
      CVec x = oracle::random_vector(12, rng);
      x /= x.norm();
      EXPECT_LE(quad_form(q, x) / quad_form(d, x), r.value * (1.0 + 1e-12));
    }
  }
}

TEST(SensingFilter, ConsistentWithSensingSinr) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 20; ++k) {
    const ChannelSet c = oracle::random_channels(rng);
    BeamformerSolution s = oracle::random_solution(c, rng);
    for (const ReceiverMask& m : {ReceiverMask::all(c.J), ReceiverMask::pbs_only(c.J), ReceiverMask::sbs_only(c.J)}) {
      s.u = optimal_receive_filter(c, s.total_covariance(), s.p, m);
      const double best = max_sensing_sinr(c, s.total_covariance(), s.p, m);
      EXPECT_NEAR(sensing_sinr(c, s), best, 1e-10 * best);
      const RVec rows = mask_rows(c, m);
      for (Eigen::Index i = 0; i < rows.size(); ++i) {
        if (rows(i) == 0.0) {
          EXPECT_EQ(s.u(i), Complex(0.0));
        }
      }
    }
    EXPECT_EQ(max_sensing_sinr(c, CMat::Zero(c.M, c.M), s.p, ReceiverMask::all(c.J)), 0.0);
  }
}

TEST(FpDelta, ClosedFormsAndTightness) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    State st = random_state(rng);
    const FpAuxiliaries a = update_delta(st.c, st.s);
    for (int d = 0; d < st.c.D(); ++d) {
      EXPECT_EQ(a.deltaD[d], dl_sinr(d, st.c, st.s));
      const double sig = dl_signal(d, st.c, st.s), inf = dl_interference(d, st.c, st.s);
      EXPECT_NEAR(dual_term(a.deltaD[d], sig, inf), std::log2(1.0 + sig / inf), 1e-8);
      // delta* maximizes the dual form
      for (double e : {-1e-3, 1e-3}) EXPECT_LE(dual_term(a.deltaD[d] + e, sig, inf), dual_term(a.deltaD[d], sig, inf));
    }
    for (int u = 0; u < st.c.U(); ++u) EXPECT_EQ(a.deltaU[u], ul_sinr(u, st.c, st.s));
  }
}

TEST(FpDelta, ZeroPowerGivesZero) {
  std::mt19937_64 rng(3);
  State st = random_state(rng);
  st.s.p[0] = 0.0;
  EXPECT_EQ(update_delta(st.c, st.s).deltaU[0], 0.0);
  const FpAuxiliaries a = update_eta(st.c, st.s, update_delta(st.c, st.s));
  EXPECT_EQ(a.etaU[0], Complex(0.0));
}

TEST(FpEta, StationaryAndTight) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    State st = random_state(rng);
    const FpAuxiliaries a = update_eta(st.c, st.s, update_delta(st.c, st.s));
    const double f = fp_objective(st.c, st.s, a);
    EXPECT_NEAR(f, sum_rate(st.c, st.s), 1e-8);
    for (const Complex e : {Complex(1e-4, 0), Complex(-1e-4, 0), Complex(0, 1e-4), Complex(0, -1e-4)}) {
      for (int d = 0; d < st.c.D(); ++d) {
        FpAuxiliaries b = a;
        b.etaD[d] += e;
        EXPECT_LT(fp_objective(st.c, st.s, b), f);
      }
      for (int u = 0; u < st.c.U(); ++u) {
        FpAuxiliaries b = a;
        b.etaU[u] += e;
        EXPECT_LT(fp_objective(st.c, st.s, b), f);
      }
    }
  }
}

TEST(FpEta, ZeroSignalChannelGivesZero) {
  std::mt19937_64 rng(6);
  State st = random_state(rng);
  st.c.hDl[0].setZero();
  const FpAuxiliaries a = update_eta(st.c, st.s, update_delta(st.c, st.s));
  EXPECT_EQ(a.etaD[0], Complex(0.0));
}

TEST(FpObjective, AllZeroAuxiliaries) {
  std::mt19937_64 rng(7);
  State st = random_state(rng);
  FpAuxiliaries a;
  a.deltaD.assign(st.c.D(), 0.0);
  a.deltaU.assign(st.c.U(), 0.0);
  a.etaD.assign(st.c.D(), Complex(0.0));
  a.etaU.assign(st.c.U(), Complex(0.0));
  EXPECT_EQ(fp_objective(st.c, st.s, a), 0.0);
}

TEST(ReceiveFilters, MaximizeQuadraticForm) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    State st = random_state(rng);
    const FpAuxiliaries a = update_eta(st.c, st.s, update_delta(st.c, st.s));
    const ReceiveFilterUpdate r = update_receive_filters(st.c, st.s, a);
    EXPECT_FALSE(r.any_degenerate());
    BeamformerSolution best = st.s;
    best.vU = r.v;
    const double f = fp_objective(st.c, best, a);
    EXPECT_GE(f, fp_objective(st.c, st.s, a) - 1e-10);
    for (int trial = 0; trial < 1000; ++trial) {
      BeamformerSolution other = best;
      const int u = trial % st.c.U();
      const double scale = (trial % 3 == 0) ? 1e-3 : 1.0;
      other.vU[u] += scale * r.v[u].norm() * oracle::random_vector(st.c.rows(), rng);
      EXPECT_LE(fp_objective(st.c, other, a), f + 1e-10);
    }
    // central-difference gradient of the objective in v vanishes
    for (int u = 0; u < st.c.U(); ++u) {
      const double h = 1e-6 * r.v[u].norm();
      double g2 = 0.0;
      for (Eigen::Index i = 0; i < r.v[u].size(); ++i) {
        for (const Complex dir : {Complex(1, 0), Complex(0, 1)}) {
          BeamformerSolution p = best, m = best;
          p.vU[u](i) += h * dir;
          m.vU[u](i) -= h * dir;
          const double g = (fp_objective(st.c, p, a) - fp_objective(st.c, m, a)) / (2 * h);
          g2 += g * g;
        }
      }
      EXPECT_LE(std::sqrt(g2), 1e-6 * std::max(1.0, std::abs(f)));
    }
  }
}

TEST(ReceiveFilters, DegenerateAuxiliaryKeepsFilter) {
  std::mt19937_64 rng(9);
  State st = random_state(rng);
  FpAuxiliaries a = update_eta(st.c, st.s, update_delta(st.c, st.s));
  a.etaU[1] = 0.0;
  const ReceiveFilterUpdate r = update_receive_filters(st.c, st.s, a);
  EXPECT_TRUE(r.degenerateAux[1]);
  EXPECT_FALSE(r.degenerateAux[0]);
  EXPECT_EQ(r.v[1], st.s.vU[1]);
}

TEST(Powers, Examples) {
  PowerSubproblem ps;
  ps.mu1 = {1.0};
  ps.mu2 = {2.0};
  ps.mu3 = {0.0};
  ps.pMax = {10.0};
  EXPECT_NEAR(update_powers(ps)[0], 1.0, 1e-12);
  ps.mu3 = {1.0};
  ps.rho3 = -0.5;
  EXPECT_NEAR(update_powers(ps)[0], 0.5, 1e-7);
  ps.mu2 = {0.0};
  EXPECT_EQ(update_powers(ps)[0], 0.0);
  ps.mu2 = {2.0};
  ps.rho3 = 0.1;
  EXPECT_THROW(update_powers(ps), InfeasiblePower);
  ps.sensingConstraint = false;
  EXPECT_NEAR(update_powers(ps)[0], 1.0, 1e-12);
}

TEST(Powers, MatchesGridOracle) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  int binding = 0;
  for (int U : {1, 2, 4}) {
    for (int inst = 0; inst < 100; ++inst) {
      PowerSubproblem ps;
      for (int u = 0; u < U; ++u) {
        ps.mu1.push_back(0.1 + ud(rng));
        ps.mu2.push_back(ud(rng) < 0.1 ? -ud(rng) : 2.0 * ud(rng));
        ps.mu3.push_back(ud(rng) < 0.2 ? 0.0 : ud(rng));
        ps.pMax.push_back(0.2 + 2.0 * ud(rng));
      }
      double load = 0.0;
      const std::vector<double> p0 = update_powers([&] {
        PowerSubproblem f = ps;
        f.sensingConstraint = false;
        return f;
      }());
      for (int u = 0; u < U; ++u) load += ps.mu3[u] * p0[u];
      ps.rho3 = -(0.2 + 1.3 * ud(rng)) * load - 1e-3;
      const std::vector<double> p = update_powers(ps);
      double scale = std::abs(ps.rho3);
      for (int u = 0; u < U; ++u) scale += ps.mu3[u] * ps.pMax[u];
      const double tol = 1e-8 * scale;
      EXPECT_LE(ps.coupling(p), tol);
      for (int u = 0; u < U; ++u) {
        EXPECT_GE(p[u], 0.0);
        EXPECT_LE(p[u], ps.pMax[u]);
      }
      if (ps.coupling(p0) > 0.0) ++binding;
      const double ref = grid_oracle(ps);
      const double got = ps.objective(p);
      // never worse than the grid; better only by the grid's own resolution
      EXPECT_LE(got, ref + 1e-3 * std::abs(ref)) << "U=" << U << " inst " << inst;
      EXPECT_GE(got, ref - 1e-2 * std::abs(ref) - 1e-4) << "U=" << U << " inst " << inst;
    }
  }
  EXPECT_GT(binding, 50);  // the coupling row matters in a good share of cases
}

TEST(FpCycle, NondecreasingOnRandomStates) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    State st = random_state(rng);
    const double gamma = 0.9 * sensing_sinr(st.c, st.s);  // current powers feasible
    FpAuxiliaries a = update_delta(st.c, st.s);
    a.etaD.assign(st.c.D(), Complex(0.3, 0.1));
    a.etaU.assign(st.c.U(), Complex(0.2, -0.1));
    double f = fp_objective(st.c, st.s, a);
    a = update_eta(st.c, st.s, update_delta(st.c, st.s));
    double g = fp_objective(st.c, st.s, a);
    EXPECT_GE(g, f - 1e-8);
    EXPECT_NEAR(g, sum_rate(st.c, st.s), 1e-8);
    f = g;
    st.s.vU = update_receive_filters(st.c, st.s, a).v;
    g = fp_objective(st.c, st.s, a);
    EXPECT_GE(g, f - 1e-8);
    f = g;
    const PowerSubproblem ps = power_subproblem(st.c, st.s, a, gamma, 1.0);
    st.s.p = update_powers(ps);
    g = fp_objective(st.c, st.s, a);
    EXPECT_GE(g, f - 1e-8);
    EXPECT_NEAR(g, -kLog2e * (ps.objective(st.s.p) + ps.rho2), 1e-8 * std::max(1.0, std::abs(g)));
    EXPECT_GE(sensing_sinr(st.c, st.s), gamma * (1.0 - 1e-6));
    // a fresh delta/eta pass is tight again and never below the surrogate
    const FpAuxiliaries b = update_eta(st.c, st.s, update_delta(st.c, st.s));
    EXPECT_GE(sum_rate(st.c, st.s), g - 1e-8);
    EXPECT_NEAR(fp_objective(st.c, st.s, b), sum_rate(st.c, st.s), 1e-8);
  }
}

TEST(Powers, SensingRowMatchesConstraint) {
  // coupling(p) <= 0  <=>  sensing SINR at (W, u, p) >= gamma
  std::mt19937_64 rng(13);
  for (int k = 0; k < 30; ++k) {
    State st = random_state(rng);
    const double gamma = sensing_sinr(st.c, st.s);
    const FpAuxiliaries a = update_eta(st.c, st.s, update_delta(st.c, st.s));
    const PowerSubproblem ps = power_subproblem(st.c, st.s, a, gamma, 1.0);
    const double scale = std::abs(ps.rho3) + 1.0;
    EXPECT_NEAR(ps.coupling(st.s.p) * gamma, 0.0, 1e-10 * scale * gamma);
  }
}
