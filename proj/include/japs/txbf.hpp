#pragma once

#include "japs/config.hpp"
#include "japs/conic.hpp"
#include "japs/errors.hpp"
#include "japs/linalg.hpp"
#include "japs/metrics.hpp"
#include "japs/rxopt.hpp"
#include "japs/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace japs {

// Lifted transmit variables are laid out as blocks {W_c,1 .. W_c,D, V_r}.

inline CMat lifted_sum(const Blocks& x) {
  CMat s = x.back();
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s += x[i];
  return s;
}

inline Blocks lifted_blocks(const BeamformerSolution& s) {
  Blocks x = s.wCLifted;
  x.push_back(s.vR);
  return x;
}

/// Interference-plus-noise Psi_d at DL UE d for lifted blocks x.
inline double dl_psi(int d, const ChannelSet& c, const Blocks& x, const std::vector<double>& p) {
  const CVec& h = c.hDl[d];
  const int D = static_cast<int>(x.size()) - 1;
  double v = quad_form(x[D], h) + c.noise.dl;
  for (int k = 0; k < D; ++k) {
    if (k != d) v += quad_form(x[k], h);
  }
  for (std::size_t u = 0; u < p.size(); ++u) v += p[u] * std::norm(c.hCross[d][u]);
  return v;
}

/// B0^H v v^H B0: the transmit-side footprint of UL filter v.
inline CMat ul_leakage_matrix(const ChannelSet& c, const CVec& v) { return lift(c.b0.adjoint() * v); }

/// Interference-plus-noise Psi_u at UL filter u for lifted blocks x.
inline double ul_psi(int u, const ChannelSet& c, const Blocks& x, const std::vector<CVec>& vU,
                     const std::vector<double>& p) {
  const CVec& v = vU[u];
  double r = quad_form(lifted_sum(x), c.b0.adjoint() * v) + c.noise.ul * v.squaredNorm();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (static_cast<int>(k) != u) r += p[k] * std::norm(v.dot(c.hUl[k]));
  }
  return r;
}

/// Rate terms Theta in bits.
inline double dl_theta(int d, const ChannelSet& c, const Blocks& x, const std::vector<double>& p) {
  return std::log2(1.0 + quad_form(x[d], c.hDl[d]) / dl_psi(d, c, x, p));
}

inline double ul_theta(int u, const ChannelSet& c, const Blocks& x, const std::vector<CVec>& vU,
                       const std::vector<double>& p) {
  const double sig = p[u] * std::norm(vU[u].dot(c.hUl[u]));
  if (sig == 0.0) return 0.0;
  return std::log2(1.0 + sig / ul_psi(u, c, x, vU, p));
}

/// SCA expansion data. Rates are in bits, so a = log2(Psi at the point) and
/// B = log2(e) * (gradient matrix of Psi) / Psi.
struct SurrogateCoefficients {
  std::vector<double> aD, aU;
  std::vector<CMat> bD, bU;
  Blocks expansionPoint;
};

inline SurrogateCoefficients surrogate_coefficients(const Blocks& point, const ChannelSet& c,
                                                    const std::vector<CVec>& vU, const std::vector<double>& p) {
  SurrogateCoefficients s;
  s.expansionPoint = point;
  const int D = static_cast<int>(point.size()) - 1;
  for (int d = 0; d < D; ++d) {
    const double psi = dl_psi(d, c, point, p);
    if (!(psi > 0.0) || !std::isfinite(psi)) throw DegenerateExpansion("DL interference term is not positive");
    s.aD.push_back(std::log2(psi));
    s.bD.push_back(kLog2e * lift(c.hDl[d]) / psi);
  }
  for (std::size_t u = 0; u < p.size(); ++u) {
    const double psi = ul_psi(static_cast<int>(u), c, point, vU, p);
    if (!(psi > 0.0) || !std::isfinite(psi)) throw DegenerateExpansion("UL interference term is not positive");
    s.aU.push_back(std::log2(psi));
    s.bU.push_back(kLog2e * ul_leakage_matrix(c, vU[u]) / psi);
  }
  return s;
}

/// Theta_lb,d: exact first term minus the linearized log-interference.
inline double dl_surrogate(int d, const SurrogateCoefficients& s, const ChannelSet& c, const Blocks& x,
                           const std::vector<double>& p) {
  const int D = static_cast<int>(x.size()) - 1;
  const double total = quad_form(x[d], c.hDl[d]) + dl_psi(d, c, x, p);
  double lin = s.aD[d] + inner(s.bD[d], x[D] - s.expansionPoint[D]);
  for (int k = 0; k < D; ++k) {
    if (k != d) lin += inner(s.bD[d], x[k] - s.expansionPoint[k]);
  }
  return std::log2(total) - lin;
}

inline double ul_surrogate(int u, const SurrogateCoefficients& s, const ChannelSet& c, const Blocks& x,
                           const std::vector<CVec>& vU, const std::vector<double>& p) {
  const double total = p[u] * std::norm(vU[u].dot(c.hUl[u])) + ul_psi(u, c, x, vU, p);
  const double lin = s.aU[u] + inner(s.bU[u], lifted_sum(x) - lifted_sum(s.expansionPoint));
  return std::log2(total) - lin;
}

/// W -> -||W0||_2 - <v v^H, W - W0>, an upper bound on -||W||_2 over PSD W.
inline AffineFunctional spectral_penalty_linearization(const CMat& w0) {
  const EigenPair top = principal_eigenpair(w0);
  const CMat vv = lift(top.vector);
  AffineFunctional f;
  f.coeffs.push_back(-vv);
  f.constant = -top.value + inner(vv, w0);
  return f;
}

/// Nuclear minus spectral norm of a PSD matrix.
inline double rank_one_residual(const CMat& w) {
  const Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(w), Eigen::EigenvaluesOnly);
  const RVec& lam = es.eigenvalues();
  const Eigen::Index n = lam.size();
  if (n == 0) return 0.0;
  double nuclear = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) nuclear += std::abs(lam(i));
  return std::max(0.0, nuclear - lam(n - 1));
}

/// sqrt(lambda_max) v_max with the first nonzero entry real positive.
inline CVec extract_rank_one(const CMat& w) {
  if (w.size() == 0) return CVec();
  const EigenPair top = principal_eigenpair(w);
  if (!(top.value > 0.0)) return CVec::Zero(w.rows());
  return normalize_phase(std::sqrt(top.value) * top.vector);
}

struct PenaltyState {
  double eta1 = 1e4;
  std::vector<double> residuals;
  int innerIterations = 0;
  int outerIterations = 0;
  std::vector<double> innerObjectives;   // subproblem optima, in solve order
  std::vector<double> trueObjectives;    // sum rate at each subproblem solution
  std::vector<double> eta1History;
  std::vector<int> innerPerOuter;        // subproblems solved in each penalty layer

  double max_residual() const {
    double m = 0.0;
    for (double r : residuals) m = std::max(m, r);
    return m;
  }
};

/// Convex subproblem at the current expansion point: maximize
/// Sum Theta_lb - (1/eta1) Sum_d (Tr W_d + penalty linearization) subject to
/// the power budget and (optionally) the lifted sensing constraint
/// gamma u^H G X G^H u - u^H A X A^H u + gamma a_s <= 0, normalized by
/// gamma a_s. Log arguments are normalized by their constant parts.
inline LogAffineSdp assemble_subproblem(const SurrogateCoefficients& coeffs, const CVec& u,
                                        const std::vector<double>& p, double eta1,
                                        const std::vector<AffineFunctional>& penaltyLinearizations,
                                        const ChannelSet& c, const ScenarioConfig& cfg, const std::vector<CVec>& vU,
                                        bool sensingConstraint = true) {
  const int D = static_cast<int>(coeffs.aD.size());
  const int U = static_cast<int>(coeffs.aU.size());
  const int M = c.M;
  LogAffineSdp prob;
  prob.blockDims.assign(D + 1, M);
  prob.linearObjective.assign(D + 1, CMat::Zero(M, M));
  double constant = 0.0;

  for (int d = 0; d < D; ++d) {
    const CMat hh = lift(c.hDl[d]);
    double k = c.noise.dl;
    for (std::size_t q = 0; q < p.size(); ++q) k += p[q] * std::norm(c.hCross[d][q]);
    LogTerm t;
    t.weight = kLog2e;
    t.arg.coeffs.assign(D + 1, hh / k);
    t.arg.constant = 1.0;
    prob.logTerms.push_back(t);
    constant += std::log2(k) - coeffs.aD[d];
    for (int b = 0; b <= D; ++b) {
      if (b == d) continue;
      prob.linearObjective[b] -= coeffs.bD[d];
      constant += inner(coeffs.bD[d], coeffs.expansionPoint[b]);
    }
  }
  for (int q = 0; q < U; ++q) {
    const CVec& v = vU[q];
    double k = c.noise.ul * v.squaredNorm();
    for (int r = 0; r < U; ++r) k += p[r] * std::norm(v.dot(c.hUl[r]));
    if (!(k > 0.0)) throw DegenerateExpansion("UL log argument has no constant part");
    LogTerm t;
    t.weight = kLog2e;
    t.arg.coeffs.assign(D + 1, ul_leakage_matrix(c, v) / k);
    t.arg.constant = 1.0;
    prob.logTerms.push_back(t);
    constant += std::log2(k) - coeffs.aU[q];
    for (int b = 0; b <= D; ++b) {
      prob.linearObjective[b] -= coeffs.bU[q];
      constant += inner(coeffs.bU[q], coeffs.expansionPoint[b]);
    }
  }
  for (int d = 0; d < D; ++d) {
    prob.linearObjective[d] -= CMat::Identity(M, M) / eta1;
    if (d < static_cast<int>(penaltyLinearizations.size())) {
      const AffineFunctional& f = penaltyLinearizations[d];
      prob.linearObjective[d] -= f.coeffs[0] / eta1;
      constant -= f.constant / eta1;
    }
  }
  prob.objectiveConstant = constant;

  LinearInequality power;
  power.lhs.coeffs.assign(D + 1, CMat::Identity(M, M));
  power.bound = cfg.pMaxPbs();
  prob.inequalities.push_back(power);

  if (sensingConstraint) {
    const double gamma = cfg.gammaSense();
    double as = c.noise.sense * u.squaredNorm();
    for (std::size_t q = 0; q < p.size(); ++q) as += p[q] * std::norm(u.dot(c.hUl[q]));
    const double scale = gamma * as;
    if (!(scale > 0.0)) throw DomainError("sensing constraint needs gamma > 0 and a nonzero filter");
    const CMat row = (gamma * lift(c.gEffective.adjoint() * u) - lift(c.aStacked.adjoint() * u)) / scale;
    LinearInequality sense;
    sense.lhs.coeffs.assign(D + 1, hermitian_part(row));
    sense.bound = -1.0;
    prob.inequalities.push_back(sense);
  }
  return prob;
}

/// Sum of Theta terms (bits) at lifted blocks x.
inline double lifted_sum_rate(const ChannelSet& c, const Blocks& x, const std::vector<CVec>& vU,
                              const std::vector<double>& p) {
  double r = 0.0;
  for (int d = 0; d + 1 < static_cast<int>(x.size()); ++d) r += dl_theta(d, c, x, p);
  for (std::size_t u = 0; u < p.size(); ++u) r += ul_theta(static_cast<int>(u), c, x, vU, p);
  return r;
}

struct TxbfResult {
  Blocks lifted;  // {W_c,1 .. W_c,D, V_r}
  PenaltyState penalty;
};

/// Double-layer penalty loop. The inner layer repeats SCA expansions (of
/// both the rate terms and the spectral norm) at fixed eta1 until the
/// subproblem optimum changes by less than epsInner (relative); the outer
/// layer scales eta1 by etaScale until every rank-one residual is within
/// epsRankOne.
inline TxbfResult solve_transmit_beamforming(const ChannelSet& c, const CVec& u, const std::vector<CVec>& vU,
                                             const std::vector<double>& p, const ScenarioConfig& cfg,
                                             const Blocks& init, bool sensingConstraint = true) {
  const Tolerances& tol = cfg.tolerances;
  const int D = static_cast<int>(init.size()) - 1;
  TxbfResult res;
  res.penalty.eta1 = tol.eta1Init;
  Blocks x = init;
  for (int outer = 0;; ++outer) {
    res.penalty.eta1History.push_back(res.penalty.eta1);
    double previous = 0.0;
    for (int inner = 0; inner < tol.maxInnerIters; ++inner) {
      const auto coeffs = surrogate_coefficients(x, c, vU, p);
      std::vector<AffineFunctional> pen;
      for (int d = 0; d < D; ++d) pen.push_back(spectral_penalty_linearization(x[d]));
      const auto prob = assemble_subproblem(coeffs, u, p, res.penalty.eta1, pen, c, cfg, vU, sensingConstraint);
      if (inner == 0) previous = objective_value(prob, x);
      ConicSolution sol;
      try {
        sol = solve(prob, tol.conicTol);
      } catch (const Infeasible& e) {
        throw InfeasibleSensing(std::string("transmit subproblem has no feasible point: ") + e.what(),
                                max_sensing_sinr(c, lifted_sum(x), p, ReceiverMask::all(c.J)));
      }
      ++res.penalty.innerIterations;
      x = sol.blocks;
      for (auto& b : x) b = hermitian_part(b);
      res.penalty.innerObjectives.push_back(sol.objective);
      res.penalty.trueObjectives.push_back(lifted_sum_rate(c, x, vU, p));
      const double change = std::abs(sol.objective - previous) / std::max(1.0, std::abs(previous));
      previous = sol.objective;
      if (change < tol.epsInner) break;
    }
    ++res.penalty.outerIterations;
    res.penalty.innerPerOuter.push_back(res.penalty.innerIterations -
                                        std::accumulate(res.penalty.innerPerOuter.begin(),
                                                        res.penalty.innerPerOuter.end(), 0));
    res.penalty.residuals.clear();
    for (int d = 0; d < D; ++d) res.penalty.residuals.push_back(rank_one_residual(x[d]));
    if (res.penalty.max_residual() <= tol.epsRankOne) break;
    if (outer + 1 >= tol.maxOuterIters) {
      throw NoRankOneConvergence("rank-one residual " + std::to_string(res.penalty.max_residual()) +
                                 " above tolerance after the penalty schedule");
    }
    res.penalty.eta1 *= tol.etaScale;
  }
  res.lifted = std::move(x);
  return res;
}

}  // namespace japs
