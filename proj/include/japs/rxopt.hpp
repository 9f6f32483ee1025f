#pragma once

#include "japs/errors.hpp"
#include "japs/linalg.hpp"
#include "japs/metrics.hpp"
#include "japs/scenario.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace japs {

struct RayleighResult {
  double value = 0.0;
  CVec vector;
};

/// max u^H Q u / u^H D u over vectors supported on `support` (1 = free),
/// via Cholesky of D and a Hermitian eigenproblem. D must be positive
/// definite on the support. The vector is unit-norm with its first nonzero
/// entry real positive.
inline RayleighResult max_generalized_rayleigh(const CMat& q, const CMat& d, const RVec& support) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < support.size(); ++i) {
    if (support(i) != 0.0) idx.push_back(i);
  }
  RayleighResult r;
  r.vector = CVec::Zero(q.rows());
  if (idx.empty()) return r;
  const auto n = static_cast<Eigen::Index>(idx.size());
  CMat qs(n, n), ds(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      qs(i, j) = q(idx[i], idx[j]);
      ds(i, j) = d(idx[i], idx[j]);
    }
  }
  Eigen::LLT<CMat> llt(hermitian_part(ds));
  if (llt.info() != Eigen::Success) throw DomainError("noise matrix is not positive definite");
  const CMat lq = llt.matrixL().solve(hermitian_part(qs));
  const CMat c = llt.matrixL().solve(lq.adjoint());  // L^-1 Q L^-H
  const EigenPair top = principal_eigenpair(hermitian_part(c));
  const CVec y = llt.matrixU().solve(top.vector);
  for (Eigen::Index i = 0; i < n; ++i) r.vector(idx[i]) = y(i);
  r.vector = normalize_phase(r.vector / r.vector.norm());
  r.value = std::max(0.0, top.value);
  return r;
}

inline RVec full_support(Eigen::Index n) { return RVec::Ones(n); }

/// Sensing receive filter maximizing the sensing SINR for the covariance
/// sum `xSum` and UL powers `p`, restricted to the unmasked receivers.
inline CVec optimal_receive_filter(const ChannelSet& c, const CMat& xSum, const std::vector<double>& p,
                                   const ReceiverMask& mask) {
  return max_generalized_rayleigh(sensing_signal_matrix(c, xSum), sensing_noise_matrix(c, xSum, p),
                                  mask_rows(c, mask))
      .vector;
}

inline double max_sensing_sinr(const ChannelSet& c, const CMat& xSum, const std::vector<double>& p,
                               const ReceiverMask& mask) {
  return max_generalized_rayleigh(sensing_signal_matrix(c, xSum), sensing_noise_matrix(c, xSum, p),
                                  mask_rows(c, mask))
      .value;
}

/// Auxiliaries of the Lagrangian-dual (delta) and quadratic (eta) transforms.
struct FpAuxiliaries {
  std::vector<double> deltaD, deltaU;
  std::vector<Complex> etaD, etaU;
};

/// Amplitude paired with eta_d. For a lifted W_d this is sqrt(h^H W_d h),
/// which is |h^H w_d| when W_d = w_d w_d^H.
inline double dl_amplitude(int d, const ChannelSet& c, const BeamformerSolution& s) {
  return std::sqrt(std::max(0.0, dl_signal(d, c, s)));
}

/// Received power at DL UE d including its own beam.
inline double dl_total_power(int d, const ChannelSet& c, const BeamformerSolution& s) {
  return dl_signal(d, c, s) + dl_interference(d, c, s);
}

/// Power at UL filter u including UE u's own signal.
inline double ul_total_power(int u, const ChannelSet& c, const BeamformerSolution& s, const CMat& xSum) {
  return ul_signal(u, c, s) + ul_interference(u, c, s, xSum);
}

inline FpAuxiliaries update_delta(const ChannelSet& c, const BeamformerSolution& s) {
  FpAuxiliaries a;
  for (int d = 0; d < s.D(); ++d) a.deltaD.push_back(dl_sinr(d, c, s));
  for (int u = 0; u < s.U(); ++u) a.deltaU.push_back(ul_sinr(u, c, s));
  a.etaD.assign(s.D(), Complex(0.0));
  a.etaU.assign(s.U(), Complex(0.0));
  return a;
}

/// Quadratic-transform auxiliaries for fixed delta; denominators include the
/// UE's own signal.
inline FpAuxiliaries update_eta(const ChannelSet& c, const BeamformerSolution& s, const FpAuxiliaries& delta) {
  FpAuxiliaries a = delta;
  const CMat x = s.total_covariance();
  a.etaD.assign(s.D(), Complex(0.0));
  a.etaU.assign(s.U(), Complex(0.0));
  for (int d = 0; d < s.D(); ++d) {
    a.etaD[d] = std::sqrt(1.0 + delta.deltaD[d]) * dl_amplitude(d, c, s) / dl_total_power(d, c, s);
  }
  for (int u = 0; u < s.U(); ++u) {
    const double den = ul_total_power(u, c, s, x);
    if (den > 0.0) {
      a.etaU[u] = std::sqrt((1.0 + delta.deltaU[u]) * s.p[u]) * s.vU[u].dot(c.hUl[u]) / den;
    }
  }
  return a;
}

/// Quadratic-transform objective, converted to bits so that it equals the
/// sum rate at (delta*, eta*).
inline double fp_objective(const ChannelSet& c, const BeamformerSolution& s, const FpAuxiliaries& a) {
  const CMat x = s.total_covariance();
  double v = 0.0;
  for (int d = 0; d < s.D(); ++d) {
    const double dd = a.deltaD[d];
    v += std::log1p(dd) - dd + 2.0 * std::sqrt(1.0 + dd) * (std::conj(a.etaD[d]) * dl_amplitude(d, c, s)).real() -
         std::norm(a.etaD[d]) * dl_total_power(d, c, s);
  }
  for (int u = 0; u < s.U(); ++u) {
    const double du = a.deltaU[u];
    v += std::log1p(du) - du +
         2.0 * std::sqrt((1.0 + du) * s.p[u]) * (std::conj(a.etaU[u]) * s.vU[u].dot(c.hUl[u])).real() -
         std::norm(a.etaU[u]) * ul_total_power(u, c, s, x);
  }
  return kLog2e * v;
}

struct ReceiveFilterUpdate {
  std::vector<CVec> v;
  std::vector<bool> degenerateAux;  // eta_u == 0: filter left unchanged
  bool any_degenerate() const {
    for (bool b : degenerateAux) {
      if (b) return true;
    }
    return false;
  }
};

/// Sum_u p_u h_u h_u^H + B0 X B0^H + sigma_U^2 I.
inline CMat ul_covariance(const ChannelSet& c, const CMat& xSum, const std::vector<double>& p) {
  CMat k = c.b0 * xSum * c.b0.adjoint();
  for (std::size_t u = 0; u < p.size(); ++u) k += p[u] * lift(c.hUl[u]);
  k.diagonal().array() += c.noise.ul;
  return hermitian_part(k);
}

/// v_u = Lambda_u^{-1} lambda_u with Lambda_u = |eta_u|^2 K and
/// lambda_u = sqrt((1 + delta_u) p_u) conj(eta_u) h_u.
inline ReceiveFilterUpdate update_receive_filters(const ChannelSet& c, const BeamformerSolution& s,
                                                  const FpAuxiliaries& a) {
  ReceiveFilterUpdate r;
  const CMat k = ul_covariance(c, s.total_covariance(), s.p);
  const Eigen::LLT<CMat> llt(k);
  for (int u = 0; u < s.U(); ++u) {
    const double e2 = std::norm(a.etaU[u]);
    if (e2 == 0.0) {
      r.v.push_back(s.vU[u]);
      r.degenerateAux.push_back(true);
      continue;
    }
    const CVec lam = std::sqrt((1.0 + a.deltaU[u]) * s.p[u]) * std::conj(a.etaU[u]) * c.hUl[u];
    r.v.push_back(llt.solve(lam) / e2);
    r.degenerateAux.push_back(false);
  }
  return r;
}

/// K^{-1} h_u, the filter used before any auxiliaries exist.
inline CVec mmse_filter(int u, const ChannelSet& c, const CMat& xSum, const std::vector<double>& p) {
  return ul_covariance(c, xSum, p).llt().solve(c.hUl[u]);
}

/// min Sum_u (mu1 p - mu2 sqrt(p)) s.t. Sum_u mu3 p + rho3 <= 0, 0 <= p <= pMax.
struct PowerSubproblem {
  std::vector<double> mu1, mu2, mu3, pMax;
  double rho3 = 0.0;
  double rho2 = 0.0;               // dropped constant, kept for reconciling traces
  bool sensingConstraint = true;   // false drops the coupling row

  double objective(const std::vector<double>& p) const {
    double v = 0.0;
    for (std::size_t u = 0; u < p.size(); ++u) v += mu1[u] * p[u] - mu2[u] * std::sqrt(p[u]);
    return v;
  }
  double coupling(const std::vector<double>& p) const {
    double v = rho3;
    for (std::size_t u = 0; u < p.size(); ++u) v += mu3[u] * p[u];
    return v;
  }
};

/// Coefficients of the power subproblem at the current state. mu1 pairs
/// each UE's power with every quadratic-transform denominator it enters:
/// the DL UEs' and every UL filter's (each with that filter's own eta).
inline PowerSubproblem power_subproblem(const ChannelSet& c, const BeamformerSolution& s, const FpAuxiliaries& a,
                                        double gammaSense, double pMaxUe, bool sensingConstraint = true) {
  PowerSubproblem ps;
  const int U = s.U();
  const CMat x = s.total_covariance();
  ps.sensingConstraint = sensingConstraint;
  for (int u = 0; u < U; ++u) {
    double m1 = 0.0;
    for (int d = 0; d < s.D(); ++d) m1 += std::norm(a.etaD[d]) * std::norm(c.hCross[d][u]);
    for (int k = 0; k < U; ++k) m1 += std::norm(a.etaU[k]) * std::norm(s.vU[k].dot(c.hUl[u]));
    ps.mu1.push_back(m1);
    ps.mu2.push_back(2.0 * std::sqrt(1.0 + a.deltaU[u]) * (std::conj(a.etaU[u]) * s.vU[u].dot(c.hUl[u])).real());
    ps.mu3.push_back(s.u.size() ? std::norm(s.u.dot(c.hUl[u])) : 0.0);
    ps.pMax.push_back(pMaxUe);
  }
  if (sensingConstraint) {
    if (!(gammaSense > 0.0)) throw DomainError("sensing threshold must be > 0");
    ps.rho3 = c.noise.sense * s.u.squaredNorm() + quad_form(c.gEffective * x * c.gEffective.adjoint(), s.u) -
              quad_form(sensing_signal_matrix(c, x), s.u) / gammaSense;
  }
  // fp_objective (nats) = -(objective(p) + rho2)
  ps.rho2 = -fp_objective(c, s, a) / kLog2e - ps.objective(s.p);
  return ps;
}

/// Dual bisection on the coupling multiplier with per-UE closed forms
/// q = sqrt(p) = clip(mu2 / (2 (mu1 + lambda mu3)), 0, sqrt(pMax)).
inline std::vector<double> update_powers(const PowerSubproblem& ps) {
  const std::size_t U = ps.mu1.size();
  auto at = [&](double lam) {
    std::vector<double> p(U);
    for (std::size_t u = 0; u < U; ++u) {
      const double cap = std::sqrt(ps.pMax[u]);
      const double den = 2.0 * (ps.mu1[u] + lam * ps.mu3[u]);
      double q = 0.0;
      if (ps.mu2[u] > 0.0) q = den > 0.0 ? std::min(ps.mu2[u] / den, cap) : cap;
      p[u] = q < cap ? q * q : ps.pMax[u];
    }
    return p;
  };
  std::vector<double> p = at(0.0);
  if (!ps.sensingConstraint) return p;
  double scale = std::abs(ps.rho3);
  for (std::size_t u = 0; u < U; ++u) scale += ps.mu3[u] * ps.pMax[u];
  const double tol = 1e-8 * std::max(scale, std::numeric_limits<double>::min());
  if (ps.rho3 > tol) throw InfeasiblePower("sensing constraint violated even with all UL powers at zero");
  if (ps.coupling(p) <= tol) return p;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; ps.coupling(at(hi)) > tol; ++i) {
    lo = hi;
    hi *= 2.0;
    if (i > 2000) throw InfeasiblePower("no multiplier satisfies the sensing constraint");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double g = ps.coupling(at(mid));
    if (g > tol) {
      lo = mid;
    } else {
      hi = mid;
      if (g >= -tol) break;
    }
    if (hi - lo <= 1e-15 * hi) break;
  }
  return at(hi);
}

}  // namespace japs
