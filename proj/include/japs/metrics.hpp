#pragma once

#include "japs/errors.hpp"
#include "japs/linalg.hpp"
#include "japs/scenario.hpp"

#include <cmath>
#include <vector>

namespace japs {

/// Full optimization state. Metrics read the lifted covariances; wC is kept
/// alongside for beampatterns and vector-form checks.
struct BeamformerSolution {
  CMat wC;                      // M x D
  CMat vR;                      // M x M, general rank
  std::vector<CMat> wCLifted;   // [d], M x M
  CVec u;                       // sensing receive filter
  std::vector<CVec> vU;         // [u] uplink receive filters
  std::vector<double> p;        // [u] uplink powers (W)

  int D() const { return static_cast<int>(wCLifted.size()); }
  int U() const { return static_cast<int>(p.size()); }

  /// Sum_d W_{c,d} + V_r.
  CMat total_covariance() const {
    CMat x = vR;
    for (const auto& w : wCLifted) x += w;
    return x;
  }

  double transmit_power() const { return total_covariance().trace().real(); }

  /// Sets wC and the lifted covariances from beamforming vectors.
  void set_vectors(const CMat& w) {
    wC = w;
    wCLifted.clear();
    for (Eigen::Index d = 0; d < w.cols(); ++d) wCLifted.push_back(lift(w.col(d)));
  }
};

// DL SINR pieces, exposed for the FP updates.
inline double dl_signal(int d, const ChannelSet& c, const BeamformerSolution& s) {
  return quad_form(s.wCLifted[d], c.hDl[d]);
}

/// Interference-plus-noise at DL UE d (excludes its own beam).
inline double dl_interference(int d, const ChannelSet& c, const BeamformerSolution& s) {
  const CVec& h = c.hDl[d];
  double v = quad_form(s.vR, h) + c.noise.dl;
  for (int k = 0; k < s.D(); ++k) {
    if (k != d) v += quad_form(s.wCLifted[k], h);
  }
  for (int u = 0; u < s.U(); ++u) v += s.p[u] * std::norm(c.hCross[d][u]);
  return v;
}

inline double dl_sinr(int d, const ChannelSet& c, const BeamformerSolution& s) {
  return dl_signal(d, c, s) / dl_interference(d, c, s);
}

/// v^H B0 (Sum W + V_r) B0^H v, i.e. ||v^H B0 W||_F^2.
inline double ul_transmit_leakage(const CVec& v, const ChannelSet& c, const CMat& xSum) {
  const CVec t = c.b0.adjoint() * v;
  return quad_form(xSum, t);
}

inline double ul_signal(int u, const ChannelSet& c, const BeamformerSolution& s) {
  return s.p[u] * std::norm(s.vU[u].dot(c.hUl[u]));
}

/// Interference-plus-noise at the UL filter of UE u. Other UEs add their
/// powers individually (independent symbols).
inline double ul_interference(int u, const ChannelSet& c, const BeamformerSolution& s,
                              const CMat& xSum) {
  const CVec& v = s.vU[u];
  double r = ul_transmit_leakage(v, c, xSum) + c.noise.ul * v.squaredNorm();
  for (int k = 0; k < s.U(); ++k) {
    if (k != u) r += s.p[k] * std::norm(v.dot(c.hUl[k]));
  }
  return r;
}

inline double ul_sinr(int u, const ChannelSet& c, const BeamformerSolution& s) {
  const double den = ul_interference(u, c, s, s.total_covariance());
  const double num = ul_signal(u, c, s);
  if (num == 0.0) return 0.0;
  return num / den;
}

inline double achievable_rate(double sinr) { return std::log2(1.0 + sinr); }

/// Q(W) = A X A^H.
inline CMat sensing_signal_matrix(const ChannelSet& c, const CMat& xSum) {
  return c.aStacked * xSum * c.aStacked.adjoint();
}

/// D(W) = G X G^H + Sum_u p_u h_u h_u^H + sigma_s^2 I.
inline CMat sensing_noise_matrix(const ChannelSet& c, const CMat& xSum, const std::vector<double>& p) {
  CMat d = c.gEffective * xSum * c.gEffective.adjoint();
  for (std::size_t u = 0; u < p.size(); ++u) d += p[u] * lift(c.hUl[u]);
  d.diagonal().array() += c.noise.sense;
  return hermitian_part(d);
}

inline double sensing_sinr(const ChannelSet& c, const BeamformerSolution& s) {
  if (s.u.size() == 0 || s.u.norm() == 0.0) throw ZeroFilter("sensing receive filter is zero");
  const CMat x = s.total_covariance();
  return quad_form(sensing_signal_matrix(c, x), s.u) / quad_form(sensing_noise_matrix(c, x, s.p), s.u);
}

/// CDF of a chi-square variable with two degrees of freedom.
inline double chi2_cdf_2dof(double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x / 2.0); }

/// Inverse of chi2_cdf_2dof on [0, 1).
inline double chi2_inv_2dof(double q) { return -2.0 * std::log1p(-q); }

/// Neyman-Pearson detection probability for a fluctuating target:
/// 1 - F((Omega0 / Omega1) F^{-1}(1 - pFa)) = pFa^(1 / (1 + sinr)).
inline double detection_probability(double sinrSense, double pFa) {
  if (!(pFa > 0.0 && pFa < 1.0)) throw DomainError("false-alarm probability must lie in (0, 1)");
  if (sinrSense < 0.0) throw DomainError("sensing SINR must be >= 0");
  return std::pow(pFa, 1.0 / (1.0 + sinrSense));
}

struct MetricsReport {
  std::vector<double> sinrDl, sinrUl;
  double sinrSense = 0.0;
  std::vector<double> rateDl, rateUl;
  double sumRate = 0.0;
  double omega0 = 0.0;  // interference-plus-noise power after the sensing filter
  double omega1 = 0.0;  // omega0 plus target echo power

  double rate_dl_total() const {
    double s = 0.0;
    for (double r : rateDl) s += r;
    return s;
  }
  double rate_ul_total() const {
    double s = 0.0;
    for (double r : rateUl) s += r;
    return s;
  }
  double pDetect(double pFa) const { return detection_probability(sinrSense, pFa); }
};

/// Sum of DL and UL rates in bits/s/Hz.
inline double sum_rate(const ChannelSet& c, const BeamformerSolution& s) {
  double r = 0.0;
  for (int d = 0; d < s.D(); ++d) r += achievable_rate(dl_sinr(d, c, s));
  for (int u = 0; u < s.U(); ++u) r += achievable_rate(ul_sinr(u, c, s));
  return r;
}

inline MetricsReport evaluate(const ChannelSet& c, const BeamformerSolution& s) {
  MetricsReport m;
  for (int d = 0; d < s.D(); ++d) {
    m.sinrDl.push_back(dl_sinr(d, c, s));
    m.rateDl.push_back(achievable_rate(m.sinrDl.back()));
  }
  for (int u = 0; u < s.U(); ++u) {
    m.sinrUl.push_back(ul_sinr(u, c, s));
    m.rateUl.push_back(achievable_rate(m.sinrUl.back()));
  }
  m.sumRate = 0.0;
  for (double r : m.rateDl) m.sumRate += r;
  for (double r : m.rateUl) m.sumRate += r;
  if (s.u.size() > 0 && s.u.norm() > 0.0) {
    const CMat x = s.total_covariance();
    const double q = quad_form(sensing_signal_matrix(c, x), s.u);
    m.omega0 = quad_form(sensing_noise_matrix(c, x, s.p), s.u);
    m.omega1 = m.omega0 + q;
    m.sinrSense = q / m.omega0;
  }
  return m;
}

}  // namespace japs
