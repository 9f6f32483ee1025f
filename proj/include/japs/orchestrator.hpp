#pragma once

#include "japs/config.hpp"
#include "japs/errors.hpp"
#include "japs/linalg.hpp"
#include "japs/metrics.hpp"
#include "japs/rxopt.hpp"
#include "japs/scenario.hpp"
#include "japs/txbf.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

namespace japs {

enum class Scheme { JAPS, ActiveOnly, PassiveOnly, CommOnly, RzfBaseline };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::JAPS: return "japs";
    case Scheme::ActiveOnly: return "active_only";
    case Scheme::PassiveOnly: return "passive_only";
    case Scheme::CommOnly: return "comm_only";
    case Scheme::RzfBaseline: return "rzf";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  for (Scheme k : {Scheme::JAPS, Scheme::ActiveOnly, Scheme::PassiveOnly, Scheme::CommOnly, Scheme::RzfBaseline}) {
    if (to_string(k) == s) return k;
  }
  if (s == "as") return Scheme::ActiveOnly;
  if (s == "ps") return Scheme::PassiveOnly;
  throw ConfigError("unknown scheme '" + s + "'");
}

struct AlgorithmOptions {
  Scheme scheme = Scheme::JAPS;
  int maxOuterIters = 50;

  bool sensing_constrained() const { return scheme != Scheme::CommOnly; }
  ReceiverMask mask(int J) const {
    if (scheme == Scheme::ActiveOnly) return ReceiverMask::pbs_only(J);
    if (scheme == Scheme::PassiveOnly) return ReceiverMask::sbs_only(J);
    return ReceiverMask::all(J);
  }
};

struct IterationRecord {
  double sumRate = 0.0;
  double rateDlTotal = 0.0;
  double rateUlTotal = 0.0;
  double sensingSinr = 0.0;
  double maxRankResidual = 0.0;
  int innerIterCount = 0;
  double wallTime = 0.0;  // seconds since optimize() started
};

struct RunTrace {
  double initialSumRate = 0.0;
  std::vector<IterationRecord> iterations;
  std::string terminationReason;
  int txbfRejected = 0;  // AO steps where the new transmit covariance lowered the sum rate

  bool converged() const { return terminationReason == "converged"; }
};

struct RunOutcome {
  BeamformerSolution solution;
  RunTrace trace;
  MetricsReport metrics;
  ChannelSet channels;  // the (masked) channels the solution refers to
};

/// W = H (H^H H + alpha I)^{-1}, alpha = D sigma_D^2 / P, columns rescaled
/// to share commPowerFraction * P equally; V_r is the isotropic remainder.
inline std::pair<CMat, CMat> rzf_beamformer(const ChannelSet& c, const ScenarioConfig& cfg) {
  const int D = c.D();
  if (D < 1) throw DomainError("RZF needs at least one DL UE");
  const double P = cfg.pMaxPbs();
  CMat H(c.M, D);
  for (int d = 0; d < D; ++d) H.col(d) = c.hDl[d];
  const double alpha = D * c.noise.dl / P;
  CMat g = H.adjoint() * H;
  g.diagonal().array() += alpha;
  CMat w = H * g.ldlt().solve(CMat::Identity(D, D));
  const double each = cfg.commPowerFraction * P / D;
  for (int d = 0; d < D; ++d) w.col(d) *= std::sqrt(each) / w.col(d).norm();
  const CMat vr = ((1.0 - cfg.commPowerFraction) * P / c.M) * CMat::Identity(c.M, c.M);
  return {w, vr};
}

/// Zeroes the masked receive rows of a filter.
inline CVec restrict_to(const CVec& v, const RVec& rows) { return (v.array() * rows.cast<Complex>().array()).matrix(); }

/// Matched-filter starting point (80/20 split of the PBS budget), full UE
/// power, MMSE-style UL filters and the matching sensing filter.
inline BeamformerSolution initialize(const ChannelSet& c, const ScenarioConfig& cfg, const AlgorithmOptions& opt) {
  BeamformerSolution s;
  const double P = cfg.pMaxPbs();
  const int D = c.D();
  if (opt.scheme == Scheme::RzfBaseline) {
    auto [w, vr] = rzf_beamformer(c, cfg);
    s.set_vectors(w);
    s.vR = vr;
  } else {
    CMat w(c.M, D);
    const double each = cfg.commPowerFraction * P / std::max(D, 1);
    for (int d = 0; d < D; ++d) w.col(d) = std::sqrt(each) * c.hDl[d] / c.hDl[d].norm();
    s.set_vectors(w);
    const double rest = D > 0 ? (1.0 - cfg.commPowerFraction) * P : P;
    s.vR = (rest / c.M) * CMat::Identity(c.M, c.M);
  }
  s.p.assign(c.U(), cfg.pMaxUe());
  const RVec rows = mask_rows(c, opt.mask(c.J));
  const CMat x = s.total_covariance();
  for (int u = 0; u < c.U(); ++u) s.vU.push_back(restrict_to(mmse_filter(u, c, x, s.p), rows));
  s.u = optimal_receive_filter(c, x, s.p, opt.mask(c.J));
  return s;
}

/// Best sensing SINR over two full-power probes (isotropic, and a beam on
/// the target's transmit direction) with every UE at full power.
inline double feasibility_check(const ChannelSet& c, const ScenarioConfig& cfg, const AlgorithmOptions& opt) {
  const double P = cfg.pMaxPbs();
  const std::vector<double> p(c.U(), cfg.pMaxUe());
  const ReceiverMask mask = opt.mask(c.J);
  const CMat iso = (P / c.M) * CMat::Identity(c.M, c.M);
  double best = max_sensing_sinr(c, iso, p, mask);
  // A = (stacked receive responses) a^H: its top right singular vector is the
  // transmit steering direction toward the target.
  Eigen::JacobiSVD<CMat> svd(c.aStacked, Eigen::ComputeThinV);
  if (svd.singularValues().size() > 0 && svd.singularValues()(0) > 0.0) {
    const CVec a = svd.matrixV().col(0);
    best = std::max(best, max_sensing_sinr(c, P * lift(a), p, mask));
  }
  if (opt.sensing_constrained() && best < cfg.gammaSense() * (1.0 - 1e-6)) {
    throw InfeasibleSensing("sensing SINR threshold unreachable at full power", best);
  }
  return best;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double sensing_sinr_or_zero(const ChannelSet& c, const BeamformerSolution& s) {
  if (s.u.size() == 0 || s.u.norm() == 0.0) return 0.0;
  return sensing_sinr(c, s);
}

}  // namespace detail

/// Alternating optimization with freshest iterates: sensing filter, then
/// transmit covariances, then one FP cycle (delta, eta, v, p), until the
/// relative sum-rate change drops below xiOuter.
inline RunOutcome optimize(const ChannelSet& channels, const ScenarioConfig& cfg, const AlgorithmOptions& opt,
                           const BeamformerSolution* warmStart = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opt.maxOuterIters < 1) throw DomainError("maxOuterIters must be >= 1");
  const ReceiverMask mask = opt.mask(channels.J);
  RunOutcome out;
  out.channels = apply_receiver_mask(channels, mask);
  const ChannelSet& c = out.channels;
  const bool sensing = opt.sensing_constrained();
  const double gamma = cfg.gammaSense();
  if (sensing) feasibility_check(c, cfg, opt);

  BeamformerSolution s = warmStart ? *warmStart : initialize(c, cfg, opt);
  const RVec rows = mask_rows(c, mask);
  for (auto& v : s.vU) v = restrict_to(v, rows);
  RunTrace& trace = out.trace;
  trace.initialSumRate = sum_rate(c, s);
  double previous = trace.initialSumRate;
  bool haveFeasible = false;

  for (int k = 0; k < opt.maxOuterIters; ++k) {
    IterationRecord rec;
    s.u = optimal_receive_filter(c, s.total_covariance(), s.p, mask);

    if (opt.scheme != Scheme::RzfBaseline) {
      const double before = sum_rate(c, s);
      const bool currentFeasible = !sensing || detail::sensing_sinr_or_zero(c, s) >= gamma * (1.0 - 1e-6);
      const TxbfResult tx = solve_transmit_beamforming(c, s.u, s.vU, s.p, cfg, lifted_blocks(s), sensing);
      BeamformerSolution cand = s;
      cand.wCLifted.assign(tx.lifted.begin(), tx.lifted.end() - 1);
      cand.vR = tx.lifted.back();
      CMat w(c.M, c.D());
      for (int d = 0; d < c.D(); ++d) w.col(d) = extract_rank_one(cand.wCLifted[d]);
      cand.wC = w;
      rec.innerIterCount = tx.penalty.innerIterations;
      if (currentFeasible && sum_rate(c, cand) < before) {
        ++trace.txbfRejected;  // keep the previous covariances
      } else {
        s = std::move(cand);
      }
      rec.maxRankResidual = 0.0;
      for (const auto& wd : s.wCLifted) rec.maxRankResidual = std::max(rec.maxRankResidual, rank_one_residual(wd));
    }

    if (c.U() > 0) {
      FpAuxiliaries aux = update_eta(c, s, update_delta(c, s));
      const ReceiveFilterUpdate rv = update_receive_filters(c, s, aux);
      for (int u = 0; u < c.U(); ++u) s.vU[u] = restrict_to(rv.v[u], rows);
      const PowerSubproblem ps = power_subproblem(c, s, aux, gamma, cfg.pMaxUe(), sensing);
      try {
        s.p = update_powers(ps);
      } catch (const InfeasiblePower& e) {
        throw InfeasibleSensing(e.what(), detail::sensing_sinr_or_zero(c, s));
      }
    }

    const MetricsReport m = evaluate(c, s);
    rec.sumRate = m.sumRate;
    rec.rateDlTotal = m.rate_dl_total();
    rec.rateUlTotal = m.rate_ul_total();
    rec.sensingSinr = detail::sensing_sinr_or_zero(c, s);
    rec.wallTime = detail::seconds_since(t0);
    trace.iterations.push_back(rec);
    if (haveFeasible && rec.sumRate < previous - 1e-6 * std::abs(previous)) {
      throw NonMonotoneTrace("sum rate decreased from " + std::to_string(previous) + " to " +
                             std::to_string(rec.sumRate));
    }
    const bool feasibleNow = !sensing || rec.sensingSinr >= gamma * (1.0 - 1e-4);
    const bool done = haveFeasible && std::abs(rec.sumRate - previous) < cfg.tolerances.xiOuter * std::abs(previous);
    haveFeasible = haveFeasible || feasibleNow;
    previous = rec.sumRate;
    if (done) {
      trace.terminationReason = "converged";
      break;
    }
  }
  if (trace.terminationReason.empty()) trace.terminationReason = "max_iterations";
  out.solution = std::move(s);
  out.metrics = evaluate(c, out.solution);
  return out;
}

}  // namespace japs
