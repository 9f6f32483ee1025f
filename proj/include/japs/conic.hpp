#pragma once

// Path-following barrier solver for
//
//   maximize   sum_i w_i log(<C_i, X> + c_i) + <C, X> + const
//   subject to <G_k, X> <= b_k,   X = (X_1, ..., X_B),  X_b Hermitian PSD.
//
// Newton steps are taken in the scaled coordinates X_b = L_b Y_b L_b^H, where
// L_b is the Cholesky factor of the current iterate. There the log-det
// Hessian is the identity and the remaining curvature is low rank, so each
// step is a small Woodbury solve and the line search is closed form.

#include "japs/errors.hpp"
#include "japs/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace japs {

using Blocks = std::vector<CMat>;

/// X -> sum_b <coeffs[b], X_b> + constant. An empty coefficient matrix is zero.
struct AffineFunctional {
  std::vector<CMat> coeffs;
  double constant = 0.0;
};

struct LogTerm {
  double weight = 1.0;
  AffineFunctional arg;
};

/// lhs(X) <= bound
struct LinearInequality {
  AffineFunctional lhs;
  double bound = 0.0;
};

struct LogAffineSdp {
  std::vector<int> blockDims;
  std::vector<LogTerm> logTerms;
  std::vector<CMat> linearObjective;
  double objectiveConstant = 0.0;
  std::vector<LinearInequality> inequalities;
  bool realSymmetric = false;  // restrict blocks to real symmetric matrices
};

struct KktResiduals {
  double stationarity = 0.0;
  double primalFeasibility = 0.0;
  double complementarity = 0.0;
  double max() const { return std::max({stationarity, primalFeasibility, complementarity}); }
};

/// lambda[k] >= 0 pairs with inequality k; dualSlacks[b] (PSD) with block b.
struct Multipliers {
  std::vector<double> lambda;
  Blocks dualSlacks;
};

struct ConicSolution {
  Blocks blocks;
  double objective = 0.0;
  KktResiduals kktResiduals;
  Multipliers multipliers;
  int iterations = 0;  // Newton steps, phase-I included
};

struct ConicOptions {
  double t0 = 1.0;
  double growth = 10.0;
  double newtonTol = 1e-9;
  double armijo = 1e-4;
  int maxNewtonSteps = 2000;
};

inline double value_of(const AffineFunctional& f, const Blocks& x) {
  double v = f.constant;
  for (std::size_t b = 0; b < f.coeffs.size() && b < x.size(); ++b) {
    if (f.coeffs[b].size() != 0) v += inner(f.coeffs[b], x[b]);
  }
  return v;
}

/// Objective value; -inf when a weighted log argument is not positive.
inline double objective_value(const LogAffineSdp& p, const Blocks& x) {
  double v = p.objectiveConstant;
  for (std::size_t b = 0; b < p.linearObjective.size(); ++b) {
    if (p.linearObjective[b].size() != 0) v += inner(p.linearObjective[b], x[b]);
  }
  for (const auto& t : p.logTerms) {
    if (t.weight == 0.0) continue;
    const double a = value_of(t.arg, x);
    if (!(a > 0.0)) return -std::numeric_limits<double>::infinity();
    v += t.weight * std::log(a);
  }
  return v;
}

namespace conic_detail {

inline int svec_size(int n, bool real) { return real ? n * (n + 1) / 2 : n * n; }

/// Isometric real coordinates of a Hermitian matrix (diagonal, then
/// sqrt(2) Re / sqrt(2) Im of the strict upper triangle).
inline void svec(const CMat& a, bool real, double* out) {
  const int n = static_cast<int>(a.rows());
  int i = 0;
  for (int k = 0; k < n; ++k) out[i++] = a(k, k).real();
  for (int k = 0; k < n; ++k) {
    for (int l = k + 1; l < n; ++l) {
      out[i++] = std::numbers::sqrt2 * a(k, l).real();
      if (!real) out[i++] = std::numbers::sqrt2 * a(k, l).imag();
    }
  }
}

inline CMat smat(const double* x, int n, bool real) {
  CMat a = CMat::Zero(n, n);
  int i = 0;
  for (int k = 0; k < n; ++k) a(k, k) = x[i++];
  for (int k = 0; k < n; ++k) {
    for (int l = k + 1; l < n; ++l) {
      const double re = x[i++] / std::numbers::sqrt2;
      const double im = real ? 0.0 : x[i++] / std::numbers::sqrt2;
      a(k, l) = Complex(re, im);
      a(l, k) = Complex(re, -im);
    }
  }
  return a;
}

/// Problem with every coefficient matrix materialized at full block size.
struct Dense {
  std::vector<int> dims;
  std::vector<int> offsets;
  int nvar = 0;
  bool real = false;
  std::vector<double> weights;
  std::vector<Blocks> logC;
  std::vector<double> logConst;
  Blocks linC;
  std::vector<Blocks> ineqG;
  std::vector<double> ineqB;
};

inline Blocks full(const std::vector<CMat>& coeffs, const std::vector<int>& dims) {
  Blocks out;
  for (std::size_t b = 0; b < dims.size(); ++b) {
    if (b < coeffs.size() && coeffs[b].size() != 0) {
      out.push_back(hermitian_part(coeffs[b]));
    } else {
      out.push_back(CMat::Zero(dims[b], dims[b]));
    }
  }
  return out;
}

inline Dense densify(const LogAffineSdp& p) {
  Dense d;
  d.dims = p.blockDims;
  d.real = p.realSymmetric;
  for (int n : d.dims) {
    d.offsets.push_back(d.nvar);
    d.nvar += svec_size(n, d.real);
  }
  for (const auto& t : p.logTerms) {
    if (t.weight == 0.0) continue;
    d.weights.push_back(t.weight);
    d.logC.push_back(full(t.arg.coeffs, d.dims));
    d.logConst.push_back(t.arg.constant);
  }
  d.linC = full(p.linearObjective, d.dims);
  for (const auto& q : p.inequalities) {
    Blocks g = full(q.lhs.coeffs, d.dims);
    d.ineqG.push_back(std::move(g));
    d.ineqB.push_back(q.bound - q.lhs.constant);
  }
  return d;
}

inline double value_of(const Blocks& c, const Blocks& x) {
  double v = 0.0;
  for (std::size_t b = 0; b < c.size(); ++b) v += inner(c[b], x[b]);
  return v;
}

struct State {
  Blocks x;
  RVec slack;  // b_k - <G_k, X>, tracked incrementally
};

/// Scaled Newton centering for barrier weight t. Returns Newton steps taken.
/// `stop` (optional) is polled after every accepted step.
inline int center(const Dense& d, State& st, double t, const ConicOptions& opt, double newtonTol,
                  int budget, const std::function<bool(const State&)>& stop) {
  const int B = static_cast<int>(d.dims.size());
  const int nlog = static_cast<int>(d.weights.size());
  const int m = static_cast<int>(d.ineqB.size());
  const int N = d.nvar;
  std::vector<CMat> L(B);
  RVec grad(N), cvec(N), tmp(N);
  RMat Gl(N, nlog), Gi(N, m);
  int steps = 0, stale = 0;
  double bestDec2 = std::numeric_limits<double>::infinity();
  for (;;) {
    for (int b = 0; b < B; ++b) {
      Eigen::LLT<CMat> llt(hermitian_part(st.x[b]));
      if (llt.info() != Eigen::Success) throw LineSearchStall("iterate left the PSD cone");
      L[b] = llt.matrixL();
    }
    auto scaled = [&](const Blocks& c, double* out) {
      for (int b = 0; b < B; ++b) {
        svec(L[b].adjoint() * c[b] * L[b], d.real, out + d.offsets[b]);
      }
    };
    RVec a(nlog);
    for (int i = 0; i < nlog; ++i) {
      a(i) = value_of(d.logC[i], st.x) + d.logConst[i];
      if (!(a(i) > 0.0)) throw LineSearchStall("log argument left its domain");
      scaled(d.logC[i], Gl.col(i).data());
    }
    for (int k = 0; k < m; ++k) scaled(d.ineqG[k], Gi.col(k).data());
    scaled(d.linC, cvec.data());

    grad = -t * cvec;
    for (int b = 0; b < B; ++b) grad.segment(d.offsets[b], d.dims[b]).array() -= 1.0;
    RMat U(N, nlog + m);
    for (int i = 0; i < nlog; ++i) {
      grad -= (t * d.weights[i] / a(i)) * Gl.col(i);
      U.col(i) = (std::sqrt(t * d.weights[i]) / a(i)) * Gl.col(i);
    }
    for (int k = 0; k < m; ++k) {
      grad += Gi.col(k) / st.slack(k);
      U.col(nlog + k) = Gi.col(k) / st.slack(k);
    }
    // Hessian I + U U^T. Once a slack is tiny U has columns near 1e10, so
    // both Woodbury and a Cholesky of the full matrix lose the unit-curvature
    // directions. An SVD of U keeps them: (I + Q S^2 Q^T)^{-1} exactly.
    Eigen::JacobiSVD<RMat> svd(U, Eigen::ComputeThinU);
    const RMat& Q = svd.matrixU();
    const RVec proj = Q.transpose() * grad;
    const RVec shrink = (svd.singularValues().array().square() + 1.0).inverse().matrix();
    RVec perp = grad - Q * proj;
    perp -= Q * (Q.transpose() * perp);  // rounding left in range(Q) would be unshrunk
    const RVec dir = -(perp + Q * shrink.cwiseProduct(proj));
    // grad^T H^{-1} grad from the factored form; grad.dot(dir) is dominated by
    // rounding in the stiff directions.
    const double dec2 = perp.squaredNorm() + proj.cwiseAbs2().dot(shrink);
    const double slope = -dec2;
    if (dec2 / 2.0 <= newtonTol) return steps;
    // At large t the decrement bottoms out at rounding level; stop once it
    // has stopped improving.
    if (dec2 < 0.5 * bestDec2) {
      bestDec2 = dec2;
      stale = 0;
    } else if (++stale >= 8 && dec2 < 1e-6) {
      return steps;
    }
    if (steps >= budget) throw MaxIterations("Newton step budget exhausted");

    // Closed-form line search along dir.
    const RVec dl = Gl.transpose() * dir;
    const RVec di = Gi.transpose() * dir;
    const double dc = cvec.dot(dir);
    std::vector<RVec> mu(B);
    std::vector<CMat> dY(B);
    double amax = std::numeric_limits<double>::infinity();
    for (int b = 0; b < B; ++b) {
      dY[b] = smat(dir.data() + d.offsets[b], d.dims[b], d.real);
      Eigen::SelfAdjointEigenSolver<CMat> es(dY[b], Eigen::EigenvaluesOnly);
      mu[b] = es.eigenvalues();
      for (Eigen::Index q = 0; q < mu[b].size(); ++q) {
        if (mu[b](q) < 0.0) amax = std::min(amax, -1.0 / mu[b](q));
      }
    }
    for (int i = 0; i < nlog; ++i) {
      if (dl(i) < 0.0) amax = std::min(amax, -a(i) / dl(i));
    }
    for (int k = 0; k < m; ++k) {
      if (di(k) > 0.0) amax = std::min(amax, st.slack(k) / di(k));
    }
    auto dphi = [&](double al) {
      double v = -t * al * dc;
      for (int i = 0; i < nlog; ++i) v -= t * d.weights[i] * std::log1p(al * dl(i) / a(i));
      for (int b = 0; b < B; ++b) {
        for (Eigen::Index q = 0; q < mu[b].size(); ++q) v -= std::log1p(al * mu[b](q));
      }
      for (int k = 0; k < m; ++k) v -= std::log1p(-al * di(k) / st.slack(k));
      return v;
    };
    double alpha = std::min(1.0, 0.99 * amax);
    while (!(dphi(alpha) <= opt.armijo * alpha * slope)) {
      alpha *= 0.5;
      if (alpha < 1e-16) {
        if (dec2 < 1e-6) return steps;  // already at the numerical floor
        throw LineSearchStall("backtracking failed to decrease the barrier");
      }
    }
    for (int b = 0; b < B; ++b) {
      st.x[b] = hermitian_part(st.x[b] + alpha * (L[b] * dY[b] * L[b].adjoint()));
    }
    for (int k = 0; k < m; ++k) st.slack(k) -= alpha * di(k);
    ++steps;
    if (stop && stop(st)) return steps;
  }
}

struct PathResult {
  State state;
  double t = 1.0;
  int steps = 0;
};

inline PathResult follow_path(const Dense& d, State st, double tol, const ConicOptions& opt,
                              const std::function<bool(const State&)>& stop = {}) {
  double nu = static_cast<double>(d.ineqB.size());
  for (int n : d.dims) nu += n;
  PathResult r;
  double t = opt.t0;
  for (;;) {
    const bool last = nu / t <= tol;
    r.steps += center(d, st, t, opt, last ? std::min(opt.newtonTol, 1e-12) : opt.newtonTol,
                      opt.maxNewtonSteps - r.steps, stop);
    if (stop && stop(st)) break;
    if (last) break;
    t *= opt.growth;
  }
  r.state = std::move(st);
  r.t = t;
  return r;
}

inline State make_state(const Dense& d, Blocks x) {
  State st;
  st.x = std::move(x);
  st.slack.resize(static_cast<Eigen::Index>(d.ineqB.size()));
  for (std::size_t k = 0; k < d.ineqB.size(); ++k) {
    st.slack(static_cast<Eigen::Index>(k)) = d.ineqB[k] - value_of(d.ineqG[k], st.x);
  }
  return st;
}

inline Blocks scaled_identity(const std::vector<int>& dims, double c) {
  Blocks x;
  for (int n : dims) x.push_back(c * CMat::Identity(n, n));
  return x;
}

/// Largest c with c * sum_b Tr(G_b) <= b / 2 over the bounding rows, else 1.
inline double identity_scale(const Dense& d) {
  double c = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < d.ineqB.size(); ++k) {
    double g = 0.0;
    for (const auto& gb : d.ineqG[k]) g += gb.trace().real();
    if (g > 0.0 && d.ineqB[k] > 0.0) c = std::min(c, 0.5 * d.ineqB[k] / g);
  }
  return std::isfinite(c) ? c : 1.0;
}

inline bool strictly_inside(const Dense& d, const Blocks& x, double slackFraction) {
  for (std::size_t i = 0; i < d.weights.size(); ++i) {
    if (!(value_of(d.logC[i], x) + d.logConst[i] > 0.0)) return false;
  }
  for (std::size_t k = 0; k < d.ineqB.size(); ++k) {
    const double s = d.ineqB[k] - value_of(d.ineqG[k], x);
    if (!(s > 0.0) || s < slackFraction * std::abs(d.ineqB[k])) return false;
  }
  return true;
}

inline double frob(const Blocks& c) {
  double s = 0.0;
  for (const auto& m : c) s += m.squaredNorm();
  return std::sqrt(s);
}

/// Phase I: minimize s subject to every main-problem row (inequalities and
/// log-argument positivity) relaxed by s, inside a large trace box. Returns a
/// strictly feasible point of the main problem.
inline Blocks phase_one(const Dense& d, double tol, const ConicOptions& opt, int& steps) {
  const double c = identity_scale(d);
  const Blocks x0 = scaled_identity(d.dims, c);
  double totalDim = 0.0;
  for (int n : d.dims) totalDim += n;
  const double box = 1e4 * c * totalDim;

  // Rows r(X) <= rb, normalized so that s is dimensionless.
  std::vector<Blocks> rows;
  std::vector<double> rb, scale;
  for (std::size_t k = 0; k < d.ineqB.size(); ++k) {
    rows.push_back(d.ineqG[k]);
    rb.push_back(d.ineqB[k]);
  }
  for (std::size_t i = 0; i < d.weights.size(); ++i) {
    Blocks neg;
    for (const auto& m : d.logC[i]) neg.push_back(-m);
    rows.push_back(neg);
    rb.push_back(d.logConst[i]);
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double n = frob(rows[r]) * c * std::sqrt(totalDim) + std::abs(rb[r]);
    scale.push_back(n > 0.0 ? n : 1.0);
  }

  // Variables: the original blocks plus a 1x1 block sigma = s + shift >= 0.
  double worst = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    worst = std::max(worst, (value_of(rows[r], x0) - rb[r]) / scale[r]);
  }
  const double shift = 1.0;
  Dense q;
  q.dims = d.dims;
  q.dims.push_back(1);
  q.real = d.real;
  for (int n : q.dims) {
    q.offsets.push_back(q.nvar);
    q.nvar += svec_size(n, q.real);
  }
  q.linC = scaled_identity(q.dims, 0.0);
  q.linC.back()(0, 0) = -1.0;  // maximize -sigma
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Blocks g = rows[r];
    g.push_back(CMat::Constant(1, 1, -scale[r]));
    q.ineqG.push_back(g);
    q.ineqB.push_back(rb[r] - scale[r] * shift);
  }
  Blocks boxRow = scaled_identity(q.dims, 1.0);
  boxRow.back()(0, 0) = 0.0;
  q.ineqG.push_back(boxRow);
  q.ineqB.push_back(box);

  Blocks start = x0;
  start.push_back(CMat::Constant(1, 1, worst + shift + 1.0));
  State st = make_state(q, start);
  auto good = [&](const State& s) {
    const double sigma = s.x.back()(0, 0).real();
    if (sigma - shift > -1e-3) return false;
    Blocks xs(s.x.begin(), s.x.end() - 1);
    return strictly_inside(d, xs, 0.0);
  };
  ConicOptions o = opt;
  PathResult r = follow_path(q, st, tol, o, good);
  steps += r.steps;
  Blocks xs(r.state.x.begin(), r.state.x.end() - 1);
  const double sigma = r.state.x.back()(0, 0).real();
  if (sigma - shift < 0.0 && strictly_inside(d, xs, 0.0)) return xs;
  throw Infeasible("no strictly feasible point exists (phase-I optimum " +
                   std::to_string(sigma - shift) + ")");
}

}  // namespace conic_detail

inline void validate_problem(const LogAffineSdp& p) {
  auto check = [&](const std::vector<CMat>& coeffs, const char* what) {
    if (coeffs.size() > p.blockDims.size()) throw DomainError(std::string(what) + ": too many blocks");
    for (std::size_t b = 0; b < coeffs.size(); ++b) {
      const CMat& c = coeffs[b];
      if (c.size() == 0) continue;
      if (c.rows() != p.blockDims[b] || c.cols() != p.blockDims[b]) {
        throw DomainError(std::string(what) + ": coefficient not conformal to its block");
      }
      if (!is_hermitian(c, 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()))) {
        throw DomainError(std::string(what) + ": coefficient not Hermitian");
      }
      if (p.realSymmetric && c.imag().cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff())) {
        throw DomainError(std::string(what) + ": complex coefficient in a real problem");
      }
    }
  };
  for (int n : p.blockDims) {
    if (n < 1) throw DomainError("block sizes must be >= 1");
  }
  for (const auto& t : p.logTerms) {
    if (!(t.weight >= 0.0)) throw DomainError("log weights must be >= 0");
    check(t.arg.coeffs, "log term");
  }
  check(p.linearObjective, "linear objective");
  for (const auto& q : p.inequalities) check(q.lhs.coeffs, "inequality");
}

/// Scaled identity blocks c * I, with c starting from half the tightest
/// bounding row and halved until every slack is >= 1e-3 |bound| (and > 0)
/// and every weighted log argument is positive.
inline Blocks strictly_feasible_start(const LogAffineSdp& p) {
  validate_problem(p);
  const auto d = conic_detail::densify(p);
  double c = conic_detail::identity_scale(d);
  for (int i = 0; i < 64; ++i, c *= 0.5) {
    Blocks x = conic_detail::scaled_identity(d.dims, c);
    if (conic_detail::strictly_inside(d, x, 1e-3)) return x;
  }
  throw Infeasible("no scaled identity is strictly feasible");
}

/// KKT residuals of the minimization form (negated objective) at a candidate:
/// stationarity is ||grad f + sum lambda_k G_k - Z|| plus dual infeasibility
/// (negative lambda, negative eigenvalues of Z); primal is the worst
/// constraint, cone or log-domain violation; complementarity is
/// sum |lambda_k slack_k| + sum |<Z_b, X_b>|.
inline KktResiduals kkt_residual(const LogAffineSdp& p, const Blocks& x, const Multipliers& mult) {
  const auto d = conic_detail::densify(p);
  KktResiduals r;
  const int B = static_cast<int>(d.dims.size());
  Blocks g = d.linC;
  for (auto& m : g) m = -m;
  for (std::size_t i = 0; i < d.weights.size(); ++i) {
    const double a = conic_detail::value_of(d.logC[i], x) + d.logConst[i];
    if (!(a > 0.0)) {
      r.primalFeasibility = std::max(r.primalFeasibility, -a);
      r.stationarity = std::numeric_limits<double>::infinity();
      continue;
    }
    for (int b = 0; b < B; ++b) g[b] -= (d.weights[i] / a) * d.logC[i][b];
  }
  double dualInf = 0.0;
  for (std::size_t k = 0; k < d.ineqB.size(); ++k) {
    const double lam = k < mult.lambda.size() ? mult.lambda[k] : 0.0;
    dualInf += std::max(0.0, -lam);
    for (int b = 0; b < B; ++b) g[b] += lam * d.ineqG[k][b];
    const double s = d.ineqB[k] - conic_detail::value_of(d.ineqG[k], x);
    r.primalFeasibility = std::max(r.primalFeasibility, -s);
    r.complementarity += std::abs(lam * s);
  }
  double stat = 0.0;
  for (int b = 0; b < B; ++b) {
    const CMat z = b < static_cast<int>(mult.dualSlacks.size()) ? mult.dualSlacks[b]
                                                                 : CMat::Zero(d.dims[b], d.dims[b]);
    stat += (g[b] - z).squaredNorm();
    dualInf += std::max(0.0, -min_eigenvalue(z));
    r.primalFeasibility = std::max(r.primalFeasibility, -min_eigenvalue(x[b]));
    r.complementarity += std::abs(inner(z, x[b]));
  }
  if (std::isfinite(r.stationarity)) r.stationarity = std::sqrt(stat) + dualInf;
  return r;
}

/// Maximizes the problem to duality-gap tolerance `tol`.
inline ConicSolution solve(const LogAffineSdp& p, double tol, const ConicOptions& opt = {}) {
  validate_problem(p);
  const auto d = conic_detail::densify(p);
  int steps = 0;
  Blocks x0;
  try {
    x0 = strictly_feasible_start(p);
  } catch (const Infeasible&) {
    x0 = conic_detail::phase_one(d, std::max(tol, 1e-9), opt, steps);
  }
  ConicOptions o = opt;
  o.maxNewtonSteps = std::max(1, opt.maxNewtonSteps - steps);
  auto path = conic_detail::follow_path(d, conic_detail::make_state(d, std::move(x0)), tol, o);
  steps += path.steps;

  ConicSolution sol;
  sol.blocks = std::move(path.state.x);
  sol.iterations = steps;
  sol.objective = objective_value(p, sol.blocks);
  const int B = static_cast<int>(d.dims.size());
  const int m = static_cast<int>(d.ineqB.size());
  // grad f0 of the minimization form.
  Blocks z = d.linC;
  for (auto& c : z) c = -c;
  for (std::size_t i = 0; i < d.weights.size(); ++i) {
    const double a = conic_detail::value_of(d.logC[i], sol.blocks) + d.logConst[i];
    for (int b = 0; b < B; ++b) z[b] -= (d.weights[i] / a) * d.logC[i][b];
  }
  // Multipliers 1/(t s_k) lose precision when s_k is tiny, since s_k is a
  // difference of O(|b_k|) numbers. For such rows, fit lambda by least squares
  // on complementarity, (grad f0 + sum lambda G) X = 0, at the returned point.
  std::vector<double> lam(m);
  std::vector<int> near;
  double xnorm = 0.0;
  for (const auto& x : sol.blocks) xnorm += x.squaredNorm();
  xnorm = std::sqrt(xnorm);
  for (int k = 0; k < m; ++k) {
    const double s = d.ineqB[k] - conic_detail::value_of(d.ineqG[k], sol.blocks);
    lam[k] = 1.0 / (path.t * path.state.slack(k));
    const double ref = std::abs(d.ineqB[k]) + conic_detail::frob(d.ineqG[k]) * xnorm;
    if (s < 1e-4 * ref) near.push_back(k);
  }
  if (!near.empty()) {
    int rows = 0;
    for (int n : d.dims) rows += 2 * n * n;
    RMat A(rows, static_cast<int>(near.size()));
    RVec rhs(rows);
    int off = 0;
    auto put = [&](const CMat& c, double* out) {
      for (Eigen::Index q = 0; q < c.size(); ++q) {
        out[2 * q] = c.data()[q].real();
        out[2 * q + 1] = c.data()[q].imag();
      }
    };
    for (int b = 0; b < B; ++b) {
      CMat r = z[b];
      for (int k = 0; k < m; ++k) {
        if (std::find(near.begin(), near.end(), k) == near.end()) r += lam[k] * d.ineqG[k][b];
      }
      put(-(r * sol.blocks[b]), rhs.data() + off);
      for (std::size_t j = 0; j < near.size(); ++j) {
        put(d.ineqG[near[j]][b] * sol.blocks[b], A.col(static_cast<int>(j)).data() + off);
      }
      off += 2 * d.dims[b] * d.dims[b];
    }
    const RVec fit = A.completeOrthogonalDecomposition().solve(rhs);
    for (std::size_t j = 0; j < near.size(); ++j) lam[near[j]] = std::max(0.0, fit(static_cast<int>(j)));
  }
  for (int k = 0; k < m; ++k) {
    sol.multipliers.lambda.push_back(lam[k]);
    for (int b = 0; b < B; ++b) z[b] += lam[k] * d.ineqG[k][b];
  }
  for (auto& c : z) c = hermitian_part(c);
  sol.multipliers.dualSlacks = std::move(z);
  sol.kktResiduals = kkt_residual(p, sol.blocks, sol.multipliers);
  return sol;
}

/// Real-symmetric embedding: each n x n Hermitian block becomes a 2n x 2n
/// real block [[Re, -Im], [Im, Re]] and every coefficient is halved so
/// functionals agree on embedded points.
inline CMat embed_matrix(const CMat& a) {
  const Eigen::Index n = a.rows();
  CMat e(2 * n, 2 * n);
  e.topLeftCorner(n, n) = a.real().cast<Complex>();
  e.topRightCorner(n, n) = (-a.imag()).cast<Complex>();
  e.bottomLeftCorner(n, n) = a.imag().cast<Complex>();
  e.bottomRightCorner(n, n) = a.real().cast<Complex>();
  return e;
}

inline LogAffineSdp embed_real(const LogAffineSdp& p) {
  auto emb = [](const std::vector<CMat>& cs) {
    std::vector<CMat> out;
    for (const auto& c : cs) out.push_back(c.size() == 0 ? c : CMat(0.5 * embed_matrix(c)));
    return out;
  };
  LogAffineSdp e;
  for (int n : p.blockDims) e.blockDims.push_back(2 * n);
  for (const auto& t : p.logTerms) e.logTerms.push_back({t.weight, {emb(t.arg.coeffs), t.arg.constant}});
  e.linearObjective = emb(p.linearObjective);
  e.objectiveConstant = p.objectiveConstant;
  for (const auto& q : p.inequalities) e.inequalities.push_back({{emb(q.lhs.coeffs), q.lhs.constant}, q.bound});
  e.realSymmetric = true;
  return e;
}

/// Hermitian block recovered from a (possibly unstructured) embedded block.
inline CMat unembed_matrix(const CMat& y) {
  const Eigen::Index n = y.rows() / 2;
  const RMat re = 0.5 * (y.topLeftCorner(n, n).real() + y.bottomRightCorner(n, n).real());
  const RMat im = 0.5 * (y.bottomLeftCorner(n, n).real() - y.topRightCorner(n, n).real());
  CMat x(n, n);
  x.real() = re;
  x.imag() = im;
  return x;
}

/// Plain-text dump for cross-checking with an external solver. Matrices are
/// written row-major as "re im" pairs.
inline std::string dump(const LogAffineSdp& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto mats = [&](const std::vector<CMat>& cs) {
    for (std::size_t b = 0; b < p.blockDims.size(); ++b) {
      os << "block " << b << '\n';
      const CMat c = b < cs.size() && cs[b].size() != 0 ? cs[b]
                                                       : CMat::Zero(p.blockDims[b], p.blockDims[b]);
      for (Eigen::Index i = 0; i < c.rows(); ++i) {
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
          os << (j ? " " : "") << c(i, j).real() << ' ' << c(i, j).imag();
        }
        os << '\n';
      }
    }
  };
  os << "blocks";
  for (int n : p.blockDims) os << ' ' << n;
  os << "\nreal " << (p.realSymmetric ? 1 : 0) << '\n';
  os << "objective_constant " << p.objectiveConstant << '\n';
  os << "linear\n";
  mats(p.linearObjective);
  for (const auto& t : p.logTerms) {
    os << "log " << t.weight << ' ' << t.arg.constant << '\n';
    mats(t.arg.coeffs);
  }
  for (const auto& q : p.inequalities) {
    os << "ineq " << q.bound << ' ' << q.lhs.constant << '\n';
    mats(q.lhs.coeffs);
  }
  return os.str();
}

}  // namespace japs
