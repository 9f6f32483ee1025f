#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace japs {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kLog2e = std::numbers::log2e;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

/// a b^H
inline CMat outer(const CVec& a, const CVec& b) { return a * b.adjoint(); }

inline CMat lift(const CVec& w) { return w * w.adjoint(); }

inline CMat hermitian_part(const CMat& x) { return 0.5 * (x + x.adjoint()); }

/// Real inner product Re Tr(A^H B) on complex matrices.
inline double inner(const CMat& a, const CMat& b) {
  return (a.conjugate().cwiseProduct(b)).sum().real();
}

/// Real quadratic form x^H A x for Hermitian A.
inline double quad_form(const CMat& a, const CVec& x) {
  return x.dot(a * x).real();
}

inline double min_eigenvalue(const CMat& x) {
  if (x.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(x), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eigenvalue(const CMat& x) {
  if (x.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(x), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(x.rows() - 1);
}

inline bool is_hermitian(const CMat& x, double tol) {
  return x.rows() == x.cols() && (x - x.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

/// Rotates v so that its first entry with magnitude above `rel_tol * |v|` is
/// real and positive.
inline CVec normalize_phase(CVec v, double rel_tol = 1e-12) {
  const double n = v.norm();
  if (n == 0.0) return v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > rel_tol * n) {
      v *= std::conj(v(i)) / std::abs(v(i));
      v(i) = std::abs(v(i));
      break;
    }
  }
  return v;
}

struct EigenPair {
  double value = 0.0;
  CVec vector;
};

/// Largest eigenvalue of a Hermitian matrix with a unit eigenvector chosen
/// deterministically. When the top eigenvalue is repeated (within
/// `tie_tol * max|lambda|`), the vector is the normalized projection of the
/// first standard basis vector with a non-negligible component on the top
/// eigenspace. The leading non-zero entry is real positive.
inline EigenPair principal_eigenpair(const CMat& x, double tie_tol = 1e-10) {
  const Eigen::Index n = x.rows();
  EigenPair out;
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(x));
  const RVec& lam = es.eigenvalues();
  out.value = lam(n - 1);
  const double scale = std::max(std::abs(lam(0)), std::abs(lam(n - 1)));
  Eigen::Index first = n - 1;
  while (first > 0 && lam(n - 1) - lam(first - 1) <= tie_tol * scale) --first;
  if (first == n - 1) {
    out.vector = normalize_phase(es.eigenvectors().col(n - 1));
    return out;
  }
  const CMat basis = es.eigenvectors().rightCols(n - first);
  for (Eigen::Index k = 0; k < n; ++k) {
    // projection of e_k onto span(basis)
    CVec proj = basis * basis.row(k).adjoint();
    if (proj.norm() > 1e-8) {
      out.vector = normalize_phase(proj / proj.norm());
      return out;
    }
  }
  out.vector = normalize_phase(es.eigenvectors().col(n - 1));
  return out;
}

/// Sum of Frobenius norms squared over a list of blocks, square-rooted.
inline double blocks_norm(const std::vector<CMat>& blocks) {
  double s = 0.0;
  for (const auto& b : blocks) s += b.squaredNorm();
  return std::sqrt(s);
}

}  // namespace japs
