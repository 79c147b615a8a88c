#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include "exciton/core/error.hpp"

namespace exlab {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr cplx kI{0.0, 1.0};

inline double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const CMatrix& m) {
  return max_abs(m - m.adjoint());
}

inline bool is_hermitian(const CMatrix& m, double tol) {
  return m.rows() == m.cols() && hermiticity_defect(m) <= tol;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Column-stacking vectorization: vec(A)[i + j*n] = A(i, j).
inline CVector vec(const CMatrix& m) {
  return Eigen::Map<const CVector>(m.data(), m.size());
}

inline CMatrix unvec(const CVector& v, Eigen::Index dim) {
  if (v.size() != dim * dim) {
    throw DimensionError("unvec: vector of length " + std::to_string(v.size()) +
                         " is not dim^2 for dim " + std::to_string(dim));
  }
  return Eigen::Map<const CMatrix>(v.data(), dim, dim);
}

/// Partial transpose over the second factor of a (d1*d2)-dimensional operator.
inline CMatrix partial_transpose_second(const CMatrix& m, int d1, int d2) {
  if (m.rows() != d1 * d2 || m.cols() != d1 * d2) {
    throw DimensionError("partial transpose: matrix is " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ", expected " +
                         std::to_string(d1 * d2));
  }
  CMatrix out(m.rows(), m.cols());
  for (int i = 0; i < d1; ++i)
    for (int a = 0; a < d2; ++a)
      for (int j = 0; j < d1; ++j)
        for (int b = 0; b < d2; ++b) out(i * d2 + a, j * d2 + b) = m(i * d2 + b, j * d2 + a);
  return out;
}

/// Partial trace over the second factor.
inline CMatrix partial_trace_second(const CMatrix& m, int d1, int d2) {
  CMatrix out = CMatrix::Zero(d1, d1);
  for (int i = 0; i < d1; ++i)
    for (int j = 0; j < d1; ++j)
      for (int a = 0; a < d2; ++a) out(i, j) += m(i * d2 + a, j * d2 + a);
  return out;
}

/// Partial trace over the first factor.
inline CMatrix partial_trace_first(const CMatrix& m, int d1, int d2) {
  CMatrix out = CMatrix::Zero(d2, d2);
  for (int a = 0; a < d2; ++a)
    for (int b = 0; b < d2; ++b)
      for (int i = 0; i < d1; ++i) out(a, b) += m(i * d2 + a, i * d2 + b);
  return out;
}

struct Eigensystem {
  RVector values;   // ascending
  CMatrix vectors;  // columns, orthonormal
};

/// Cyclic Jacobi diagonalization of a complex Hermitian matrix.
///
/// Each rotation first removes the phase of the pivot element and then
/// applies a real plane rotation, so the iterate stays exactly Hermitian.
/// Sweeps continue until the off-diagonal Frobenius norm drops below
/// 1e-15 of the full norm. Intended for the desk-scale dimensions used here
/// (up to a few hundred).
inline Eigensystem hermitian_eigensystem(const CMatrix& m, double hermitian_tol = 1e-10) {
  if (m.rows() != m.cols()) throw DimensionError("hermitian_eigensystem: matrix is not square");
  const Eigen::Index n = m.rows();
  const double scale = std::max(1.0, max_abs(m));
  if (hermiticity_defect(m) > hermitian_tol * scale) {
    throw InvalidArgument("hermitian_eigensystem: input is not Hermitian (defect " +
                          std::to_string(hermiticity_defect(m)) + ")");
  }
  CMatrix a = 0.5 * (m + m.adjoint());
  CMatrix v = CMatrix::Identity(n, n);

  auto off_norm2 = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) s += std::norm(a(i, j));
    return s;
  };
  const double total = std::max(a.squaredNorm(), 1e-300);
  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (off_norm2() <= 1e-30 * total) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double r = std::abs(a(p, q));
        if (r < 1e-300) continue;
        const cplx phase = a(p, q) / r;  // e^{i phi}
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double tau = (aqq - app) / (2.0 * r);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const cplx gqp = -s * std::conj(phase);
        const cplx gqq = c * std::conj(phase);
        // a <- a G
        for (Eigen::Index k = 0; k < n; ++k) {
          const cplx akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * c + akq * gqp;
          a(k, q) = akp * s + akq * gqq;
        }
        // a <- G^dagger a
        for (Eigen::Index k = 0; k < n; ++k) {
          const cplx apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk + std::conj(gqp) * aqk;
          a(q, k) = s * apk + std::conj(gqq) * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
        for (Eigen::Index k = 0; k < n; ++k) {
          const cplx vkp = v(k, p), vkq = v(k, q);
          v(k, p) = vkp * c + vkq * gqp;
          v(k, q) = vkp * s + vkq * gqq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps) throw NumericalError("hermitian_eigensystem: Jacobi sweeps did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x).real() < a(y, y).real(); });
  Eigensystem out{RVector(n), CMatrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]).real();
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

inline RVector hermitian_eigenvalues(const CMatrix& m) { return hermitian_eigensystem(m).values; }

/// f(m) for Hermitian m through its eigensystem.
template <class F>
CMatrix hermitian_function(const CMatrix& m, F&& f) {
  const Eigensystem es = hermitian_eigensystem(m);
  RVector fv = es.values.unaryExpr(f);
  return es.vectors * fv.cast<cplx>().asDiagonal() * es.vectors.adjoint();
}

inline double trace_norm_hermitian(const CMatrix& m) {
  return hermitian_eigenvalues(m).cwiseAbs().sum();
}

}  // namespace exlab
