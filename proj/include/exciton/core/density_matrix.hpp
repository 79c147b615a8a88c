#pragma once

#include <string>

#include "exciton/core/linalg.hpp"

namespace exlab {

/// Tolerances a state must satisfy to be accepted as a DensityMatrix.
struct StateTolerance {
  double hermitian = 1e-12;
  double trace = 1e-10;
  double positivity = 1e-10;  // eigenvalues in [-positivity, 0) are clipped
};

/// Hermitian, unit-trace, positive semidefinite operator.
///
/// Construction validates all three properties. Slightly negative eigenvalues
/// (round-off from integrators or reconstructions, within the positivity
/// tolerance) are clipped to zero and the result renormalized. Instances are
/// immutable.
class DensityMatrix {
 public:
  explicit DensityMatrix(const CMatrix& m, const StateTolerance& tol = {}) {
    if (m.rows() != m.cols() || m.rows() == 0) {
      throw DimensionError("DensityMatrix: matrix must be square and non-empty");
    }
    const double herm = hermiticity_defect(m);
    if (herm > tol.hermitian) {
      throw InvalidArgument("DensityMatrix: not Hermitian (defect " + std::to_string(herm) + ")");
    }
    CMatrix h = 0.5 * (m + m.adjoint());
    const double tr = h.trace().real();
    if (std::abs(tr - 1.0) > tol.trace) {
      throw InvalidArgument("DensityMatrix: trace " + std::to_string(tr) + " differs from 1");
    }
    const Eigensystem es = hermitian_eigensystem(h);
    const double lo = es.values.minCoeff();
    if (lo < -tol.positivity) {
      throw InvalidArgument("DensityMatrix: negative eigenvalue " + std::to_string(lo));
    }
    if (lo < 0.0) {
      RVector clipped = es.values.cwiseMax(0.0);
      clipped /= clipped.sum();
      h = es.vectors * clipped.cast<cplx>().asDiagonal() * es.vectors.adjoint();
      h = 0.5 * (h + h.adjoint());
    }
    rho_ = std::move(h);
  }

  static DensityMatrix pure(const CVector& psi) {
    const double n = psi.norm();
    if (n == 0.0) throw InvalidArgument("DensityMatrix::pure: zero vector");
    const CVector u = psi / n;
    return DensityMatrix(u * u.adjoint());
  }

  static DensityMatrix basis_state(int dim, int k) {
    if (k < 0 || k >= dim) throw DimensionError("basis_state: index out of range");
    CMatrix m = CMatrix::Zero(dim, dim);
    m(k, k) = 1.0;
    return DensityMatrix(m);
  }

  static DensityMatrix maximally_mixed(int dim) {
    return DensityMatrix(CMatrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  int dim() const { return static_cast<int>(rho_.rows()); }
  const CMatrix& matrix() const { return rho_; }
  cplx operator()(int i, int j) const { return rho_(i, j); }

  double min_eigenvalue() const { return hermitian_eigenvalues(rho_).minCoeff(); }
  double purity() const { return (rho_ * rho_).trace().real(); }

 private:
  CMatrix rho_;
};

/// Half the trace norm of a - b.
inline double trace_distance(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("trace_distance: dimension mismatch (" + std::to_string(a.rows()) +
                         " vs " + std::to_string(b.rows()) + ")");
  }
  return 0.5 * trace_norm_hermitian(a - b);
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return trace_distance(a.matrix(), b.matrix());
}

/// Sum of |negative eigenvalues| of the partial transpose over the second
/// factor. Accepts any Hermitian operator so it can also witness
/// non-positive Choi operators.
inline double negativity(const CMatrix& rho, int d1, int d2) {
  if (d1 <= 0 || d2 <= 0 || rho.rows() != d1 * d2) {
    throw DimensionError("negativity: dimension " + std::to_string(rho.rows()) +
                         " does not factor as " + std::to_string(d1) + "x" + std::to_string(d2));
  }
  const RVector ev = hermitian_eigenvalues(partial_transpose_second(rho, d1, d2));
  double s = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) < 0.0) s -= ev(i);
  return s;
}

inline double negativity(const DensityMatrix& rho, int d1, int d2) {
  return negativity(rho.matrix(), d1, d2);
}

}  // namespace exlab
