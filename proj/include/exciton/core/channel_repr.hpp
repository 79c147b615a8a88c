#pragma once

#include <string>
#include <vector>

#include "exciton/core/linalg.hpp"

namespace exlab {

/// Linear map on operators acting on column-stacked vectors:
/// vec(Phi(X)) = matrix() * vec(X).
class Superoperator {
 public:
  Superoperator() = default;
  explicit Superoperator(CMatrix m) : m_(std::move(m)) {
    const auto n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m_.rows()))));
    if (m_.rows() != m_.cols() || n * n != m_.rows() || n == 0) {
      throw DimensionError("Superoperator: matrix must be d^2 x d^2, got " +
                           std::to_string(m_.rows()) + "x" + std::to_string(m_.cols()));
    }
    dim_ = n;
  }

  static Superoperator identity(int dim) {
    return Superoperator(CMatrix::Identity(dim * dim, dim * dim));
  }

  /// rho -> U rho U^dagger
  static Superoperator unitary(const CMatrix& u) { return Superoperator(kron(u.conjugate(), u)); }

  /// rho -> sum_k K rho K^dagger
  static Superoperator from_kraus(const std::vector<CMatrix>& kraus) {
    if (kraus.empty()) throw InvalidArgument("from_kraus: no Kraus operators");
    const auto d = kraus.front().rows();
    CMatrix m = CMatrix::Zero(d * d, d * d);
    for (const auto& k : kraus) {
      if (k.rows() != d || k.cols() != d) throw DimensionError("from_kraus: inconsistent Kraus shapes");
      m += kron(k.conjugate(), k);
    }
    return Superoperator(std::move(m));
  }

  int dim() const { return dim_; }
  const CMatrix& matrix() const { return m_; }

  CMatrix apply(const CMatrix& x) const {
    if (x.rows() != dim_ || x.cols() != dim_) throw DimensionError("Superoperator::apply: shape mismatch");
    return unvec(m_ * vec(x), dim_);
  }

  /// (this o other)(X) = this(other(X))
  Superoperator compose(const Superoperator& other) const {
    if (other.dim_ != dim_) throw DimensionError("Superoperator::compose: dimension mismatch");
    return Superoperator(m_ * other.m_);
  }

  /// Heisenberg-picture map, adjoint under the Hilbert-Schmidt product.
  Superoperator adjoint() const { return Superoperator(m_.adjoint()); }

  /// Trace preservation holds iff the adjoint map fixes the identity.
  double trace_preservation_defect() const {
    const CVector id = vec(CMatrix::Identity(dim_, dim_));
    return (m_.adjoint() * id - id).cwiseAbs().maxCoeff();
  }
  bool is_trace_preserving(double tol = 1e-10) const { return trace_preservation_defect() <= tol; }

 private:
  int dim_ = 0;
  CMatrix m_;
};

/// Unnormalized Choi operator C = sum_ij |i><j| (x) Phi(|i><j|), input
/// factor first. The identity channel has trace(C) = dim, and complete
/// positivity is equivalent to C >= 0.
class ChoiMatrix {
 public:
  ChoiMatrix() = default;
  explicit ChoiMatrix(CMatrix m, double tol = 1e-8) : m_(std::move(m)) {
    const auto n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m_.rows()))));
    if (m_.rows() != m_.cols() || n * n != m_.rows() || n == 0) {
      throw DimensionError("ChoiMatrix: matrix must be d^2 x d^2");
    }
    dim_ = n;
    const double scale = std::max(1.0, max_abs(m_));
    if (hermiticity_defect(m_) > tol * scale) throw InvalidArgument("ChoiMatrix: not Hermitian");
    const double tr = m_.trace().real();
    if (std::abs(tr - dim_) > tol * dim_) {
      throw InvalidArgument("ChoiMatrix: trace " + std::to_string(tr) + " differs from dim " +
                            std::to_string(dim_));
    }
    m_ = 0.5 * (m_ + m_.adjoint());
  }

  int dim() const { return dim_; }
  const CMatrix& matrix() const { return m_; }
  /// C / dim: a bipartite density operator when the channel is CPTP.
  CMatrix normalized() const { return m_ / static_cast<double>(dim_); }
  double min_eigenvalue() const { return hermitian_eigenvalues(m_).minCoeff(); }

 private:
  int dim_ = 0;
  CMatrix m_;
};

namespace detail {

// C(i*d + a, j*d + b) = Phi(|i><j|)(a, b) = S(a + b*d, i + j*d)
inline CMatrix reshuffle_to_choi(const CMatrix& s, int d) {
  CMatrix c(d * d, d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) c(i * d + a, j * d + b) = s(a + b * d, i + j * d);
  return c;
}

inline CMatrix reshuffle_to_superop(const CMatrix& c, int d) {
  CMatrix s(d * d, d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) s(a + b * d, i + j * d) = c(i * d + a, j * d + b);
  return s;
}

}  // namespace detail

/// Choi operator of a Hermiticity-preserving, trace-preserving map.
inline ChoiMatrix to_choi(const Superoperator& s, double tol = 1e-8) {
  return ChoiMatrix(detail::reshuffle_to_choi(s.matrix(), s.dim()), tol);
}

inline Superoperator to_superoperator(const ChoiMatrix& c) {
  return Superoperator(detail::reshuffle_to_superop(c.matrix(), c.dim()));
}

}  // namespace exlab
