#pragma once

#include <random>
#include <vector>

#include "exciton/core/channel_repr.hpp"
#include "exciton/core/density_matrix.hpp"

namespace exlab::testing {

inline exlab::CMatrix ginibre(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  exlab::CMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = exlab::cplx(g(rng), g(rng));
  return m;
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of R's
/// diagonal folded back into Q.
inline exlab::CMatrix random_unitary(std::mt19937_64& rng, int d) {
  Eigen::HouseholderQR<exlab::CMatrix> qr(ginibre(rng, d, d));
  exlab::CMatrix q = qr.householderQ();
  const exlab::CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < d; ++k) q.col(k) *= r(k, k) / std::abs(r(k, k));
  return q;
}

inline exlab::CMatrix random_hermitian(std::mt19937_64& rng, int d) {
  const exlab::CMatrix g = ginibre(rng, d, d);
  return 0.5 * (g + g.adjoint());
}

inline exlab::DensityMatrix random_state(std::mt19937_64& rng, int d, int rank = -1) {
  if (rank < 0) rank = d;
  const exlab::CMatrix g = ginibre(rng, d, rank);
  exlab::CMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return exlab::DensityMatrix(0.5 * (rho + rho.adjoint()));
}

/// CPTP map from a random isometry C^d -> C^d (x) C^k.
inline exlab::Superoperator random_channel(std::mt19937_64& rng, int d, int kraus_rank) {
  Eigen::HouseholderQR<exlab::CMatrix> qr(ginibre(rng, d * kraus_rank, d));
  const exlab::CMatrix v = qr.householderQ() * exlab::CMatrix::Identity(d * kraus_rank, d);
  std::vector<exlab::CMatrix> kraus;
  for (int k = 0; k < kraus_rank; ++k) kraus.push_back(v.block(k * d, 0, d, d));
  return exlab::Superoperator::from_kraus(kraus);
}

inline exlab::CMatrix pauli(int k) {
  using exlab::cplx;
  exlab::CMatrix m(2, 2);
  switch (k) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline exlab::CVector bell_phi_plus() {
  exlab::CVector v = exlab::CVector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return v;
}

}  // namespace exlab::testing
