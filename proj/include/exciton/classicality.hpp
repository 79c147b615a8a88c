#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "exciton/core/channel_repr.hpp"
#include "exciton/core/density_matrix.hpp"
#include "exciton/core/format.hpp"
#include "exciton/core/json_io.hpp"

namespace exlab {

/// Hermiticity- and trace-preserving map with its Choi operator. Complete
/// positivity is recorded, not required: interval maps may fail it.
struct QuantumChannel {
  int dim = 0;
  Superoperator superop;
  ChoiMatrix choi;
  double cp_defect = 0.0;  // max(0, -min eigenvalue of the Choi operator)

  bool is_cp(double tol = 1e-8) const { return cp_defect <= tol; }

  static QuantumChannel from_superoperator(const Superoperator& s, double tp_tol = 1e-8) {
    const double tp = s.trace_preservation_defect();
    if (tp > tp_tol) throw InvalidArgument("channel is not trace preserving (defect " + format_double(tp) + ")");
    QuantumChannel q;
    q.dim = s.dim();
    q.superop = s;
    q.choi = to_choi(s, std::max(tp_tol, 1e-8));
    q.cp_defect = std::max(0.0, -q.choi.min_eigenvalue());
    return q;
  }
  static QuantumChannel unitary(const CMatrix& u) { return from_superoperator(Superoperator::unitary(u)); }
  static QuantumChannel from_kraus(const std::vector<CMatrix>& k) { return from_superoperator(Superoperator::from_kraus(k)); }
};

// ---------------------------------------------------------------------------
// Standard qubit channels and operator bases

inline CMatrix pauli_matrix(int k) {
  CMatrix p = CMatrix::Zero(2, 2);
  switch (k) {
    case 0: p << 1, 0, 0, 1; break;
    case 1: p << 0, 1, 1, 0; break;
    case 2: p << 0, -kI, kI, 0; break;
    case 3: p << 1, 0, 0, -1; break;
    default: throw InvalidArgument("pauli_matrix: index must be 0..3");
  }
  return p;
}

/// rho -> (1-p) rho + p Z rho Z scaled so off-diagonals shrink by lambda.
inline QuantumChannel qubit_dephasing(double lambda) {
  const double p = 0.5 * (1.0 - lambda);
  return QuantumChannel::from_kraus({std::sqrt(1.0 - p) * pauli_matrix(0), std::sqrt(p) * pauli_matrix(3)});
}

inline QuantumChannel amplitude_damping(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("amplitude_damping: p must lie in [0, 1]");
  CMatrix k0 = CMatrix::Zero(2, 2), k1 = CMatrix::Zero(2, 2);
  k0(0, 0) = 1.0;
  k0(1, 1) = std::sqrt(1.0 - p);
  k1(0, 1) = std::sqrt(p);
  return QuantumChannel::from_kraus({k0, k1});
}

/// rho -> tr(rho) I/d
inline QuantumChannel fully_depolarizing(int d) {
  CMatrix c = CMatrix::Identity(d * d, d * d) / static_cast<double>(d);
  return QuantumChannel::from_superoperator(Superoperator(detail::reshuffle_to_superop(c, d)));
}

/// Weyl operators X^a Z^b, a, b = 0..d-1 (the Paulis up to phase for d = 2).
inline std::vector<CMatrix> weyl_operators(int d) {
  if (d < 1) throw InvalidArgument("weyl_operators: d must be positive");
  const double two_pi = 2.0 * 3.14159265358979323846;
  std::vector<CMatrix> out;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      CMatrix w = CMatrix::Zero(d, d);
      for (int k = 0; k < d; ++k) w((k + a) % d, k) = std::polar(1.0, two_pi * b * k / d);
      out.push_back(w);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reconstruction and interval maps

struct ReconstructionOptions {
  bool project_cp = false;
  double tp_tol = 1e-8;
  double rank_tol = 1e-10;  // relative to the largest singular value
  int max_projection_passes = 10000;
};

/// Linear inversion from (input, output) state pairs.
inline QuantumChannel reconstruct_channel(const std::vector<std::pair<DensityMatrix, DensityMatrix>>& pairs,
                                          const ReconstructionOptions& opt = {}) {
  if (pairs.empty()) throw InvalidArgument("reconstruct_channel: no state pairs");
  const int d = pairs.front().first.dim();
  const auto n = static_cast<Eigen::Index>(pairs.size());
  CMatrix x(d * d, n), y(d * d, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& [in, out] = pairs[static_cast<std::size_t>(k)];
    if (in.dim() != d || out.dim() != d) throw DimensionError("reconstruct_channel: inconsistent state dimensions");
    x.col(k) = vec(in.matrix());
    y.col(k) = vec(out.matrix());
  }
  Eigen::JacobiSVD<CMatrix> svd(x);
  const RVector sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > opt.rank_tol * sv(0)) ++rank;
  if (rank < d * d) {
    throw InvalidArgument("reconstruct_channel: inputs span " + std::to_string(rank) + " of " + std::to_string(d * d) +
                          " dimensions");
  }
  // S X = Y in the least-squares sense: S = Y X^+
  const CMatrix s = Eigen::JacobiSVD<CMatrix>(x.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV)
                        .solve(y.transpose())
                        .transpose();
  CMatrix c = detail::reshuffle_to_choi(s, d);
  c = 0.5 * (c + c.adjoint());
  const Eigensystem es = hermitian_eigensystem(c);
  const double defect = std::max(0.0, -es.values.minCoeff());
  if (opt.project_cp && defect > 0.0) {
    // alternate: clip to the PSD cone, then restore tr_out C = I; stop when the
    // trace-preserving iterate is PSD to 1e-10
    Eigensystem cur = es;
    for (int pass = 0; pass < opt.max_projection_passes; ++pass) {
      RVector clipped = cur.values.cwiseMax(0.0);
      c = cur.vectors * clipped.cast<cplx>().asDiagonal() * cur.vectors.adjoint();
      const CMatrix excess = partial_trace_second(c, d, d) - CMatrix::Identity(d, d);
      c -= kron(excess, CMatrix::Identity(d, d)) / static_cast<double>(d);
      c = 0.5 * (c + c.adjoint());
      cur = hermitian_eigensystem(c);
      if (cur.values.minCoeff() >= -1e-10) break;
    }
  }
  QuantumChannel q = QuantumChannel::from_superoperator(Superoperator(detail::reshuffle_to_superop(c, d)), opt.tp_tol);
  q.cp_defect = defect;
  return q;
}

/// Phi_st = Phi_t o Phi_s^{-1}.
inline QuantumChannel interval_map(const QuantumChannel& phi_s, const QuantumChannel& phi_t, double condition_cap = 1e8) {
  if (phi_s.dim != phi_t.dim) throw DimensionError("interval_map: channels act on different dimensions");
  const CMatrix& ms = phi_s.superop.matrix();
  Eigen::JacobiSVD<CMatrix> svd(ms, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RVector sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= condition_cap)) {
    throw NumericalError("interval_map: earlier map is singular or ill-conditioned (condition number " +
                         format_double(cond) + ")");
  }
  const CMatrix inv = svd.matrixV() * sv.cwiseInverse().cast<cplx>().asDiagonal() * svd.matrixU().adjoint();
  return QuantumChannel::from_superoperator(Superoperator(phi_t.superop.matrix() * inv));
}

inline double unitality_defect(const QuantumChannel& phi) {
  const CMatrix mixed = CMatrix::Identity(phi.dim, phi.dim) / static_cast<double>(phi.dim);
  return trace_distance(phi.superop.apply(mixed), mixed);
}

// ---------------------------------------------------------------------------
// Random-unitary decomposition (qubit)

struct WeightedUnitary {
  double probability;
  CMatrix unitary;
};

struct RuDecomposition {
  std::vector<WeightedUnitary> terms;
  double residual = 0.0;  // trace distance of normalized Choi operators
};

namespace detail {

/// SU(2) element whose adjoint action on Bloch vectors is the rotation r.
inline CMatrix su2_from_rotation(const Eigen::Matrix3d& r) {
  double w, x, y, z;
  const double tr = r.trace();
  if (tr > 0.0) {
    const double s = 2.0 * std::sqrt(tr + 1.0);
    w = 0.25 * s;
    x = (r(2, 1) - r(1, 2)) / s;
    y = (r(0, 2) - r(2, 0)) / s;
    z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    w = (r(2, 1) - r(1, 2)) / s;
    x = 0.25 * s;
    y = (r(0, 1) + r(1, 0)) / s;
    z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    w = (r(0, 2) - r(2, 0)) / s;
    x = (r(0, 1) + r(1, 0)) / s;
    y = 0.25 * s;
    z = (r(1, 2) + r(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    w = (r(1, 0) - r(0, 1)) / s;
    x = (r(0, 2) + r(2, 0)) / s;
    y = (r(1, 2) + r(2, 1)) / s;
    z = 0.25 * s;
  }
  return w * pauli_matrix(0) - kI * (x * pauli_matrix(1) + y * pauli_matrix(2) + z * pauli_matrix(3));
}

inline CMatrix mixture_superop(const std::vector<WeightedUnitary>& terms, int d) {
  CMatrix m = CMatrix::Zero(d * d, d * d);
  for (const auto& t : terms) m += t.probability * kron(t.unitary.conjugate(), t.unitary);
  return m;
}

}  // namespace detail

/// Phi = sum_i p_i U_i . U_i^dagger for a unital qubit channel, from the
/// signed singular value decomposition of its Bloch matrix.
inline RuDecomposition ru_decompose_qubit(const QuantumChannel& phi) {
  if (phi.dim != 2) throw InvalidArgument("ru_decompose_qubit: channel must act on a qubit, got dim " + std::to_string(phi.dim));
  const double u = unitality_defect(phi);
  if (u >= 1e-8) throw InvalidArgument("ru_decompose_qubit: channel is non-unital (defect " + format_double(u) + ")");
  if (!phi.is_cp()) throw InvalidArgument("ru_decompose_qubit: channel is not completely positive");
  Eigen::Matrix3d t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      t(i, j) = 0.5 * (pauli_matrix(i + 1) * phi.superop.apply(pauli_matrix(j + 1))).trace().real();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(t, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r1 = svd.matrixU(), r2 = svd.matrixV();
  Eigen::Vector3d lam = svd.singularValues();
  if (r1.determinant() < 0.0) {
    r1.col(2) *= -1.0;
    lam(2) *= -1.0;
  }
  if (r2.determinant() < 0.0) {
    r2.col(2) *= -1.0;
    lam(2) *= -1.0;
  }
  const double p[4] = {0.25 * (1 + lam(0) + lam(1) + lam(2)), 0.25 * (1 + lam(0) - lam(1) - lam(2)),
                       0.25 * (1 - lam(0) + lam(1) - lam(2)), 0.25 * (1 - lam(0) - lam(1) + lam(2))};
  const CMatrix w1 = detail::su2_from_rotation(r1);
  const CMatrix w2 = detail::su2_from_rotation(r2);
  RuDecomposition out;
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (p[i] < -1e-10) throw NumericalError("ru_decompose_qubit: negative weight " + format_double(p[i]));
    total += std::max(p[i], 0.0);
  }
  for (int i = 0; i < 4; ++i) out.terms.push_back({std::max(p[i], 0.0) / total, w1 * pauli_matrix(i) * w2.adjoint()});
  const CMatrix rebuilt = detail::reshuffle_to_choi(detail::mixture_superop(out.terms, 2), 2);
  out.residual = trace_distance(rebuilt / 2.0, phi.choi.normalized());
  return out;
}

// ---------------------------------------------------------------------------
// Measure-and-prepare test

enum class Verdict { classical, non_classical, inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::classical: return "classical";
    case Verdict::non_classical: return "non-classical";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "";
}

/// Phi(rho) = sum_i tr(rho M_i) sigma_i
struct MeasurePrepare {
  std::vector<CMatrix> povm;
  std::vector<CMatrix> states;
  double residual = 0.0;
};

struct MpOutcome {
  Verdict verdict = Verdict::inconclusive;
  double witness = 0.0;  // Choi negativity
  std::optional<MeasurePrepare> certificate;
};

namespace detail {

inline CMatrix mp_superop(const MeasurePrepare& mp, int d) {
  CMatrix m = CMatrix::Zero(d * d, d * d);
  // vec(tr(M rho) sigma) = vec(sigma) vec(M^dagger)^dagger vec(rho)
  for (std::size_t k = 0; k < mp.povm.size(); ++k) m += vec(mp.states[k]) * vec(mp.povm[k]).adjoint();
  return m;
}

inline std::optional<MeasurePrepare> find_mp_certificate(const QuantumChannel& phi, double tol = 1e-8) {
  const int d = phi.dim;
  std::vector<CMatrix> bases{CMatrix::Identity(d, d)};
  CMatrix fourier(d, d);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) fourier(j, k) = std::polar(1.0 / std::sqrt(double(d)), two_pi * j * k / d);
  bases.push_back(fourier);
  std::vector<MeasurePrepare> candidates;
  candidates.push_back({{CMatrix::Identity(d, d)}, {phi.superop.apply(CMatrix::Identity(d, d) / double(d))}, 0.0});
  for (const auto& b : bases) {
    MeasurePrepare mp;
    for (int k = 0; k < d; ++k) {
      const CMatrix proj = b.col(k) * b.col(k).adjoint();
      mp.povm.push_back(proj);
      mp.states.push_back(phi.superop.apply(proj));
    }
    candidates.push_back(mp);
  }
  for (auto& mp : candidates) {
    const CMatrix c = reshuffle_to_choi(mp_superop(mp, d), d) / double(d);
    mp.residual = trace_distance(c, phi.choi.normalized());
    if (mp.residual < tol) return mp;
  }
  return std::nullopt;
}

}  // namespace detail

/// Choi negativity witness. Positive witness rules out measure-and-prepare
/// form; for qubits a vanishing witness proves it (PPT implies separable).
inline MpOutcome measure_prepare_test(const QuantumChannel& phi) {
  MpOutcome out;
  out.witness = negativity(phi.choi.normalized(), phi.dim, phi.dim);
  out.certificate = detail::find_mp_certificate(phi);
  if (out.witness > 1e-6) {
    out.verdict = Verdict::non_classical;
  } else if (phi.dim == 2 || out.certificate) {
    out.verdict = Verdict::classical;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Relative-entropy distance to a restricted set of classical maps

enum class ClassicalKind { random_unitary, measure_prepare };

struct BoundResult {
  double value = std::numeric_limits<double>::infinity();
  std::vector<double> weights;
  int iterations = 0;
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;
};

namespace detail {

inline constexpr double kEigFloor = 1e-15;

/// S(rho || sigma) in bits; +inf when rho has weight outside supp(sigma).
inline double relative_entropy_bits(const Eigensystem& rho_es, const CMatrix& rho, const Eigensystem& sig) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < rho_es.values.size(); ++i) {
    const double l = rho_es.values(i);
    if (l > kEigFloor) s += l * std::log(l);
  }
  const CMatrix rho_in = sig.vectors.adjoint() * rho * sig.vectors;
  for (Eigen::Index i = 0; i < sig.values.size(); ++i) {
    const double w = rho_in(i, i).real();
    if (sig.values(i) > kEigFloor) {
      s -= w * std::log(sig.values(i));
    } else if (w > 1e-12) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return std::max(s / std::log(2.0), 0.0);
}

/// d/dw_k S(rho || sum_j w_j sigma_j) = -tr(rho Dlog_sigma[sigma_k]) / ln 2.
inline RVector relative_entropy_gradient(const CMatrix& rho, const Eigensystem& sig, const std::vector<CMatrix>& dict) {
  const Eigen::Index n = sig.values.size();
  RMatrix lw = RMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = sig.values(i), b = sig.values(j);
      if (a <= kEigFloor || b <= kEigFloor) continue;
      lw(i, j) = std::abs(a - b) > 1e-12 * std::max(a, b) ? (std::log(a) - std::log(b)) / (a - b) : 2.0 / (a + b);
    }
  }
  const CMatrix rho_in = sig.vectors.adjoint() * rho * sig.vectors;
  RVector g(static_cast<Eigen::Index>(dict.size()));
  for (std::size_t k = 0; k < dict.size(); ++k) {
    const CMatrix x = sig.vectors.adjoint() * dict[k] * sig.vectors;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) acc += (rho_in(j, i) * x(i, j)).real() * lw(i, j);
    g(static_cast<Eigen::Index>(k)) = -acc / std::log(2.0);
  }
  return g;
}

/// Euclidean projection onto the probability simplex.
inline RVector project_simplex(const RVector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    css += u[k];
    const double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

}  // namespace detail

/// Normalized Choi states of the restricted classical set generated by the
/// unitaries: conjugations (random-unitary kind), or complete dephasing in
/// each unitary's column basis plus the fully depolarizing map
/// (measure-prepare kind).
inline std::vector<CMatrix> classical_dictionary(const std::vector<CMatrix>& unitaries, ClassicalKind kind, int d) {
  std::vector<CMatrix> out;
  for (const auto& u : unitaries) {
    if (u.rows() != d || u.cols() != d) throw DimensionError("classical_dictionary: unitary shape mismatch");
    if (kind == ClassicalKind::random_unitary) {
      out.push_back(detail::reshuffle_to_choi(kron(u.conjugate(), u), d) / double(d));
    } else {
      MeasurePrepare mp;
      for (int k = 0; k < d; ++k) {
        const CMatrix proj = u.col(k) * u.col(k).adjoint();
        mp.povm.push_back(proj);
        mp.states.push_back(proj);
      }
      out.push_back(detail::reshuffle_to_choi(detail::mp_superop(mp, d), d) / double(d));
    }
  }
  if (kind == ClassicalKind::measure_prepare) out.push_back(CMatrix::Identity(d * d, d * d) / double(d * d));
  return out;
}

/// min over mixture weights of S(Choi(phi)/d || Choi(mixture)/d) by projected
/// gradient with backtracking; converged once the Frank-Wolfe gap (an upper
/// bound on the suboptimality) is below tol * max(1, value) or 1e-9.
inline BoundResult nonclassicality_bound_detailed(const QuantumChannel& phi, const std::vector<CMatrix>& unitaries,
                                                  ClassicalKind kind, double tol = 1e-6, int max_iter = 20000) {
  if (unitaries.empty()) throw InvalidArgument("nonclassicality_upper_bound: empty dictionary");
  const int d = phi.dim;
  const std::vector<CMatrix> dict = classical_dictionary(unitaries, kind, d);
  const auto n = static_cast<Eigen::Index>(dict.size());
  const CMatrix rho = phi.choi.normalized();
  const Eigensystem rho_es = hermitian_eigensystem(rho);

  auto mix = [&](const RVector& w) {
    CMatrix s = CMatrix::Zero(d * d, d * d);
    for (Eigen::Index k = 0; k < n; ++k)
      if (w(k) != 0.0) s += w(k) * dict[static_cast<std::size_t>(k)];
    return hermitian_eigensystem(0.5 * (s + s.adjoint()));
  };
  auto f = [&](const RVector& w) { return detail::relative_entropy_bits(rho_es, rho, mix(w)); };

  BoundResult res;
  RVector w = RVector::Constant(n, 1.0 / n);
  double fw = f(w);
  for (Eigen::Index k = 0; k < n; ++k) {
    const RVector e = RVector::Unit(n, k);
    const double fe = f(e);
    if (fe < fw) {
      fw = fe;
      w = e;
    }
  }
  if (!std::isfinite(fw)) {
    res.weights.assign(w.data(), w.data() + n);
    res.converged = true;  // the restricted set cannot reach the support of rho
    return res;
  }
  double step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it;
    if (fw <= 1e-14) {
      res.gap = 0.0;
      res.converged = true;
      break;
    }
    const RVector g = detail::relative_entropy_gradient(rho, mix(w), dict);
    Eigen::Index kmin;
    g.minCoeff(&kmin);
    res.gap = g.dot(w) - g(kmin);
    if (res.gap <= std::max(tol * std::max(1.0, fw), 1e-9)) {
      res.converged = true;
      break;
    }
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const RVector trial = detail::project_simplex(w - step * g);
      const double ft = f(trial);
      if (std::isfinite(ft) && ft <= fw - 1e-4 * g.dot(w - trial)) {
        w = trial;
        fw = ft;
        moved = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      // try the Frank-Wolfe direction before giving up on the step
      const RVector dir = RVector::Unit(n, kmin) - w;
      double a = 1.0;
      for (int bt = 0; bt < 60 && !moved; ++bt, a *= 0.5) {
        const RVector trial = w + a * dir;
        const double ft = f(trial);
        if (std::isfinite(ft) && ft < fw) {
          w = trial;
          fw = ft;
          moved = true;
        }
      }
      if (!moved) break;
    }
  }
  res.value = fw;
  res.weights.assign(w.data(), w.data() + n);
  return res;
}

inline double nonclassicality_upper_bound(const QuantumChannel& phi, const std::vector<CMatrix>& unitaries,
                                          ClassicalKind kind = ClassicalKind::random_unitary, double tol = 1e-6) {
  const BoundResult r = nonclassicality_bound_detailed(phi, unitaries, kind, tol);
  if (!r.converged) {
    throw NumericalError("nonclassicality_upper_bound: did not converge (gap " + format_double(r.gap) + " after " +
                         std::to_string(r.iterations) + " iterations)");
  }
  return r.value;
}

// ---------------------------------------------------------------------------
// Trajectories

struct RuOutcome {
  Verdict verdict = Verdict::inconclusive;
  double witness = 0.0;  // unitality defect
  std::optional<RuDecomposition> decomposition;
};

struct ClassicalityReport {
  double t_start = 0.0;
  double t_end = 0.0;
  bool map_available = true;
  std::string note;
  double cp_defect = 0.0;
  double unitality_defect = 0.0;
  RuOutcome ru;
  MpOutcome mp;
  double upper_bound_distance = std::numeric_limits<double>::infinity();
  bool upper_bound_converged = false;
};

/// Both classicality tests on one map.
inline ClassicalityReport classify_channel(const QuantumChannel& phi) {
  ClassicalityReport r;
  r.cp_defect = phi.cp_defect;
  r.unitality_defect = unitality_defect(phi);
  r.ru.witness = r.unitality_defect;
  if (!phi.is_cp()) {
    r.note = "map is not completely positive (Choi eigenvalue " + format_double(-phi.cp_defect) + ")";
    r.mp.witness = negativity(phi.choi.normalized(), phi.dim, phi.dim);
    return r;
  }
  if (r.unitality_defect > 1e-6) {
    r.ru.verdict = Verdict::non_classical;
  } else if (phi.dim == 2 && r.unitality_defect < 1e-8) {
    const RuDecomposition dec = ru_decompose_qubit(phi);
    if (dec.residual < 1e-8) {
      r.ru.verdict = Verdict::classical;
      r.ru.decomposition = dec;
    }
  }
  r.mp = measure_prepare_test(phi);
  const BoundResult b = nonclassicality_bound_detailed(phi, weyl_operators(phi.dim), ClassicalKind::random_unitary);
  r.upper_bound_distance = b.value;
  r.upper_bound_converged = b.converged;
  return r;
}

struct TimedChannel {
  double time;
  QuantumChannel channel;
};

struct TrajectoryClassification {
  std::vector<ClassicalityReport> intervals;
  Verdict environment = Verdict::inconclusive;  // random-unitary sense, every interval
  Verdict system = Verdict::inconclusive;       // measure-and-prepare sense, every interval
};

inline Verdict combine(const std::vector<Verdict>& vs) {
  if (std::any_of(vs.begin(), vs.end(), [](Verdict v) { return v == Verdict::non_classical; })) return Verdict::non_classical;
  if (std::all_of(vs.begin(), vs.end(), [](Verdict v) { return v == Verdict::classical; })) return Verdict::classical;
  return Verdict::inconclusive;
}

/// Interval maps between consecutive snapshots, each classified; the overall
/// verdict is classical (at this time coarse-graining) only if every interval is.
inline TrajectoryClassification classify_trajectory(const std::vector<TimedChannel>& snapshots,
                                                    double condition_cap = 1e8) {
  if (snapshots.size() < 2) throw InvalidArgument("classify_trajectory: need at least two snapshots");
  for (std::size_t k = 1; k < snapshots.size(); ++k) {
    if (!(snapshots[k].time > snapshots[k - 1].time)) throw InvalidArgument("classify_trajectory: snapshots must be time-ordered");
  }
  TrajectoryClassification out;
  std::vector<Verdict> env, sys;
  for (std::size_t k = 0; k + 1 < snapshots.size(); ++k) {
    ClassicalityReport r;
    try {
      r = classify_channel(interval_map(snapshots[k].channel, snapshots[k + 1].channel, condition_cap));
    } catch (const Error& e) {
      r.map_available = false;
      r.note = e.what();
    }
    r.t_start = snapshots[k].time;
    r.t_end = snapshots[k + 1].time;
    env.push_back(r.ru.verdict);
    sys.push_back(r.mp.verdict);
    out.intervals.push_back(std::move(r));
  }
  out.environment = combine(env);
  out.system = combine(sys);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

/// Accepts a list (or {"snapshots": list}) of {time, superop} or
/// {time, input_states, output_states}.
inline std::vector<TimedChannel> snapshots_from_json(const json& j, const ReconstructionOptions& opt = {}) {
  const json& list = j.is_object() && j.contains("snapshots") ? j.at("snapshots") : j;
  if (!list.is_array()) throw InvalidArgument("snapshots: expected a list");
  std::vector<TimedChannel> out;
  for (std::size_t k = 0; k < list.size(); ++k) {
    const json& s = list[k];
    const std::string where = "snapshot " + std::to_string(k);
    if (!s.is_object() || !s.contains("time")) throw InvalidArgument(where + ": missing 'time'");
    const double t = s.at("time").get<double>();
    if (s.contains("superop")) {
      out.push_back({t, QuantumChannel::from_superoperator(Superoperator(matrix_from_json(s.at("superop"))), opt.tp_tol)});
      continue;
    }
    if (!s.contains("input_states") || !s.contains("output_states")) {
      throw InvalidArgument(where + ": needs 'superop' or 'input_states' and 'output_states'");
    }
    const json& ins = s.at("input_states");
    const json& outs = s.at("output_states");
    if (!ins.is_array() || !outs.is_array() || ins.size() != outs.size()) {
      throw InvalidArgument(where + ": input_states and output_states must be lists of equal length");
    }
    std::vector<std::pair<DensityMatrix, DensityMatrix>> pairs;
    const StateTolerance loose{1e-8, 1e-8, 1e-6};
    for (std::size_t i = 0; i < ins.size(); ++i)
      pairs.emplace_back(DensityMatrix(matrix_from_json(ins[i]), loose), DensityMatrix(matrix_from_json(outs[i]), loose));
    out.push_back({t, reconstruct_channel(pairs, opt)});
  }
  return out;
}

inline json snapshots_to_json(const std::vector<TimedChannel>& s) {
  json list = json::array();
  for (const auto& c : s) list.push_back({{"time", c.time}, {"superop", matrix_to_json(c.channel.superop.matrix())}});
  return list;
}

inline json bound_value_json(double v) { return std::isfinite(v) ? json(v) : json("infinity"); }

inline json report_to_json(const ClassicalityReport& r) {
  json j;
  j["t_start"] = r.t_start;
  j["t_end"] = r.t_end;
  j["map_available"] = r.map_available;
  if (!r.note.empty()) j["note"] = r.note;
  j["cp_defect"] = r.cp_defect;
  j["unitality_defect"] = r.unitality_defect;
  json ru{{"verdict", to_string(r.ru.verdict)}, {"witness", r.ru.witness}};
  if (r.ru.decomposition) {
    json terms = json::array();
    for (const auto& t : r.ru.decomposition->terms)
      terms.push_back({{"probability", t.probability}, {"unitary", matrix_to_json(t.unitary)}});
    ru["decomposition"] = terms;
    ru["residual"] = r.ru.decomposition->residual;
  }
  j["random_unitary"] = ru;
  json mp{{"verdict", to_string(r.mp.verdict)}, {"witness", r.mp.witness}};
  if (r.mp.certificate) {
    json terms = json::array();
    for (std::size_t k = 0; k < r.mp.certificate->povm.size(); ++k)
      terms.push_back({{"effect", matrix_to_json(r.mp.certificate->povm[k])},
                       {"state", matrix_to_json(r.mp.certificate->states[k])}});
    mp["certificate"] = terms;
    mp["residual"] = r.mp.certificate->residual;
  }
  j["measure_prepare"] = mp;
  j["upper_bound_distance"] = bound_value_json(r.upper_bound_distance);
  j["upper_bound_converged"] = r.upper_bound_converged;
  return j;
}

inline json classification_to_json(const TrajectoryClassification& c) {
  json j;
  j["environment_verdict"] = to_string(c.environment);
  j["system_verdict"] = to_string(c.system);
  json list = json::array();
  for (const auto& r : c.intervals) list.push_back(report_to_json(r));
  j["intervals"] = list;
  return j;
}

}  // namespace exlab
