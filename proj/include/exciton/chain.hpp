#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "exciton/core/density_matrix.hpp"
#include "exciton/core/format.hpp"

namespace exlab {

/// Nodes and weights of a finite positive measure.
struct DiscreteMeasure {
  RVector nodes;
  RVector weights;

  double total() const { return weights.sum(); }
  double moment(int k) const { return (weights.array() * nodes.array().pow(k)).sum(); }
};

/// Monic three-term recurrence pi_{k+1} = (x - alpha_k) pi_k - beta_k pi_{k-1};
/// beta(0) is the total mass.
struct Recurrence {
  RVector alpha;
  RVector beta;
};

/// Gauss rule with m nodes from the first m recurrence coefficients: nodes are
/// the Jacobi-matrix eigenvalues, weights the Christoffel numbers
/// beta_0 / sum_k p_k(x)^2 over the orthonormal polynomials.
inline DiscreteMeasure gauss_rule(const Recurrence& rec, int m) {
  if (m < 1 || rec.alpha.size() < m || rec.beta.size() < m) {
    throw InvalidArgument("gauss_rule: need m >= 1 and at least m recurrence coefficients");
  }
  RVector diag = rec.alpha.head(m);
  RVector sub = m > 1 ? RVector(rec.beta.segment(1, m - 1).cwiseSqrt()) : RVector(0);
  Eigen::SelfAdjointEigenSolver<RMatrix> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("gauss_rule: tridiagonal eigensolver failed");
  DiscreteMeasure g;
  g.nodes = es.eigenvalues();
  g.weights.resize(m);
  for (int i = 0; i < m; ++i) {
    const double x = g.nodes(i);
    double p_prev = 0.0, p = 1.0, sum = 1.0;
    for (int k = 0; k + 1 < m; ++k) {
      const double next = ((x - diag(k)) * p - (k > 0 ? sub(k - 1) : 0.0) * p_prev) / sub(k);
      p_prev = p;
      p = next;
      sum += p * p;
    }
    g.weights(i) = rec.beta(0) / sum;
  }
  return g;
}

/// Recurrence of the Jacobi weight (1-x)^a (1+x)^b on [-1, 1].
inline Recurrence jacobi_recurrence(int n, double a, double b) {
  Recurrence r{RVector(n), RVector(n)};
  const double ab = a + b;
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + ab;
    r.alpha(k) = k == 0 ? (b - a) / (ab + 2.0) : (b * b - a * a) / (s * (s + 2.0));
    if (k == 0) {
      r.beta(0) = std::exp((ab + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) + std::lgamma(b + 1.0) -
                           std::lgamma(ab + 2.0));
    } else if (k == 1) {
      r.beta(1) = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
    } else {
      r.beta(k) = 4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0));
    }
  }
  return r;
}

/// Discretized Stieltjes procedure: recurrence coefficients of the discrete
/// measure, computed with normalized polynomial vectors.
inline Recurrence stieltjes(const DiscreteMeasure& mu, int n) {
  const Eigen::Index k_nodes = mu.nodes.size();
  if (n < 1) throw InvalidArgument("stieltjes: n must be >= 1");
  if (k_nodes < n) {
    throw InvalidArgument("stieltjes: measure has " + std::to_string(k_nodes) + " nodes, need " + std::to_string(n));
  }
  Recurrence r{RVector(n), RVector(n)};
  const RVector sw = mu.weights.cwiseSqrt();
  const double mass = mu.weights.sum();
  const double floor = std::pow(64.0 * std::numeric_limits<double>::epsilon() * std::max(mu.nodes.cwiseAbs().maxCoeff(), 1e-300), 2);
  RVector prev = RVector::Zero(k_nodes);
  RVector cur = sw / std::sqrt(mass);
  r.beta(0) = mass;
  for (int k = 0; k < n; ++k) {
    const RVector xc = mu.nodes.cwiseProduct(cur);
    r.alpha(k) = cur.dot(xc);
    if (k + 1 == n) break;
    RVector next = xc - r.alpha(k) * cur - std::sqrt(k == 0 ? 0.0 : r.beta(k)) * prev;
    const double b = next.squaredNorm();
    if (!(b > floor) || !std::isfinite(b)) {
      throw NumericalError("stieltjes: beta lost positivity at n = " + std::to_string(k + 1) +
                           " (quadrature order too low)");
    }
    r.beta(k + 1) = b;
    prev = cur;
    cur = next / std::sqrt(b);
  }
  return r;
}

class SpectralDensity {
 public:
  enum class Kind { flat, power_law, tabulated };

  /// J(w) = height on [lo, hi].
  static SpectralDensity flat(double lo = 0.0, double hi = 1.0, double height = 1.0) {
    if (!(hi > lo) || !(height > 0.0)) throw InvalidArgument("flat spectral density: need lo < hi and height > 0");
    SpectralDensity j(Kind::flat, lo, hi);
    j.height_ = height;
    return j;
  }

  /// J(w) = prefactor * wc^(1-s) * w^s on [0, wc] (hard cutoff).
  static SpectralDensity power_law(double s, double cutoff, double prefactor = 1.0) {
    if (!(s > -1.0)) throw InvalidArgument("power-law spectral density: exponent must exceed -1");
    if (!(cutoff > 0.0) || !(prefactor > 0.0)) throw InvalidArgument("power-law spectral density: cutoff and prefactor must be positive");
    SpectralDensity j(Kind::power_law, 0.0, cutoff);
    j.exponent_ = s;
    j.height_ = prefactor;
    return j;
  }

  /// Piecewise-linear J through the samples.
  static SpectralDensity tabulated(std::vector<double> omega, std::vector<double> values) {
    if (omega.size() != values.size() || omega.size() < 2) {
      throw InvalidArgument("tabulated spectral density: need >= 2 (omega, J) pairs of equal length");
    }
    double area = 0.0;
    for (std::size_t k = 0; k < omega.size(); ++k) {
      if (!std::isfinite(omega[k]) || !std::isfinite(values[k])) {
        throw InvalidArgument("tabulated spectral density: non-finite sample at row " + std::to_string(k + 1));
      }
      if (values[k] < 0.0) throw InvalidArgument("tabulated spectral density: negative J at row " + std::to_string(k + 1));
      if (k > 0) {
        if (!(omega[k] > omega[k - 1])) throw InvalidArgument("tabulated spectral density: omega must ascend");
        area += 0.5 * (values[k] + values[k - 1]) * (omega[k] - omega[k - 1]);
      }
    }
    if (!(area > 0.0) || !std::isfinite(area)) throw InvalidArgument("tabulated spectral density: not integrable (zero or infinite weight)");
    SpectralDensity j(Kind::tabulated, omega.front(), omega.back());
    j.omega_ = std::move(omega);
    j.values_ = std::move(values);
    return j;
  }

  Kind kind() const { return kind_; }
  double support_min() const { return lo_; }
  double support_max() const { return hi_; }
  double exponent() const { return exponent_; }
  const std::vector<double>& samples_omega() const { return omega_; }
  const std::vector<double>& samples_value() const { return values_; }

  double operator()(double w) const {
    if (w < lo_ || w > hi_) return 0.0;
    switch (kind_) {
      case Kind::flat:
        return height_;
      case Kind::power_law:
        return height_ * std::pow(hi_, 1.0 - exponent_) * std::pow(w, exponent_);
      case Kind::tabulated: {
        auto it = std::upper_bound(omega_.begin(), omega_.end(), w);
        if (it == omega_.end()) return values_.back();
        const auto k = static_cast<std::size_t>(it - omega_.begin());
        const double f = (w - omega_[k - 1]) / (omega_[k] - omega_[k - 1]);
        return values_[k - 1] + f * (values_[k] - values_[k - 1]);
      }
    }
    return 0.0;
  }

  double total_weight() const {
    switch (kind_) {
      case Kind::flat:
        return height_ * (hi_ - lo_);
      case Kind::power_law:
        return height_ * hi_ * hi_ / (exponent_ + 1.0);
      case Kind::tabulated: {
        double a = 0.0;
        for (std::size_t k = 1; k < omega_.size(); ++k) a += 0.5 * (values_[k] + values_[k - 1]) * (omega_[k] - omega_[k - 1]);
        return a;
      }
    }
    return 0.0;
  }

  /// Quadrature of J(w)dw exact for polynomials of degree < 2*order
  /// (flat and power law) or per linear segment (tabulated).
  DiscreteMeasure quadrature(int order) const {
    if (order < 1) throw InvalidArgument("quadrature: order must be >= 1");
    if (kind_ != Kind::tabulated) {
      const double b = kind_ == Kind::flat ? 0.0 : exponent_;
      DiscreteMeasure g = gauss_rule(jacobi_recurrence(order, 0.0, b), order);
      const double half = 0.5 * (hi_ - lo_);
      g.nodes = (g.nodes.array() + 1.0) * half + lo_;
      // weights carry (1+x)^b; w^b = half^b (1+x)^b and dw = half dx
      const double scale = kind_ == Kind::flat ? height_ * half
                                               : height_ * std::pow(hi_, 1.0 - exponent_) * std::pow(half, b + 1.0);
      g.weights *= scale;
      return g;
    }
    // J is linear on each segment, so an (order+1)-point Gauss-Legendre rule per
    // segment integrates polynomials of degree <= 2*order - 1 times J exactly.
    const int q = order + 1;
    const DiscreteMeasure gl = gauss_rule(jacobi_recurrence(q, 0.0, 0.0), q);
    std::vector<double> x, w;
    for (std::size_t k = 1; k < omega_.size(); ++k) {
      const double a = omega_[k - 1], c = omega_[k];
      if (values_[k - 1] == 0.0 && values_[k] == 0.0) continue;
      for (int i = 0; i < q; ++i) {
        const double t = 0.5 * (gl.nodes(i) + 1.0);
        const double xi = a + (c - a) * t;
        const double ji = values_[k - 1] + t * (values_[k] - values_[k - 1]);
        if (ji <= 0.0) continue;
        x.push_back(xi);
        w.push_back(0.5 * (c - a) * gl.weights(i) * ji);
      }
    }
    DiscreteMeasure m;
    m.nodes = Eigen::Map<RVector>(x.data(), static_cast<Eigen::Index>(x.size()));
    m.weights = Eigen::Map<RVector>(w.data(), static_cast<Eigen::Index>(w.size()));
    return m;
  }

 private:
  SpectralDensity(Kind k, double lo, double hi) : kind_(k), lo_(lo), hi_(hi) {}
  Kind kind_;
  double lo_, hi_;
  double height_ = 1.0;
  double exponent_ = 0.0;
  std::vector<double> omega_, values_;
};

/// Two-column CSV (omega, J); a non-numeric first line is treated as a header.
inline SpectralDensity read_spectral_density_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open spectral density file: " + path);
  std::vector<double> w, j;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a, b;
    if (!(ss >> a >> b)) {
      if (w.empty() && row == 1) continue;
      throw InvalidArgument(path + ": malformed row " + std::to_string(row));
    }
    w.push_back(a);
    j.push_back(b);
  }
  return SpectralDensity::tabulated(std::move(w), std::move(j));
}

struct StarDiscretization {
  RVector mode_frequencies;
  RVector couplings;

  int count() const { return static_cast<int>(mode_frequencies.size()); }
};

/// Bath modes as chain sites: site n has frequency omega_n and hops to n+1 with
/// t_n; the system couples to site 0 with c0.
struct ChainCoefficients {
  double system_coupling = 0.0;
  RVector frequencies;
  RVector hoppings;

  int length() const { return static_cast<int>(frequencies.size()); }
};

/// m-point Gauss rule of J(w)dw; couplings are the square roots of the weights.
inline StarDiscretization discretize(const SpectralDensity& j, int m) {
  if (m < 1) throw InvalidArgument("discretize: m must be >= 1");
  const Recurrence rec = stieltjes(j.quadrature(4 * m), m);
  const DiscreteMeasure g = gauss_rule(rec, m);
  return {g.nodes, g.weights.cwiseSqrt()};
}

/// Chain coefficients from a 4x-oversampled quadrature of the measure.
inline ChainCoefficients chain_coefficients(const SpectralDensity& j, int n_max, int oversampling = 4) {
  if (n_max < 1) throw InvalidArgument("chain_coefficients: n_max must be >= 1");
  const Recurrence rec = stieltjes(j.quadrature(oversampling * (n_max + 1)), n_max + 1);
  ChainCoefficients c;
  c.system_coupling = std::sqrt(rec.beta(0));
  c.frequencies = rec.alpha.head(n_max);
  c.hoppings = rec.beta.segment(1, n_max).cwiseSqrt();
  return c;
}

/// Lanczos tridiagonalization of diag(w) seeded with g/|g|, with full
/// reorthogonalization. `basis`, when given, receives the orthonormal chain
/// modes as columns (star amplitudes of each chain site). An exactly invariant
/// subspace ends the chain early.
inline ChainCoefficients lanczos_chain(const StarDiscretization& star, RMatrix* basis = nullptr) {
  const int m = star.count();
  if (m < 1 || star.couplings.size() != m) throw InvalidArgument("lanczos_chain: need M >= 1 modes with one coupling each");
  const double gnorm = star.couplings.norm();
  if (!(gnorm > 0.0)) throw InvalidArgument("lanczos_chain: all couplings are zero");
  const double scale = std::max(star.mode_frequencies.cwiseAbs().maxCoeff(), 1.0);
  RMatrix q = RMatrix::Zero(m, m);
  std::vector<double> alpha, beta;
  q.col(0) = star.couplings / gnorm;
  int len = 0;
  for (int k = 0; k < m; ++k) {
    RVector r = star.mode_frequencies.cwiseProduct(q.col(k));
    alpha.push_back(q.col(k).dot(r));
    ++len;
    for (int pass = 0; pass < 2; ++pass) r -= q.leftCols(k + 1) * (q.leftCols(k + 1).transpose() * r);
    const double b = r.norm();
    beta.push_back(b);
    if (k + 1 == m || b <= 1e-13 * scale) break;
    q.col(k + 1) = r / b;
  }
  ChainCoefficients c;
  c.system_coupling = gnorm;
  c.frequencies = Eigen::Map<RVector>(alpha.data(), len);
  c.hoppings = Eigen::Map<RVector>(beta.data(), len);
  if (len == m) c.hoppings(len - 1) = 0.0;
  if (basis) *basis = q.leftCols(len);
  return c;
}

/// Single-particle chain Hamiltonian (first `length` sites).
inline RMatrix chain_matrix(const ChainCoefficients& c, int length = -1) {
  const int n = length < 0 ? c.length() : length;
  if (n > c.length()) throw DimensionError("chain_matrix: chain has only " + std::to_string(c.length()) + " sites");
  RMatrix t = RMatrix::Zero(n, n);
  t.diagonal() = c.frequencies.head(n);
  for (int k = 0; k + 1 < n; ++k) t(k, k + 1) = t(k + 1, k) = c.hoppings(k);
  return t;
}

inline void write_chain_csv(std::ostream& os, const ChainCoefficients& c) {
  os << "n,omega_n,t_n\n";
  for (int n = 0; n < c.length(); ++n) os << n << ',' << format_double(c.frequencies(n)) << ',' << format_double(c.hoppings(n)) << '\n';
}

// ---------------------------------------------------------------------------
// Exact propagation on a truncated Fock space

/// H_S = gap/2 sigma_z + tunneling/2 sigma_x in the basis (|0>, |1>); the bath
/// couples to the population of |1>.
struct TwoLevelSystem {
  double gap = 1.0;
  double tunneling = 0.5;
  CVector initial = (CVector(2) << cplx(std::sqrt(0.5)), cplx(std::sqrt(0.5))).finished();

  CMatrix hamiltonian() const {
    CMatrix h(2, 2);
    h << cplx(-0.5 * gap), cplx(0.5 * tunneling), cplx(0.5 * tunneling), cplx(0.5 * gap);
    return h;
  }
};

struct PropagationOptions {
  int dimension_cap = 4096;
  double leakage_tol = 1e-6;
};

struct StarChainComparison {
  std::vector<double> times;
  std::vector<CMatrix> star_states;   // reduced system states
  std::vector<CMatrix> chain_states;
  double max_trace_distance = 0.0;
  double max_leakage = 0.0;  // population of the highest kept excitation shell
  int hilbert_dim = 0;
};

namespace detail {

/// Occupation-number basis of `modes` bosons with total quanta <= k_max.
struct FockBasis {
  std::vector<std::vector<int>> states;
  std::map<std::vector<int>, int> index;

  FockBasis(int modes, int k_max) {
    std::vector<int> occ(static_cast<std::size_t>(modes), 0);
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == modes) {
        index.emplace(occ, static_cast<int>(states.size()));
        states.push_back(occ);
        return;
      }
      for (int n = 0; n <= left; ++n) {
        occ[static_cast<std::size_t>(pos)] = n;
        self(self, pos + 1, left - n);
      }
      occ[static_cast<std::size_t>(pos)] = 0;
    };
    rec(rec, 0, k_max);
  }
  int size() const { return static_cast<int>(states.size()); }
};

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// System (x) bath Hamiltonian: H_S (x) 1 + 1 (x) sum_ij h_ij a_i^dag a_j
/// + |1><1| (x) sum_i g_i (a_i + a_i^dag), truncated to total quanta <= k_max.
inline CMatrix spin_boson_hamiltonian(const CMatrix& hs, const RMatrix& h_modes, const RVector& g, const FockBasis& fb,
                                      int k_max) {
  const int nb = fb.size();
  const int modes = static_cast<int>(g.size());
  CMatrix h = CMatrix::Zero(2 * nb, 2 * nb);
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t)
      if (hs(s, t) != 0.0)
        for (int b = 0; b < nb; ++b) h(s * nb + b, t * nb + b) += hs(s, t);
  for (int b = 0; b < nb; ++b) {
    const auto& occ = fb.states[static_cast<std::size_t>(b)];
    int total = 0;
    for (int n : occ) total += n;
    for (int i = 0; i < modes; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      for (int j = 0; j < modes; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (h_modes(i, j) == 0.0) continue;
        if (i == j) {
          for (int s = 0; s < 2; ++s) h(s * nb + b, s * nb + b) += h_modes(i, i) * occ[ui];
          continue;
        }
        if (occ[uj] == 0) continue;
        auto out = occ;  // a_i^dag a_j |occ>
        out[uj] -= 1;
        out[ui] += 1;
        const int c = fb.index.at(out);
        const double amp = h_modes(i, j) * std::sqrt(static_cast<double>(occ[uj]) * (occ[ui] + 1));
        for (int s = 0; s < 2; ++s) h(s * nb + c, s * nb + b) += amp;
      }
      if (g(i) != 0.0 && total < k_max) {
        auto out = occ;  // a_i^dag |occ>
        out[ui] += 1;
        const int c = fb.index.at(out);
        const double amp = g(i) * std::sqrt(static_cast<double>(occ[ui]) + 1.0);
        h(nb + c, nb + b) += amp;
        h(nb + b, nb + c) += amp;
      }
    }
  }
  return h;
}

struct PureTrajectory {
  std::vector<CMatrix> reduced;
  double leakage = 0.0;
};

inline PureTrajectory propagate_pure(const CMatrix& h, const CVector& psi0, const std::vector<double>& times,
                                     const FockBasis& fb, int k_max) {
  const int nb = fb.size();
  std::vector<int> top;
  for (int b = 0; b < nb; ++b) {
    int total = 0;
    for (int n : fb.states[static_cast<std::size_t>(b)]) total += n;
    if (total == k_max) top.push_back(b);
  }
  PureTrajectory out;
  CVector psi = psi0;
  double t_prev = 0.0, dt_cached = -1.0;
  CMatrix u;
  for (double t : times) {
    const double dt = t - t_prev;
    if (dt != 0.0) {
      if (std::abs(dt - dt_cached) > 1e-14 * std::max(std::abs(dt), 1.0)) {
        u = (CMatrix(-kI * dt * h)).exp();
        dt_cached = dt;
      }
      psi = u * psi;
    }
    t_prev = t;
    const CMatrix amps = Eigen::Map<const CMatrix>(psi.data(), nb, 2).transpose();  // rows: system index
    out.reduced.push_back(amps * amps.adjoint());
    double leak = 0.0;
    for (int b : top) leak += std::norm(psi(b)) + std::norm(psi(nb + b));
    out.leakage = std::max(out.leakage, leak);
  }
  return out;
}

}  // namespace detail

/// Propagates system (x) vacuum exactly in the star picture and in the chain
/// picture obtained by Lanczos, on the Fock space with at most n_fock - 1
/// total bath quanta, and compares the reduced system states.
inline StarChainComparison propagate_star_vs_chain(const TwoLevelSystem& sys, const StarDiscretization& star, int n_fock,
                                                   const std::vector<double>& t_grid,
                                                   const PropagationOptions& opt = {}) {
  const int m = star.count();
  if (m < 1) throw InvalidArgument("propagate_star_vs_chain: need at least one bath mode");
  if (n_fock < 2) throw InvalidArgument("propagate_star_vs_chain: n_fock must be >= 2");
  if (sys.initial.size() != 2 || std::abs(sys.initial.norm() - 1.0) > 1e-12) {
    throw InvalidArgument("propagate_star_vs_chain: initial system state must be a normalized 2-vector");
  }
  if (t_grid.empty() || t_grid.front() < 0.0 || !std::is_sorted(t_grid.begin(), t_grid.end())) {
    throw InvalidArgument("propagate_star_vs_chain: time grid must be non-empty, non-negative and ascending");
  }
  const int k_max = n_fock - 1;
  const double dim = 2.0 * detail::binomial(m + k_max, k_max);
  if (dim > opt.dimension_cap) {
    throw DimensionError("propagate_star_vs_chain: truncated space has dimension " + format_double(dim) +
                         " above cap " + std::to_string(opt.dimension_cap));
  }
  const detail::FockBasis fb(m, k_max);
  const int nb = fb.size();

  RMatrix h_star = star.mode_frequencies.asDiagonal();
  const CMatrix hs = sys.hamiltonian();

  CVector psi0 = CVector::Zero(2 * nb);
  psi0(0) = sys.initial(0);  // vacuum is basis state 0
  psi0(nb) = sys.initial(1);

  StarChainComparison res;
  res.times = t_grid;
  res.hilbert_dim = 2 * nb;
  const auto star_run = detail::propagate_pure(detail::spin_boson_hamiltonian(hs, h_star, star.couplings, fb, k_max),
                                               psi0, t_grid, fb, k_max);
  res.star_states = star_run.reduced;

  detail::PureTrajectory chain_run;
  if (star.couplings.isZero(0.0)) {
    chain_run = star_run;  // no chain: the bath decouples
  } else {
    const ChainCoefficients c = lanczos_chain(star);
    const int len = c.length();
    const detail::FockBasis fc(len, k_max);
    RVector g0 = RVector::Zero(len);
    g0(0) = c.system_coupling;
    CVector p0 = CVector::Zero(2 * fc.size());
    p0(0) = sys.initial(0);
    p0(fc.size()) = sys.initial(1);
    chain_run = detail::propagate_pure(detail::spin_boson_hamiltonian(hs, chain_matrix(c), g0, fc, k_max), p0, t_grid,
                                       fc, k_max);
  }
  res.chain_states = chain_run.reduced;
  res.max_leakage = std::max(star_run.leakage, chain_run.leakage);
  if (res.max_leakage > opt.leakage_tol) {
    throw NumericalError("propagate_star_vs_chain: Fock truncation leakage " + format_double(res.max_leakage) +
                         " exceeds " + format_double(opt.leakage_tol) + "; raise n_fock");
  }
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    res.max_trace_distance = std::max(res.max_trace_distance, trace_distance(res.star_states[k], res.chain_states[k]));
  }
  return res;
}

}  // namespace exlab
