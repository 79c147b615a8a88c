#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "exciton/core/channel_repr.hpp"
#include "exciton/core/density_matrix.hpp"
#include "exciton/core/format.hpp"
#include "exciton/network.hpp"

namespace exlab {

struct JumpOperator {
  CMatrix op;
  double rate;
  std::string label;
};

/// Generator matrix of L rho = -i[H, rho] + sum_k r_k D[A_k] rho on
/// column-stacked vectors, any dimension.
inline Superoperator lindblad_superoperator(const CMatrix& h, const std::vector<JumpOperator>& jumps) {
  const auto d = h.rows();
  if (h.cols() != d || d == 0) throw DimensionError("lindblad_superoperator: Hamiltonian must be square");
  const CMatrix id = CMatrix::Identity(d, d);
  CMatrix l = -kI * (kron(id, h) - kron(h.transpose(), id));
  for (const auto& j : jumps) {
    if (j.op.rows() != d || j.op.cols() != d) throw DimensionError("lindblad_superoperator: jump operator shape");
    if (!(j.rate >= 0.0)) throw InvalidArgument("lindblad_superoperator: negative rate");
    if (j.rate == 0.0) continue;
    const CMatrix ada = j.op.adjoint() * j.op;
    l += j.rate * (kron(j.op.conjugate(), j.op) - 0.5 * kron(id, ada) - 0.5 * kron(ada.transpose(), id));
  }
  return Superoperator(std::move(l));
}

/// Lindblad generator on the (N+2)-level space |0> (ground), |1>..|N>
/// (sites), |N+1> (sink):
///
///   L rho = -i[H, rho] + sum_k r_k (A_k rho A_k^+ - 1/2 {A_k^+ A_k, rho})
///
/// with dephasing A = |j><j| (rate gamma_j), dissipation A = |0><j|
/// (kappa_j) and trapping A = |S><s| (Gamma). A dephasing pair gamma_j,
/// gamma_k damps the coherence rho_jk as exp(-(gamma_j + gamma_k) t / 2).
class LindbladModel {
 public:
  LindbladModel(CMatrix hamiltonian, std::vector<JumpOperator> jumps, int n_sites)
      : h_(std::move(hamiltonian)), jumps_(std::move(jumps)), n_sites_(n_sites) {
    const auto d = h_.rows();
    if (h_.cols() != d || d != n_sites + 2) throw DimensionError("LindbladModel: Hamiltonian must be (N+2)x(N+2)");
    if (!is_hermitian(h_, 1e-12 * std::max(1.0, max_abs(h_)))) throw InvalidArgument("LindbladModel: Hamiltonian not Hermitian");
    generator_ = lindblad_superoperator(h_, jumps_);
  }

  int hilbert_dim() const { return static_cast<int>(h_.rows()); }
  int n_sites() const { return n_sites_; }
  int ground_index() const { return 0; }
  int sink_index() const { return n_sites_ + 1; }
  const CMatrix& hamiltonian() const { return h_; }
  const std::vector<JumpOperator>& jump_operators() const { return jumps_; }
  const Superoperator& generator() const { return generator_; }

  CMatrix apply(const CMatrix& rho) const { return generator_.apply(rho); }

  double min_nonzero_rate() const {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& j : jumps_)
      if (j.rate > 0.0) r = std::min(r, j.rate);
    return r;
  }

  /// State with the excitation on site `site` (1-based).
  DensityMatrix site_state(int site) const {
    if (site < 1 || site > n_sites_) throw DimensionError("site_state: index out of range");
    return DensityMatrix::basis_state(hilbert_dim(), site);
  }

 private:
  CMatrix h_;
  std::vector<JumpOperator> jumps_;
  Superoperator generator_;
  int n_sites_;
};

inline LindbladModel assemble_generator(const ExcitonNetwork& net) {
  const int n = net.n_sites();
  const int d = n + 2;
  CMatrix h = CMatrix::Zero(d, d);
  h.block(1, 1, n, n) = net.angular_hamiltonian().cast<cplx>();
  std::vector<JumpOperator> jumps;
  for (int j = 1; j <= n; ++j) {
    if (net.dephasing_rates()(j - 1) > 0.0) {
      CMatrix a = CMatrix::Zero(d, d);
      a(j, j) = 1.0;
      jumps.push_back({a, net.dephasing_rates()(j - 1), "dephasing_" + std::to_string(j)});
    }
  }
  for (int j = 1; j <= n; ++j) {
    if (net.dissipation_rates()(j - 1) > 0.0) {
      CMatrix a = CMatrix::Zero(d, d);
      a(0, j) = 1.0;
      jumps.push_back({a, net.dissipation_rates()(j - 1), "dissipation_" + std::to_string(j)});
    }
  }
  if (net.sink_rate() > 0.0) {
    CMatrix a = CMatrix::Zero(d, d);
    a(n + 1, net.sink_site()) = 1.0;
    jumps.push_back({a, net.sink_rate(), "sink"});
  }
  return LindbladModel(std::move(h), std::move(jumps), n);
}

/// Step control of the embedded Runge-Kutta integrator. The mixed
/// error norm max_i |err_i| / (atol + rtol |y_i|) must stay below one.
struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0: pick from the generator norm
  double min_step_fraction = 1e-14;
  long max_steps = 50'000'000;
};

struct TrajectoryResult {
  std::vector<double> times;
  RMatrix site_populations;  // N x T
  std::vector<double> sink_population;
  std::vector<double> ground_population;
  std::vector<double> coherence_l1;
  // diagnostics
  double max_trace_error = 0.0;
  double min_eigenvalue = 0.0;
  long steps_accepted = 0;
  long steps_rejected = 0;
  CMatrix final_state;

  int n_sites() const { return static_cast<int>(site_populations.rows()); }
  bool sink_monotone(double tol = 1e-12) const {
    for (std::size_t k = 1; k < sink_population.size(); ++k)
      if (sink_population[k] < sink_population[k - 1] - tol) return false;
    return true;
  }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  // continuous extension (Hairer, Norsett & Wanner)
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

inline double min_eigenvalue_hermitian(const CMatrix& rho) {
  return hermitian_eigenvalues(0.5 * (rho + rho.adjoint())).minCoeff();
}

}  // namespace detail

/// Integrates the master equation from t = 0 and samples the state at each
/// grid time through the integrator's dense output.
inline TrajectoryResult evolve(const LindbladModel& model, const DensityMatrix& rho0, const std::vector<double>& t_grid,
                               const IntegratorOptions& opt = {}) {
  using D = detail::Dopri5;
  const int d = model.hilbert_dim();
  const int n = model.n_sites();
  if (rho0.dim() != d) throw DimensionError("evolve: initial state has dimension " + std::to_string(rho0.dim()));
  if (t_grid.empty()) throw InvalidArgument("evolve: empty time grid");
  if (t_grid.front() < 0.0) throw InvalidArgument("evolve: time grid must start at t >= 0");
  for (std::size_t k = 1; k < t_grid.size(); ++k)
    if (!(t_grid[k] > t_grid[k - 1])) throw InvalidArgument("evolve: time grid must be strictly increasing");

  const CMatrix& l = model.generator().matrix();
  auto f = [&](const CVector& y) -> CVector { return l * y; };

  TrajectoryResult res;
  const auto nt = static_cast<Eigen::Index>(t_grid.size());
  res.times = t_grid;
  res.site_populations = RMatrix::Zero(n, nt);
  res.sink_population.resize(t_grid.size());
  res.ground_population.resize(t_grid.size());
  res.coherence_l1.resize(t_grid.size());
  res.min_eigenvalue = std::numeric_limits<double>::infinity();

  auto record = [&](Eigen::Index k, const CVector& y) {
    const CMatrix rho = unvec(y, d);
    for (int j = 0; j < n; ++j) res.site_populations(j, k) = rho(j + 1, j + 1).real();
    res.sink_population[static_cast<std::size_t>(k)] = rho(n + 1, n + 1).real();
    res.ground_population[static_cast<std::size_t>(k)] = rho(0, 0).real();
    double coh = 0.0;
    for (int a = 1; a <= n; ++a)
      for (int b = 1; b <= n; ++b)
        if (a != b) coh += std::abs(rho(a, b));
    res.coherence_l1[static_cast<std::size_t>(k)] = coh;
    res.max_trace_error = std::max(res.max_trace_error, std::abs(rho.trace().real() - 1.0));
    res.min_eigenvalue = std::min(res.min_eigenvalue, detail::min_eigenvalue_hermitian(rho));
  };

  CVector y = vec(rho0.matrix());
  double t = 0.0;
  Eigen::Index next = 0;
  while (next < nt && t_grid[static_cast<std::size_t>(next)] <= 0.0) record(next++, y);
  if (next == nt) {
    res.final_state = unvec(y, d);
    return res;
  }

  const double t_end = t_grid.back();
  const double lnorm = std::max(l.cwiseAbs().colwise().sum().maxCoeff(), 1e-300);
  double h = opt.initial_step > 0.0 ? opt.initial_step : std::min(0.01 / lnorm, t_end);
  CVector k1 = f(y), k2, k3, k4, k5, k6, k7;
  CVector ynew, err;
  double prev_err = 1e-4;

  while (next < nt) {
    if (res.steps_accepted + res.steps_rejected > opt.max_steps) {
      throw NumericalError("evolve: step budget exhausted at t = " + format_double(t));
    }
    if (h < opt.min_step_fraction * std::max(1.0, std::abs(t))) {
      throw NumericalError("evolve: step-size underflow at t = " + format_double(t));
    }
    if (t + h > t_end) h = t_end - t;

    k2 = f(y + h * (D::a21 * k1));
    k3 = f(y + h * (D::a31 * k1 + D::a32 * k2));
    k4 = f(y + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
    k5 = f(y + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
    k6 = f(y + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5));
    ynew = y + h * (D::a71 * k1 + D::a73 * k3 + D::a74 * k4 + D::a75 * k5 + D::a76 * k6);
    k7 = f(ynew);
    err = h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);

    double en = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
      en = std::max(en, std::abs(err(i)) / sc);
    }

    if (en <= 1.0) {
      const double t_new = t + h;
      // dense output on [t, t_new]
      if (t_grid[static_cast<std::size_t>(next)] <= t_new) {
        const CVector ydiff = ynew - y;
        const CVector bspl = h * k1 - ydiff;
        const CVector r4 = ydiff - h * k7 - bspl;
        const CVector r5 = h * (D::d1 * k1 + D::d3 * k3 + D::d4 * k4 + D::d5 * k5 + D::d6 * k6 + D::d7 * k7);
        while (next < nt && t_grid[static_cast<std::size_t>(next)] <= t_new) {
          const double th = (t_grid[static_cast<std::size_t>(next)] - t) / h;
          const double th1 = 1.0 - th;
          const CVector yi = y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)));
          record(next++, yi);
        }
      }
      t = t_new;
      y = ynew;
      k1 = k7;
      ++res.steps_accepted;
      // PI step control
      const double fac = en == 0.0 ? 5.0 : 0.9 * std::pow(en, -0.7 / 5.0) * std::pow(prev_err, 0.4 / 5.0);
      h *= std::clamp(fac, 0.2, 5.0);
      prev_err = std::max(en, 1e-4);
    } else {
      ++res.steps_rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  res.final_state = unvec(y, d);
  return res;
}

inline std::vector<double> linspace(double a, double b, int count) {
  std::vector<double> out(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = count == 1 ? a : a + (b - a) * k / (count - 1);
  return out;
}

inline std::vector<double> logspace(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw InvalidArgument("logspace: need 0 < lo <= hi and count >= 1");
  std::vector<double> out(static_cast<std::size_t>(count));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int k = 0; k < count; ++k)
    out[static_cast<std::size_t>(k)] = count == 1 ? lo : std::pow(10.0, a + (b - a) * k / (count - 1));
  return out;
}

struct AsymptoticOptions {
  double tol = 1e-9;          // agreement of successive extrapolated estimates
  double max_uncertainty = 1e-6;
  double first_shift = 1e-2;  // initial resolvent shift, relative to the smallest rate
  bool cross_validate = false;
  double cross_tol = 1e-4;
};

struct AsymptoticResult {
  double value = 0.0;             // null-space projection
  double uncertainty = 0.0;       // spread of the last two extrapolants
  double long_time_value = -1.0;  // long-time integration, when cross-validated
  double shift = 0.0;             // resolvent shift at convergence
};

/// Sink population from integration out to T = 50 / min(nonzero rates),
/// doubling the horizon (up to `max_doublings` times) until two successive
/// horizons agree to `tol`.
inline double long_time_sink_population(const LindbladModel& model, const DensityMatrix& rho0,
                                        const IntegratorOptions& opt = {}, int max_doublings = 4,
                                        double tol = 1e-6) {
  const double rmin = model.min_nonzero_rate();
  if (!std::isfinite(rmin)) throw InvalidArgument("long_time_sink_population: model has no loss channel");
  std::vector<double> grid{0.0};
  for (int k = 0; k <= max_doublings; ++k) grid.push_back(50.0 / rmin * std::pow(2.0, k));
  const TrajectoryResult tr = evolve(model, rho0, grid, opt);
  for (std::size_t k = 2; k < grid.size(); ++k)
    if (std::abs(tr.sink_population[k] - tr.sink_population[k - 1]) < tol) return tr.sink_population[k];
  return tr.sink_population.back();
}

/// Asymptotic sink population as the sink weight of the projection of rho0
/// onto the null space of the generator, P0 = lim_{e->0} e (e - L)^{-1}.
///
/// The Abel limit discards the undamped oscillating coherences that dark
/// subspaces carry and keeps the stationary part. Each shift e is solved
/// directly; successive shifts (factor 10 apart) are Richardson-extrapolated
/// and the iteration stops once two extrapolants agree.
inline AsymptoticResult asymptotic_sink_population_detailed(const LindbladModel& model, const DensityMatrix& rho0,
                                                            const AsymptoticOptions& opt = {}) {
  const int d = model.hilbert_dim();
  if (rho0.dim() != d) throw DimensionError("asymptotic_sink_population: state dimension mismatch");
  bool has_sink = false;
  for (const auto& j : model.jump_operators())
    if (j.label == "sink" && j.rate > 0.0) has_sink = true;
  if (!has_sink) throw InvalidArgument("asymptotic_sink_population: sink_rate must be positive");

  const CMatrix& l = model.generator().matrix();
  const double lnorm = std::max(l.cwiseAbs().colwise().sum().maxCoeff(), 1e-300);
  const CVector r0 = vec(rho0.matrix());
  const Eigen::Index sink = model.sink_index() + static_cast<Eigen::Index>(model.sink_index()) * d;
  const CMatrix id = CMatrix::Identity(l.rows(), l.cols());

  auto abel = [&](double shift) {
    const CVector x = Eigen::FullPivLU<CMatrix>(shift * id - l).solve(r0);
    return shift * x(sink).real();
  };

  // f(e) = f0 + a e + b e^2 + ...: two Richardson levels at ratio 10 leave O(e^3)
  AsymptoticResult out;
  double shift = opt.first_shift * model.min_nonzero_rate();
  double f_prev = abel(shift);
  double r1_prev = std::numeric_limits<double>::quiet_NaN();
  double r2_prev = std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::quiet_NaN();
  double best_spread = std::numeric_limits<double>::infinity();
  double best_shift = shift;
  while (shift / 10.0 >= 1e-12 * lnorm) {
    shift /= 10.0;
    const double f = abel(shift);
    const double r1 = (10.0 * f - f_prev) / 9.0;
    const double r2 = (100.0 * r1 - r1_prev) / 99.0;
    const double spread = std::abs(r2 - r2_prev);
    f_prev = f;
    r1_prev = r1;
    r2_prev = r2;
    if (spread < best_spread) {
      best_spread = spread;
      best = r2;
      best_shift = shift;
    }
    if (spread <= opt.tol) break;
  }
  if (!(best_spread <= opt.max_uncertainty)) {
    throw NumericalError("asymptotic_sink_population: null-space iteration did not converge (spread " +
                         format_double(best_spread) + ")");
  }
  out.value = std::clamp(best, 0.0, 1.0);
  out.uncertainty = best_spread;
  shift = best_shift;
  out.shift = shift;
  if (opt.cross_validate) {
    out.long_time_value = long_time_sink_population(model, rho0);
    if (std::abs(out.long_time_value - out.value) > opt.cross_tol) {
      throw NumericalError("asymptotic_sink_population: null-space value " + format_double(out.value) +
                           " disagrees with long-time integration " + format_double(out.long_time_value));
    }
  }
  return out;
}

inline double asymptotic_sink_population(const LindbladModel& model, const DensityMatrix& rho0) {
  return asymptotic_sink_population_detailed(model, rho0).value;
}

/// CSV columns: time_ps, p_site_1..N, p_sink, p_ground, coherence_l1.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryResult& tr) {
  os << "time_ps";
  for (int j = 1; j <= tr.n_sites(); ++j) os << ",p_site_" << j;
  os << ",p_sink,p_ground,coherence_l1\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    os << format_double(tr.times[k]);
    for (int j = 0; j < tr.n_sites(); ++j) os << ',' << format_double(tr.site_populations(j, static_cast<Eigen::Index>(k)));
    os << ',' << format_double(tr.sink_population[k]) << ',' << format_double(tr.ground_population[k]) << ','
       << format_double(tr.coherence_l1[k]) << '\n';
  }
}

}  // namespace exlab
