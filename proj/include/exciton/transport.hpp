#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "exciton/dynamics.hpp"
#include "exciton/network.hpp"
#include "exciton/parallel.hpp"

namespace exlab {

struct SweepOptions {
  int samples = 101;    // time samples per trajectory (conservation checks)
  unsigned workers = 0; // 0: hardware concurrency
  double tie_tol = 1e-9;  // efficiencies this close to the max count as maximal; lowest gamma wins
  IntegratorOptions integrator{};
};

/// Conservation diagnostics aggregated over many trajectories.
struct ConservationSummary {
  double max_trace_error = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  bool sink_monotone = true;
  int trajectories = 0;

  void add(const TrajectoryResult& tr) {
    max_trace_error = std::max(max_trace_error, tr.max_trace_error);
    min_eigenvalue = std::min(min_eigenvalue, tr.min_eigenvalue);
    sink_monotone = sink_monotone && tr.sink_monotone();
    ++trajectories;
  }
  void merge(const ConservationSummary& o) {
    max_trace_error = std::max(max_trace_error, o.max_trace_error);
    min_eigenvalue = std::min(min_eigenvalue, o.min_eigenvalue);
    sink_monotone = sink_monotone && o.sink_monotone;
    trajectories += o.trajectories;
  }
  bool ok(double tol = 1e-8) const {
    return max_trace_error < tol && min_eigenvalue >= -tol && sink_monotone;
  }
};

struct SweepResult {
  std::vector<double> gamma_grid;
  std::vector<double> efficiency;  // p_sink(T)
  double T = 0.0;
  double argmax_gamma = 0.0;
  std::size_t argmax_index = 0;
  ConservationSummary conservation;

  double max_efficiency() const { return efficiency[argmax_index]; }
  bool interior_maximum() const { return argmax_index > 0 && argmax_index + 1 < efficiency.size(); }
};

/// p_sink(T) when the excitation starts on the network's initial site.
inline TrajectoryResult run_from_initial_site(const ExcitonNetwork& net, double T, int samples,
                                              const IntegratorOptions& opt = {}) {
  const auto model = assemble_generator(net);
  return evolve(model, model.site_state(net.initial_site()), linspace(0.0, T, std::max(samples, 2)), opt);
}

/// Uniform dephasing gamma on every site, one trajectory per grid point.
inline SweepResult efficiency_sweep(const ExcitonNetwork& net, const std::vector<double>& gamma_grid, double T,
                                    const SweepOptions& opt = {}) {
  if (gamma_grid.empty()) throw InvalidArgument("efficiency_sweep: empty gamma grid");
  if (!(T > 0.0)) throw InvalidArgument("efficiency_sweep: T must be positive");
  for (std::size_t k = 0; k < gamma_grid.size(); ++k) {
    if (!(gamma_grid[k] > 0.0)) throw InvalidArgument("efficiency_sweep: gamma grid must be positive");
    if (k > 0 && !(gamma_grid[k] > gamma_grid[k - 1])) throw InvalidArgument("efficiency_sweep: gamma grid must ascend");
  }
  auto runs = parallel_map(
      gamma_grid.size(),
      [&](std::size_t k) {
        try {
          return run_from_initial_site(net.with_uniform_dephasing(gamma_grid[k]), T, opt.samples, opt.integrator);
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " (gamma = " + format_double(gamma_grid[k]) + ")");
        }
      },
      opt.workers);
  SweepResult out;
  out.gamma_grid = gamma_grid;
  out.T = T;
  for (const auto& tr : runs) {
    out.efficiency.push_back(std::clamp(tr.sink_population.back(), 0.0, 1.0));
    out.conservation.add(tr);
  }
  const double best = *std::max_element(out.efficiency.begin(), out.efficiency.end());
  for (std::size_t k = 0; k < out.efficiency.size(); ++k) {
    if (out.efficiency[k] >= best - opt.tie_tol) {
      out.argmax_index = k;
      break;
    }
  }
  out.argmax_gamma = gamma_grid[out.argmax_index];
  return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
  os << "gamma,efficiency\n";
  for (std::size_t k = 0; k < s.gamma_grid.size(); ++k)
    os << format_double(s.gamma_grid[k]) << ',' << format_double(s.efficiency[k]) << '\n';
}

struct OptimalDephasing {
  double gamma = 0.0;
  double efficiency = 0.0;
  bool boundary = false;  // maximum sits on a bracket endpoint
  SweepResult coarse;
};

/// Coarse log-spaced sweep over the bracket, then golden-section search in
/// log(gamma) between the neighbours of the best grid point.
inline OptimalDephasing optimal_dephasing(const ExcitonNetwork& net, double T, double gamma_lo, double gamma_hi,
                                          int coarse_points = 40, double rel_tol = 1e-2, const SweepOptions& opt = {}) {
  if (!(gamma_lo > 0.0) || !(gamma_hi >= gamma_lo)) {
    throw InvalidArgument("optimal_dephasing: bracket must satisfy 0 < gamma_lo <= gamma_hi");
  }
  auto eff = [&](double g) {
    return std::clamp(run_from_initial_site(net.with_uniform_dephasing(g), T, 2, opt.integrator).sink_population.back(),
                      0.0, 1.0);
  };
  OptimalDephasing out;
  if (gamma_lo == gamma_hi) {
    out.gamma = gamma_lo;
    out.efficiency = eff(gamma_lo);
    return out;
  }
  out.coarse = efficiency_sweep(net, logspace(gamma_lo, gamma_hi, std::max(coarse_points, 3)), T, opt);
  const auto& g = out.coarse.gamma_grid;
  const std::size_t k = out.coarse.argmax_index;
  out.gamma = g[k];
  out.efficiency = out.coarse.efficiency[k];
  if (k == 0 || k + 1 == g.size()) {
    out.boundary = true;
    return out;
  }
  // golden section on u = log(gamma)
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = std::log(g[k - 1]), b = std::log(g[k + 1]);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = eff(std::exp(c)), fd = eff(std::exp(d));
  while (b - a > std::log1p(rel_tol)) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = eff(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = eff(std::exp(d));
    }
  }
  const double u = fc >= fd ? c : d;
  const double fu = std::max(fc, fd);
  if (fu > out.efficiency) {
    out.gamma = std::exp(u);
    out.efficiency = fu;
  }
  return out;
}

struct ScalingRow {
  int n;
  double p_sink;
};

struct ScalingStudy {
  std::vector<ScalingRow> rows;
  std::optional<double> fit_exponent;   // slope of log p vs log(N-1)
  std::optional<double> fit_prefactor;  // exp(intercept)
};

/// Coherent asymptotic sink population of fully connected networks (sink on
/// the last site, excitation on site 1), with a least-squares power-law fit.
inline ScalingStudy scaling_study(const std::vector<int>& n_list, double coupling, double sink_rate = 1.0,
                                  unsigned workers = 0) {
  for (int n : n_list)
    if (n < 3) throw InvalidArgument("scaling_study: every N must be >= 3, got " + std::to_string(n));
  const auto values = parallel_map(
      n_list.size(),
      [&](std::size_t k) {
        const int n = n_list[k];
        const auto model = assemble_generator(build_fully_connected(n, 0.0, coupling, n, sink_rate));
        return asymptotic_sink_population(model, model.site_state(1));
      },
      workers);
  ScalingStudy out;
  for (std::size_t k = 0; k < n_list.size(); ++k) out.rows.push_back({n_list[k], values[k]});
  if (out.rows.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(out.rows.size());
    for (const auto& r : out.rows) {
      const double x = std::log(r.n - 1.0), y = std::log(r.p_sink);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    out.fit_exponent = slope;
    out.fit_prefactor = std::exp((sy - slope * sx) / m);
  }
  return out;
}

inline void write_scaling_csv(std::ostream& os, const ScalingStudy& s) {
  os << "N,p_sink\n";
  for (const auto& r : s.rows) os << r.n << ',' << format_double(r.p_sink) << '\n';
  if (s.fit_exponent) os << "fit," << format_double(*s.fit_exponent) << '\n';
}

struct FmoConfig {
  std::string network_path;  // bundled data/fmo7.json when empty
  double T = 5.0;            // ps
  double sink_rate = 1.0;    // ps^-1
  std::optional<double> gamma;  // fixed uniform dephasing; optimized when absent
  double gamma_lo = 0.1;
  double gamma_hi = 1000.0;
  int sweep_points = 40;
  int samples = 501;
  bool zero_couplings = false;  // control run
  unsigned workers = 0;
};

struct FmoReport {
  ExcitonNetwork network;
  double coherent_efficiency = 0.0;
  double dephased_efficiency = 0.0;
  double gamma = 0.0;
  bool gamma_on_boundary = false;
  TrajectoryResult coherent;
  TrajectoryResult dephased;
  SweepResult sweep;
  HybridBasis hybrid;
  ConservationSummary conservation;
};

inline std::string bundled_fmo_path() { return std::string(EXCITON_SOURCE_DIR) + "/data/fmo7.json"; }

/// Coherent and dephasing-assisted transfer through the FMO network on the
/// same footing: same sink, same horizon, same initial site.
inline FmoReport fmo_experiment(const FmoConfig& cfg) {
  ExcitonNetwork net = build_fmo7(cfg.network_path.empty() ? bundled_fmo_path() : cfg.network_path);
  net = net.with_sink_rate(cfg.sink_rate).with_uniform_dephasing(0.0);
  if (cfg.zero_couplings) net = net.with_couplings(RMatrix::Zero(net.n_sites(), net.n_sites()));
  SweepOptions sopt;
  sopt.workers = cfg.workers;
  sopt.samples = std::min(cfg.samples, 51);

  FmoReport rep{net, 0, 0, 0, false, {}, {}, {}, hybrid_basis(net, 1, 2), {}};
  rep.coherent = run_from_initial_site(net, cfg.T, cfg.samples);
  rep.coherent_efficiency = rep.coherent.sink_population.back();
  rep.conservation.add(rep.coherent);

  const auto opt = optimal_dephasing(net, cfg.T, cfg.gamma_lo, cfg.gamma_hi, cfg.sweep_points, 1e-2, sopt);
  rep.sweep = opt.coarse;
  rep.conservation.merge(rep.sweep.conservation);
  rep.gamma = cfg.gamma ? *cfg.gamma : opt.gamma;
  rep.gamma_on_boundary = !cfg.gamma && opt.boundary;
  rep.dephased = run_from_initial_site(net.with_uniform_dephasing(rep.gamma), cfg.T, cfg.samples);
  rep.dephased_efficiency = rep.dephased.sink_population.back();
  rep.conservation.add(rep.dephased);
  return rep;
}

}  // namespace exlab
