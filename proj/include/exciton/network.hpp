#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "exciton/core/json_io.hpp"
#include "exciton/core/linalg.hpp"

namespace exlab {

/// Angular frequency (rad/ps) of one wavenumber: 2*pi*c with c in cm/ps.
inline constexpr double kCm1ToRadPerPs = 2.0 * 3.14159265358979323846 * 0.0299792458;

/// Raw fields of a single-excitation network. Site indices are 1-based.
struct NetworkParams {
  RVector site_energies;
  RMatrix couplings;
  RVector dephasing_rates;    // defaults to zeros when empty
  RVector dissipation_rates;  // defaults to zeros when empty
  int sink_site = 1;
  double sink_rate = 0.0;
  int initial_site = 1;
  /// Multiplies energies to obtain angular frequencies in the time unit of
  /// the rates. 1 for natural units, kCm1ToRadPerPs for cm^-1 with ps.
  double energy_to_angular = 1.0;
};

/// N-site network: on-site energies, symmetric coherent couplings, local
/// noise rates, and one site irreversibly drained into a sink.
class ExcitonNetwork {
 public:
  explicit ExcitonNetwork(NetworkParams p) : p_(std::move(p)) {
    const auto n = p_.site_energies.size();
    if (n < 1) throw InvalidArgument("network: at least one site required");
    if (p_.couplings.rows() != n || p_.couplings.cols() != n) {
      throw DimensionError("network: couplings must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    if (p_.dephasing_rates.size() == 0) p_.dephasing_rates = RVector::Zero(n);
    if (p_.dissipation_rates.size() == 0) p_.dissipation_rates = RVector::Zero(n);
    if (p_.dephasing_rates.size() != n || p_.dissipation_rates.size() != n) {
      throw DimensionError("network: rate vectors must have one entry per site");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p_.couplings(i, i) != 0.0) throw InvalidArgument("network: coupling diagonal must be zero");
      for (Eigen::Index j = 0; j < i; ++j) {
        if (p_.couplings(i, j) != p_.couplings(j, i)) throw InvalidArgument("network: couplings not symmetric");
      }
      if (!(p_.dephasing_rates(i) >= 0.0) || !(p_.dissipation_rates(i) >= 0.0)) {
        throw InvalidArgument("network: rates must be non-negative");
      }
    }
    if (p_.sink_site < 1 || p_.sink_site > n) throw InvalidArgument("network: sink_site out of range");
    if (p_.initial_site < 1 || p_.initial_site > n) throw InvalidArgument("network: initial_site out of range");
    if (!(p_.sink_rate >= 0.0)) throw InvalidArgument("network: sink_rate must be non-negative");
    if (!(p_.energy_to_angular > 0.0)) throw InvalidArgument("network: energy_to_angular must be positive");
  }

  int n_sites() const { return static_cast<int>(p_.site_energies.size()); }
  const RVector& site_energies() const { return p_.site_energies; }
  const RMatrix& couplings() const { return p_.couplings; }
  const RVector& dephasing_rates() const { return p_.dephasing_rates; }
  const RVector& dissipation_rates() const { return p_.dissipation_rates; }
  int sink_site() const { return p_.sink_site; }
  double sink_rate() const { return p_.sink_rate; }
  int initial_site() const { return p_.initial_site; }
  double energy_to_angular() const { return p_.energy_to_angular; }
  const NetworkParams& params() const { return p_; }

  /// Site-basis Hamiltonian in file energy units.
  RMatrix hamiltonian() const {
    RMatrix h = p_.couplings;
    h.diagonal() = p_.site_energies;
    return h;
  }
  /// Site-basis Hamiltonian as angular frequencies.
  RMatrix angular_hamiltonian() const { return hamiltonian() * p_.energy_to_angular; }

  ExcitonNetwork with_dephasing(const RVector& rates) const {
    NetworkParams q = p_;
    q.dephasing_rates = rates;
    return ExcitonNetwork(std::move(q));
  }
  ExcitonNetwork with_uniform_dephasing(double gamma) const {
    return with_dephasing(RVector::Constant(n_sites(), gamma));
  }
  ExcitonNetwork with_dissipation(const RVector& rates) const {
    NetworkParams q = p_;
    q.dissipation_rates = rates;
    return ExcitonNetwork(std::move(q));
  }
  ExcitonNetwork with_sink_rate(double rate) const {
    NetworkParams q = p_;
    q.sink_rate = rate;
    return ExcitonNetwork(std::move(q));
  }
  ExcitonNetwork with_site_energies(const RVector& e) const {
    if (e.size() != n_sites()) throw DimensionError("network: energy vector length mismatch");
    NetworkParams q = p_;
    q.site_energies = e;
    return ExcitonNetwork(std::move(q));
  }
  ExcitonNetwork with_couplings(const RMatrix& c) const {
    NetworkParams q = p_;
    q.couplings = c;
    return ExcitonNetwork(std::move(q));
  }

  friend bool operator==(const ExcitonNetwork& a, const ExcitonNetwork& b) {
    const auto& x = a.p_;
    const auto& y = b.p_;
    return x.site_energies == y.site_energies && x.couplings == y.couplings &&
           x.dephasing_rates == y.dephasing_rates && x.dissipation_rates == y.dissipation_rates &&
           x.sink_site == y.sink_site && x.sink_rate == y.sink_rate && x.initial_site == y.initial_site &&
           x.energy_to_angular == y.energy_to_angular;
  }

 private:
  NetworkParams p_;
};

/// Every site at the same energy, every pair coupled with strength J.
inline ExcitonNetwork build_fully_connected(int n, double energy, double coupling, int sink_site,
                                            double sink_rate = 1.0) {
  if (n < 2) throw InvalidArgument("build_fully_connected: need n >= 2, got " + std::to_string(n));
  if (coupling == 0.0) throw InvalidArgument("build_fully_connected: coupling must be nonzero");
  NetworkParams p;
  p.site_energies = RVector::Constant(n, energy);
  p.couplings = RMatrix::Constant(n, n, coupling);
  p.couplings.diagonal().setZero();
  p.sink_site = sink_site;
  p.sink_rate = sink_rate;
  return ExcitonNetwork(std::move(p));
}

// ---------------------------------------------------------------------------
// JSON
//
// {n_sites, energies_cm1[], couplings_cm1[][], dephasing_rates[],
//  dissipation_rates[], sink_site, sink_rate, initial_site}
// plus an optional "energy_to_angular" for networks not given in cm^-1.

inline json network_to_json(const ExcitonNetwork& net) {
  json j;
  j["n_sites"] = net.n_sites();
  j["energies_cm1"] = real_vector_to_json(net.site_energies());
  json rows = json::array();
  for (int i = 0; i < net.n_sites(); ++i) rows.push_back(real_vector_to_json(net.couplings().row(i).transpose()));
  j["couplings_cm1"] = rows;
  j["dephasing_rates"] = real_vector_to_json(net.dephasing_rates());
  j["dissipation_rates"] = real_vector_to_json(net.dissipation_rates());
  j["sink_site"] = net.sink_site();
  j["sink_rate"] = net.sink_rate();
  j["initial_site"] = net.initial_site();
  if (net.energy_to_angular() != kCm1ToRadPerPs) j["energy_to_angular"] = net.energy_to_angular();
  return j;
}

inline ExcitonNetwork network_from_json(const json& j) {
  auto require = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw InvalidArgument(std::string("network json: missing field '") + key + "'");
    return j.at(key);
  };
  if (!j.is_object()) throw InvalidArgument("network json: expected an object");
  const int n = require("n_sites").get<int>();
  NetworkParams p;
  p.site_energies = real_vector_from_json(require("energies_cm1"));
  if (p.site_energies.size() != n) {
    throw InvalidArgument("network json: n_sites = " + std::to_string(n) + " but " +
                          std::to_string(p.site_energies.size()) + " energies given");
  }
  const json& c = require("couplings_cm1");
  if (!c.is_array() || static_cast<int>(c.size()) != n) {
    throw InvalidArgument("network json: couplings_cm1 must have " + std::to_string(n) + " rows");
  }
  p.couplings = RMatrix(n, n);
  for (int i = 0; i < n; ++i) {
    const RVector row = real_vector_from_json(c[static_cast<std::size_t>(i)]);
    if (row.size() != n) throw InvalidArgument("network json: couplings_cm1 row " + std::to_string(i + 1) + " has wrong length");
    p.couplings.row(i) = row.transpose();
  }
  if (j.contains("dephasing_rates")) p.dephasing_rates = real_vector_from_json(j["dephasing_rates"]);
  if (j.contains("dissipation_rates")) p.dissipation_rates = real_vector_from_json(j["dissipation_rates"]);
  p.sink_site = require("sink_site").get<int>();
  p.sink_rate = j.value("sink_rate", 0.0);
  p.initial_site = j.value("initial_site", 1);
  p.energy_to_angular = j.value("energy_to_angular", kCm1ToRadPerPs);
  return ExcitonNetwork(std::move(p));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("'" + path + "': " + e.what());
  }
}

/// Seven-pigment FMO monomer read from a network JSON file. The file must
/// describe 7 sites with 21 independent couplings (cm^-1).
inline ExcitonNetwork build_fmo7(const std::string& path) {
  ExcitonNetwork net = [&] {
    try {
      return network_from_json(read_json_file(path));
    } catch (const json::exception& e) {
      throw InvalidArgument("build_fmo7: malformed '" + path + "': " + e.what());
    }
  }();
  if (net.n_sites() != 7) {
    throw InvalidArgument("build_fmo7: expected 7 sites, file describes " + std::to_string(net.n_sites()));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Static disorder

inline ExcitonNetwork apply_static_disorder(const ExcitonNetwork& net, const RVector& offsets) {
  if (offsets.size() != net.n_sites()) {
    throw DimensionError("apply_static_disorder: " + std::to_string(offsets.size()) + " offsets for " +
                         std::to_string(net.n_sites()) + " sites");
  }
  return net.with_site_energies(net.site_energies() + offsets);
}

/// Independent Gaussian offsets with standard deviation sigma, drawn from a
/// generator seeded with `seed`.
inline ExcitonNetwork apply_static_disorder(const ExcitonNetwork& net, std::uint64_t seed, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("apply_static_disorder: sigma must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  RVector offsets(net.n_sites());
  for (int i = 0; i < net.n_sites(); ++i) offsets(i) = sigma * dist(rng);
  return apply_static_disorder(net, offsets);
}

// ---------------------------------------------------------------------------
// Hybrid basis

struct HybridBasis {
  ExcitonNetwork network;  // sites i, j replaced by |+>, |->
  double mixing_angle;     // |+> = cos a |i> + sin a |j>,  |-> = -sin a |i> + cos a |j>
  RMatrix rotation;        // site -> hybrid basis, columns are the new states
};

/// Diagonalizes the 2x2 block of sites i, j (1-based). |+> is the state
/// continuously connected to site i, so the angle lies in [-pi/4, pi/4] and
/// vanishes for uncoupled sites. Noise rates are carried over unchanged; the
/// result is a Hamiltonian view, not a new noise model.
inline HybridBasis hybrid_basis(const ExcitonNetwork& net, int i, int j) {
  if (i == j) throw InvalidArgument("hybrid_basis: sites must differ");
  const int n = net.n_sites();
  if (i < 1 || i > n || j < 1 || j > n) throw InvalidArgument("hybrid_basis: site index out of range");
  const int a = i - 1, b = j - 1;
  const RMatrix h = net.hamiltonian();
  const double ea = h(a, a), eb = h(b, b), v = h(a, b);
  double angle = 0.0;
  if (v != 0.0) {
    angle = (ea == eb) ? std::copysign(0.25 * 3.14159265358979323846, v) : 0.5 * std::atan(2.0 * v / (ea - eb));
  }
  RMatrix r = RMatrix::Identity(n, n);
  const double c = std::cos(angle), s = std::sin(angle);
  r(a, a) = c;
  r(b, a) = s;
  r(a, b) = -s;
  r(b, b) = c;
  RMatrix hp = r.transpose() * h * r;
  hp(a, b) = 0.0;
  hp(b, a) = 0.0;
  RMatrix sym = 0.5 * (hp + hp.transpose());
  NetworkParams p = net.params();
  p.site_energies = sym.diagonal();
  p.couplings = sym;
  p.couplings.diagonal().setZero();
  return {ExcitonNetwork(std::move(p)), angle, r};
}

// ---------------------------------------------------------------------------
// Dark subspace

struct DarkSubspace {
  CMatrix basis;  // columns: orthonormal single-excitation states (site basis)
  int dimension = 0;

  /// ||P_dark psi||^2
  double population(const CVector& psi) const {
    if (dimension == 0) return 0.0;
    return (basis.adjoint() * psi).squaredNorm();
  }
};

/// Largest Hamiltonian-invariant subspace orthogonal to the sink site.
///
/// Within each eigenspace (eigenvalues clustered at relative tolerance
/// `cluster_tol`) the component of |s> spans the only bright direction; the
/// orthogonal complement inside the eigenspace is dark.
inline DarkSubspace dark_subspace(const ExcitonNetwork& net, double cluster_tol = 1e-8) {
  const int n = net.n_sites();
  const RMatrix h = net.angular_hamiltonian();
  const Eigensystem es = hermitian_eigensystem(h.cast<cplx>());
  const double scale = std::max(1.0, es.values.cwiseAbs().maxCoeff());
  const int s = net.sink_site() - 1;

  std::vector<CVector> dark;
  int start = 0;
  while (start < n) {
    int stop = start + 1;
    while (stop < n && es.values(stop) - es.values(stop - 1) <= cluster_tol * scale) ++stop;
    const int k = stop - start;
    const CMatrix v = es.vectors.middleCols(start, k);
    const CVector w = v.row(s).adjoint();  // components of |s> in this eigenspace
    if (w.norm() < 1e-12) {
      for (int c = 0; c < k; ++c) dark.emplace_back(v.col(c));
    } else if (k > 1) {
      Eigen::HouseholderQR<CMatrix> qr(CMatrix(w / w.norm()));
      const CMatrix q = qr.householderQ();
      for (int c = 1; c < k; ++c) dark.emplace_back(v * q.col(c));
    }
    start = stop;
  }
  DarkSubspace out;
  out.dimension = static_cast<int>(dark.size());
  out.basis = CMatrix(n, out.dimension);
  for (int c = 0; c < out.dimension; ++c) out.basis.col(c) = dark[static_cast<std::size_t>(c)];
  if (out.dimension > 0) {
    // re-orthonormalize; vectors from different eigenspaces are already orthogonal
    Eigen::HouseholderQR<CMatrix> qr(out.basis);
    CMatrix q = qr.householderQ() * CMatrix::Identity(n, out.dimension);
    out.basis = q;
  }
  return out;
}

/// Long-time sink population of the purely coherent dynamics predicted from
/// the dark subspace: 1 - ||P_dark |initial>||^2.
inline double coherent_sink_prediction(const ExcitonNetwork& net) {
  const DarkSubspace d = dark_subspace(net);
  CVector init = CVector::Zero(net.n_sites());
  init(net.initial_site() - 1) = 1.0;
  return 1.0 - d.population(init);
}

}  // namespace exlab
