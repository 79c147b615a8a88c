// exciton-lab: batch runner for transport, chain-mapping and classicality
// experiments described by a JSON config.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "CLI11.hpp"
#include "exciton/chain.hpp"
#include "exciton/classicality.hpp"
#include "exciton/dynamics.hpp"
#include "exciton/network.hpp"
#include "exciton/transport.hpp"

namespace fs = std::filesystem;
using namespace exlab;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// View of one JSON object that records which keys were read, so leftovers
/// can be reported as unknown fields.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string where(const std::string& k) const { return path_ + "." + k; }

  const json& raw(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) throw ConfigError(where(k) + ": required field missing");
    return j_.at(k);
  }

  double number(const std::string& k, std::optional<double> def = std::nullopt) {
    seen_.insert(k);
    if (!j_.contains(k)) {
      if (def) return *def;
      throw ConfigError(where(k) + ": required field missing");
    }
    if (!j_.at(k).is_number()) throw ConfigError(where(k) + ": expected a number");
    return j_.at(k).get<double>();
  }
  double positive(const std::string& k, std::optional<double> def = std::nullopt) {
    const double v = number(k, def);
    if (!(v > 0.0)) throw ConfigError(where(k) + ": must be positive, got " + format_double(v));
    return v;
  }
  double non_negative(const std::string& k, std::optional<double> def = std::nullopt) {
    const double v = number(k, def);
    if (!(v >= 0.0)) throw ConfigError(where(k) + ": must be non-negative, got " + format_double(v));
    return v;
  }
  int integer(const std::string& k, std::optional<int> def = std::nullopt, int min = std::numeric_limits<int>::min()) {
    seen_.insert(k);
    if (!j_.contains(k)) {
      if (def) return *def;
      throw ConfigError(where(k) + ": required field missing");
    }
    if (!j_.at(k).is_number_integer()) throw ConfigError(where(k) + ": expected an integer");
    const int v = j_.at(k).get<int>();
    if (v < min) throw ConfigError(where(k) + ": must be >= " + std::to_string(min) + ", got " + std::to_string(v));
    return v;
  }
  bool boolean(const std::string& k, bool def) {
    seen_.insert(k);
    if (!j_.contains(k)) return def;
    if (!j_.at(k).is_boolean()) throw ConfigError(where(k) + ": expected true or false");
    return j_.at(k).get<bool>();
  }
  std::string string(const std::string& k, std::optional<std::string> def = std::nullopt) {
    seen_.insert(k);
    if (!j_.contains(k)) {
      if (def) return *def;
      throw ConfigError(where(k) + ": required field missing");
    }
    if (!j_.at(k).is_string()) throw ConfigError(where(k) + ": expected a string");
    return j_.at(k).get<std::string>();
  }
  std::vector<int> int_list(const std::string& k) {
    const json& a = raw(k);
    if (!a.is_array() || a.empty()) throw ConfigError(where(k) + ": expected a non-empty list of integers");
    std::vector<int> out;
    for (const auto& v : a) {
      if (!v.is_number_integer()) throw ConfigError(where(k) + ": expected a non-empty list of integers");
      out.push_back(v.get<int>());
    }
    return out;
  }
  std::vector<double> number_list(const std::string& k) {
    const json& a = raw(k);
    if (!a.is_array() || a.empty()) throw ConfigError(where(k) + ": expected a non-empty list of numbers");
    std::vector<double> out;
    for (const auto& v : a) {
      if (!v.is_number()) throw ConfigError(where(k) + ": expected a non-empty list of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  std::optional<Block> sub(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) return std::nullopt;
    return Block(j_.at(k), where(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Typed configuration

struct NetworkSpec {
  std::string kind = "fully_connected";  // or "file"
  int n = 4;
  double energy = 0.0;
  double coupling = 1.0;
  int sink_site = 0;  // 0: last site
  double sink_rate = 1.0;
  int initial_site = 1;
  std::string file;
  std::optional<double> disorder_sigma;
};

struct SweepConfig {
  NetworkSpec network;
  double T = 100.0;
  double gamma_min = 1e-3, gamma_max = 1e3;
  int points = 40;
  int samples = 101;
  std::optional<double> optimize_T;
};

struct ScalingConfig {
  std::vector<int> n_list;
  double coupling = 1.0;
  double sink_rate = 1.0;
};

struct FmoRunConfig {
  FmoConfig fmo;
  std::optional<double> disorder_sigma;
};

struct DensitySpec {
  std::string kind = "flat";
  double lo = 0.0, hi = 1.0, height = 1.0;
  double exponent = 1.0, cutoff = 1.0, prefactor = 1.0;
  std::string file;
};

struct PropagateSpec {
  int modes = 4;
  int n_fock = 4;
  double t_max = 10.0;
  int points = 101;
  TwoLevelSystem system;
  int dimension_cap = 4096;
};

struct ChainConfig {
  DensitySpec density;
  int n_max = 21;
  int lanczos_modes = 0;  // 0: 2 * n_max
  std::optional<PropagateSpec> propagate;
};

struct GeneratorSpec {
  CMatrix hamiltonian;
  std::vector<JumpOperator> jumps;
  std::vector<double> times;
};

struct NamedChannel {
  std::string name;
  double parameter = 0.0;
};

struct ClassifyConfig {
  std::string snapshots_file;
  std::optional<GeneratorSpec> generator;
  std::vector<NamedChannel> channels;
  int random_unital = 0;
  int random_terms_max = 4;
  ReconstructionOptions reconstruction;
  double condition_cap = 1e8;
};

using ExperimentBlock = std::variant<SweepConfig, ScalingConfig, FmoRunConfig, ChainConfig, ClassifyConfig>;

struct ExperimentConfig {
  std::string experiment;
  ExperimentBlock block;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
  json echo;
  fs::path config_dir;
};

const std::vector<std::string> kExperiments{"transport_sweep", "scaling", "fmo", "chainmap", "classify"};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

void require_file(const fs::path& p, const std::string& field) {
  if (!fs::is_regular_file(p)) throw ConfigError(field + ": file not found: " + p.string());
}

NetworkSpec parse_network(Block b, const fs::path& dir, bool& stochastic) {
  NetworkSpec s;
  s.kind = b.string("kind", "fully_connected");
  if (s.kind == "fully_connected") {
    s.n = b.integer("n", 4, 2);
    s.energy = b.number("energy", 0.0);
    s.coupling = b.number("coupling", 1.0);
    if (s.coupling == 0.0) throw ConfigError(b.where("coupling") + ": must be nonzero");
    s.sink_site = b.integer("sink_site", s.n, 1);
    if (s.sink_site > s.n) throw ConfigError(b.where("sink_site") + ": exceeds n");
    s.sink_rate = b.non_negative("sink_rate", 1.0);
    s.initial_site = b.integer("initial_site", 1, 1);
    if (s.initial_site > s.n) throw ConfigError(b.where("initial_site") + ": exceeds n");
  } else if (s.kind == "file") {
    s.file = resolve(dir, b.string("file")).string();
    require_file(s.file, b.where("file"));
    if (b.has("sink_rate")) s.sink_rate = b.non_negative("sink_rate");
    else s.sink_rate = -1.0;
  } else {
    throw ConfigError(b.where("kind") + ": expected \"fully_connected\" or \"file\", got \"" + s.kind + "\"");
  }
  if (auto d = b.sub("disorder")) {
    s.disorder_sigma = d->non_negative("sigma");
    d->finish();
    stochastic = true;
  }
  b.finish();
  return s;
}

SweepConfig parse_sweep(Block b, const fs::path& dir, bool& stochastic) {
  SweepConfig c;
  if (auto n = b.sub("network")) c.network = parse_network(*n, dir, stochastic);
  c.T = b.positive("T", 100.0);
  c.gamma_min = b.positive("gamma_min", 1e-3);
  c.gamma_max = b.positive("gamma_max", 1e3);
  if (!(c.gamma_max > c.gamma_min)) throw ConfigError(b.where("gamma_max") + ": must exceed gamma_min");
  c.points = b.integer("points", 40, 1);
  c.samples = b.integer("samples", 101, 2);
  if (b.has("optimize_T")) c.optimize_T = b.positive("optimize_T");
  b.finish();
  return c;
}

ScalingConfig parse_scaling(Block b) {
  ScalingConfig c;
  c.n_list = b.int_list("n_list");
  for (int n : c.n_list)
    if (n < 3) throw ConfigError(b.where("n_list") + ": every N must be >= 3, got " + std::to_string(n));
  c.coupling = b.number("coupling", 1.0);
  if (c.coupling == 0.0) throw ConfigError(b.where("coupling") + ": must be nonzero");
  c.sink_rate = b.positive("sink_rate", 1.0);
  b.finish();
  return c;
}

FmoRunConfig parse_fmo(Block b, const fs::path& dir, bool& stochastic) {
  FmoRunConfig c;
  if (b.has("network_file")) {
    c.fmo.network_path = resolve(dir, b.string("network_file")).string();
    require_file(c.fmo.network_path, b.where("network_file"));
  }
  c.fmo.T = b.positive("T", 5.0);
  c.fmo.sink_rate = b.positive("sink_rate", 1.0);
  if (b.has("gamma")) c.fmo.gamma = b.non_negative("gamma");
  c.fmo.gamma_lo = b.positive("gamma_min", 0.1);
  c.fmo.gamma_hi = b.positive("gamma_max", 1000.0);
  if (!(c.fmo.gamma_hi > c.fmo.gamma_lo)) throw ConfigError(b.where("gamma_max") + ": must exceed gamma_min");
  c.fmo.sweep_points = b.integer("points", 40, 3);
  c.fmo.samples = b.integer("samples", 501, 2);
  c.fmo.zero_couplings = b.boolean("zero_couplings", false);
  if (auto d = b.sub("disorder")) {
    c.disorder_sigma = d->non_negative("sigma");
    d->finish();
    stochastic = true;
  }
  b.finish();
  return c;
}

ChainConfig parse_chain(Block b, const fs::path& dir) {
  ChainConfig c;
  Block d = *[&] {
    auto x = b.sub("density");
    if (!x) throw ConfigError(b.where("density") + ": required field missing");
    return x;
  }();
  c.density.kind = d.string("kind");
  if (c.density.kind == "flat") {
    c.density.lo = d.number("lo", 0.0);
    c.density.hi = d.number("hi", 1.0);
    c.density.height = d.positive("height", 1.0);
    if (!(c.density.hi > c.density.lo)) throw ConfigError(d.where("hi") + ": must exceed lo");
  } else if (c.density.kind == "power_law") {
    c.density.exponent = d.number("exponent");
    if (!(c.density.exponent > -1.0)) throw ConfigError(d.where("exponent") + ": must exceed -1");
    c.density.cutoff = d.positive("cutoff", 1.0);
    c.density.prefactor = d.positive("prefactor", 1.0);
  } else if (c.density.kind == "tabulated") {
    c.density.file = resolve(dir, d.string("file")).string();
    require_file(c.density.file, d.where("file"));
  } else {
    throw ConfigError(d.where("kind") + ": expected \"flat\", \"power_law\" or \"tabulated\"");
  }
  d.finish();
  c.n_max = b.integer("n_max", 21, 1);
  c.lanczos_modes = b.integer("lanczos_modes", 2 * c.n_max, 1);
  if (auto p = b.sub("propagate")) {
    PropagateSpec s;
    s.modes = p->integer("modes", 4, 1);
    s.n_fock = p->integer("n_fock", 4, 2);
    s.t_max = p->positive("t_max", 10.0);
    s.points = p->integer("points", 101, 2);
    s.system.gap = p->number("gap", 1.0);
    s.system.tunneling = p->number("tunneling", 0.5);
    s.dimension_cap = p->integer("dimension_cap", 4096, 2);
    p->finish();
    c.propagate = s;
  }
  b.finish();
  return c;
}

CMatrix parse_matrix(const json& j, const std::string& where) {
  try {
    return matrix_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

ClassifyConfig parse_classify(Block b, const fs::path& dir, bool& stochastic) {
  ClassifyConfig c;
  if (b.has("snapshots")) {
    c.snapshots_file = resolve(dir, b.string("snapshots")).string();
    require_file(c.snapshots_file, b.where("snapshots"));
  }
  if (auto g = b.sub("generator")) {
    GeneratorSpec s;
    s.hamiltonian = parse_matrix(g->raw("hamiltonian"), g->where("hamiltonian"));
    if (s.hamiltonian.rows() != s.hamiltonian.cols() || !is_hermitian(s.hamiltonian, 1e-12)) {
      throw ConfigError(g->where("hamiltonian") + ": must be a square Hermitian matrix");
    }
    if (g->has("jumps")) {
      const json& js = g->raw("jumps");
      if (!js.is_array()) throw ConfigError(g->where("jumps") + ": expected a list");
      for (std::size_t k = 0; k < js.size(); ++k) {
        Block jb(js[k], g->where("jumps") + "[" + std::to_string(k) + "]");
        JumpOperator op{parse_matrix(jb.raw("op"), jb.where("op")), jb.non_negative("rate"), "jump_" + std::to_string(k)};
        if (op.op.rows() != s.hamiltonian.rows() || op.op.cols() != s.hamiltonian.cols()) {
          throw ConfigError(jb.where("op") + ": shape differs from the Hamiltonian");
        }
        jb.finish();
        s.jumps.push_back(op);
      }
    }
    s.times = g->number_list("times");
    if (s.times.size() < 2) throw ConfigError(g->where("times") + ": need at least two times");
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      if (s.times[k] < 0.0 || (k > 0 && !(s.times[k] > s.times[k - 1]))) {
        throw ConfigError(g->where("times") + ": must be non-negative and strictly increasing");
      }
    }
    g->finish();
    c.generator = s;
  }
  if (b.has("channels")) {
    const json& cs = b.raw("channels");
    if (!cs.is_array()) throw ConfigError(b.where("channels") + ": expected a list");
    const std::set<std::string> names{"identity", "fully_depolarizing", "dephasing", "amplitude_damping"};
    for (std::size_t k = 0; k < cs.size(); ++k) {
      Block cb(cs[k], b.where("channels") + "[" + std::to_string(k) + "]");
      NamedChannel nc{cb.string("name"), 0.0};
      if (!names.count(nc.name)) throw ConfigError(cb.where("name") + ": unknown channel \"" + nc.name + "\"");
      if (nc.name == "dephasing" || nc.name == "amplitude_damping") {
        nc.parameter = cb.number("parameter");
        if (nc.parameter < 0.0 || nc.parameter > 1.0) throw ConfigError(cb.where("parameter") + ": must lie in [0, 1]");
      }
      cb.finish();
      c.channels.push_back(nc);
    }
  }
  if (auto r = b.sub("random_unital")) {
    c.random_unital = r->integer("count", std::nullopt, 1);
    c.random_terms_max = r->integer("max_terms", 4, 1);
    r->finish();
    stochastic = true;
  }
  c.reconstruction.project_cp = b.boolean("project_cp", false);
  c.condition_cap = b.positive("condition_cap", 1e8);
  b.finish();
  if (c.snapshots_file.empty() && !c.generator && c.channels.empty() && c.random_unital == 0) {
    throw ConfigError("config.classify: needs at least one of snapshots, generator, channels, random_unital");
  }
  if (!c.snapshots_file.empty() && c.generator) {
    throw ConfigError("config.classify: give either snapshots or generator, not both");
  }
  return c;
}

/// Line and column of a byte offset, for parse diagnostics.
std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": JSON syntax error at " + position(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  ExperimentConfig cfg;
  cfg.echo = root;
  cfg.config_dir = fs::absolute(fs::path(path)).parent_path();
  Block b(root, "config");

  std::vector<std::string> present;
  for (const auto& e : kExperiments)
    if (b.has(e)) present.push_back(e);
  if (present.size() != 1) {
    std::string list;
    for (const auto& p : present) list += (list.empty() ? "" : ", ") + p;
    throw ConfigError("config: exactly one experiment block required, found " + std::to_string(present.size()) +
                      (list.empty() ? "" : " (" + list + ")"));
  }
  cfg.experiment = b.string("experiment", present.front());
  if (cfg.experiment != present.front()) {
    throw ConfigError("config.experiment: \"" + cfg.experiment + "\" does not match the block \"" + present.front() + "\"");
  }
  cfg.output_dir = b.string("output_dir", "out/" + cfg.experiment);
  if (b.has("seed")) {
    const json& s = b.raw("seed");
    if (!s.is_number_unsigned()) throw ConfigError("config.seed: expected a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  cfg.workers = static_cast<unsigned>(b.integer("workers", 0, 0));

  bool stochastic = false;
  Block blk = *b.sub(cfg.experiment);
  if (cfg.experiment == "transport_sweep") cfg.block = parse_sweep(blk, cfg.config_dir, stochastic);
  else if (cfg.experiment == "scaling") cfg.block = parse_scaling(blk);
  else if (cfg.experiment == "fmo") cfg.block = parse_fmo(blk, cfg.config_dir, stochastic);
  else if (cfg.experiment == "chainmap") cfg.block = parse_chain(blk, cfg.config_dir);
  else cfg.block = parse_classify(blk, cfg.config_dir, stochastic);
  b.finish();
  if (stochastic && !cfg.seed) throw ConfigError("config.seed: required because the experiment draws random numbers");
  return cfg;
}

// ---------------------------------------------------------------------------
// Execution

struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
  json results = json::object();
  json tolerances = json::object();
  std::string module;

  void add(const std::string& name, const std::string& contents) { files.emplace_back(name, contents); }
};

json conservation_json(const ConservationSummary& c) {
  return {{"trajectories", c.trajectories},
          {"max_trace_error", c.max_trace_error},
          {"min_eigenvalue", c.min_eigenvalue},
          {"sink_monotone", c.sink_monotone},
          {"ok", c.ok()}};
}

json integrator_tolerances() {
  const IntegratorOptions o;
  return {{"integrator", "dormand-prince 5(4)"}, {"rtol", o.rtol}, {"atol", o.atol}};
}

ExcitonNetwork build_network(const NetworkSpec& s, std::mt19937_64* rng) {
  ExcitonNetwork net = [&] {
    if (s.kind == "file") {
      ExcitonNetwork n = network_from_json(read_json_file(s.file));
      return s.sink_rate >= 0.0 ? n.with_sink_rate(s.sink_rate) : n;
    }
    NetworkParams p = build_fully_connected(s.n, s.energy, s.coupling, s.sink_site, s.sink_rate).params();
    p.initial_site = s.initial_site;
    return ExcitonNetwork(p);
  }();
  if (s.disorder_sigma && rng) {
    std::normal_distribution<double> g(0.0, *s.disorder_sigma);
    RVector off(net.n_sites());
    for (int k = 0; k < net.n_sites(); ++k) off(k) = g(*rng);
    net = apply_static_disorder(net, off);
  }
  return net;
}

std::string csv_of(const std::function<void(std::ostream&)>& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

void run_sweep(const ExperimentConfig& cfg, const SweepConfig& c, Artifacts& out) {
  out.module = "transport-lab";
  std::mt19937_64 rng(cfg.seed.value_or(0));
  const ExcitonNetwork net = build_network(c.network, &rng);
  SweepOptions opt;
  opt.samples = c.samples;
  opt.workers = cfg.workers;
  const auto s = efficiency_sweep(net, logspace(c.gamma_min, c.gamma_max, c.points), c.T, opt);
  out.add("sweep.csv", csv_of([&](std::ostream& os) { write_sweep_csv(os, s); }));
  out.results["argmax_gamma"] = s.argmax_gamma;
  out.results["max_efficiency"] = s.max_efficiency();
  out.results["efficiency_at_gamma_min"] = s.efficiency.front();
  out.results["efficiency_at_gamma_max"] = s.efficiency.back();
  out.results["interior_maximum"] = s.interior_maximum();
  ConservationSummary cons = s.conservation;
  if (c.optimize_T) {
    const auto o = optimal_dephasing(net, *c.optimize_T, c.gamma_min, c.gamma_max, c.points, 1e-2, opt);
    out.results["optimum"] = {{"T", *c.optimize_T}, {"gamma", o.gamma}, {"efficiency", o.efficiency}, {"boundary", o.boundary}};
    cons.merge(o.coarse.conservation);
  }
  out.results["conservation"] = conservation_json(cons);
  out.tolerances = integrator_tolerances();
  out.tolerances["argmax_tie_tol"] = opt.tie_tol;
  out.tolerances["golden_section_rel_tol"] = 1e-2;
}

void run_scaling(const ExperimentConfig& cfg, const ScalingConfig& c, Artifacts& out) {
  out.module = "transport-lab";
  const auto s = scaling_study(c.n_list, c.coupling, c.sink_rate, cfg.workers);
  out.add("scaling.csv", csv_of([&](std::ostream& os) { write_scaling_csv(os, s); }));
  double dev = 0.0;
  for (const auto& r : s.rows) dev = std::max(dev, std::abs(r.p_sink - 1.0 / (r.n - 1)));
  out.results["max_deviation_from_inverse_law"] = dev;
  if (s.fit_exponent) {
    out.results["fit_exponent"] = *s.fit_exponent;
    out.results["fit_prefactor"] = *s.fit_prefactor;
  }
  const AsymptoticOptions a;
  out.tolerances = {{"method", "abel limit with richardson extrapolation"},
                    {"tol", a.tol},
                    {"max_uncertainty", a.max_uncertainty},
                    {"first_shift", a.first_shift}};
}

void run_fmo(const ExperimentConfig& cfg, const FmoRunConfig& c, Artifacts& out) {
  out.module = "transport-lab";
  FmoConfig f = c.fmo;
  f.workers = cfg.workers;
  if (c.disorder_sigma) {
    // materialize the disordered network next to the run so fmo_experiment stays file-driven
    const ExcitonNetwork base = build_fmo7(f.network_path.empty() ? bundled_fmo_path() : f.network_path);
    const fs::path tmp = fs::temp_directory_path() / ("exciton_fmo_disorder_" + std::to_string(*cfg.seed) + ".json");
    std::ofstream(tmp) << network_to_json(apply_static_disorder(base, *cfg.seed, *c.disorder_sigma)).dump(2);
    f.network_path = tmp.string();
  }
  const auto rep = fmo_experiment(f);
  out.add("fmo_coherent.csv", csv_of([&](std::ostream& os) { write_trajectory_csv(os, rep.coherent); }));
  out.add("fmo_dephased.csv", csv_of([&](std::ostream& os) { write_trajectory_csv(os, rep.dephased); }));
  out.add("fmo_sweep.csv", csv_of([&](std::ostream& os) { write_sweep_csv(os, rep.sweep); }));
  out.results["coherent_efficiency"] = rep.coherent_efficiency;
  out.results["dephased_efficiency"] = rep.dephased_efficiency;
  out.results["gamma"] = rep.gamma;
  out.results["gamma_on_boundary"] = rep.gamma_on_boundary;
  out.results["sweep_interior_maximum"] = rep.sweep.interior_maximum();
  out.results["sweep_max_efficiency"] = rep.sweep.max_efficiency();
  out.results["conservation"] = conservation_json(rep.conservation);
  json rows = json::array();
  const RMatrix hh = rep.hybrid.network.hamiltonian();
  for (Eigen::Index i = 0; i < hh.rows(); ++i) rows.push_back(real_vector_to_json(hh.row(i).transpose()));
  out.results["hybrid_basis"] = {{"sites", {1, 2}}, {"mixing_angle", rep.hybrid.mixing_angle}, {"hamiltonian_cm1", rows}};
  out.tolerances = integrator_tolerances();
  out.tolerances["golden_section_rel_tol"] = 1e-2;
}

SpectralDensity build_density(const DensitySpec& d) {
  if (d.kind == "flat") return SpectralDensity::flat(d.lo, d.hi, d.height);
  if (d.kind == "power_law") return SpectralDensity::power_law(d.exponent, d.cutoff, d.prefactor);
  return read_spectral_density_csv(d.file);
}

void run_chain(const ExperimentConfig&, const ChainConfig& c, Artifacts& out) {
  out.module = "chain-mapping";
  const SpectralDensity j = build_density(c.density);
  const auto st = chain_coefficients(j, c.n_max);
  const auto lz = lanczos_chain(discretize(j, c.lanczos_modes));
  out.add("chain.csv", csv_of([&](std::ostream& os) { write_chain_csv(os, st); }));
  out.add("chain_lanczos.csv", csv_of([&](std::ostream& os) { write_chain_csv(os, lz); }));
  const int common = std::min(st.length(), lz.length() - 1);
  double diff = 0.0;
  for (int n = 0; n < common; ++n) {
    diff = std::max({diff, std::abs(st.frequencies(n) - lz.frequencies(n)), std::abs(st.hoppings(n) - lz.hoppings(n))});
  }
  out.results["system_coupling"] = st.system_coupling;
  out.results["total_weight"] = j.total_weight();
  out.results["stieltjes_vs_lanczos_max_diff"] = diff;
  out.results["compared_coefficients"] = common;
  out.tolerances = {{"stieltjes_oversampling", 4}, {"lanczos_reorthogonalization", "full, two passes"}};
  if (c.propagate) {
    const auto& p = *c.propagate;
    PropagationOptions po;
    po.dimension_cap = p.dimension_cap;
    const auto star = discretize(j, p.modes);
    const auto r = propagate_star_vs_chain(p.system, star, p.n_fock, linspace(0.0, p.t_max, p.points), po);
    out.add("star_vs_chain.csv", csv_of([&](std::ostream& os) {
              os << "time,trace_distance,star_p1,chain_p1\n";
              for (std::size_t k = 0; k < r.times.size(); ++k) {
                os << format_double(r.times[k]) << ',' << format_double(trace_distance(r.star_states[k], r.chain_states[k]))
                   << ',' << format_double(r.star_states[k](1, 1).real()) << ','
                   << format_double(r.chain_states[k](1, 1).real()) << '\n';
              }
            }));
    out.results["star_vs_chain"] = {{"max_trace_distance", r.max_trace_distance},
                                    {"max_leakage", r.max_leakage},
                                    {"hilbert_dim", r.hilbert_dim}};
    out.tolerances["leakage_tol"] = po.leakage_tol;
    out.tolerances["fock_truncation"] = "total bath quanta <= n_fock - 1";
  }
}

QuantumChannel named_channel(const NamedChannel& n) {
  if (n.name == "identity") return QuantumChannel::unitary(CMatrix::Identity(2, 2));
  if (n.name == "fully_depolarizing") return fully_depolarizing(2);
  if (n.name == "dephasing") return qubit_dephasing(n.parameter);
  return amplitude_damping(n.parameter);
}

void run_classify(const ExperimentConfig& cfg, const ClassifyConfig& c, Artifacts& out) {
  out.module = "channel-classicality";
  std::vector<TimedChannel> snaps;
  if (!c.snapshots_file.empty()) {
    snaps = snapshots_from_json(read_json_file(c.snapshots_file), c.reconstruction);
  } else if (c.generator) {
    const Superoperator l = lindblad_superoperator(c.generator->hamiltonian, c.generator->jumps);
    for (double t : c.generator->times)
      snaps.push_back({t, QuantumChannel::from_superoperator(Superoperator(CMatrix(l.matrix() * t).exp()))});
  }
  if (!snaps.empty()) {
    const auto cls = classify_trajectory(snaps, c.condition_cap);
    out.add("classification.json", classification_to_json(cls).dump(2) + "\n");
    out.add("intervals.csv", csv_of([&](std::ostream& os) {
              os << "t_start,t_end,unitality_defect,ru_verdict,ru_residual,mp_witness,mp_verdict,upper_bound\n";
              for (const auto& r : cls.intervals) {
                os << format_double(r.t_start) << ',' << format_double(r.t_end) << ',' << format_double(r.unitality_defect)
                   << ',' << to_string(r.ru.verdict) << ','
                   << (r.ru.decomposition ? format_double(r.ru.decomposition->residual) : "") << ','
                   << format_double(r.mp.witness) << ',' << to_string(r.mp.verdict) << ','
                   << (std::isfinite(r.upper_bound_distance) ? format_double(r.upper_bound_distance) : "inf") << '\n';
              }
            }));
    out.results["environment_verdict"] = to_string(cls.environment);
    out.results["system_verdict"] = to_string(cls.system);
    out.results["intervals"] = cls.intervals.size();
  }
  if (!c.channels.empty()) {
    json list = json::array();
    out.add("channels.csv", csv_of([&](std::ostream& os) {
              os << "name,parameter,unitality_defect,ru_verdict,ru_residual,mp_witness,mp_verdict,mp_certificate\n";
              for (const auto& n : c.channels) {
                const auto r = classify_channel(named_channel(n));
                os << n.name << ',' << format_double(n.parameter) << ',' << format_double(r.unitality_defect) << ','
                   << to_string(r.ru.verdict) << ','
                   << (r.ru.decomposition ? format_double(r.ru.decomposition->residual) : "") << ','
                   << format_double(r.mp.witness) << ',' << to_string(r.mp.verdict) << ','
                   << (r.mp.certificate ? "yes" : "no") << '\n';
                json j = report_to_json(r);
                j["name"] = n.name;
                j["parameter"] = n.parameter;
                list.push_back(j);
              }
            }));
    out.results["channels"] = list;
  }
  if (c.random_unital > 0) {
    std::mt19937_64 rng(*cfg.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> terms(1, c.random_terms_max);
    double worst = 0.0;
    out.add("random_unital.csv", csv_of([&](std::ostream& os) {
              os << "index,terms,residual,p0,p1,p2,p3\n";
              for (int k = 0; k < c.random_unital; ++k) {
                const int m = terms(rng);
                std::vector<double> p(static_cast<std::size_t>(m));
                for (auto& x : p) x = u(rng);
                const double s = std::accumulate(p.begin(), p.end(), 0.0);
                std::vector<CMatrix> kraus;
                for (double x : p) {
                  CMatrix z(2, 2);
                  for (int i = 0; i < 4; ++i) z(i / 2, i % 2) = cplx(g(rng), g(rng));
                  Eigen::HouseholderQR<CMatrix> qr(z);
                  CMatrix q = qr.householderQ();
                  for (int i = 0; i < 2; ++i) q.col(i) *= std::polar(1.0, std::arg(CMatrix(qr.matrixQR())(i, i)));
                  kraus.push_back(std::sqrt(x / s) * q);
                }
                const auto dec = ru_decompose_qubit(QuantumChannel::from_kraus(kraus));
                worst = std::max(worst, dec.residual);
                os << k << ',' << m << ',' << format_double(dec.residual);
                for (const auto& t : dec.terms) os << ',' << format_double(t.probability);
                os << '\n';
              }
            }));
    out.results["random_unital"] = {{"count", c.random_unital}, {"max_residual", worst}};
  }
  out.tolerances = {{"non_classical_witness", 1e-6},
                    {"ru_residual", 1e-8},
                    {"condition_cap", c.condition_cap},
                    {"bound_rel_tol", 1e-6},
                    {"project_cp", c.reconstruction.project_cp}};
}

json versions() {
  return {{"exciton-lab", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << contents;
}

int run(const std::string& config_path, const std::string& output_override, bool verbose) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const fs::path out_dir = output_override.empty() ? fs::path(cfg.output_dir) : fs::path(output_override);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    std::cerr << "config error: output_dir not writable: " << out_dir.string() << "\n";
    return kExitConfig;
  }
  const auto t0 = std::chrono::steady_clock::now();
  Artifacts art;
  json report;
  report["config"] = cfg.echo;
  report["config_path"] = config_path;
  report["experiment"] = cfg.experiment;
  report["versions"] = versions();
  report["workers"] = cfg.workers == 0 ? default_workers() : cfg.workers;
  int code = kExitOk;
  try {
    std::visit(
        [&](const auto& blk) {
          using T = std::decay_t<decltype(blk)>;
          if constexpr (std::is_same_v<T, SweepConfig>) run_sweep(cfg, blk, art);
          else if constexpr (std::is_same_v<T, ScalingConfig>) run_scaling(cfg, blk, art);
          else if constexpr (std::is_same_v<T, FmoRunConfig>) run_fmo(cfg, blk, art);
          else if constexpr (std::is_same_v<T, ChainConfig>) run_chain(cfg, blk, art);
          else run_classify(cfg, blk, art);
        },
        cfg.block);
    report["status"] = "ok";
  } catch (const std::exception& e) {
    // configs are validated up front, so anything raised here is a numerical failure
    code = kExitNumerical;
    report["status"] = "numerical_failure";
    report["error"] = {{"module", art.module.empty() ? cfg.experiment : art.module}, {"message", e.what()}};
    std::cerr << "numerical failure: " << e.what() << "\n";
  }
  report["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report["tolerances"] = art.tolerances;
  report["results"] = art.results;
  json files = json::array();
  if (code == kExitOk) {
    for (const auto& [name, contents] : art.files) {
      write_file(out_dir / name, contents);
      files.push_back(name);
      if (verbose) std::cerr << "wrote " << (out_dir / name).string() << "\n";
    }
  }
  files.push_back("report.json");
  report["artifacts"] = files;
  write_file(out_dir / "report.json", report.dump(2) + "\n");
  if (verbose) std::cerr << "wrote " << (out_dir / "report.json").string() << "\n";
  return code;
}

int validate(const std::string& config_path) {
  try {
    const auto cfg = load_config(config_path);
    std::cout << "ok: " << cfg.experiment << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exciton-lab: excitonic transport, chain mapping and channel classicality experiments"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config, output_dir;
  bool verbose = false;
  auto* run_cmd = app.add_subcommand("run", "run the experiment described by a config");
  run_cmd->add_option("--config", config, "JSON experiment config")->required();
  run_cmd->add_option("--output-dir", output_dir, "override the config's output_dir");
  run_cmd->add_flag("--verbose", verbose, "list written artifacts");
  auto* val_cmd = app.add_subcommand("validate", "check a config without running it");
  val_cmd->add_option("--config", config, "JSON experiment config")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  if (*run_cmd) return run(config, output_dir, verbose);
  return validate(config);
}
