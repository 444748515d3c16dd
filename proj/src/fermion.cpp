#include "shadowlab/fermion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace shadowlab::fermion {

namespace {

constexpr double kOrthoTol = 1e-10;

void check_modes(int n) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("site count must be even and at least 2");
}

}  // namespace

// ---------------------------------------------------------------- HoppingSpec

HoppingSpec HoppingSpec::uniform(int n, std::uint64_t seed, double lo, double hi) {
  check_modes(n);
  HoppingSpec s;
  s.n = n;
  s.seed = seed;
  std::ostringstream src;
  src << "uniform[" << lo << "," << hi << "]";
  s.source = src.str();
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  s.x.resize(static_cast<std::size_t>(n - 1));
  for (double& v : s.x) v = dist(rng);
  return s;
}

HoppingSpec HoppingSpec::ssh(int n, double v, double w) {
  check_modes(n);
  HoppingSpec s;
  s.n = n;
  std::ostringstream src;
  src << "ssh(" << v << "," << w << ")";
  s.source = src.str();
  for (int i = 0; i + 1 < n; ++i) s.x.push_back(i % 2 == 0 ? v : w);
  return s;
}

void HoppingSpec::validate() const {
  check_modes(n);
  if (x.size() != static_cast<std::size_t>(n - 1)) throw std::invalid_argument("hopping vector must have n - 1 entries");
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("hopping amplitudes must be finite");
}

std::string HoppingSpec::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["x"] = x;
  j["source"] = source;
  j["seed"] = seed;
  return j.dump();
}

HoppingSpec HoppingSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  HoppingSpec s;
  s.n = j.at("n").get<int>();
  s.x = j.at("x").get<std::vector<double>>();
  s.source = j.value("source", std::string("custom"));
  s.seed = j.value("seed", std::uint64_t{0});
  s.validate();
  return s;
}

Eigen::MatrixXd build_hopping(const HoppingSpec& spec) {
  spec.validate();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(spec.n, spec.n);
  for (int i = 0; i + 1 < spec.n; ++i) {
    h(i, i + 1) = spec.x[static_cast<std::size_t>(i)];
    h(i + 1, i) = spec.x[static_cast<std::size_t>(i)];
  }
  return h;
}

GroundState ground_correlation(const Eigen::MatrixXd& h, int n_occ) {
  const auto n = h.rows();
  if (h.cols() != n || n < 2) throw std::invalid_argument("single-particle matrix must be square");
  if ((h - h.transpose()).norm() > 1e-12) throw std::invalid_argument("single-particle matrix is not symmetric");
  if (n_occ < 0) n_occ = static_cast<int>(n / 2);
  if (n_occ < 1 || n_occ > n) throw std::invalid_argument("occupation out of range");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
  GroundState g;
  g.energies = es.eigenvalues();
  g.q = es.eigenvectors().leftCols(n_occ).transpose();
  g.correlation = g.q.transpose() * g.q;
  if (n_occ < n) g.degenerate_fermi_level = std::abs(g.energies(n_occ) - g.energies(n_occ - 1)) <= 1e-9;
  return g;
}

// ---------------------------------------------------------------- Givens

Eigen::MatrixXd givens_matrix(int n, const GivensRotation& r) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(n, n);
  const double c = std::cos(r.theta), s = std::sin(r.theta);
  g(r.mode, r.mode) = c;
  g(r.mode + 1, r.mode) = s;
  g(r.mode, r.mode + 1) = -s;
  g(r.mode + 1, r.mode + 1) = c;
  return g;
}

Eigen::MatrixXd GivensNetwork::mode_matrix() const {
  Eigen::MatrixXd u = Eigen::MatrixXd::Identity(n_modes, n_modes);
  for (const auto& r : rotations) {
    // Left-multiplying by a rotation only touches two rows.
    const double c = std::cos(r.theta), s = std::sin(r.theta);
    const Eigen::RowVectorXd a = u.row(r.mode), b = u.row(r.mode + 1);
    u.row(r.mode) = c * a - s * b;
    u.row(r.mode + 1) = s * a + c * b;
  }
  return u;
}

Eigen::MatrixXd GivensNetwork::orbitals() const { return mode_matrix().leftCols(n_occ).transpose(); }

GivensNetwork givens_decompose(const Eigen::MatrixXd& q_in) {
  const int m = static_cast<int>(q_in.rows());
  const int n = static_cast<int>(q_in.cols());
  if (m < 1 || m > n) throw std::invalid_argument("orbital matrix must have 1 <= rows <= cols");
  if ((q_in * q_in.transpose() - Eigen::MatrixXd::Identity(m, m)).norm() > kOrthoTol)
    throw std::invalid_argument("orbital rows are not orthonormal");

  Eigen::MatrixXd q = q_in;
  // Row mixing within the occupied space: zero the upper-right triangle so
  // that row i is supported on columns 0 .. n - m + i.
  for (int k = 0; k < m - 1; ++k) {
    const int col = n - 1 - k;
    for (int r = 0; r < m - 1 - k; ++r) {
      const double a = q(r, col), b = q(r + 1, col);
      const double h = std::hypot(a, b);
      if (h == 0.0 || a == 0.0) continue;
      const Eigen::RowVectorXd ra = q.row(r), rb = q.row(r + 1);
      q.row(r) = (b * ra - a * rb) / h;
      q.row(r + 1) = (a * ra + b * rb) / h;
    }
  }

  // Column rotations sweep each row onto its diagonal entry.
  std::vector<GivensRotation> found;
  found.reserve(static_cast<std::size_t>(m * (n - m)));
  for (int i = 0; i < m; ++i) {
    for (int j = n - m + i; j > i; --j) {
      const double a = q(i, j - 1), b = q(i, j);
      double c = 1.0, s = 0.0;
      if (std::abs(b) > 0.0) {
        const double r = std::hypot(a, b);
        c = a / r;
        s = b / r;
      }
      const Eigen::VectorXd ca = q.col(j - 1), cb = q.col(j);
      q.col(j - 1) = c * ca + s * cb;
      q.col(j) = -s * ca + c * cb;
      found.push_back({j - 1, std::atan2(s, c)});
    }
  }
  for (int i = 0; i < m; ++i) {
    if (std::abs(std::abs(q(i, i)) - 1.0) > 1e-8) throw std::runtime_error("Givens reduction did not reach a diagonal form");
  }

  GivensNetwork net;
  net.n_modes = n;
  net.n_occ = m;
  // Q R_1 ... R_K = D [I | 0], so U = R_1 ... R_K and R_K acts first.
  net.rotations.assign(found.rbegin(), found.rend());
  return net;
}

Eigen::Matrix4d givens_block_matrix(double theta) {
  Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
  const double c = std::cos(theta), s = std::sin(theta);
  g(1, 1) = c;
  g(2, 1) = s;
  g(1, 2) = -s;
  g(2, 2) = c;
  return g;
}

void append_givens_block(sim::Circuit& circuit, const GivensRotation& r) {
  const int p = r.mode, q = r.mode + 1;
  circuit.h(q);
  circuit.cx(q, p);
  circuit.ry(p, -r.theta);
  circuit.ry(q, -r.theta);
  circuit.cx(q, p);
  circuit.h(q);
}

sim::Circuit givens_to_circuit(const GivensNetwork& network, bool prepare_reference) {
  sim::Circuit c(network.n_modes);
  if (prepare_reference)
    for (int k = 0; k < network.n_occ; ++k) c.x(k);
  for (const auto& r : network.rotations) append_givens_block(c, r);
  return c;
}

// ---------------------------------------------------------------- JW

std::vector<sim::PauliString> jw_observable(int i, int j, int n) {
  if (n < 1 || i < 0 || j < 0 || i >= n || j >= n) throw std::out_of_range("mode index out of range");
  if (i > j) throw std::invalid_argument("jw_observable expects i <= j");
  if (i == j) return {sim::PauliString::identity(n, 0.5), sim::PauliString::sparse(n, {{i, 'Z'}}, -0.5)};
  std::string xx(static_cast<std::size_t>(n), 'I');
  for (int k = i + 1; k < j; ++k) xx[k] = 'Z';
  std::string yy = xx;
  xx[i] = xx[j] = 'X';
  yy[i] = yy[j] = 'Y';
  return {sim::PauliString(xx, 0.25), sim::PauliString(yy, 0.25)};
}

double jw_expectation(const sim::StateVector& state, int i, int j) {
  if (i > j) std::swap(i, j);
  double v = 0.0;
  for (const auto& p : jw_observable(i, j, state.n_qubits())) v += sim::expectation(state, p);
  return v;
}

// ---------------------------------------------------------------- parity

namespace {

void check_pairs(int n, const std::vector<ModePair>& pairs) {
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (auto [a, b] : pairs) {
    if (a < 0 || b >= n || b != a + 1) throw std::invalid_argument("parity pairs must be adjacent (i, i + 1)");
    if (used[a] || used[b]) throw std::invalid_argument("parity pairs overlap");
    used[a] = used[b] = true;
  }
}

}  // namespace

GivensNetwork recompile_parity(const GivensNetwork& network, const std::vector<ModePair>& pairs) {
  check_pairs(network.n_modes, pairs);
  Eigen::MatrixXd layer = Eigen::MatrixXd::Identity(network.n_modes, network.n_modes);
  for (auto [a, b] : pairs) layer = givens_matrix(network.n_modes, {a, std::numbers::pi / 4}) * layer;
  const Eigen::MatrixXd q = network.orbitals() * layer.transpose();
  return givens_decompose(q);
}

void append_parity_layer(sim::Circuit& circuit, const std::vector<ModePair>& pairs) {
  check_pairs(circuit.n_qubits(), pairs);
  for (auto [a, b] : pairs) append_givens_block(circuit, {a, std::numbers::pi / 4});
}

PostSelection post_select(const sim::Histogram& histogram, int n_occ) {
  PostSelection out;
  for (auto [k, count] : histogram) {
    out.total += count;
    if (std::popcount(k) == n_occ) {
      out.kept[k] = count;
      out.retained += count;
    }
  }
  if (out.retained == 0) throw std::runtime_error("post-selection discarded every shot");
  return out;
}

// ---------------------------------------------------------------- McWeeny

Purification mcweeny(const Eigen::MatrixXd& c_in, int max_iter, double tol) {
  if (c_in.rows() != c_in.cols()) throw std::invalid_argument("matrix must be square");
  if ((c_in - c_in.transpose()).norm() > 1e-9 * std::max(1.0, c_in.norm()))
    throw std::invalid_argument("matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c_in, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= -0.5 || es.eigenvalues().maxCoeff() >= 1.5)
    throw std::domain_error("eigenvalues outside the McWeeny convergence basin (-0.5, 1.5)");

  Purification p;
  p.c = c_in;
  const auto n = c_in.rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  for (;;) {
    const Eigen::MatrixXd c2 = p.c * p.c;
    const double residual = (c2 - p.c).norm();
    if (!std::isfinite(residual)) throw std::domain_error("McWeeny iteration diverged");
    p.residuals.push_back(residual);
    if (residual <= tol) {
      p.converged = true;
      break;
    }
    if (p.iterations >= max_iter) break;
    p.c = c2 * (3.0 * eye - 2.0 * p.c);
    p.c = (0.5 * (p.c + p.c.transpose())).eval();
    ++p.iterations;
  }
  p.trace_drift = p.c.trace() - c_in.trace();
  return p;
}

// ---------------------------------------------------------------- estimation

std::vector<std::vector<ModePair>> round_robin_pairs(int n) {
  check_modes(n);
  std::vector<std::vector<ModePair>> rounds;
  const int m = n - 1;
  for (int r = 0; r < m; ++r) {
    std::vector<ModePair> round;
    round.emplace_back(std::min(r, n - 1), std::max(r, n - 1));
    for (int k = 1; k < n / 2; ++k) {
      const int a = (r + k) % m, b = (r - k + m) % m;
      round.emplace_back(std::min(a, b), std::max(a, b));
    }
    rounds.push_back(std::move(round));
  }
  return rounds;
}

namespace {

// Occupation expectations <n_i> from a distribution over outcomes.
Eigen::VectorXd occupations(const std::vector<double>& probs, int n) {
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(n);
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] == 0.0) continue;
    total += probs[k];
    for (int q = 0; q < n; ++q)
      if ((k >> q) & 1) occ(q) += probs[k];
  }
  return occ / total;
}

struct Measured {
  Eigen::VectorXd occ;
  double retention = 1.0;
};

Measured measure(const sim::Circuit& circuit, int n_occ, const EstimateOptions& opt, std::uint64_t seed) {
  const int n = circuit.n_qubits();
  sim::StateVector init(n);
  if (opt.exact) {
    sim::apply_circuit(init, circuit);
    return {occupations(init.probabilities(), n), 1.0};
  }
  Rng rng(seed);
  sim::Histogram h = sim::sample_circuit(init, circuit, opt.noise, opt.shots, opt.trajectories, rng);
  double retention = 1.0;
  if (opt.mitigation.post_select) {
    PostSelection ps = post_select(h, n_occ);
    retention = ps.retained_fraction();
    h = std::move(ps.kept);
  }
  std::vector<double> probs(std::size_t{1} << n, 0.0);
  for (auto [k, count] : h) probs[k] = static_cast<double>(count);
  return {occupations(probs, n), retention};
}

}  // namespace

CorrelationEstimate estimate_correlation_matrix(const HoppingSpec& spec, const EstimateOptions& options,
                                                std::uint64_t seed) {
  spec.validate();
  options.noise.validate();
  if (options.shots == 0) throw std::invalid_argument("shots must be positive");
  const int n = spec.n;
  const int n_occ = n / 2;
  const GroundState gs = ground_correlation(build_hopping(spec), n_occ);

  CorrelationEstimate est;
  est.assembled = Eigen::MatrixXd::Zero(n, n);
  double retention_sum = 0.0;
  auto record = [&](const Measured& m) {
    est.min_retention = std::min(est.min_retention, m.retention);
    retention_sum += m.retention;
    ++est.circuits;
  };

  {
    const Measured diag = measure(givens_to_circuit(givens_decompose(gs.q)), n_occ, options, derive_seed(seed, 0));
    record(diag);
    for (int i = 0; i < n; ++i) est.assembled(i, i) = diag.occ(i);
  }

  const auto rounds = round_robin_pairs(n);
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    // Relabel modes so that every measured pair is adjacent, then prepare
    // the relabeled Slater determinant directly.
    std::vector<int> order;
    std::vector<ModePair> adjacent;
    for (auto [a, b] : rounds[r]) {
      adjacent.emplace_back(static_cast<int>(order.size()), static_cast<int>(order.size()) + 1);
      order.push_back(a);
      order.push_back(b);
    }
    Eigen::MatrixXd qp(n_occ, n);
    for (int pos = 0; pos < n; ++pos) qp.col(pos) = gs.q.col(order[pos]);
    const GivensNetwork net = givens_decompose(qp);
    sim::Circuit circuit(n);
    if (options.mitigation.recompile) {
      circuit = givens_to_circuit(recompile_parity(net, adjacent));
    } else {
      circuit = givens_to_circuit(net);
      append_parity_layer(circuit, adjacent);
    }
    const Measured m = measure(circuit, n_occ, options, derive_seed(seed, r + 1));
    record(m);
    for (std::size_t k = 0; k < adjacent.size(); ++k) {
      const auto [p, q] = adjacent[k];
      const double value = 0.5 * (m.occ(q) - m.occ(p));
      const int a = order[p], b = order[q];
      est.assembled(a, b) = value;
      est.assembled(b, a) = value;
    }
  }
  est.mean_retention = retention_sum / est.circuits;

  est.c = est.assembled;
  if (options.mitigation.mcweeny && !options.exact) {
    const Purification p = mcweeny(est.assembled);
    est.c = p.c;
    est.purified = true;
    est.purification_converged = p.converged;
  }
  return est;
}

// ---------------------------------------------------------------- CSV

void write_correlation_csv(std::ostream& out, const Eigen::MatrixXd& c, int n_occ) {
  out << "n,n_occ\n" << c.rows() << ',' << n_occ << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) out << (j ? "," : "") << c(i, j);
    out << '\n';
  }
}

Eigen::MatrixXd read_correlation_csv(std::istream& in, int* n_occ) {
  std::string line;
  if (!std::getline(in, line) || line != "n,n_occ") throw std::runtime_error("correlation CSV: missing header");
  if (!std::getline(in, line)) throw std::runtime_error("correlation CSV: missing size line");
  int n = 0, occ = 0;
  char comma = 0;
  std::istringstream head(line);
  if (!(head >> n >> comma >> occ) || comma != ',' || n < 1) throw std::runtime_error("correlation CSV: bad size line");
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("correlation CSV: truncated");
    std::istringstream row(line);
    for (int j = 0; j < n; ++j) {
      std::string cell;
      if (!std::getline(row, cell, ',')) throw std::runtime_error("correlation CSV: short row");
      c(i, j) = std::stod(cell);
    }
  }
  if (n_occ) *n_occ = occ;
  return c;
}

}  // namespace shadowlab::fermion
