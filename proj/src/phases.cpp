#include "shadowlab/phases.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "shadowlab/io.hpp"

namespace shadowlab::phases {

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

std::string pauli_letters(int n, const std::vector<std::pair<int, char>>& sites) {
  std::string s(static_cast<std::size_t>(n), 'I');
  for (auto [q, c] : sites) s[static_cast<std::size_t>(wrap(q, n))] = c;
  return s;
}

std::uint64_t mask_of(const std::vector<int>& support) {
  std::uint64_t m = 0;
  for (int q : support) m |= std::uint64_t{1} << q;
  return m;
}

int popcount_parity(std::uint64_t v) { return __builtin_popcountll(v) & 1; }

// Solves A x = b over GF(2), rows of A as bit masks over columns. Returns
// std::nullopt if inconsistent.
std::optional<std::uint64_t> solve_gf2(std::vector<std::uint64_t> rows, std::vector<int> rhs, int n_cols) {
  const std::size_t m = rows.size();
  std::vector<int> pivot_col;
  std::size_t r = 0;
  for (int c = 0; c < n_cols && r < m; ++c) {
    std::size_t sel = r;
    while (sel < m && !((rows[sel] >> c) & 1)) ++sel;
    if (sel == m) continue;
    std::swap(rows[sel], rows[r]);
    std::swap(rhs[sel], rhs[r]);
    for (std::size_t k = 0; k < m; ++k)
      if (k != r && ((rows[k] >> c) & 1)) {
        rows[k] ^= rows[r];
        rhs[k] ^= rhs[r];
      }
    pivot_col.push_back(c);
    ++r;
  }
  for (std::size_t k = r; k < m; ++k)
    if (rhs[k]) return std::nullopt;
  std::uint64_t x = 0;
  for (std::size_t k = 0; k < r; ++k)
    if (rhs[k]) x |= std::uint64_t{1} << pivot_col[k];
  return x;
}

}  // namespace

sim::StateVector prepare_cluster(int n, bool periodic) {
  if (n < 3) throw std::invalid_argument("cluster state needs n >= 3");
  sim::Circuit c(n);
  for (int q = 0; q < n; ++q) c.h(q);
  for (int q = 0; q + 1 < n; ++q) c.cz(q, q + 1);
  if (periodic) c.cz(n - 1, 0);
  sim::StateVector s(n);
  sim::apply_circuit(s, c);
  return s;
}

sim::StateVector prepare_product_x(int n) {
  if (n < 1) throw std::invalid_argument("need at least one qubit");
  sim::Circuit c(n);
  for (int q = 0; q < n; ++q) c.h(q);
  sim::StateVector s(n);
  sim::apply_circuit(s, c);
  return s;
}

sim::PauliString cluster_stabilizer(int n, int i) {
  return sim::PauliString(pauli_letters(n, {{i - 1, 'Z'}, {i, 'X'}, {i + 1, 'Z'}}));
}

sim::PauliString sop_string(int n, int a, int b) {
  const int len = b - a;
  if (len < 2 || len % 2 != 0) throw std::invalid_argument("string order needs b - a even and >= 2");
  if (len > n - 2) throw std::invalid_argument("string order endpoints overlap on the ring");
  std::vector<std::pair<int, char>> sites{{a, 'Z'}, {b, 'Z'}};
  for (int k = a + 1; k < b; k += 2) sites.emplace_back(k, 'X');
  return sim::PauliString(pauli_letters(n, sites));
}

double sop(const sim::StateVector& state, int a, int b) {
  return sim::expectation(state, sop_string(state.n_qubits(), a, b));
}

std::string to_string(Symmetry s) {
  switch (s) {
    case Symmetry::z2xz2:
      return "Z2xZ2";
    case Symmetry::trs:
      return "TRS";
    case Symmetry::none:
      return "none";
  }
  return "unknown";
}

Symmetry symmetry_from_string(const std::string& name) {
  if (name == "Z2xZ2" || name == "z2xz2") return Symmetry::z2xz2;
  if (name == "TRS" || name == "trs") return Symmetry::trs;
  if (name == "none") return Symmetry::none;
  throw std::invalid_argument("unknown symmetry: " + name);
}

const std::vector<std::string>& generator_set(Symmetry s) {
  static const std::vector<std::string> z2{"II", "XI", "IX", "XX"};
  static const std::vector<std::string> trs{"II", "ZI", "IZ", "ZY", "YZ", "ZX", "XZ"};
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v;
    for (char a : std::string("IXYZ"))
      for (char b : std::string("IXYZ")) v.push_back(std::string{a, b});
    return v;
  }();
  switch (s) {
    case Symmetry::z2xz2:
      return z2;
    case Symmetry::trs:
      return trs;
    case Symmetry::none:
      return all;
  }
  throw std::invalid_argument("unknown symmetry");
}

std::vector<std::pair<int, int>> brickwork_pairs(int n, int layer) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("brickwork needs an even qubit count");
  std::vector<std::pair<int, int>> pairs;
  for (int i = layer % 2; i < n; i += 2) pairs.emplace_back(i, (i + 1) % n);
  return pairs;
}

sim::Circuit symmetric_random_circuit(int n, Symmetry symmetry, int layers, Rng& rng) {
  if (layers < 0) throw std::invalid_argument("layer count must be non-negative");
  const auto& gens = generator_set(symmetry);
  std::uniform_int_distribution<std::size_t> pick(0, gens.size() - 1);
  sim::Circuit c(n);
  for (int l = 0; l < layers; ++l)
    for (auto [a, b] : brickwork_pairs(n, l)) {
      const std::string& p = gens[pick(rng)];
      const double theta = 2.0 * std::numbers::pi * uniform01(rng);
      c.add(sim::Gate::pauli_exp(theta, {a, b}, p));
    }
  return c;
}

// ---------------------------------------------------------------- surface code

std::uint64_t SurfaceCodeLayout::correction_for(std::uint64_t syndrome) const {
  std::uint64_t z = 0;
  for (std::size_t p = 0; p < corrections.size(); ++p)
    if ((syndrome >> p) & 1) z ^= corrections[p];
  return z;
}

std::string SurfaceCodeLayout::to_json() const {
  nlohmann::json j{{"d_code", d},
                   {"n_data", n_data},
                   {"x_plaquettes", x_plaquettes},
                   {"z_plaquettes", z_plaquettes},
                   {"logical_z", logical_z},
                   {"logical_x", logical_x}};
  nlohmann::json corr = nlohmann::json::array();
  for (auto m : corrections) {
    std::vector<int> support;
    for (int q = 0; q < n_data; ++q)
      if ((m >> q) & 1) support.push_back(q);
    corr.push_back(support);
  }
  j["corrections"] = corr;
  return j.dump(2);
}

SurfaceCodeLayout surface_layout(int d) {
  if (d != 2 && d != 3) throw std::invalid_argument("supported code distances are 2 and 3");
  SurfaceCodeLayout l;
  l.d = d;
  l.n_data = d * d;
  // Plaquette (r, c) covers data (r..r+1, c..c+1); X type when r + c is even.
  // Weight-2 X plaquettes sit on the top and bottom edges, Z on the left and
  // right edges.
  for (int r = -1; r < d; ++r)
    for (int c = -1; c < d; ++c) {
      std::vector<int> support;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          if (r + a >= 0 && r + a < d && c + b >= 0 && c + b < d) support.push_back((r + a) * d + (c + b));
      const bool x_type = wrap(r + c, 2) == 0;
      if (support.size() == 4) {
        (x_type ? l.x_plaquettes : l.z_plaquettes).push_back(support);
      } else if (support.size() == 2) {
        const bool horizontal_edge = r == -1 || r == d - 1;
        const bool vertical_edge = c == -1 || c == d - 1;
        if (x_type && horizontal_edge) l.x_plaquettes.push_back(support);
        if (!x_type && vertical_edge) l.z_plaquettes.push_back(support);
      }
    }
  for (int c = 0; c < d; ++c) l.logical_z.push_back(c);
  for (int r = 0; r < d; ++r) l.logical_x.push_back(r * d);

  std::vector<std::uint64_t> rows;
  for (const auto& p : l.x_plaquettes) rows.push_back(mask_of(p));
  for (std::size_t p = 0; p < l.x_plaquettes.size(); ++p) {
    std::vector<int> rhs(rows.size(), 0);
    rhs[p] = 1;
    const auto sol = solve_gf2(rows, rhs, l.n_data);
    if (!sol) throw std::logic_error("plaquette syndrome has no Z correction");
    l.corrections.push_back(*sol);
  }
  return l;
}

sim::PauliString x_stabilizer(const SurfaceCodeLayout& layout, std::size_t p) {
  std::vector<std::pair<int, char>> sites;
  for (int q : layout.x_plaquettes.at(p)) sites.emplace_back(q, 'X');
  return sim::PauliString(pauli_letters(layout.n_data, sites));
}

sim::PauliString z_stabilizer(const SurfaceCodeLayout& layout, std::size_t s) {
  std::vector<std::pair<int, char>> sites;
  for (int q : layout.z_plaquettes.at(s)) sites.emplace_back(q, 'Z');
  return sim::PauliString(pauli_letters(layout.n_data, sites));
}

sim::StateVector logical_zero_projector(const SurfaceCodeLayout& layout) {
  sim::StateVector s(layout.n_data);
  auto a = s.amplitudes();
  std::vector<sim::Complex> tmp(a.size());
  for (const auto& p : layout.x_plaquettes) {
    const std::uint64_t m = mask_of(p);
    for (std::size_t k = 0; k < a.size(); ++k) tmp[k] = a[k] + a[k ^ m];
    std::copy(tmp.begin(), tmp.end(), a.begin());
  }
  double norm = 0.0;
  for (const auto& v : a) norm += std::norm(v);
  for (auto& v : a) v /= std::sqrt(norm);
  return s;
}

sim::Circuit logical_zero_protocol(const SurfaceCodeLayout& layout, bool correct,
                                   const std::vector<std::optional<int>>& forced) {
  const int anc = layout.n_data;
  const std::size_t np = layout.x_plaquettes.size();
  if (!forced.empty() && forced.size() != np) throw std::invalid_argument("one forced entry per plaquette expected");
  sim::Circuit c(layout.n_data + 1);
  std::vector<int> slots;
  for (std::size_t p = 0; p < np; ++p) {
    c.reset(anc);
    c.h(anc);
    for (int q : layout.x_plaquettes[p]) c.cx(anc, q);
    c.h(anc);
    slots.push_back(c.measure(anc, forced.empty() ? std::nullopt : forced[p]));
  }
  c.reset(anc);
  if (correct) {
    for (int q = 0; q < layout.n_data; ++q) {
      std::vector<int> trigger;
      for (std::size_t p = 0; p < np; ++p)
        if ((layout.corrections[p] >> q) & 1) trigger.push_back(slots[p]);
      if (!trigger.empty()) c.conditional(sim::Gate::single(q, sim::pauli_matrix('Z')), trigger);
    }
  }
  return c;
}

ProtocolResult run_logical_zero_protocol(const SurfaceCodeLayout& layout, Rng& rng, bool correct,
                                         const std::vector<std::optional<int>>& forced) {
  const sim::Circuit c = logical_zero_protocol(layout, correct, forced);
  const auto run = sim::run_circuit(sim::StateVector(layout.n_data + 1), c, sim::NoiseModel{}, rng);
  // The ancilla ends reset to |0>, so the data register is the lower half.
  const auto amps = run.state.amplitudes();
  std::vector<sim::Complex> data(amps.begin(), amps.begin() + (std::ptrdiff_t{1} << layout.n_data));
  ProtocolResult out{sim::StateVector::from_amplitudes(layout.n_data, std::move(data)), run.bits};
  return out;
}

sim::StateVector prepare_logical_zero(const SurfaceCodeLayout& layout, PrepMode mode, Rng& rng) {
  if (mode == PrepMode::projector) return logical_zero_projector(layout);
  return run_logical_zero_protocol(layout, rng).state;
}

std::vector<std::pair<int, int>> grid_edges(int rows, int cols, int layer) {
  std::vector<std::pair<int, int>> e;
  switch (layer % 4) {
    case 0:
    case 1:
      for (int r = 0; r < rows; ++r)
        for (int c = layer % 4; c + 1 < cols; c += 2) e.emplace_back(r * cols + c, r * cols + c + 1);
      break;
    default:
      for (int r = layer % 4 - 2; r + 1 < rows; r += 2)
        for (int c = 0; c < cols; ++c) e.emplace_back(r * cols + c, (r + 1) * cols + c);
      break;
  }
  return e;
}

sim::Circuit local_random_circuit(int rows, int cols, int d_lu, Rng& rng) {
  if (d_lu < 0 || d_lu > 5) throw std::invalid_argument("d_LU must lie in [0, 5]");
  const int n = rows * cols;
  sim::Circuit c(n);
  for (int l = 0; l < d_lu; ++l) {
    for (auto [a, b] : grid_edges(rows, cols, l)) c.cx(a, b);
    for (int q = 0; q < n; ++q) c.add(sim::Gate::single(q, sim::haar_single_qubit(rng)));
  }
  return c;
}

sim::Circuit random_product_circuit(int n, Rng& rng) {
  sim::Circuit c(n);
  for (int q = 0; q < n; ++q) c.add(sim::Gate::single(q, sim::haar_single_qubit(rng)));
  return c;
}

// ---------------------------------------------------------------- Cluster-Ising

void ClusterIsingSpec::validate() const {
  if (n < 3 || n > 14) throw std::invalid_argument("Cluster-Ising ring needs 3 <= n <= 14");
  if (!std::isfinite(j) || !std::isfinite(h1) || !std::isfinite(h2))
    throw std::invalid_argument("Cluster-Ising couplings must be finite");
}

void RealPauliSum::apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
  const std::uint64_t dim = std::uint64_t{1} << n;
  out.setZero(static_cast<Eigen::Index>(dim));
  for (const auto& t : terms)
    for (std::uint64_t k = 0; k < dim; ++k) {
      // <k ^ x| X^x Z^z |k> = (-1)^{popcount(k & z)}
      const double sign = popcount_parity(k & t.z_mask) ? -1.0 : 1.0;
      out(static_cast<Eigen::Index>(k ^ t.x_mask)) += t.coeff * sign * in(static_cast<Eigen::Index>(k));
    }
}

Eigen::MatrixXd RealPauliSum::dense() const {
  const Eigen::Index dim = Eigen::Index{1} << n;
  Eigen::MatrixXd h(dim, dim);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim), col;
  for (Eigen::Index k = 0; k < dim; ++k) {
    e(k) = 1.0;
    apply(e, col);
    h.col(k) = col;
    e(k) = 0.0;
  }
  return h;
}

RealPauliSum cluster_ising_hamiltonian(const ClusterIsingSpec& spec) {
  spec.validate();
  const int n = spec.n;
  RealPauliSum h;
  h.n = n;
  auto bit = [n](int i) { return std::uint64_t{1} << wrap(i, n); };
  for (int i = 0; i < n; ++i) {
    h.terms.push_back({bit(i + 1), bit(i) | bit(i + 2), -spec.j});
    if (spec.h1 != 0.0) h.terms.push_back({bit(i), 0, -spec.h1});
    if (spec.h2 != 0.0) h.terms.push_back({bit(i) | bit(i + 1), 0, -spec.h2});
  }
  return h;
}

RealPauliSum zxz_hamiltonian(int n) { return cluster_ising_hamiltonian({n, 1.0, 0.0, 0.0}); }

EigenResult lanczos_ground(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
                           Eigen::Index dim, double tol, int max_restarts, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("dimension must be positive");
  Rng rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd start(dim);
  for (Eigen::Index i = 0; i < dim; ++i) start(i) = g(rng);
  start.normalize();
  const Eigen::Index krylov = std::min<Eigen::Index>(dim, 120);
  EigenResult best;
  Eigen::VectorXd w;
  for (int restart = 0; restart <= max_restarts; ++restart) {
    Eigen::MatrixXd v(dim, krylov);
    std::vector<double> alpha, beta;
    v.col(0) = start;
    Eigen::Index m = 0;
    for (; m < krylov; ++m) {
      apply(v.col(m), w);
      const double a = v.col(m).dot(w);
      alpha.push_back(a);
      // Full reorthogonalization, applied twice for stability.
      for (int pass = 0; pass < 2; ++pass) w -= v.leftCols(m + 1) * (v.leftCols(m + 1).transpose() * w);
      const double b = w.norm();
      if (m + 1 == krylov || b < 1e-12) {
        ++m;
        break;
      }
      beta.push_back(b);
      v.col(m + 1) = w / b;
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    Eigen::VectorXd ritz = v.leftCols(m) * es.eigenvectors().col(0);
    ritz.normalize();
    apply(ritz, w);
    const double e = ritz.dot(w);
    best.energy = e;
    best.vector = ritz;
    best.residual = (w - e * ritz).norm();
    best.iterations += static_cast<int>(m);
    if (best.residual <= tol) return best;
    start = ritz;
  }
  throw std::runtime_error("Lanczos did not converge");
}

GroundStateResult cluster_ising_ground(const ClusterIsingSpec& spec) {
  const RealPauliSum h = cluster_ising_hamiltonian(spec);
  const auto r = lanczos_ground([&](const Eigen::VectorXd& in, Eigen::VectorXd& out) { h.apply(in, out); },
                                Eigen::Index{1} << spec.n);
  std::vector<sim::Complex> amps(static_cast<std::size_t>(r.vector.size()));
  for (Eigen::Index i = 0; i < r.vector.size(); ++i) amps[static_cast<std::size_t>(i)] = r.vector(i);
  return {sim::StateVector::from_amplitudes(spec.n, std::move(amps)), r.energy, r.residual};
}

double mean_long_sop(const sim::StateVector& state) {
  const int n = state.n_qubits();
  int len = n - 2;
  if (len % 2) --len;
  double s = 0.0;
  for (int a = 0; a < n; ++a) s += sop(state, a, a + len);
  return s / n;
}

// ---------------------------------------------------------------- datasets

std::vector<shadows::ShadowSet> PhaseDataset::shadow_sets() const {
  std::vector<shadows::ShadowSet> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.shadows);
  return out;
}

std::vector<int> PhaseDataset::labels() const {
  std::vector<int> out;
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

void PhaseDataset::validate() const {
  if (entries.empty()) throw std::invalid_argument("empty phase dataset");
  bool ordered = false, trivial = false;
  for (const auto& e : entries) {
    if (e.shadows.n_qubits() != entries.front().shadows.n_qubits())
      throw std::invalid_argument("phase dataset has mixed qubit counts");
    if (e.label == kOrdered) {
      ordered = true;
    } else if (e.label == kTrivial) {
      trivial = true;
    } else {
      throw std::invalid_argument("phase labels must be +1 or -1");
    }
  }
  if (!ordered || !trivial) throw std::invalid_argument("phase dataset needs both labels");
}

namespace {

template <typename Make>
std::vector<PhaseEntry> build_entries(int count, Make make) {
  std::vector<std::optional<PhaseEntry>> slots(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) slots[static_cast<std::size_t>(i)].emplace(make(i));
  std::vector<PhaseEntry> entries;
  entries.reserve(slots.size());
  for (auto& s : slots) entries.push_back(std::move(*s));
  return entries;
}

std::string fmt_matrix_euler(const sim::Mat2& u) {
  const auto e = shadows::matrix_to_euler(u);
  char buf[96];
  std::snprintf(buf, sizeof buf, "[%.17g,%.17g,%.17g]", e.theta, e.phi, e.lambda);
  return buf;
}

}  // namespace

PhaseDataset build_spt_dataset(const SptConfig& config) {
  if (config.per_class < 1) throw std::invalid_argument("need at least one entry per class");
  const sim::StateVector cluster = prepare_cluster(config.n);
  const sim::StateVector plus = prepare_product_x(config.n);
  PhaseDataset d;
  d.entries = build_entries(2 * config.per_class, [&](int i) {
    const std::uint64_t seed = derive_seed(config.seed, "spt", static_cast<std::uint64_t>(i));
    Rng rng(seed);
    const bool ordered = i % 2 == 0;
    sim::StateVector s = ordered ? cluster : plus;
    sim::apply_circuit(s, symmetric_random_circuit(config.n, config.symmetry, config.layers, rng));
    shadows::AcquireOptions opt;
    opt.state_desc = std::string(ordered ? "cluster" : "plus") + "+" + to_string(config.symmetry) + "x" +
                     std::to_string(config.layers);
    PhaseEntry e{shadows::acquire(s, config.T, derive_seed(seed, 1), opt), ordered ? kOrdered : kTrivial, seed, {}};
    e.generator = {{"fixed_point", ordered ? "cluster" : "product_x"},
                   {"symmetry", to_string(config.symmetry)},
                   {"layers", std::to_string(config.layers)},
                   {"brickwork", "(0,1),(2,3),...|(1,2),...,(n-1,0)"}};
    return e;
  });
  return d;
}

PhaseDataset build_topo_dataset(const TopoConfig& config) {
  if (config.per_class < 1) throw std::invalid_argument("need at least one entry per class");
  const SurfaceCodeLayout layout = surface_layout(config.d_code);
  const int n = layout.n_data;
  PhaseDataset d;
  d.entries = build_entries(2 * config.per_class, [&](int i) {
    const std::uint64_t seed = derive_seed(config.seed, "topo", static_cast<std::uint64_t>(i));
    Rng rng(seed);
    const bool ordered = i % 2 == 0;
    shadows::AcquireOptions opt;
    std::map<std::string, std::string> gen;
    auto make_set = [&]() -> shadows::ShadowSet {
      if (ordered && !config.control) {
        const auto prep = run_logical_zero_protocol(layout, rng);
        std::vector<sim::Mat2> virt;
        std::string angles = "[";
        for (int q = 0; q < n; ++q) {
          virt.push_back(sim::haar_single_qubit(rng));
          angles += (q ? "," : "") + fmt_matrix_euler(virt.back());
        }
        angles += "]";
        std::string syn;
        for (int b : prep.syndrome) syn += static_cast<char>('0' + b);
        gen = {{"fixed_point", "logical_zero"}, {"virtual_unitaries", angles}, {"syndrome", syn}};
        opt.state_desc = "logical_zero+virtual";
        return shadows::virtual_unitary(shadows::acquire(prep.state, config.T, derive_seed(seed, 1), opt), virt);
      }
      sim::Circuit c = random_product_circuit(n, rng);
      if (ordered) {
        // Same entangling pattern as the plaquette projections, with random
        // local gates in place of the Hadamards and no measurement.
        for (const auto& p : layout.x_plaquettes) {
          c.add(sim::Gate::single(p[0], sim::haar_single_qubit(rng)));
          for (std::size_t k = 1; k < p.size(); ++k) c.cx(p[0], p[k]);
        }
        gen = {{"fixed_point", "control"}};
        opt.state_desc = "control";
      } else {
        c.append(local_random_circuit(layout.d, layout.d, config.d_lu, rng));
        gen = {{"fixed_point", "random_product"}, {"d_lu", std::to_string(config.d_lu)}};
        opt.state_desc = "product+LU" + std::to_string(config.d_lu);
      }
      sim::StateVector s(n);
      sim::apply_circuit(s, c);
      return shadows::acquire(s, config.T, derive_seed(seed, 1), opt);
    };
    shadows::ShadowSet set = make_set();
    PhaseEntry e{std::move(set), ordered ? kOrdered : kTrivial, seed, std::move(gen)};
    return e;
  });
  return d;
}

PhaseEntry cluster_ising_entry(const ClusterIsingSpec& spec, std::size_t T, std::uint64_t seed, int label) {
  const auto g = cluster_ising_ground(spec);
  shadows::AcquireOptions opt;
  char buf[96];
  std::snprintf(buf, sizeof buf, "cluster_ising(h1=%.17g,h2=%.17g)", spec.h1, spec.h2);
  opt.state_desc = buf;
  PhaseEntry e{shadows::acquire(g.state, T, seed, opt), label, seed, {}};
  std::snprintf(buf, sizeof buf, "%.17g", spec.h1);
  e.generator["h1"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", spec.h2);
  e.generator["h2"] = buf;
  e.generator["boundary"] = "periodic";
  return e;
}

void save_dataset(const PhaseDataset& data, const std::string& dir) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < data.entries.size(); ++i) {
    const auto& e = data.entries[i];
    const std::string file = "entry_" + std::to_string(i) + ".jsonl";
    shadows::save(e.shadows, (std::filesystem::path(dir) / file).string());
    entries.push_back({{"label", e.label}, {"shadow_file", file}, {"generator", e.generator}, {"seed", e.seed}});
  }
  nlohmann::json manifest{{"entries", entries}};
  io::write_file_atomic((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

PhaseDataset load_dataset(const std::string& dir) {
  const auto j = nlohmann::json::parse(io::read_file((std::filesystem::path(dir) / "manifest.json").string()));
  PhaseDataset d;
  for (const auto& e : j.at("entries")) {
    PhaseEntry entry{shadows::load((std::filesystem::path(dir) / e.at("shadow_file").get<std::string>()).string()),
                     e.at("label").get<int>(), e.at("seed").get<std::uint64_t>(),
                     e.at("generator").get<std::map<std::string, std::string>>()};
    d.entries.push_back(std::move(entry));
  }
  d.validate();
  return d;
}

}  // namespace shadowlab::phases
