#include "shadowlab/shadows.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "shadowlab/io.hpp"

namespace shadowlab::shadows {

namespace {

constexpr sim::Complex kI{0.0, 1.0};

Eigen::Vector3d bloch_of(const Eigen::Vector2cd& v) {
  const sim::Complex c = std::conj(v(0)) * v(1);
  return {2.0 * c.real(), 2.0 * c.imag(), std::norm(v(0)) - std::norm(v(1))};
}

// U^dag |b>, the conjugate of row b of U.
Eigen::Vector2cd snapshot_vector(const sim::Mat2& u, int b) { return u.row(b).adjoint(); }

// a (x) b with b on the low bits.
Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

void check_n(int n) {
  if (n < 1 || n > 64) throw std::invalid_argument("shadow qubit count out of range");
}

}  // namespace

sim::Mat2 euler_to_matrix(const Euler& e) {
  const double c = std::cos(e.theta / 2), s = std::sin(e.theta / 2);
  sim::Mat2 u;
  u << c, -std::exp(kI * e.lambda) * s, std::exp(kI * e.phi) * s, std::exp(kI * (e.phi + e.lambda)) * c;
  return u;
}

Euler matrix_to_euler(const sim::Mat2& u) {
  // Strip the global phase so that u = [[a, -conj(b)], [b, conj(a)]].
  const sim::Complex det = u.determinant();
  const sim::Mat2 w = u / std::sqrt(det);
  const sim::Complex a = w(0, 0), b = w(1, 0);
  Euler e;
  e.theta = 2.0 * std::atan2(std::abs(b), std::abs(a));
  // a = e^{-i(p+l)/2} cos, b = e^{i(p-l)/2} sin
  const double sum = std::abs(a) > 1e-300 ? -2.0 * std::arg(a) : 0.0;
  const double diff = std::abs(b) > 1e-300 ? 2.0 * std::arg(b) : 0.0;
  e.phi = 0.5 * (sum + diff);
  e.lambda = 0.5 * (sum - diff);
  return e;
}

// ---------------------------------------------------------------- ShadowSet

ShadowSet::ShadowSet(int n_qubits, std::vector<ShadowRecord> records, Provenance provenance)
    : n_(n_qubits), records_(std::move(records)), provenance_(std::move(provenance)) {
  check_n(n_qubits);
  if (records_.empty()) throw std::invalid_argument("a shadow set needs at least one record");
  const std::size_t T = records_.size();
  const std::uint64_t limit = n_ >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n_) - 1);
  bloch_.assign(static_cast<std::size_t>(n_) * 3 * T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& r = records_[t];
    if (r.unitaries.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("record has wrong qubit count");
    if (r.outcome > limit) throw std::invalid_argument("record outcome has bits beyond n");
    for (int q = 0; q < n_; ++q) {
      const Eigen::Vector3d b = bloch_of(snapshot_vector(euler_to_matrix(r.unitaries[q]), (r.outcome >> q) & 1));
      for (int k = 0; k < 3; ++k) bloch_[(static_cast<std::size_t>(q) * 3 + k) * T + t] = b(k);
    }
  }
}

Eigen::Vector3d ShadowSet::bloch(std::size_t t, int q) const {
  const std::size_t T = records_.size();
  return {bloch_[(static_cast<std::size_t>(q) * 3 + 0) * T + t], bloch_[(static_cast<std::size_t>(q) * 3 + 1) * T + t],
          bloch_[(static_cast<std::size_t>(q) * 3 + 2) * T + t]};
}

// ---------------------------------------------------------------- acquisition

namespace {

ShadowRecord measure_once(sim::StateVector state, const AcquireOptions& options, Rng& rng) {
  const int n = state.n_qubits();
  ShadowRecord rec;
  rec.unitaries.resize(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q) {
    const sim::Mat2 drawn = options.sampler ? options.sampler(rng) : sim::haar_single_qubit(rng);
    rec.unitaries[q] = matrix_to_euler(drawn);
    // Apply the reconstructed matrix so that the stored angles are the
    // ground truth for every later computation.
    sim::apply_gate(state, sim::Gate::single(q, euler_to_matrix(rec.unitaries[q])));
  }
  const auto probs = state.probabilities();
  double u = uniform01(rng);
  std::uint64_t k = 0;
  for (; k + 1 < probs.size(); ++k) {
    u -= probs[k];
    if (u < 0.0) break;
  }
  rec.outcome = sim::corrupt_outcome(k, n, options.noise, rng);
  return rec;
}

template <typename Prepare>
ShadowSet acquire_impl(int n, std::size_t T, std::uint64_t seed, const AcquireOptions& options, Prepare prepare) {
  if (T == 0) throw std::invalid_argument("T must be at least 1");
  options.noise.validate();
  std::vector<ShadowRecord> records(T);
  const auto count = static_cast<long long>(T);
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < count; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    records[static_cast<std::size_t>(t)] = measure_once(prepare(rng), options, rng);
  }
  return ShadowSet(n, std::move(records), Provenance{seed, options.state_desc, options.noise});
}

}  // namespace

ShadowSet acquire(const sim::StateVector& state, std::size_t T, std::uint64_t seed, const AcquireOptions& options) {
  return acquire_impl(state.n_qubits(), T, seed, options, [&](Rng&) { return state; });
}

ShadowSet acquire(const sim::Circuit& preparation, std::size_t T, std::uint64_t seed, const AcquireOptions& options) {
  const int n = preparation.n_qubits();
  if (options.noise.gate_noise_free() && preparation.is_unitary()) {
    sim::StateVector s(n);
    sim::apply_circuit(s, preparation);
    return acquire(s, T, seed, options);
  }
  return acquire_impl(n, T, seed, options, [&](Rng& rng) {
    return sim::run_circuit(sim::StateVector(n), preparation, options.noise, rng).state;
  });
}

// ---------------------------------------------------------------- observables

LocalObservable::LocalObservable(const sim::PauliString& pauli) : support_(pauli.support()), pauli_(pauli) {
  if (support_.size() > 4) throw std::invalid_argument("local observables are limited to 4 qubits");
  matrix_ = Eigen::MatrixXcd::Identity(1, 1) * pauli.coefficient();
  for (int q : support_) matrix_ = kron(sim::pauli_matrix(pauli.at(q)), matrix_);
}

LocalObservable::LocalObservable(std::vector<int> support, Eigen::MatrixXcd matrix)
    : support_(std::move(support)), matrix_(std::move(matrix)) {
  const int k = static_cast<int>(support_.size());
  if (k < 1 || k > 4) throw std::invalid_argument("support must hold 1 to 4 qubits");
  std::vector<int> sorted = support_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0)
    throw std::invalid_argument("support indices must be distinct and non-negative");
  const auto dim = Eigen::Index{1} << k;
  if (matrix_.rows() != dim || matrix_.cols() != dim) throw std::invalid_argument("observable matrix has wrong size");
  if ((matrix_ - matrix_.adjoint()).norm() > 1e-10) throw std::invalid_argument("observable is not Hermitian");
}

double LocalObservable::operator_norm() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(matrix_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double LocalObservable::expectation(const sim::StateVector& state) const {
  if (pauli_) return sim::expectation(state, *pauli_);
  for (int q : support_)
    if (q >= state.n_qubits()) throw std::out_of_range("observable support exceeds state");
  const int k = locality();
  std::uint64_t mask = 0;
  for (int q : support_) mask |= std::uint64_t{1} << q;
  auto local_index = [&](std::uint64_t full) {
    Eigen::Index idx = 0;
    for (int j = 0; j < k; ++j) idx |= static_cast<Eigen::Index>((full >> support_[j]) & 1) << j;
    return idx;
  };
  auto scatter = [&](std::uint64_t base, Eigen::Index local) {
    std::uint64_t full = base;
    for (int j = 0; j < k; ++j)
      if ((local >> j) & 1) full |= std::uint64_t{1} << support_[j];
    return full;
  };
  sim::Complex acc = 0.0;
  for (std::uint64_t i = 0; i < state.dim(); ++i) {
    const Eigen::Index r = local_index(i);
    const std::uint64_t base = i & ~mask;
    for (Eigen::Index c = 0; c < matrix_.cols(); ++c) acc += std::conj(state[i]) * matrix_(r, c) * state[scatter(base, c)];
  }
  return acc.real();
}

double LocalObservable::single_shot(const ShadowSet& set, std::size_t t) const {
  for (int q : support_)
    if (q >= set.n_qubits()) throw std::out_of_range("observable support exceeds shadow width");
  if (pauli_) {
    double v = pauli_->coefficient();
    for (int q : support_) {
      const int axis = pauli_->at(q) == 'X' ? 0 : pauli_->at(q) == 'Y' ? 1 : 2;
      v *= 3.0 * set.bloch(t, q)(axis);
    }
    return v;
  }
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Ones(1, 1);
  for (int q : support_) {
    const Eigen::Vector3d r = set.bloch(t, q);
    // 3 |v><v| - I = (I + 3 r.sigma) / 2
    sim::Mat2 s;
    s << 0.5 * (1 + 3 * r(2)), 1.5 * sim::Complex(r(0), -r(1)), 1.5 * sim::Complex(r(0), r(1)), 0.5 * (1 - 3 * r(2));
    rho = kron(s, rho);
  }
  return (matrix_ * rho).trace().real();
}

Estimate estimate(const ShadowSet& set, const LocalObservable& obs, EstimateOptions options) {
  const std::size_t T = set.size();
  std::vector<double> values(T);
  for (std::size_t t = 0; t < T; ++t) values[t] = obs.single_shot(set, t);
  Estimate e;
  e.samples = T;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(T);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  e.variance = T > 1 ? ss / static_cast<double>(T - 1) : 0.0;
  e.std_error = std::sqrt(e.variance / static_cast<double>(T));
  e.mean = mean;
  const int groups = options.median_of_means_groups;
  if (groups > 1) {
    if (static_cast<std::size_t>(groups) > T) throw std::invalid_argument("more groups than records");
    std::vector<double> means;
    const std::size_t per = T / static_cast<std::size_t>(groups);
    for (int g = 0; g < groups; ++g) {
      double s = 0.0;
      for (std::size_t t = g * per; t < (g + 1) * per; ++t) s += values[t];
      means.push_back(s / static_cast<double>(per));
    }
    std::nth_element(means.begin(), means.begin() + groups / 2, means.end());
    e.mean = means[static_cast<std::size_t>(groups / 2)];
  }
  return e;
}

// ---------------------------------------------------------------- virtual gates

ShadowSet virtual_unitary(const ShadowSet& set, const std::vector<sim::Mat2>& factors) {
  if (factors.size() != static_cast<std::size_t>(set.n_qubits()))
    throw std::invalid_argument("need one single-qubit factor per qubit");
  for (const auto& f : factors)
    if ((f.adjoint() * f - sim::Mat2::Identity()).norm() > 1e-10) throw std::invalid_argument("factor is not unitary");
  std::vector<ShadowRecord> records = set.records();
  for (auto& r : records)
    for (int q = 0; q < set.n_qubits(); ++q)
      if (factors[q] != sim::Mat2::Identity()) r.unitaries[q] = matrix_to_euler(euler_to_matrix(r.unitaries[q]) * factors[q].adjoint());
  Provenance p = set.provenance();
  p.state_desc += p.state_desc.empty() ? "virtual" : "+virtual";
  return ShadowSet(set.n_qubits(), std::move(records), std::move(p));
}

std::vector<sim::Mat2> factorize_product(const Eigen::MatrixXcd& v, int n) {
  const Eigen::Index dim = Eigen::Index{1} << n;
  if (v.rows() != dim || v.cols() != dim) throw std::invalid_argument("matrix size does not match qubit count");
  Eigen::Index r0 = 0, c0 = 0;
  v.cwiseAbs().maxCoeff(&r0, &c0);
  std::vector<sim::Mat2> factors(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q) {
    sim::Mat2 slice;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const Eigen::Index r = (r0 & ~(Eigen::Index{1} << q)) | (Eigen::Index{a} << q);
        const Eigen::Index c = (c0 & ~(Eigen::Index{1} << q)) | (Eigen::Index{b} << q);
        slice(a, b) = v(r, c);
      }
    const double mag = std::sqrt(std::abs(slice.determinant()));
    if (mag < 1e-12) throw std::invalid_argument("matrix does not factorize into single-qubit unitaries");
    factors[q] = slice / mag;
  }
  Eigen::MatrixXcd rebuilt = Eigen::MatrixXcd::Ones(1, 1);
  for (int q = 0; q < n; ++q) rebuilt = kron(factors[q], rebuilt);
  if (sim::unitary_distance_up_to_phase(rebuilt, v) > 1e-8)
    throw std::invalid_argument("matrix does not factorize into single-qubit unitaries");
  return factors;
}

ShadowSet virtual_unitary(const ShadowSet& set, const Eigen::MatrixXcd& v) {
  return virtual_unitary(set, factorize_product(v, set.n_qubits()));
}

// ---------------------------------------------------------------- kernel

double snapshot_overlap(const ShadowSet& a, std::size_t t, const ShadowSet& b, std::size_t t2, int q) {
  if (q < 0 || q >= a.n_qubits() || q >= b.n_qubits() || t >= a.size() || t2 >= b.size())
    throw std::out_of_range("snapshot index out of range");
  const auto& ra = a.records()[t];
  const auto& rb = b.records()[t2];
  const Eigen::Vector2cd va = snapshot_vector(euler_to_matrix(ra.unitaries[q]), (ra.outcome >> q) & 1);
  const Eigen::Vector2cd vb = snapshot_vector(euler_to_matrix(rb.unitaries[q]), (rb.outcome >> q) & 1);
  return 9.0 * std::norm(va.dot(vb)) - 4.0;
}

namespace {

// Lexicographic order on snapshot data, used to evaluate k(a, b) and k(b, a)
// with the same loop orientation so that both are bitwise equal.
bool canonical_first(const ShadowSet& a, const ShadowSet& b) {
  const auto& x = a.bloch_table();
  const auto& y = b.bloch_table();
  if (x.size() != y.size()) return x.size() < y.size();
  return !std::lexicographical_compare(y.begin(), y.end(), x.begin(), x.end());
}

double log_kernel_oriented(const ShadowSet& a, const ShadowSet& b, double tau, double gamma, KernelVariant variant,
                           bool& clamped) {
  const int n = a.n_qubits();
  const std::size_t ta = a.size(), tb = b.size();
  const double* xa = a.bloch_table().data();
  const double* xb = b.bloch_table().data();
  const bool off = variant == KernelVariant::off_diagonal;
  // Sum_q Tr(sigma sigma~) = n/2 + (9/2) Sum_q r.r~
  const double scale = gamma * 4.5 / n;
  const double offset = gamma * 0.5;
  Eigen::ArrayXd acc(static_cast<Eigen::Index>(tb));
  double total = 0.0;
  for (std::size_t t = 0; t < ta; ++t) {
    acc.setZero();
    for (int q = 0; q < n; ++q) {
      const std::size_t base = static_cast<std::size_t>(q) * 3;
      const double ax = xa[(base + 0) * ta + t], ay = xa[(base + 1) * ta + t], az = xa[(base + 2) * ta + t];
      const double* bx = xb + (base + 0) * tb;
      const double* by = xb + (base + 1) * tb;
      const double* bz = xb + (base + 2) * tb;
      for (std::size_t s = 0; s < tb; ++s) acc[static_cast<Eigen::Index>(s)] += ax * bx[s] + ay * by[s] + az * bz[s];
    }
    acc = offset + scale * acc;
    if (acc.maxCoeff() > kExpClamp) {
      clamped = true;
      acc = acc.min(kExpClamp);
    }
    if (off && t < tb) acc[static_cast<Eigen::Index>(t)] = -std::numeric_limits<double>::infinity();
    total += acc.exp().sum();
  }
  const double pairs = off ? static_cast<double>(ta) * static_cast<double>(ta - 1) : static_cast<double>(ta * tb);
  return tau * total / pairs;
}

double log_kernel(const ShadowSet& a, const ShadowSet& b, double tau, double gamma, KernelVariant variant,
                  bool& clamped) {
  if (a.n_qubits() != b.n_qubits()) throw std::invalid_argument("shadow sets have different qubit counts");
  if (variant == KernelVariant::off_diagonal) {
    if (a.size() != b.size()) throw std::invalid_argument("off-diagonal kernel needs equal T");
    if (a.size() < 2) throw std::invalid_argument("off-diagonal kernel needs T >= 2");
  }
  if (!std::isfinite(tau) || !std::isfinite(gamma)) throw std::invalid_argument("kernel hyperparameters must be finite");
  return canonical_first(a, b) ? log_kernel_oriented(a, b, tau, gamma, variant, clamped)
                               : log_kernel_oriented(b, a, tau, gamma, variant, clamped);
}

}  // namespace

KernelValue shadow_kernel(const ShadowSet& a, const ShadowSet& b, double tau, double gamma, KernelVariant variant) {
  KernelValue k;
  k.log_value = log_kernel(a, b, tau, gamma, variant, k.clamped);
  if (k.log_value > kExpClamp) k.clamped = true;
  k.value = std::exp(std::min(k.log_value, kExpClamp));
  return k;
}

Eigen::MatrixXd GramMatrix::raw() const { return log_k.array().min(kExpClamp).exp().matrix(); }

Eigen::MatrixXd GramMatrix::normalized() const {
  const Eigen::VectorXd d = log_k.diagonal();
  return normalize_cross(log_k, d, d);
}

GramMatrix gram(const std::vector<ShadowSet>& sets, double tau, double gamma, KernelVariant variant) {
  if (sets.empty()) throw std::invalid_argument("gram needs at least one shadow set");
  for (const auto& s : sets)
    if (s.n_qubits() != sets.front().n_qubits()) throw std::invalid_argument("shadow sets have mixed qubit counts");
  const auto n = static_cast<long long>(sets.size());
  GramMatrix g;
  g.log_k = Eigen::MatrixXd::Zero(n, n);
  std::vector<std::pair<long long, long long>> pairs;
  for (long long i = 0; i < n; ++i)
    for (long long j = i; j < n; ++j) pairs.emplace_back(i, j);
  bool clamped = false;
  const auto count = static_cast<long long>(pairs.size());
#pragma omp parallel for schedule(dynamic) reduction(|| : clamped)
  for (long long p = 0; p < count; ++p) {
    const auto [i, j] = pairs[static_cast<std::size_t>(p)];
    bool c = false;
    const double v = log_kernel(sets[i], sets[j], tau, gamma, variant, c);
    g.log_k(i, j) = v;
    g.log_k(j, i) = v;
    clamped = clamped || c;
  }
  g.clamped = clamped;
  return g;
}

Eigen::MatrixXd cross_log_kernel(const std::vector<ShadowSet>& rows, const std::vector<ShadowSet>& cols, double tau,
                                 double gamma, KernelVariant variant, bool* clamped) {
  const auto nr = static_cast<long long>(rows.size()), nc = static_cast<long long>(cols.size());
  Eigen::MatrixXd out(nr, nc);
  bool any = false;
#pragma omp parallel for schedule(dynamic) reduction(|| : any)
  for (long long p = 0; p < nr * nc; ++p) {
    const long long i = p / nc, j = p % nc;
    bool c = false;
    out(i, j) = log_kernel(rows[i], cols[j], tau, gamma, variant, c);
    any = any || c;
  }
  if (clamped) *clamped = any;
  return out;
}

Eigen::MatrixXd normalize_cross(const Eigen::MatrixXd& log_cross, const Eigen::VectorXd& log_self_rows,
                                const Eigen::VectorXd& log_self_cols) {
  if (log_cross.rows() != log_self_rows.size() || log_cross.cols() != log_self_cols.size())
    throw std::invalid_argument("normalization vectors do not match the kernel shape");
  Eigen::MatrixXd k(log_cross.rows(), log_cross.cols());
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      k(i, j) = std::exp(log_cross(i, j) - 0.5 * (log_self_rows(i) + log_self_cols(j)));
  return k;
}

// ---------------------------------------------------------------- persistence

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json noise_json(const sim::NoiseModel& n) {
  nlohmann::json j{{"p_single", n.p_single}, {"p_two", n.p_two}, {"p_m", n.p_m}, {"p_global", n.p_global}};
  if (n.p_m10) j["p_m10"] = *n.p_m10;
  return j;
}

sim::NoiseModel noise_from_json(const nlohmann::json& j) {
  sim::NoiseModel n;
  n.p_single = j.value("p_single", 0.0);
  n.p_two = j.value("p_two", 0.0);
  n.p_m = j.value("p_m", 0.0);
  n.p_global = j.value("p_global", 0.0);
  if (j.contains("p_m10")) n.p_m10 = j.at("p_m10").get<double>();
  n.validate();
  return n;
}

}  // namespace

void save(const ShadowSet& set, std::ostream& out) {
  const auto& p = set.provenance();
  nlohmann::json header{{"version", 1},         {"n", set.n_qubits()},          {"T", set.size()},
                        {"seed", p.seed},       {"state_desc", p.state_desc}, {"noise", noise_json(p.noise)}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < set.size(); ++t) {
    const auto& r = set.records()[t];
    out << "{\"t\":" << t << ",\"b\":\"" << sim::bitstring(r.outcome, set.n_qubits()) << "\",\"u\":[";
    for (std::size_t q = 0; q < r.unitaries.size(); ++q) {
      const auto& e = r.unitaries[q];
      out << (q ? "," : "") << '[' << fmt17(e.theta) << ',' << fmt17(e.phi) << ',' << fmt17(e.lambda) << ']';
    }
    out << "]}\n";
  }
}

ShadowSet load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("shadow file is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed shadow header: ") + e.what());
  }
  if (header.value("version", -1) != 1) throw std::runtime_error("unsupported shadow file version");
  const int n = header.at("n").get<int>();
  const auto T = header.at("T").get<std::size_t>();
  check_n(n);
  Provenance prov{header.value("seed", std::uint64_t{0}), header.value("state_desc", std::string()),
                  noise_from_json(header.value("noise", nlohmann::json::object()))};
  std::vector<ShadowRecord> records;
  records.reserve(T);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("malformed shadow record: ") + e.what());
    }
    if (j.at("t").get<std::size_t>() != records.size()) throw std::runtime_error("shadow records out of order");
    const auto b = j.at("b").get<std::string>();
    const auto& u = j.at("u");
    if (b.size() != static_cast<std::size_t>(n) || u.size() != static_cast<std::size_t>(n))
      throw std::runtime_error("shadow record width does not match header n");
    ShadowRecord r;
    r.outcome = sim::parse_bitstring(b);
    for (const auto& e : u) {
      if (e.size() != 3) throw std::runtime_error("Euler triple expected");
      r.unitaries.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
    }
    records.push_back(std::move(r));
  }
  if (records.size() != T) throw std::runtime_error("shadow record count does not match header T");
  return ShadowSet(n, std::move(records), std::move(prov));
}

void save(const ShadowSet& set, const std::string& path) {
  std::ostringstream ss;
  save(set, ss);
  io::write_file_atomic(path, ss.str());
}

ShadowSet load(const std::string& path) {
  std::istringstream ss(io::read_file(path));
  return load(ss);
}

}  // namespace shadowlab::shadows
