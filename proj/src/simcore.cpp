#include "shadowlab/simcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace shadowlab::sim {

namespace {

constexpr Complex kI{0.0, 1.0};

bool is_unitary(const Mat2& u) {
  return (u.adjoint() * u - Mat2::Identity()).norm() <= kUnitaryTol;
}

void check_qubit(int q, int n) {
  if (q < 0 || q >= n) throw std::out_of_range("qubit index " + std::to_string(q) + " out of range");
}

void apply_single(std::span<Complex> a, int q, const Mat2& u) {
  const std::size_t stride = std::size_t{1} << q;
  const std::size_t dim = a.size();
  const Complex u00 = u(0, 0), u01 = u(0, 1), u10 = u(1, 0), u11 = u(1, 1);
  for (std::size_t base = 0; base < dim; base += 2 * stride) {
    for (std::size_t j = base; j < base + stride; ++j) {
      const Complex a0 = a[j];
      const Complex a1 = a[j + stride];
      a[j] = u00 * a0 + u01 * a1;
      a[j + stride] = u10 * a0 + u11 * a1;
    }
  }
}

void apply_cx(std::span<Complex> a, int c, int t) {
  const std::size_t cm = std::size_t{1} << c;
  const std::size_t tm = std::size_t{1} << t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((i & cm) && !(i & tm)) std::swap(a[i], a[i | tm]);
  }
}

void apply_cz(std::span<Complex> a, int q0, int q1) {
  const std::size_t m = (std::size_t{1} << q0) | (std::size_t{1} << q1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((i & m) == m) a[i] = -a[i];
  }
}

void apply_two(std::span<Complex> a, int q0, int q1, const Mat4& u) {
  const std::size_t m0 = std::size_t{1} << q0;
  const std::size_t m1 = std::size_t{1} << q1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i & (m0 | m1)) continue;
    const std::size_t idx[4] = {i, i | m0, i | m1, i | m0 | m1};
    Complex in[4];
    for (int k = 0; k < 4; ++k) in[k] = a[idx[k]];
    for (int r = 0; r < 4; ++r) {
      Complex acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += u(r, k) * in[k];
      a[idx[r]] = acc;
    }
  }
}

Mat4 kron(const Mat2& hi, const Mat2& lo) {
  Mat4 m;
  for (int r1 = 0; r1 < 2; ++r1)
    for (int c1 = 0; c1 < 2; ++c1)
      for (int r0 = 0; r0 < 2; ++r0)
        for (int c0 = 0; c0 < 2; ++c0) m(r0 + 2 * r1, c0 + 2 * c1) = hi(r1, c1) * lo(r0, c0);
  return m;
}

constexpr char kLetters[4] = {'I', 'X', 'Y', 'Z'};

// Returns measured outcome of qubit q after collapsing the state.
int collapse(std::span<Complex> a, int q, std::optional<int> forced, Rng& rng) {
  const std::size_t m = std::size_t{1} << q;
  double p1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (i & m) p1 += std::norm(a[i]);
  int outcome;
  if (forced) {
    outcome = *forced;
    const double p = outcome ? p1 : 1.0 - p1;
    if (p < 1e-14) throw std::runtime_error("forced measurement outcome has zero probability");
  } else {
    outcome = uniform01(rng) < p1 ? 1 : 0;
  }
  const double keep = outcome ? p1 : 1.0 - p1;
  const double scale = 1.0 / std::sqrt(keep);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool bit = (i & m) != 0;
    a[i] = (bit == static_cast<bool>(outcome)) ? a[i] * scale : Complex{0.0, 0.0};
  }
  return outcome;
}

// Index in [1, 4^k) of a uniformly random non-identity Pauli on k qubits.
int random_error_index(int arity, Rng& rng) {
  const int count = arity == 1 ? 3 : 15;
  return 1 + static_cast<int>(std::uniform_int_distribution<int>(0, count - 1)(rng));
}

void apply_error(std::span<Complex> a, const std::vector<int>& qubits, int index) {
  for (std::size_t k = 0; k < qubits.size(); ++k) {
    const int letter = (index >> (2 * k)) & 3;
    if (letter != 0) apply_single(a, qubits[k], pauli_matrix(kLetters[letter]));
  }
}

double gate_error_rate(const Gate& g, const NoiseModel& noise) {
  return g.arity() == 1 ? noise.p_single : noise.p_two;
}

}  // namespace

// ---------------------------------------------------------------- StateVector

StateVector::StateVector(int n_qubits) : n_(n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxQubits)
    throw std::invalid_argument("qubit count must be in [1, 20]");
  amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
  amps_[0] = 1.0;
}

StateVector StateVector::basis(int n_qubits, std::uint64_t index) {
  StateVector s(n_qubits);
  if (index >= s.dim()) throw std::out_of_range("basis index out of range");
  s.amps_[0] = 0.0;
  s.amps_[index] = 1.0;
  return s;
}

StateVector StateVector::from_amplitudes(int n_qubits, std::vector<Complex> amps) {
  StateVector s(n_qubits);
  if (amps.size() != s.dim()) throw std::invalid_argument("amplitude count is not 2^n");
  s.amps_ = std::move(amps);
  if (std::abs(s.norm_squared() - 1.0) > 1e-10) throw std::invalid_argument("state is not normalized");
  return s;
}

double StateVector::norm_squared() const {
  double s = 0.0;
  for (const auto& a : amps_) s += std::norm(a);
  return s;
}

void StateVector::normalize() {
  const double nrm = std::sqrt(norm_squared());
  if (nrm == 0.0) throw std::runtime_error("cannot normalize the zero vector");
  for (auto& a : amps_) a /= nrm;
}

Complex StateVector::inner(const StateVector& other) const {
  if (other.n_ != n_) throw std::invalid_argument("qubit count mismatch");
  Complex s = 0.0;
  for (std::size_t i = 0; i < amps_.size(); ++i) s += std::conj(amps_[i]) * other.amps_[i];
  return s;
}

double StateVector::fidelity(const StateVector& other) const { return std::norm(inner(other)); }

std::vector<double> StateVector::probabilities() const {
  std::vector<double> p(amps_.size());
  for (std::size_t i = 0; i < amps_.size(); ++i) p[i] = std::norm(amps_[i]);
  return p;
}

// ---------------------------------------------------------------- PauliString

PauliString::PauliString(std::string letters, double coefficient)
    : letters_(std::move(letters)), coeff_(coefficient) {
  for (char& c : letters_) {
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z')
      throw std::invalid_argument(std::string("invalid Pauli letter '") + c + "'");
  }
  if (letters_.empty() || letters_.size() > 64) throw std::invalid_argument("Pauli string length out of range");
  if (!std::isfinite(coeff_)) throw std::invalid_argument("Pauli coefficient must be finite");
}

PauliString PauliString::identity(int n, double coefficient) {
  return PauliString(std::string(static_cast<std::size_t>(n), 'I'), coefficient);
}

PauliString PauliString::sparse(int n, std::initializer_list<std::pair<int, char>> ops, double coefficient) {
  std::string letters(static_cast<std::size_t>(n), 'I');
  for (auto [q, c] : ops) {
    check_qubit(q, n);
    letters[q] = c;
  }
  return PauliString(letters, coefficient);
}

void PauliString::set_coefficient(double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("Pauli coefficient must be finite");
  coeff_ = c;
}

std::uint64_t PauliString::x_mask() const {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < letters_.size(); ++i)
    if (letters_[i] == 'X' || letters_[i] == 'Y') m |= std::uint64_t{1} << i;
  return m;
}

std::uint64_t PauliString::z_mask() const {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < letters_.size(); ++i)
    if (letters_[i] == 'Z' || letters_[i] == 'Y') m |= std::uint64_t{1} << i;
  return m;
}

int PauliString::y_count() const {
  return static_cast<int>(std::count(letters_.begin(), letters_.end(), 'Y'));
}

std::vector<int> PauliString::support() const {
  std::vector<int> s;
  for (std::size_t i = 0; i < letters_.size(); ++i)
    if (letters_[i] != 'I') s.push_back(static_cast<int>(i));
  return s;
}

// ---------------------------------------------------------------- matrices

Mat2 pauli_matrix(char letter) {
  Mat2 m;
  switch (letter) {
    case 'I': m << 1, 0, 0, 1; break;
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, -kI, kI, 0; break;
    case 'Z': m << 1, 0, 0, -1; break;
    default: throw std::invalid_argument(std::string("invalid Pauli letter '") + letter + "'");
  }
  return m;
}

Mat2 hadamard() {
  Mat2 m;
  const double r = 1.0 / std::sqrt(2.0);
  m << r, r, r, -r;
  return m;
}

Mat2 rx(double theta) {
  Mat2 m;
  m << std::cos(theta / 2), -kI * std::sin(theta / 2), -kI * std::sin(theta / 2), std::cos(theta / 2);
  return m;
}

Mat2 ry(double theta) {
  Mat2 m;
  m << std::cos(theta / 2), -std::sin(theta / 2), std::sin(theta / 2), std::cos(theta / 2);
  return m;
}

Mat2 rz(double theta) {
  Mat2 m;
  m << std::exp(-kI * (theta / 2)), 0, 0, std::exp(kI * (theta / 2));
  return m;
}

// ---------------------------------------------------------------- Gate

Gate Gate::single(int qubit, const Mat2& u) {
  if (!is_unitary(u)) throw std::invalid_argument("single-qubit matrix is not unitary");
  Gate g;
  g.kind_ = Kind::single;
  g.qubits_ = {qubit};
  g.m2_ = u;
  return g;
}

Gate Gate::cx(int control, int target) {
  if (control == target) throw std::invalid_argument("CX control equals target");
  Gate g;
  g.kind_ = Kind::cx;
  g.qubits_ = {control, target};
  g.m4_ << 1, 0, 0, 0,  //
      0, 0, 0, 1,       //
      0, 0, 1, 0,       //
      0, 1, 0, 0;
  return g;
}

Gate Gate::cz(int a, int b) {
  if (a == b) throw std::invalid_argument("CZ qubits coincide");
  Gate g;
  g.kind_ = Kind::cz;
  g.qubits_ = {a, b};
  g.m4_ = Mat4::Identity();
  g.m4_(3, 3) = -1.0;
  return g;
}

Gate Gate::pauli_exp(double theta, std::vector<int> qubits, std::string letters) {
  if (qubits.empty() || qubits.size() > 2 || qubits.size() != letters.size())
    throw std::invalid_argument("Pauli exponential needs one letter per qubit on at most two qubits");
  if (qubits.size() == 2 && qubits[0] == qubits[1]) throw std::invalid_argument("Pauli exponential qubits coincide");
  if (!std::isfinite(theta)) throw std::invalid_argument("rotation angle must be finite");
  Gate g;
  g.kind_ = Kind::pauli_exp;
  g.qubits_ = std::move(qubits);
  g.letters_ = std::move(letters);
  g.theta_ = theta;
  const Complex c = std::cos(theta), s = kI * std::sin(theta);
  if (g.qubits_.size() == 1) {
    g.m2_ = c * Mat2::Identity() + s * pauli_matrix(g.letters_[0]);
  } else {
    g.m4_ = c * Mat4::Identity() + s * kron(pauli_matrix(g.letters_[1]), pauli_matrix(g.letters_[0]));
  }
  return g;
}

// ---------------------------------------------------------------- Circuit

Circuit::Circuit(int n_qubits) : n_(n_qubits) {
  if (n_qubits < 1 || n_qubits > kMaxQubits) throw std::invalid_argument("qubit count must be in [1, 20]");
}

void Circuit::check_gate(const Gate& g) const {
  for (int q : g.qubits()) check_qubit(q, n_);
}

Circuit& Circuit::add(const Gate& g) {
  check_gate(g);
  ops_.emplace_back(g);
  return *this;
}

Circuit& Circuit::append(const Circuit& other) {
  if (other.n_ != n_) throw std::invalid_argument("cannot append circuits of different width");
  const int offset = n_slots_;
  for (const auto& op : other.ops_) {
    if (const auto* m = std::get_if<Measure>(&op)) {
      measure(m->qubit, m->forced);
    } else if (const auto* c = std::get_if<Conditional>(&op)) {
      Conditional shifted = *c;
      for (int& slot : shifted.slots) slot += offset;
      ops_.emplace_back(std::move(shifted));
    } else {
      ops_.push_back(op);
    }
  }
  return *this;
}

int Circuit::measure(int qubit, std::optional<int> forced) {
  check_qubit(qubit, n_);
  if (forced && *forced != 0 && *forced != 1) throw std::invalid_argument("forced outcome must be 0 or 1");
  ops_.emplace_back(Measure{qubit, n_slots_, forced});
  return n_slots_++;
}

Circuit& Circuit::reset(int qubit) {
  check_qubit(qubit, n_);
  ops_.emplace_back(Reset{qubit});
  return *this;
}

Circuit& Circuit::conditional(const Gate& g, std::vector<int> slots) {
  check_gate(g);
  if (slots.empty()) throw std::invalid_argument("conditional gate needs at least one slot");
  for (int s : slots)
    if (s < 0 || s >= n_slots_) throw std::invalid_argument("condition references an unmeasured slot");
  ops_.emplace_back(Conditional{g, std::move(slots)});
  return *this;
}

std::size_t Circuit::gate_count() const {
  return static_cast<std::size_t>(std::count_if(ops_.begin(), ops_.end(), [](const Instruction& op) {
    return std::holds_alternative<Gate>(op) || std::holds_alternative<Conditional>(op);
  }));
}

bool Circuit::is_unitary() const {
  return std::all_of(ops_.begin(), ops_.end(), [](const Instruction& op) { return std::holds_alternative<Gate>(op); });
}

// ---------------------------------------------------------------- NoiseModel

void NoiseModel::validate() const {
  auto ok = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
  if (!ok(p_single) || !ok(p_two) || !ok(p_m) || !ok(p_global) || (p_m10 && !ok(*p_m10)))
    throw std::invalid_argument("noise rates must lie in [0, 1]");
}

NoiseModel NoiseModel::scaled(double factor) const {
  NoiseModel out = *this;
  out.p_single = std::min(1.0, p_single * factor);
  out.p_two = std::min(1.0, p_two * factor);
  out.p_m = std::min(1.0, p_m * factor);
  if (p_m10) out.p_m10 = std::min(1.0, *p_m10 * factor);
  out.p_global = std::min(1.0, p_global * factor);
  return out;
}

// ---------------------------------------------------------------- operations

void apply_gate(StateVector& state, const Gate& gate) {
  const int n = state.n_qubits();
  for (int q : gate.qubits()) check_qubit(q, n);
  auto a = state.amplitudes();
  switch (gate.kind()) {
    case Gate::Kind::single: apply_single(a, gate.qubits()[0], gate.matrix2()); break;
    case Gate::Kind::cx: apply_cx(a, gate.qubits()[0], gate.qubits()[1]); break;
    case Gate::Kind::cz: apply_cz(a, gate.qubits()[0], gate.qubits()[1]); break;
    case Gate::Kind::pauli_exp:
      if (gate.arity() == 1)
        apply_single(a, gate.qubits()[0], gate.matrix2());
      else
        apply_two(a, gate.qubits()[0], gate.qubits()[1], gate.matrix4());
      break;
  }
}

void apply_pauli(StateVector& state, const PauliString& pauli) {
  if (pauli.n_qubits() != state.n_qubits()) throw std::invalid_argument("Pauli length mismatch");
  auto a = state.amplitudes();
  for (int q : pauli.support()) apply_single(a, q, pauli_matrix(pauli.at(q)));
}

void apply_circuit(StateVector& state, const Circuit& circuit) {
  if (!circuit.is_unitary()) throw std::invalid_argument("apply_circuit requires a measurement-free circuit");
  for (const auto& op : circuit.instructions()) apply_gate(state, std::get<Gate>(op));
}

RunResult run_circuit(StateVector state, const Circuit& circuit, const NoiseModel& noise, Rng& rng) {
  noise.validate();
  if (circuit.n_qubits() != state.n_qubits()) throw std::invalid_argument("circuit width does not match state");
  std::vector<int> bits(static_cast<std::size_t>(circuit.n_slots()), -1);

  auto noisy_gate = [&](const Gate& g) {
    apply_gate(state, g);
    const double p = gate_error_rate(g, noise);
    if (p > 0.0 && uniform01(rng) < p) apply_error(state.amplitudes(), g.qubits(), random_error_index(g.arity(), rng));
  };

  for (const auto& op : circuit.instructions()) {
    if (const auto* g = std::get_if<Gate>(&op)) {
      noisy_gate(*g);
    } else if (const auto* m = std::get_if<Measure>(&op)) {
      int bit = collapse(state.amplitudes(), m->qubit, m->forced, rng);
      if (!m->forced) {
        const double flip = bit ? noise.flip_1to0() : noise.flip_0to1();
        if (flip > 0.0 && uniform01(rng) < flip) bit ^= 1;
      }
      bits[m->slot] = bit;
    } else if (const auto* r = std::get_if<Reset>(&op)) {
      if (collapse(state.amplitudes(), r->qubit, std::nullopt, rng) == 1)
        apply_single(state.amplitudes(), r->qubit, pauli_matrix('X'));
    } else if (const auto* c = std::get_if<Conditional>(&op)) {
      int parity = 0;
      for (int s : c->slots) {
        if (bits[s] < 0) throw std::runtime_error("condition slot read before measurement");
        parity ^= bits[s];
      }
      if (parity) noisy_gate(c->gate);
    }
  }
  return {std::move(state), std::move(bits)};
}

double expectation(const StateVector& state, const PauliString& pauli) {
  if (pauli.n_qubits() != state.n_qubits()) throw std::invalid_argument("Pauli length mismatch");
  const std::uint64_t xm = pauli.x_mask();
  const std::uint64_t zm = pauli.z_mask();
  static constexpr Complex kPhase[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const Complex phase = kPhase[pauli.y_count() & 3];
  const auto a = state.amplitudes();
  Complex acc = 0.0;
  for (std::uint64_t k = 0; k < a.size(); ++k) {
    const Complex term = std::conj(a[k ^ xm]) * a[k];
    acc += (std::popcount(k & zm) & 1) ? -term : term;
  }
  return pauli.coefficient() * (phase * acc).real();
}

std::uint64_t corrupt_outcome(std::uint64_t outcome, int n_qubits, const NoiseModel& noise, Rng& rng) {
  if (noise.p_global > 0.0 && uniform01(rng) < noise.p_global) {
    outcome = rng() & ((std::uint64_t{1} << n_qubits) - 1);
  }
  const double p01 = noise.flip_0to1(), p10 = noise.flip_1to0();
  if (p01 > 0.0 || p10 > 0.0) {
    for (int q = 0; q < n_qubits; ++q) {
      const std::uint64_t m = std::uint64_t{1} << q;
      const double p = (outcome & m) ? p10 : p01;
      if (p > 0.0 && uniform01(rng) < p) outcome ^= m;
    }
  }
  return outcome;
}

namespace {

void draw_samples(const std::vector<double>& cumulative, int n_qubits, std::uint64_t shots,
                  const NoiseModel& noise, Rng& rng, Histogram& out) {
  const double total = cumulative.back();
  for (std::uint64_t s = 0; s < shots; ++s) {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    auto k = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                                                 static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
    ++out[corrupt_outcome(k, n_qubits, noise, rng)];
  }
}

std::vector<double> cumulative_probabilities(const StateVector& state) {
  std::vector<double> c = state.probabilities();
  std::partial_sum(c.begin(), c.end(), c.begin());
  return c;
}

}  // namespace

Histogram sample_counts(const StateVector& state, std::uint64_t shots, const NoiseModel& noise, Rng& rng) {
  noise.validate();
  if (shots == 0) throw std::invalid_argument("shots must be positive");
  Histogram h;
  draw_samples(cumulative_probabilities(state), state.n_qubits(), shots, noise, rng, h);
  return h;
}

Histogram sample_counts(const StateVector& state, std::uint64_t shots, double p_m, Rng& rng) {
  NoiseModel noise;
  noise.p_m = p_m;
  return sample_counts(state, shots, noise, rng);
}

Histogram sample_circuit(const StateVector& initial, const Circuit& circuit, const NoiseModel& noise,
                         std::uint64_t shots, int trajectories, Rng& rng) {
  noise.validate();
  if (shots == 0) throw std::invalid_argument("shots must be positive");
  if (trajectories < 1) throw std::invalid_argument("trajectory count must be positive");
  const int n = initial.n_qubits();
  Histogram h;

  if (noise.gate_noise_free() && circuit.is_unitary()) {
    StateVector s = initial;
    apply_circuit(s, circuit);
    draw_samples(cumulative_probabilities(s), n, shots, noise, rng, h);
    return h;
  }

  const auto k = static_cast<std::uint64_t>(trajectories);
  const std::uint64_t base = shots / k, extra = shots % k;

  if (!circuit.is_unitary()) {
    for (std::uint64_t t = 0; t < k; ++t) {
      const std::uint64_t count = base + (t < extra ? 1 : 0);
      if (count == 0) continue;
      RunResult r = run_circuit(initial, circuit, noise, rng);
      draw_samples(cumulative_probabilities(r.state), n, count, noise, rng, h);
    }
    return h;
  }

  // Error locations are drawn before simulating so that error-free
  // trajectories can reuse one cached noiseless state.
  const auto& ops = circuit.instructions();
  std::optional<std::vector<double>> clean;
  std::vector<int> errors(ops.size());
  // Noiseless prefix states every `stride` gates, capped at 64 MB.
  const std::size_t state_bytes = initial.dim() * sizeof(Complex);
  const std::size_t max_checkpoints = std::max<std::size_t>(1, (std::size_t{64} << 20) / state_bytes);
  const std::size_t stride = std::max<std::size_t>(8, (ops.size() + max_checkpoints - 1) / max_checkpoints);
  std::vector<StateVector> checkpoints;
  for (std::uint64_t t = 0; t < k; ++t) {
    const std::uint64_t count = base + (t < extra ? 1 : 0);
    if (count == 0) continue;
    bool any = false;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const Gate& g = std::get<Gate>(ops[i]);
      const double p = gate_error_rate(g, noise);
      errors[i] = (p > 0.0 && uniform01(rng) < p) ? random_error_index(g.arity(), rng) : 0;
      any = any || errors[i] != 0;
    }
    if (!any) {
      if (!clean) {
        StateVector s = initial;
        apply_circuit(s, circuit);
        clean = cumulative_probabilities(s);
      }
      draw_samples(*clean, n, count, noise, rng, h);
      continue;
    }
    if (checkpoints.empty()) {
      StateVector c = initial;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        if (i % stride == 0) checkpoints.push_back(c);
        apply_gate(c, std::get<Gate>(ops[i]));
      }
    }
    const std::size_t first = static_cast<std::size_t>(
        std::find_if(errors.begin(), errors.end(), [](int e) { return e != 0; }) - errors.begin());
    const std::size_t start = first / stride * stride;
    StateVector s = checkpoints[first / stride];
    for (std::size_t i = start; i < ops.size(); ++i) {
      const Gate& g = std::get<Gate>(ops[i]);
      apply_gate(s, g);
      if (errors[i]) apply_error(s.amplitudes(), g.qubits(), errors[i]);
    }
    draw_samples(cumulative_probabilities(s), n, count, noise, rng, h);
  }
  return h;
}

Mat2 haar_single_qubit(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector2cd c0, c1;
  for (int i = 0; i < 2; ++i) c0(i) = Complex(gauss(rng), gauss(rng));
  for (int i = 0; i < 2; ++i) c1(i) = Complex(gauss(rng), gauss(rng));
  // Gram-Schmidt leaves a positive real diagonal in R, which is exactly the
  // phase fix that makes Q Haar distributed.
  c0.normalize();
  c1 -= c0.dot(c1) * c0;
  c1.normalize();
  Mat2 u;
  u.col(0) = c0;
  u.col(1) = c1;
  return u;
}

namespace {

Mat4 pauli_pair(int index) {
  return kron(pauli_matrix(kLetters[(index >> 2) & 3]), pauli_matrix(kLetters[index & 3]));
}

// G P G^dag for a Clifford G is again a Pauli up to sign; returns its index.
int conjugate_pauli(const Mat4& g, int index) {
  const Mat4 image = g * pauli_pair(index) * g.adjoint();
  for (int j = 0; j < 16; ++j) {
    if (std::abs((pauli_pair(j).adjoint() * image).trace()) > 4.0 - 1e-9) return j;
  }
  throw std::logic_error("gate is not Clifford");
}

}  // namespace

std::string conjugate_pauli_pair(const Gate& gate, const std::string& letters) {
  if (!gate.is_clifford_two_qubit()) throw std::invalid_argument("gate is not a Clifford two-qubit gate");
  if (letters.size() != 2) throw std::invalid_argument("expected two Pauli letters");
  auto code = [](char c) {
    const char* p = std::find(std::begin(kLetters), std::end(kLetters), c);
    if (p == std::end(kLetters)) throw std::invalid_argument("invalid Pauli letter");
    return static_cast<int>(p - std::begin(kLetters));
  };
  const int out = conjugate_pauli(gate.matrix4(), code(letters[0]) | (code(letters[1]) << 2));
  return {kLetters[out & 3], kLetters[(out >> 2) & 3]};
}

Circuit pauli_twirl(const Circuit& circuit, Rng& rng, TwirlOptions options) {
  Circuit out(circuit.n_qubits());
  std::uniform_int_distribution<int> pick(0, 15);
  auto push_pair = [&](int index, int q0, int q1) {
    if (index & 3) out.add(Gate::single(q0, pauli_matrix(kLetters[index & 3])));
    if ((index >> 2) & 3) out.add(Gate::single(q1, pauli_matrix(kLetters[(index >> 2) & 3])));
  };
  for (const auto& op : circuit.instructions()) {
    const auto* g = std::get_if<Gate>(&op);
    if (g == nullptr) {
      if (const auto* m = std::get_if<Measure>(&op)) {
        out.measure(m->qubit, m->forced);
      } else if (const auto* r = std::get_if<Reset>(&op)) {
        out.reset(r->qubit);
      } else {
        const auto& c = std::get<Conditional>(op);
        out.conditional(c.gate, c.slots);
      }
      continue;
    }
    if (g->arity() != 2) {
      out.add(*g);
      continue;
    }
    if (!g->is_clifford_two_qubit()) {
      if (options.skip_non_clifford) {
        out.add(*g);
        continue;
      }
      throw std::invalid_argument("cannot twirl a non-Clifford two-qubit gate");
    }
    const int before = pick(rng);
    const int after = conjugate_pauli(g->matrix4(), before);
    const int q0 = g->qubits()[0], q1 = g->qubits()[1];
    push_pair(before, q0, q1);
    out.add(*g);
    push_pair(after, q0, q1);
  }
  return out;
}

Eigen::MatrixXcd circuit_unitary(const Circuit& circuit) {
  const int n = circuit.n_qubits();
  if (n > 12) throw std::invalid_argument("circuit_unitary is limited to 12 qubits");
  const std::size_t dim = std::size_t{1} << n;
  Eigen::MatrixXcd u(dim, dim);
  for (std::size_t col = 0; col < dim; ++col) {
    StateVector s = StateVector::basis(n, col);
    apply_circuit(s, circuit);
    for (std::size_t row = 0; row < dim; ++row) u(row, col) = s[row];
  }
  return u;
}

double unitary_distance_up_to_phase(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("matrix shape mismatch");
  const Complex overlap = (b.adjoint() * a).trace();
  const Complex phase = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex{1.0, 0.0};
  return (a - phase * b).norm();
}

std::string bitstring(std::uint64_t value, int n_qubits) {
  std::string s(static_cast<std::size_t>(n_qubits), '0');
  for (int q = 0; q < n_qubits; ++q)
    if ((value >> q) & 1) s[q] = '1';
  return s;
}

std::uint64_t parse_bitstring(const std::string& text) {
  if (text.empty() || text.size() > 64) throw std::invalid_argument("bitstring length out of range");
  std::uint64_t v = 0;
  for (std::size_t q = 0; q < text.size(); ++q) {
    if (text[q] == '1')
      v |= std::uint64_t{1} << q;
    else if (text[q] != '0')
      throw std::invalid_argument("bitstring must contain only 0 and 1");
  }
  return v;
}

}  // namespace shadowlab::sim
