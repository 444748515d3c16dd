#pragma once

// Dense statevector simulator. Qubit 0 is the least-significant bit of a
// basis index, and bitstrings are printed with qubit 0 first.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shadowlab/rng.hpp"

namespace shadowlab::sim {

using Complex = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;
using Histogram = std::map<std::uint64_t, std::uint64_t>;

inline constexpr int kMaxQubits = 20;
inline constexpr double kUnitaryTol = 1e-10;

class StateVector {
 public:
  explicit StateVector(int n_qubits);

  static StateVector basis(int n_qubits, std::uint64_t index);
  // Throws if the length is not 2^n or the norm is off by more than 1e-10.
  static StateVector from_amplitudes(int n_qubits, std::vector<Complex> amps);

  int n_qubits() const { return n_; }
  std::size_t dim() const { return amps_.size(); }

  std::span<const Complex> amplitudes() const { return amps_; }
  std::span<Complex> amplitudes() { return amps_; }
  Complex& operator[](std::size_t i) { return amps_[i]; }
  const Complex& operator[](std::size_t i) const { return amps_[i]; }

  double norm_squared() const;
  void normalize();
  // <this|other>
  Complex inner(const StateVector& other) const;
  double fidelity(const StateVector& other) const;
  std::vector<double> probabilities() const;

 private:
  int n_;
  std::vector<Complex> amps_;
};

class PauliString {
 public:
  PauliString() = default;
  // letters[i] acts on qubit i.
  explicit PauliString(std::string letters, double coefficient = 1.0);
  static PauliString identity(int n, double coefficient = 1.0);
  static PauliString sparse(int n, std::initializer_list<std::pair<int, char>> ops,
                            double coefficient = 1.0);

  int n_qubits() const { return static_cast<int>(letters_.size()); }
  const std::string& letters() const { return letters_; }
  char at(int q) const { return letters_[q]; }
  double coefficient() const { return coeff_; }
  void set_coefficient(double c);

  std::uint64_t x_mask() const;
  std::uint64_t z_mask() const;
  int y_count() const;
  std::vector<int> support() const;
  int weight() const { return static_cast<int>(support().size()); }

  bool operator==(const PauliString&) const = default;

 private:
  std::string letters_;
  double coeff_ = 1.0;
};

Mat2 pauli_matrix(char letter);
Mat2 hadamard();
Mat2 rx(double theta);
Mat2 ry(double theta);
Mat2 rz(double theta);

class Gate {
 public:
  enum class Kind { single, cx, cz, pauli_exp };

  static Gate single(int qubit, const Mat2& u);
  static Gate cx(int control, int target);
  static Gate cz(int a, int b);
  // exp(i theta P) where P = letters[0] on q0 (and letters[1] on q1).
  static Gate pauli_exp(double theta, std::vector<int> qubits, std::string letters);

  Kind kind() const { return kind_; }
  const std::vector<int>& qubits() const { return qubits_; }
  int arity() const { return static_cast<int>(qubits_.size()); }
  const Mat2& matrix2() const { return m2_; }
  // Two-qubit matrix in the basis bit(q0) + 2 bit(q1).
  const Mat4& matrix4() const { return m4_; }
  double theta() const { return theta_; }
  const std::string& letters() const { return letters_; }
  bool is_clifford_two_qubit() const { return kind_ == Kind::cx || kind_ == Kind::cz; }

 private:
  Gate() = default;
  Kind kind_ = Kind::single;
  std::vector<int> qubits_;
  Mat2 m2_ = Mat2::Identity();
  Mat4 m4_ = Mat4::Identity();
  double theta_ = 0.0;
  std::string letters_;
};

struct Measure {
  int qubit = 0;
  int slot = 0;
  // Forces the recorded outcome (post-selected branch); used to inspect
  // specific syndrome branches deterministically.
  std::optional<int> forced;
};

struct Reset {
  int qubit = 0;
};

// Fires when the XOR of the referenced classical slots is 1.
struct Conditional {
  Gate gate;
  std::vector<int> slots;
};

using Instruction = std::variant<Gate, Measure, Reset, Conditional>;

class Circuit {
 public:
  explicit Circuit(int n_qubits);

  int n_qubits() const { return n_; }
  int n_slots() const { return n_slots_; }
  const std::vector<Instruction>& instructions() const { return ops_; }
  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }
  std::size_t gate_count() const;
  bool is_unitary() const;

  Circuit& add(const Gate& g);
  Circuit& append(const Circuit& other);
  // Returns the classical slot written by the measurement.
  int measure(int qubit, std::optional<int> forced = std::nullopt);
  Circuit& reset(int qubit);
  Circuit& conditional(const Gate& g, std::vector<int> slots);

  // Convenience builders.
  Circuit& h(int q) { return add(Gate::single(q, hadamard())); }
  Circuit& x(int q) { return add(Gate::single(q, pauli_matrix('X'))); }
  Circuit& y(int q) { return add(Gate::single(q, pauli_matrix('Y'))); }
  Circuit& z(int q) { return add(Gate::single(q, pauli_matrix('Z'))); }
  Circuit& ry(int q, double theta) { return add(Gate::single(q, sim::ry(theta))); }
  Circuit& cx(int c, int t) { return add(Gate::cx(c, t)); }
  Circuit& cz(int a, int b) { return add(Gate::cz(a, b)); }

 private:
  void check_gate(const Gate& g) const;
  int n_;
  int n_slots_ = 0;
  std::vector<Instruction> ops_;
};

struct NoiseModel {
  double p_single = 0.0;
  double p_two = 0.0;
  // Readout flip rate. When p_m10 is set, p_m is the 0->1 rate and p_m10 the
  // 1->0 rate.
  double p_m = 0.0;
  std::optional<double> p_m10;
  double p_global = 0.0;

  void validate() const;
  bool gate_noise_free() const { return p_single == 0.0 && p_two == 0.0; }
  bool noise_free() const {
    return gate_noise_free() && p_m == 0.0 && p_m10.value_or(0.0) == 0.0 && p_global == 0.0;
  }
  double flip_0to1() const { return p_m; }
  double flip_1to0() const { return p_m10.value_or(p_m); }
  NoiseModel scaled(double factor) const;
};

struct RunResult {
  StateVector state;
  std::vector<int> bits;
};

void apply_gate(StateVector& state, const Gate& gate);
void apply_pauli(StateVector& state, const PauliString& pauli);
void apply_circuit(StateVector& state, const Circuit& circuit);

// One stochastic trajectory. With zero gate noise and no mid-circuit
// measurement the result is exactly the sequential gate application.
RunResult run_circuit(StateVector state, const Circuit& circuit, const NoiseModel& noise, Rng& rng);

double expectation(const StateVector& state, const PauliString& pauli);

// Applies readout flips and global depolarization to a noiseless sample.
std::uint64_t corrupt_outcome(std::uint64_t outcome, int n_qubits, const NoiseModel& noise, Rng& rng);

Histogram sample_counts(const StateVector& state, std::uint64_t shots, const NoiseModel& noise, Rng& rng);
Histogram sample_counts(const StateVector& state, std::uint64_t shots, double p_m, Rng& rng);

// Samples a noisy circuit by splitting shots evenly across trajectories.
Histogram sample_circuit(const StateVector& initial, const Circuit& circuit, const NoiseModel& noise,
                         std::uint64_t shots, int trajectories, Rng& rng);

Mat2 haar_single_qubit(Rng& rng);

struct TwirlOptions {
  // Leave non-Clifford two-qubit gates untouched instead of throwing.
  bool skip_non_clifford = false;
};
// Letters of G P G^dag for a Clifford two-qubit gate; letters[k] acts on
// gate.qubits()[k].
std::string conjugate_pauli_pair(const Gate& gate, const std::string& letters);
Circuit pauli_twirl(const Circuit& circuit, Rng& rng, TwirlOptions options = {});

// Full 2^n x 2^n unitary of a measurement-free circuit (small n only).
Eigen::MatrixXcd circuit_unitary(const Circuit& circuit);
// min over global phase of the operator norm distance, via |Tr(A^dag B)|.
double unitary_distance_up_to_phase(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b);

std::string bitstring(std::uint64_t value, int n_qubits);
std::uint64_t parse_bitstring(const std::string& text);

}  // namespace shadowlab::sim
