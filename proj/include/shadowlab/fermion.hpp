#pragma once

// Free fermions on an open chain: hopping Hamiltonians, Slater-determinant
// ground states, Givens-rotation state preparation and the measurement
// circuits used to estimate correlation matrices <a_i^dag a_j>.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "shadowlab/simcore.hpp"

namespace shadowlab::fermion {

struct HoppingSpec {
  int n = 0;
  std::vector<double> x;  // x[i] couples sites i and i+1
  std::string source = "custom";
  std::uint64_t seed = 0;

  static HoppingSpec uniform(int n, std::uint64_t seed, double lo = 0.0, double hi = 2.0);
  // sum_i (v a_{2i}^dag a_{2i+1} + w a_{2i+1}^dag a_{2i+2}) + h.c.
  static HoppingSpec ssh(int n, double v, double w);

  void validate() const;
  std::string to_json() const;
  static HoppingSpec from_json(const std::string& text);
};

Eigen::MatrixXd build_hopping(const HoppingSpec& spec);

struct GroundState {
  Eigen::MatrixXd correlation;  // C = Q^T Q
  Eigen::MatrixXd q;            // n_occ x n, rows are occupied orbitals
  Eigen::VectorXd energies;     // single-particle spectrum, ascending
  bool degenerate_fermi_level = false;
};

GroundState ground_correlation(const Eigen::MatrixXd& h, int n_occ = -1);

struct GivensRotation {
  int mode = 0;  // acts on modes (mode, mode + 1)
  double theta = 0.0;
};

// Prepares |Phi_Q> from |1...1 0...0> (first n_occ modes filled). Rotations
// are stored in application order.
struct GivensNetwork {
  int n_modes = 0;
  int n_occ = 0;
  std::vector<GivensRotation> rotations;

  // Single-particle orthogonal matrix U with U(network) a_k^dag U^dag =
  // sum_i U_ik a_i^dag.
  Eigen::MatrixXd mode_matrix() const;
  // Occupied orbitals as rows (n_occ x n), i.e. the first n_occ columns of
  // mode_matrix() transposed.
  Eigen::MatrixXd orbitals() const;
};

GivensNetwork givens_decompose(const Eigen::MatrixXd& q);

// Rotation matrix [[c, -s], [s, c]] embedded on (mode, mode + 1).
Eigen::MatrixXd givens_matrix(int n, const GivensRotation& r);
// Two-qubit number-conserving block in the basis bit(p) + 2 bit(p+1).
Eigen::Matrix4d givens_block_matrix(double theta);
// CNOT, RY pair, CNOT implementation of one rotation, framed by H on mode+1.
void append_givens_block(sim::Circuit& circuit, const GivensRotation& r);
sim::Circuit givens_to_circuit(const GivensNetwork& network, bool prepare_reference = true);

// a_i^dag a_j (i <= j) for real states, as Pauli strings to be summed. The
// i == j case returns 1/2 I and -1/2 Z_i.
std::vector<sim::PauliString> jw_observable(int i, int j, int n);
double jw_expectation(const sim::StateVector& state, int i, int j);

using ModePair = std::pair<int, int>;

// Absorbs G(pi/4) on each adjacent pair into the network's orbitals and
// re-decomposes. The result prepares U_layer |Phi_Q> with the same rotation
// count.
GivensNetwork recompile_parity(const GivensNetwork& network, const std::vector<ModePair>& pairs);
// Explicit parity layer appended after the preparation circuit.
void append_parity_layer(sim::Circuit& circuit, const std::vector<ModePair>& pairs);

struct PostSelection {
  sim::Histogram kept;
  std::uint64_t total = 0;
  std::uint64_t retained = 0;
  double retained_fraction() const { return total ? static_cast<double>(retained) / total : 0.0; }
};

// Keeps outcomes of Hamming weight n_occ. Throws when nothing survives.
PostSelection post_select(const sim::Histogram& histogram, int n_occ);

struct Purification {
  Eigen::MatrixXd c;
  int iterations = 0;
  bool converged = false;
  double trace_drift = 0.0;
  std::vector<double> residuals;  // ||C^2 - C||_F before each step and at exit
};

Purification mcweeny(const Eigen::MatrixXd& c, int max_iter = 100, double tol = 1e-10);

struct Mitigation {
  bool post_select = true;
  bool mcweeny = true;
  bool recompile = true;
};

struct EstimateOptions {
  std::uint64_t shots = 20000;
  sim::NoiseModel noise;
  Mitigation mitigation;
  int trajectories = 64;
  // Use Born probabilities instead of samples (noise ignored).
  bool exact = false;
};

struct CorrelationEstimate {
  Eigen::MatrixXd c;
  Eigen::MatrixXd assembled;  // before purification
  double min_retention = 1.0;
  double mean_retention = 1.0;
  int circuits = 0;
  bool purified = false;
  bool purification_converged = false;
};

// Perfect matchings of n modes such that every pair appears exactly once.
std::vector<std::vector<ModePair>> round_robin_pairs(int n);

CorrelationEstimate estimate_correlation_matrix(const HoppingSpec& spec, const EstimateOptions& options,
                                                std::uint64_t seed);

void write_correlation_csv(std::ostream& out, const Eigen::MatrixXd& c, int n_occ);
Eigen::MatrixXd read_correlation_csv(std::istream& in, int* n_occ = nullptr);

}  // namespace shadowlab::fermion
