#pragma once

// Phase-classification data: cluster and product fixed points, symmetric and
// local random circuits, string order parameters, the rotated surface code
// and its measurement-assisted preparation, Cluster-Ising ground states and
// labeled shadow datasets.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shadowlab/rng.hpp"
#include "shadowlab/shadows.hpp"
#include "shadowlab/simcore.hpp"

namespace shadowlab::phases {

// Dataset labels.
inline constexpr int kTrivial = 1;
inline constexpr int kOrdered = -1;  // SPT or topological

sim::StateVector prepare_cluster(int n, bool periodic = true);
sim::StateVector prepare_product_x(int n);
// Z_{i-1} X_i Z_{i+1} with ring indices.
sim::PauliString cluster_stabilizer(int n, int i);

// Z_a X_{a+1} X_{a+3} ... X_{b-1} Z_b with indices taken mod n.
sim::PauliString sop_string(int n, int a, int b);
double sop(const sim::StateVector& state, int a, int b);

enum class Symmetry { z2xz2, trs, none };

std::string to_string(Symmetry s);
Symmetry symmetry_from_string(const std::string& name);
// Two-letter generators, letter 0 on the first qubit of a pair.
const std::vector<std::string>& generator_set(Symmetry s);

// Brickwork pairs for layer index `layer`: even layers (0,1),(2,3),...; odd
// layers (1,2),...,(n-1,0).
std::vector<std::pair<int, int>> brickwork_pairs(int n, int layer);

// Every pair gate is exp(i theta P) with P drawn from the generator set and
// theta uniform in [0, 2 pi).
sim::Circuit symmetric_random_circuit(int n, Symmetry symmetry, int layers, Rng& rng);

// ---------------------------------------------------------------- surface code

struct SurfaceCodeLayout {
  int d = 0;
  int n_data = 0;
  std::vector<std::vector<int>> x_plaquettes;
  std::vector<std::vector<int>> z_plaquettes;
  std::vector<int> logical_z;  // top row
  std::vector<int> logical_x;  // left column
  // corrections[p] is a Z support flipping only the sign of B_p.
  std::vector<std::uint64_t> corrections;

  int rows() const { return d; }
  int cols() const { return d; }
  // Z support whose anticommutation pattern with the B_p equals `syndrome`.
  std::uint64_t correction_for(std::uint64_t syndrome) const;
  std::string to_json() const;
};

SurfaceCodeLayout surface_layout(int d_code);

// Stabilizer Pauli strings on n_data qubits.
sim::PauliString x_stabilizer(const SurfaceCodeLayout& layout, std::size_t p);
sim::PauliString z_stabilizer(const SurfaceCodeLayout& layout, std::size_t s);

// Normalized prod_p (I + B_p) |0...0>.
sim::StateVector logical_zero_projector(const SurfaceCodeLayout& layout);

// One ancilla (index n_data) is reused for every X plaquette: reset, H, CX to
// each plaquette qubit, H, measure. Corrections are classically conditioned
// Z gates.
sim::Circuit logical_zero_protocol(const SurfaceCodeLayout& layout, bool correct = true,
                                   const std::vector<std::optional<int>>& forced = {});

struct ProtocolResult {
  sim::StateVector state;  // data qubits only
  std::vector<int> syndrome;
};

ProtocolResult run_logical_zero_protocol(const SurfaceCodeLayout& layout, Rng& rng, bool correct = true,
                                         const std::vector<std::optional<int>>& forced = {});

enum class PrepMode { projector, protocol };
sim::StateVector prepare_logical_zero(const SurfaceCodeLayout& layout, PrepMode mode, Rng& rng);

// CX edge sets on a rows x cols grid, cycled by layer: horizontal even
// columns, horizontal odd columns, vertical even rows, vertical odd rows.
std::vector<std::pair<int, int>> grid_edges(int rows, int cols, int layer);

// Each layer applies the layer's CX set followed by Haar single-qubit gates
// on every qubit.
sim::Circuit local_random_circuit(int rows, int cols, int d_lu, Rng& rng);
// Haar single-qubit gate on every qubit.
sim::Circuit random_product_circuit(int n, Rng& rng);

// ---------------------------------------------------------------- Cluster-Ising

struct ClusterIsingSpec {
  int n = 10;
  double j = 1.0;
  double h1 = 0.0;
  double h2 = 0.0;
  void validate() const;
};

// Real Pauli sum without Y factors: sum_k c_k X^{x_k} Z^{z_k}.
struct RealPauliSum {
  int n = 0;
  struct Term {
    std::uint64_t x_mask = 0;
    std::uint64_t z_mask = 0;
    double coeff = 0.0;
  };
  std::vector<Term> terms;

  void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;
  Eigen::MatrixXd dense() const;
};

// -J sum Z_i X_{i+1} Z_{i+2} - h1 sum X_i - h2 sum X_i X_{i+1}, periodic.
RealPauliSum cluster_ising_hamiltonian(const ClusterIsingSpec& spec);
// -sum Z_{i-1} X_i Z_{i+1}, periodic.
RealPauliSum zxz_hamiltonian(int n);

struct EigenResult {
  double energy = 0.0;
  Eigen::VectorXd vector;
  double residual = 0.0;
  int iterations = 0;
};

// Lanczos with full reorthogonalization and explicit residual check.
EigenResult lanczos_ground(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
                           Eigen::Index dim, double tol = 1e-8, int max_restarts = 50, std::uint64_t seed = 1);

struct GroundStateResult {
  sim::StateVector state;
  double energy = 0.0;
  double residual = 0.0;
};

GroundStateResult cluster_ising_ground(const ClusterIsingSpec& spec);

// SOP over the longest even separation on the ring, averaged over the n
// starting sites.
double mean_long_sop(const sim::StateVector& state);

// ---------------------------------------------------------------- datasets

struct PhaseEntry {
  shadows::ShadowSet shadows;
  int label = kTrivial;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> generator;
};

struct PhaseDataset {
  std::vector<PhaseEntry> entries;

  std::vector<shadows::ShadowSet> shadow_sets() const;
  std::vector<int> labels() const;
  void validate() const;
};

struct SptConfig {
  int n = 10;
  Symmetry symmetry = Symmetry::z2xz2;
  int layers = 2;
  int per_class = 10;
  std::size_t T = 100;
  std::uint64_t seed = 0;
};

// Cluster state (kOrdered) and |+>^n (kTrivial), each followed by a fresh
// symmetric random circuit. Entries alternate ordered/trivial.
PhaseDataset build_spt_dataset(const SptConfig& config);

struct TopoConfig {
  int d_code = 3;
  int d_lu = 0;
  int per_class = 10;
  std::size_t T = 300;
  std::uint64_t seed = 0;
  // Replace |0_L> by a random state without topological order built from the
  // same number of CX layers as the preparation protocol.
  bool control = false;
};

// Ordered entries: |0_L> with Haar single-qubit gates applied virtually to the
// shadows. Trivial entries: random product state followed by d_lu layers of
// the local random circuit.
PhaseDataset build_topo_dataset(const TopoConfig& config);

// Shadows of Cluster-Ising ground states, labeled by the given function.
PhaseEntry cluster_ising_entry(const ClusterIsingSpec& spec, std::size_t T, std::uint64_t seed, int label);

// Writes one shadow file per entry plus manifest.json in `dir`.
void save_dataset(const PhaseDataset& data, const std::string& dir);
PhaseDataset load_dataset(const std::string& dir);

}  // namespace shadowlab::phases
