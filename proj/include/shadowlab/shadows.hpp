#pragma once

// Classical shadows from random single-qubit measurements: acquisition,
// observable estimation, virtual gates and the shadow kernel.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <iosfwd>
#include <string>
#include <vector>

#include "shadowlab/simcore.hpp"

namespace shadowlab::shadows {

// U(theta, phi, lambda) = [[cos(t/2), -e^{i l} sin(t/2)],
//                          [e^{i p} sin(t/2), e^{i(p+l)} cos(t/2)]]
struct Euler {
  double theta = 0.0;
  double phi = 0.0;
  double lambda = 0.0;
  bool operator==(const Euler&) const = default;
};

sim::Mat2 euler_to_matrix(const Euler& e);
// Exact up to a global phase, which snapshots do not depend on.
Euler matrix_to_euler(const sim::Mat2& u);

struct ShadowRecord {
  std::uint64_t outcome = 0;
  std::vector<Euler> unitaries;
  bool operator==(const ShadowRecord&) const = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string state_desc;
  sim::NoiseModel noise;
};

class ShadowSet {
 public:
  ShadowSet(int n_qubits, std::vector<ShadowRecord> records, Provenance provenance = {});

  int n_qubits() const { return n_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<ShadowRecord>& records() const { return records_; }
  const Provenance& provenance() const { return provenance_; }

  // Bloch vector of U^dag |b><b| U for record t and qubit q.
  Eigen::Vector3d bloch(std::size_t t, int q) const;
  // Structure-of-arrays copy used by the kernel: [q][component][t].
  const std::vector<double>& bloch_table() const { return bloch_; }

  bool operator==(const ShadowSet& other) const { return n_ == other.n_ && records_ == other.records_; }

 private:
  int n_;
  std::vector<ShadowRecord> records_;
  Provenance provenance_;
  std::vector<double> bloch_;
};

using UnitarySampler = std::function<sim::Mat2(Rng&)>;

struct AcquireOptions {
  sim::NoiseModel noise;
  std::string state_desc;
  // Defaults to Haar-random single-qubit unitaries.
  UnitarySampler sampler;
};

// Record t draws its randomness from derive_seed(seed, t), so results do not
// depend on thread count.
ShadowSet acquire(const sim::StateVector& state, std::size_t T, std::uint64_t seed,
                  const AcquireOptions& options = {});
// Each record re-runs a (possibly noisy) preparation circuit from |0...0>.
ShadowSet acquire(const sim::Circuit& preparation, std::size_t T, std::uint64_t seed,
                  const AcquireOptions& options = {});

class LocalObservable {
 public:
  explicit LocalObservable(const sim::PauliString& pauli);
  // matrix is indexed by bits of `support` with support[0] least significant.
  LocalObservable(std::vector<int> support, Eigen::MatrixXcd matrix);

  const std::vector<int>& support() const { return support_; }
  int locality() const { return static_cast<int>(support_.size()); }
  const Eigen::MatrixXcd& matrix() const { return matrix_; }
  bool is_pauli() const { return pauli_.has_value(); }
  double operator_norm() const;
  // Exact expectation on a statevector.
  double expectation(const sim::StateVector& state) const;
  // Tr(O rho_t) for one snapshot.
  double single_shot(const ShadowSet& set, std::size_t t) const;

 private:
  std::vector<int> support_;
  Eigen::MatrixXcd matrix_;
  std::optional<sim::PauliString> pauli_;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;  // sample variance of single-shot values
  std::size_t samples = 0;
};

struct EstimateOptions {
  // 0 keeps the plain empirical mean; k > 1 reports the median of k group means.
  int median_of_means_groups = 0;
};

Estimate estimate(const ShadowSet& set, const LocalObservable& obs, EstimateOptions options = {});

// U_i -> U_i V_i^dag on every record, so snapshots transform as V sigma V^dag.
ShadowSet virtual_unitary(const ShadowSet& set, const std::vector<sim::Mat2>& factors);
// Accepts a full 2^n matrix and throws unless it is a tensor product.
ShadowSet virtual_unitary(const ShadowSet& set, const Eigen::MatrixXcd& v);
std::vector<sim::Mat2> factorize_product(const Eigen::MatrixXcd& v, int n_qubits);

// Tr(sigma_q^(t) sigma~_q^(t')) = 9 |<b|U U~^dag|b~>|^2 - 4.
double snapshot_overlap(const ShadowSet& a, std::size_t t, const ShadowSet& b, std::size_t t2, int q);

enum class KernelVariant { full, off_diagonal };

struct KernelValue {
  double log_value = 0.0;  // tau * mean_{t,t'} exp(...)
  double value = 0.0;      // exp(min(log_value, 700))
  bool clamped = false;
};

inline constexpr double kExpClamp = 700.0;

KernelValue shadow_kernel(const ShadowSet& a, const ShadowSet& b, double tau = 1.0, double gamma = 1.0,
                          KernelVariant variant = KernelVariant::off_diagonal);

struct GramMatrix {
  Eigen::MatrixXd log_k;
  bool clamped = false;

  Eigen::MatrixXd raw() const;
  // K_ij / sqrt(K_ii K_jj), evaluated in log space.
  Eigen::MatrixXd normalized() const;
};

GramMatrix gram(const std::vector<ShadowSet>& sets, double tau = 1.0, double gamma = 1.0,
                KernelVariant variant = KernelVariant::off_diagonal);

// Rows index `rows`, columns index `cols`. Self-kernels for normalization are
// taken from the diagonal of the corresponding Gram matrices.
Eigen::MatrixXd cross_log_kernel(const std::vector<ShadowSet>& rows, const std::vector<ShadowSet>& cols,
                                 double tau = 1.0, double gamma = 1.0,
                                 KernelVariant variant = KernelVariant::off_diagonal, bool* clamped = nullptr);
Eigen::MatrixXd normalize_cross(const Eigen::MatrixXd& log_cross, const Eigen::VectorXd& log_self_rows,
                                const Eigen::VectorXd& log_self_cols);

void save(const ShadowSet& set, std::ostream& out);
ShadowSet load(std::istream& in);
void save(const ShadowSet& set, const std::string& path);
ShadowSet load(const std::string& path);

}  // namespace shadowlab::shadows
