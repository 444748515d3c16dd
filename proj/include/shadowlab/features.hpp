#pragma once

// Entropy features of a four-qubit subsystem: readout calibration and
// mitigation, Pauli tomography with a physical projection, Renyi-2 entropies
// over all subsets, and linear phase classifiers on the resulting vectors.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shadowlab/rng.hpp"
#include "shadowlab/simcore.hpp"

namespace shadowlab::features {

inline constexpr int kSubsystemSize = 4;
inline constexpr int kOutcomes = 16;
inline constexpr int kFeatureCount = 15;

using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;

// Column j is the outcome distribution for prepared basis state j. Outcome
// bit k belongs to subsystem qubit k.
struct ResponseMatrix {
  Eigen::Matrix<double, kOutcomes, kOutcomes> r;
  void validate() const;
};

// Tensor power of the single-qubit channel [[1-p01, p10], [p01, 1-p10]].
ResponseMatrix ideal_response(const sim::NoiseModel& readout);

// Prepares each of the 16 basis strings and records `shots` noisy readouts.
ResponseMatrix calibrate_response(const sim::NoiseModel& readout, std::uint64_t shots, Rng& rng);

struct MitigationOptions {
  bool project_to_simplex = false;
};

// Solves R p_mem = p_exp. Throws std::domain_error for a singular R.
Eigen::VectorXd mitigate(const ResponseMatrix& response, const Eigen::VectorXd& p_exp, MitigationOptions options = {});

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

// Outcome distributions per measurement setting. A setting is four letters
// from {X, Y, Z}; letter k is the basis of subsystem qubit k.
struct TomographyData {
  std::map<std::string, Eigen::VectorXd> distributions;
  std::uint64_t shots = 0;  // per setting; 0 for exact distributions
};

std::vector<std::string> all_settings();

// Exact outcome distributions of `rho` in every setting.
TomographyData exact_tomography(const Eigen::MatrixXcd& rho);

// Multinomial counts per setting with readout flips applied to the outcomes.
TomographyData sample_tomography(const Eigen::MatrixXcd& rho, std::uint64_t shots_per_setting,
                                 const sim::NoiseModel& readout, Rng& rng);

// Applies `mitigate` to every setting.
TomographyData mitigate_tomography(const TomographyData& data, const ResponseMatrix& response,
                                   MitigationOptions options = {});

// Linear inversion from Pauli expectations. Throws std::invalid_argument if
// some Pauli operator is not covered by the settings.
Eigen::MatrixXcd linear_inversion(const TomographyData& data);

// Closest density matrix in Frobenius norm to a Hermitian, trace-one input,
// found by eigenvalue truncation with redistribution.
Eigen::MatrixXcd project_to_physical(const Eigen::MatrixXcd& h);

// Linear inversion followed by the physical projection.
Eigen::MatrixXcd mle_qst(const TomographyData& data);

// Hermitian, trace one within 1e-9, eigenvalues >= -1e-9.
bool is_physical(const Eigen::MatrixXcd& rho, double tol = 1e-9);

// -log2 Tr(rho^2). Throws std::domain_error when Tr(rho^2) exceeds 1 + 1e-9.
double renyi2(const Eigen::MatrixXcd& rho);

// Reduced density matrix on `keep`, with keep[k] becoming bit k.
Eigen::MatrixXcd reduced_density_matrix(const sim::StateVector& state, const std::vector<int>& keep);
Eigen::MatrixXcd partial_trace(const Eigen::MatrixXcd& rho, int n_qubits, const std::vector<int>& keep);

// The 15 non-empty subsets of subsystem positions {0,1,2,3} in feature order:
// singles, pairs, triples, then the full set, each lexicographic.
const std::vector<std::vector<int>>& feature_subsets();

// Features of a four-qubit density matrix.
FeatureVector feature_map(const Eigen::MatrixXcd& rho4);
// Exact features of `subsystem` (four qubits) of a pure state.
FeatureVector feature_map(const sim::StateVector& state, const std::vector<int>& subsystem);
// Measured features from tomography data on the subsystem.
FeatureVector feature_map(const TomographyData& data);

// f(phi) = w^T phi + w0; f >= 0 predicts +1.
struct LinearClassifier {
  FeatureVector w = FeatureVector::Zero();
  double w0 = 0.0;
  double training_accuracy = 0.0;

  double decision(const FeatureVector& phi) const { return w.dot(phi) + w0; }
  int predict(const FeatureVector& phi) const { return decision(phi) >= 0.0 ? 1 : -1; }
  std::string to_json() const;
  static LinearClassifier from_json(const std::string& text);
};

// Linear soft-margin SVM. Labels are +1 or -1 and both must be present.
LinearClassifier fit_linear_classifier(const std::vector<FeatureVector>& features, const std::vector<int>& labels,
                                       double c = 1.0);

// w = [1,0,0,1,0,0,-1,1,0,0,-1,0,0,-1,1], w0 = 0.1.
LinearClassifier tee_classifier();

double misclassification_rate(const LinearClassifier& clf, const std::vector<FeatureVector>& features,
                              const std::vector<int>& labels);

struct NoisyEvaluation {
  std::vector<std::vector<double>> errors;  // [classifier][instance]
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct TestSet {
  std::vector<FeatureVector> features;
  std::vector<int> labels;
};

// Each instance draws a test set from `draw(instance)` and adds independent
// uniform noise in [-epsilon, epsilon] to every feature before classifying.
// Instances run in parallel, so `draw` must be safe to call concurrently.
NoisyEvaluation evaluate_classifiers(const std::vector<LinearClassifier>& classifiers,
                                     const std::function<TestSet(int)>& draw, int instances, double epsilon,
                                     std::uint64_t seed);

// Feature table: 15 feature columns then the label.
std::string feature_table_csv(const std::vector<FeatureVector>& features, const std::vector<int>& labels);

// ---------------------------------------------------------------- 3x3 patch

inline constexpr int kPatchQubits = 9;

// Subsystem {1, 2, 5, 6} of the row-major 3x3 patch with 1-based labels.
const std::vector<int>& default_subsystem();

// Topological (kOrdered, -1): |0_L> of the distance-3 rotated surface code.
// Trivial (+1): a Haar-random product state. Both followed by `layers` local
// random layers.
sim::StateVector sample_patch_state(int label, int layers, Rng& rng);

}  // namespace shadowlab::features
