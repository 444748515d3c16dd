#include "shadowlab/features.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <exception>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "shadowlab/ml.hpp"
#include "shadowlab/phases.hpp"

namespace shadowlab::features {

namespace {

using sim::Complex;

Eigen::Matrix2cd pauli(int k) {
  Eigen::Matrix2cd m;
  switch (k) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, Complex(0, -1), Complex(0, 1), 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

// Rotation taking the measurement basis of `letter` to the Z basis.
Eigen::Matrix2cd basis_rotation(char letter) {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd h;
  h << s, s, s, -s;
  if (letter == 'Z') return Eigen::Matrix2cd::Identity();
  if (letter == 'X') return h;
  if (letter == 'Y') {
    Eigen::Matrix2cd sdg;
    sdg << 1, 0, 0, Complex(0, -1);
    return h * sdg;
  }
  throw std::invalid_argument("setting letters must be X, Y or Z");
}

// Factor k acts on bit k, so the leftmost Kronecker factor is bit 3.
Eigen::MatrixXcd kron4(const std::array<Eigen::Matrix2cd, kSubsystemSize>& f) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(1, 1);
  for (int k = kSubsystemSize - 1; k >= 0; --k) {
    Eigen::MatrixXcd next(out.rows() * 2, out.cols() * 2);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j) next.block<2, 2>(2 * i, 2 * j) = out(i, j) * f[k];
    out = next;
  }
  return out;
}

void check_rho4(const Eigen::MatrixXcd& rho) {
  if (rho.rows() != kOutcomes || rho.cols() != kOutcomes) throw std::invalid_argument("expected a 16x16 matrix");
}

void check_distribution(const Eigen::VectorXd& p) {
  if (p.size() != kOutcomes) throw std::invalid_argument("expected 16 outcome probabilities");
  if (!p.allFinite()) throw std::invalid_argument("outcome probabilities must be finite");
}

Eigen::VectorXd setting_distribution(const Eigen::MatrixXcd& rho, const std::string& setting) {
  std::array<Eigen::Matrix2cd, kSubsystemSize> f;
  for (int k = 0; k < kSubsystemSize; ++k) f[k] = basis_rotation(setting[static_cast<std::size_t>(k)]);
  const Eigen::MatrixXcd u = kron4(f);
  const Eigen::MatrixXcd rotated = u * rho * u.adjoint();
  Eigen::VectorXd p(kOutcomes);
  for (int i = 0; i < kOutcomes; ++i) p(i) = std::max(0.0, rotated(i, i).real());
  return p / p.sum();
}

Eigen::VectorXd multinomial(const Eigen::VectorXd& p, std::uint64_t shots, Rng& rng) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(p.size());
  std::uint64_t left = shots;
  double mass = 1.0;
  for (Eigen::Index i = 0; i + 1 < p.size() && left > 0; ++i) {
    const double q = mass > 0.0 ? std::clamp(p(i) / mass, 0.0, 1.0) : 0.0;
    const std::uint64_t k = std::binomial_distribution<std::uint64_t>(left, q)(rng);
    counts(i) = static_cast<double>(k);
    left -= k;
    mass -= p(i);
  }
  counts(p.size() - 1) += static_cast<double>(left);
  return counts;
}

}  // namespace

// ---------------------------------------------------------------- readout

void ResponseMatrix::validate() const {
  if (!r.allFinite() || (r.array() < 0.0).any()) throw std::invalid_argument("response entries must be non-negative");
  for (int j = 0; j < kOutcomes; ++j)
    if (std::abs(r.col(j).sum() - 1.0) > 1e-9) throw std::invalid_argument("response columns must sum to 1");
}

ResponseMatrix ideal_response(const sim::NoiseModel& readout) {
  readout.validate();
  const double p01 = readout.flip_0to1(), p10 = readout.flip_1to0();
  ResponseMatrix out;
  for (int i = 0; i < kOutcomes; ++i)
    for (int j = 0; j < kOutcomes; ++j) {
      double v = 1.0;
      for (int k = 0; k < kSubsystemSize; ++k) {
        const int bi = (i >> k) & 1, bj = (j >> k) & 1;
        if (bj == 0) v *= bi == 0 ? 1.0 - p01 : p01;
        else v *= bi == 1 ? 1.0 - p10 : p10;
      }
      out.r(i, j) = v;
    }
  return out;
}

ResponseMatrix calibrate_response(const sim::NoiseModel& readout, std::uint64_t shots, Rng& rng) {
  if (shots == 0) throw std::invalid_argument("shots must be positive");
  ResponseMatrix out;
  out.r.setZero();
  for (int j = 0; j < kOutcomes; ++j) {
    const auto counts = sim::sample_counts(sim::StateVector::basis(kSubsystemSize, static_cast<std::uint64_t>(j)),
                                           shots, readout, rng);
    for (const auto& [outcome, c] : counts) out.r(static_cast<Eigen::Index>(outcome), j) = static_cast<double>(c);
    out.r.col(j) /= static_cast<double>(shots);
  }
  return out;
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw std::invalid_argument("empty vector");
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

Eigen::VectorXd mitigate(const ResponseMatrix& response, const Eigen::VectorXd& p_exp, MitigationOptions options) {
  check_distribution(p_exp);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(response.r);
  if (!lu.isInvertible()) throw std::domain_error("response matrix is singular");
  Eigen::VectorXd p = lu.solve(p_exp);
  if (options.project_to_simplex) p = project_to_simplex(p);
  return p;
}

// ---------------------------------------------------------------- tomography

std::vector<std::string> all_settings() {
  std::vector<std::string> out;
  const std::string letters = "XYZ";
  for (int code = 0; code < 81; ++code) {
    std::string s(kSubsystemSize, 'Z');
    int c = code;
    for (int k = 0; k < kSubsystemSize; ++k, c /= 3) s[static_cast<std::size_t>(k)] = letters[static_cast<std::size_t>(c % 3)];
    out.push_back(s);
  }
  return out;
}

TomographyData exact_tomography(const Eigen::MatrixXcd& rho) {
  check_rho4(rho);
  TomographyData data;
  for (const auto& s : all_settings()) data.distributions[s] = setting_distribution(rho, s);
  return data;
}

TomographyData sample_tomography(const Eigen::MatrixXcd& rho, std::uint64_t shots_per_setting,
                                 const sim::NoiseModel& readout, Rng& rng) {
  check_rho4(rho);
  if (shots_per_setting == 0) throw std::invalid_argument("shots must be positive");
  const ResponseMatrix channel = ideal_response(readout);
  TomographyData data;
  data.shots = shots_per_setting;
  for (const auto& s : all_settings()) {
    const Eigen::VectorXd p = channel.r * setting_distribution(rho, s);
    data.distributions[s] = multinomial(p, shots_per_setting, rng) / static_cast<double>(shots_per_setting);
  }
  return data;
}

TomographyData mitigate_tomography(const TomographyData& data, const ResponseMatrix& response,
                                   MitigationOptions options) {
  TomographyData out;
  out.shots = data.shots;
  for (const auto& [s, p] : data.distributions) out.distributions[s] = mitigate(response, p, options);
  return out;
}

Eigen::MatrixXcd linear_inversion(const TomographyData& data) {
  for (const auto& [s, p] : data.distributions) {
    if (s.size() != kSubsystemSize || s.find_first_not_of("XYZ") != std::string::npos)
      throw std::invalid_argument("invalid setting '" + s + "'");
    check_distribution(p);
  }
  const std::string letters = "IXYZ";
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(kOutcomes, kOutcomes);
  for (int code = 0; code < 256; ++code) {
    std::array<int, kSubsystemSize> idx{};
    int mask = 0;
    for (int k = 0; k < kSubsystemSize; ++k) {
      idx[static_cast<std::size_t>(k)] = (code >> (2 * k)) & 3;
      if (idx[static_cast<std::size_t>(k)] != 0) mask |= 1 << k;
    }
    double sum = 0.0;
    int compatible = 0;
    for (const auto& [s, p] : data.distributions) {
      bool ok = true;
      for (int k = 0; k < kSubsystemSize; ++k) {
        const int i = idx[static_cast<std::size_t>(k)];
        if (i != 0 && s[static_cast<std::size_t>(k)] != letters[static_cast<std::size_t>(i)]) ok = false;
      }
      if (!ok) continue;
      double e = 0.0;
      for (int o = 0; o < kOutcomes; ++o) e += (std::popcount(static_cast<unsigned>(o & mask)) & 1 ? -1.0 : 1.0) * p(o);
      sum += e;
      ++compatible;
    }
    if (compatible == 0) throw std::invalid_argument("measurement settings are not informationally complete");
    std::array<Eigen::Matrix2cd, kSubsystemSize> f;
    for (int k = 0; k < kSubsystemSize; ++k) f[static_cast<std::size_t>(k)] = pauli(idx[static_cast<std::size_t>(k)]);
    rho += (sum / compatible / kOutcomes) * kron4(f);
  }
  return 0.5 * (rho + rho.adjoint());
}

Eigen::MatrixXcd project_to_physical(const Eigen::MatrixXcd& h) {
  if (h.rows() != h.cols() || h.rows() == 0) throw std::invalid_argument("expected a square matrix");
  const Eigen::MatrixXcd herm = 0.5 * (h + h.adjoint());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
  const Eigen::VectorXd mu = project_to_simplex(es.eigenvalues());
  return es.eigenvectors() * mu.asDiagonal() * es.eigenvectors().adjoint();
}

Eigen::MatrixXcd mle_qst(const TomographyData& data) { return project_to_physical(linear_inversion(data)); }

bool is_physical(const Eigen::MatrixXcd& rho, double tol) {
  if (rho.rows() != rho.cols() || rho.rows() == 0 || !rho.allFinite()) return false;
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(rho.trace() - Complex(1.0, 0.0)) > tol) return false;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

double renyi2(const Eigen::MatrixXcd& rho) {
  if (rho.rows() != rho.cols() || rho.rows() == 0) throw std::invalid_argument("expected a square matrix");
  const double purity = rho.cwiseAbs2().sum();
  if (purity > 1.0 + 1e-9) throw std::domain_error("purity exceeds one");
  if (!(purity > 0.0)) throw std::domain_error("purity must be positive");
  return std::max(0.0, -std::log2(purity));
}

// ---------------------------------------------------------------- reduced states

namespace {

struct Split {
  std::vector<std::uint64_t> keep_offsets;  // full index of each kept pattern
  std::vector<std::uint64_t> env_offsets;
};

Split split_indices(int n, const std::vector<int>& keep) {
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (int q : keep) {
    if (q < 0 || q >= n || used[static_cast<std::size_t>(q)]) throw std::invalid_argument("invalid subsystem");
    used[static_cast<std::size_t>(q)] = true;
  }
  std::vector<int> env;
  for (int q = 0; q < n; ++q)
    if (!used[static_cast<std::size_t>(q)]) env.push_back(q);
  auto offsets = [](const std::vector<int>& qs) {
    std::vector<std::uint64_t> out(std::size_t{1} << qs.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t k = 0; k < qs.size(); ++k)
        if ((i >> k) & 1) out[i] |= std::uint64_t{1} << qs[k];
    return out;
  };
  return {offsets(keep), offsets(env)};
}

}  // namespace

Eigen::MatrixXcd reduced_density_matrix(const sim::StateVector& state, const std::vector<int>& keep) {
  const Split sp = split_indices(state.n_qubits(), keep);
  const auto dk = static_cast<Eigen::Index>(sp.keep_offsets.size());
  const auto de = static_cast<Eigen::Index>(sp.env_offsets.size());
  Eigen::MatrixXcd psi(dk, de);
  for (Eigen::Index i = 0; i < dk; ++i)
    for (Eigen::Index e = 0; e < de; ++e)
      psi(i, e) = state[sp.keep_offsets[static_cast<std::size_t>(i)] | sp.env_offsets[static_cast<std::size_t>(e)]];
  return psi * psi.adjoint();
}

Eigen::MatrixXcd partial_trace(const Eigen::MatrixXcd& rho, int n_qubits, const std::vector<int>& keep) {
  if (n_qubits < 1 || rho.rows() != (Eigen::Index{1} << n_qubits) || rho.cols() != rho.rows())
    throw std::invalid_argument("matrix size does not match qubit count");
  const Split sp = split_indices(n_qubits, keep);
  const auto dk = static_cast<Eigen::Index>(sp.keep_offsets.size());
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dk, dk);
  for (Eigen::Index i = 0; i < dk; ++i)
    for (Eigen::Index j = 0; j < dk; ++j) {
      Complex s = 0.0;
      for (auto e : sp.env_offsets)
        s += rho(static_cast<Eigen::Index>(sp.keep_offsets[static_cast<std::size_t>(i)] | e),
                 static_cast<Eigen::Index>(sp.keep_offsets[static_cast<std::size_t>(j)] | e));
      out(i, j) = s;
    }
  return out;
}

const std::vector<std::vector<int>>& feature_subsets() {
  static const std::vector<std::vector<int>> subsets = {
      {0}, {1}, {2}, {3}, {0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3},
      {0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}, {0, 1, 2, 3}};
  return subsets;
}

FeatureVector feature_map(const Eigen::MatrixXcd& rho4) {
  check_rho4(rho4);
  FeatureVector phi;
  const auto& subsets = feature_subsets();
  for (std::size_t k = 0; k < subsets.size(); ++k)
    phi(static_cast<Eigen::Index>(k)) = renyi2(partial_trace(rho4, kSubsystemSize, subsets[k]));
  return phi;
}

FeatureVector feature_map(const sim::StateVector& state, const std::vector<int>& subsystem) {
  if (subsystem.size() != kSubsystemSize) throw std::invalid_argument("subsystem must have four qubits");
  return feature_map(reduced_density_matrix(state, subsystem));
}

FeatureVector feature_map(const TomographyData& data) { return feature_map(mle_qst(data)); }

// ---------------------------------------------------------------- classifiers

std::string LinearClassifier::to_json() const {
  nlohmann::json j;
  j["w"] = std::vector<double>(w.data(), w.data() + w.size());
  j["w0"] = w0;
  return j.dump();
}

LinearClassifier LinearClassifier::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto w = j.at("w").get<std::vector<double>>();
  if (w.size() != kFeatureCount) throw std::invalid_argument("classifier needs 15 weights");
  LinearClassifier c;
  for (int k = 0; k < kFeatureCount; ++k) c.w(k) = w[static_cast<std::size_t>(k)];
  c.w0 = j.at("w0").get<double>();
  if (!c.w.allFinite() || !std::isfinite(c.w0)) throw std::invalid_argument("classifier weights must be finite");
  return c;
}

double misclassification_rate(const LinearClassifier& clf, const std::vector<FeatureVector>& features,
                              const std::vector<int>& labels) {
  if (features.size() != labels.size() || features.empty()) throw std::invalid_argument("features and labels differ");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < features.size(); ++i) wrong += clf.predict(features[i]) != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(features.size());
}

LinearClassifier fit_linear_classifier(const std::vector<FeatureVector>& features, const std::vector<int>& labels,
                                       double c) {
  if (features.size() != labels.size() || features.empty()) throw std::invalid_argument("features and labels differ");
  const auto n = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd x(n, kFeatureCount);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = features[static_cast<std::size_t>(i)].transpose();
  if (!x.allFinite()) throw std::invalid_argument("features must be finite");
  const ml::SVMDual dual = ml::svm_solve_dual(x * x.transpose(), labels, c);
  LinearClassifier out;
  for (Eigen::Index i = 0; i < n; ++i)
    out.w += dual.coefficients(i) * labels[static_cast<std::size_t>(i)] * x.row(i).transpose();
  out.w0 = -dual.bias;
  out.training_accuracy = 1.0 - misclassification_rate(out, features, labels);
  return out;
}

LinearClassifier tee_classifier() {
  LinearClassifier c;
  c.w << 1, 0, 0, 1, 0, 0, -1, 1, 0, 0, -1, 0, 0, -1, 1;
  c.w0 = 0.1;
  return c;
}

NoisyEvaluation evaluate_classifiers(const std::vector<LinearClassifier>& classifiers,
                                     const std::function<TestSet(int)>& draw, int instances, double epsilon,
                                     std::uint64_t seed) {
  if (instances < 1) throw std::invalid_argument("instance count must be positive");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
  NoisyEvaluation out;
  out.errors.assign(classifiers.size(), std::vector<double>(static_cast<std::size_t>(instances), 0.0));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int inst = 0; inst < instances; ++inst) {
    try {
      TestSet set = draw(inst);
      if (set.features.size() != set.labels.size() || set.features.empty())
        throw std::invalid_argument("test set is empty or inconsistent");
      Rng rng(derive_seed(seed, "feature-noise", static_cast<std::uint64_t>(inst)));
      std::uniform_real_distribution<double> noise(-epsilon, epsilon);
      for (auto& phi : set.features)
        for (int k = 0; k < kFeatureCount; ++k) phi(k) += noise(rng);
      for (std::size_t c = 0; c < classifiers.size(); ++c)
        out.errors[c][static_cast<std::size_t>(inst)] = misclassification_rate(classifiers[c], set.features, set.labels);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& e : out.errors) {
    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
    double ss = 0.0;
    for (double v : e) ss += (v - mean) * (v - mean);
    out.mean.push_back(mean);
    out.stddev.push_back(e.size() > 1 ? std::sqrt(ss / static_cast<double>(e.size() - 1)) : 0.0);
  }
  return out;
}

std::string feature_table_csv(const std::vector<FeatureVector>& features, const std::vector<int>& labels) {
  if (features.size() != labels.size()) throw std::invalid_argument("features and labels differ");
  std::ostringstream os;
  os.precision(17);
  for (int k = 0; k < kFeatureCount; ++k) os << "S" << k << ",";
  os << "label\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (int k = 0; k < kFeatureCount; ++k) os << features[i](k) << ",";
    os << labels[i] << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- 3x3 patch

const std::vector<int>& default_subsystem() {
  static const std::vector<int> sub = {0, 1, 4, 5};
  return sub;
}

sim::StateVector sample_patch_state(int label, int layers, Rng& rng) {
  if (label != phases::kOrdered && label != phases::kTrivial) throw std::invalid_argument("label must be +1 or -1");
  static const sim::StateVector logical_zero = phases::logical_zero_projector(phases::surface_layout(3));
  sim::StateVector s = logical_zero;
  if (label == phases::kTrivial) {
    s = sim::StateVector(kPatchQubits);
    sim::apply_circuit(s, phases::random_product_circuit(kPatchQubits, rng));
  }
  sim::apply_circuit(s, phases::local_random_circuit(3, 3, layers, rng));
  return s;
}

}  // namespace shadowlab::features
