#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "shadowlab/features.hpp"
#include "shadowlab/phases.hpp"
#include "support/dense_oracle.hpp"

using namespace shadowlab;
using namespace shadowlab::features;

namespace {

sim::StateVector random_state(int n, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<sim::Complex> amps(std::size_t{1} << n);
  double norm = 0.0;
  for (auto& a : amps) {
    a = {g(rng), g(rng)};
    norm += std::norm(a);
  }
  for (auto& a : amps) a /= std::sqrt(norm);
  return sim::StateVector::from_amplitudes(n, amps);
}

Eigen::MatrixXcd random_density(int n, int rank, Rng& rng) {
  std::normal_distribution<double> g;
  const int dim = 1 << n;
  Eigen::MatrixXcd a(dim, rank);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = {g(rng), g(rng)};
  Eigen::MatrixXcd rho = a * a.adjoint();
  return rho / rho.trace().real();
}

// rho_A = 2^-k sum_P <P> P over Pauli strings supported on `keep`.
Eigen::MatrixXcd pauli_reduced(const sim::StateVector& s, const std::vector<int>& keep) {
  const int n = s.n_qubits();
  const int k = static_cast<int>(keep.size());
  const Eigen::VectorXcd psi = oracle::to_vector(s);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(1 << k, 1 << k);
  const std::string letters = "IXYZ";
  for (int code = 0; code < (1 << (2 * k)); ++code) {
    std::string full(static_cast<std::size_t>(n), 'I'), local(static_cast<std::size_t>(k), 'I');
    for (int j = 0; j < k; ++j) {
      const char c = letters[static_cast<std::size_t>((code >> (2 * j)) & 3)];
      full[static_cast<std::size_t>(keep[static_cast<std::size_t>(j)])] = c;
      local[static_cast<std::size_t>(j)] = c;
    }
    out += oracle::expect(psi, full) * oracle::pauli_string(local);
  }
  return out / static_cast<double>(1 << k);
}

Eigen::MatrixXcd projector(const sim::StateVector& s) {
  const Eigen::VectorXcd v = oracle::to_vector(s);
  return v * v.adjoint();
}

}  // namespace

TEST_CASE("response matrix calibration") {
  Rng rng(3);
  sim::NoiseModel clean;
  const auto r0 = calibrate_response(clean, 1000, rng);
  CHECK(r0.r == Eigen::Matrix<double, 16, 16>::Identity());
  CHECK(ideal_response(clean).r == Eigen::Matrix<double, 16, 16>::Identity());

  sim::NoiseModel readout;
  readout.p_m = 0.02;
  readout.p_m10 = 0.05;
  const std::uint64_t shots = 50000;
  const auto r = calibrate_response(readout, shots, rng);
  r.validate();
  for (int j = 0; j < 16; ++j) CHECK(r.r.col(j).sum() == doctest::Approx(1.0).epsilon(1e-14));

  // Product-channel oracle built by repeated Kronecker products.
  Eigen::Matrix2d m;
  m << 0.98, 0.05, 0.02, 0.95;
  Eigen::MatrixXd expected = Eigen::MatrixXd::Ones(1, 1);
  for (int k = 0; k < 4; ++k) {
    Eigen::MatrixXd next(expected.rows() * 2, expected.cols() * 2);
    for (Eigen::Index a = 0; a < 2; ++a)
      for (Eigen::Index b = 0; b < 2; ++b) next.block(a * expected.rows(), b * expected.cols(), expected.rows(), expected.cols()) = m(a, b) * expected;
    expected = next;
  }
  CHECK((ideal_response(readout).r - expected).cwiseAbs().maxCoeff() < 1e-15);
  int outside = 0;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const double p = expected(i, j);
      const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(shots));
      // One count of slack for the lattice of attainable frequencies.
      if (std::abs(r.r(i, j) - p) > 3.0 * sigma + 1.0 / static_cast<double>(shots)) ++outside;
    }
  CHECK(outside == 0);
  CHECK_THROWS_AS(calibrate_response(readout, 0, rng), std::invalid_argument);
}

TEST_CASE("measurement error mitigation") {
  Rng rng(5);
  ResponseMatrix id;
  id.r.setIdentity();
  Eigen::VectorXd p = Eigen::VectorXd::Random(16).cwiseAbs();
  p /= p.sum();
  CHECK((mitigate(id, p) - p).norm() < 1e-15);

  for (int trial = 0; trial < 20; ++trial) {
    ResponseMatrix r;
    r.r = 0.3 * Eigen::Matrix<double, 16, 16>::Random().cwiseAbs();
    r.r += Eigen::Matrix<double, 16, 16>::Identity();
    for (int j = 0; j < 16; ++j) r.r.col(j) /= r.r.col(j).sum();
    Eigen::VectorXd truth = Eigen::VectorXd::Random(16).cwiseAbs();
    truth /= truth.sum();
    const Eigen::VectorXd p_exp = r.r * truth;
    const Eigen::VectorXd rec = mitigate(r, p_exp);
    CHECK((rec - truth).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((r.r * rec - p_exp).norm() < 1e-12);
    Eigen::VectorXd noisy = p_exp + 1e-3 * Eigen::VectorXd::Random(16);
    noisy /= noisy.sum();
    CHECK(mitigate(r, noisy).sum() == doctest::Approx(1.0).epsilon(1e-8));
  }

  // Unclipped output may be negative; the simplex flag fixes that.
  sim::NoiseModel readout;
  readout.p_m = 0.1;
  const auto ideal = ideal_response(readout);
  Eigen::VectorXd spike = Eigen::VectorXd::Zero(16);
  spike(0) = 1.0;
  const Eigen::VectorXd raw = mitigate(ideal, spike);
  CHECK(raw.minCoeff() < 0.0);
  const Eigen::VectorXd clipped = mitigate(ideal, spike, {true});
  CHECK(clipped.minCoeff() >= 0.0);
  CHECK(clipped.sum() == doctest::Approx(1.0));

  ResponseMatrix singular;
  singular.r = Eigen::Matrix<double, 16, 16>::Constant(1.0 / 16.0);
  CHECK_THROWS_AS(mitigate(singular, p), std::domain_error);
  CHECK_THROWS_AS(mitigate(id, Eigen::VectorXd::Ones(4)), std::invalid_argument);
}

TEST_CASE("simplex projection") {
  Eigen::VectorXd v(4);
  v << 0.7, 0.5, -0.1, -0.1;
  const Eigen::VectorXd w = project_to_simplex(v);
  CHECK(w.sum() == doctest::Approx(1.0));
  CHECK(w(0) == doctest::Approx(0.6));
  CHECK(w(1) == doctest::Approx(0.4));
  CHECK(w(2) == 0.0);
  Eigen::VectorXd inside(3);
  inside << 0.2, 0.3, 0.5;
  CHECK((project_to_simplex(inside) - inside).norm() < 1e-15);
}

TEST_CASE("tomography from exact distributions") {
  const auto settings = all_settings();
  CHECK(settings.size() == 81);
  CHECK(std::set<std::string>(settings.begin(), settings.end()).size() == 81);

  const Eigen::MatrixXcd zero = projector(sim::StateVector(4));
  const Eigen::MatrixXcd rho0 = mle_qst(exact_tomography(zero));
  CHECK((rho0 - zero).cwiseAbs().maxCoeff() < 1e-8);

  const Eigen::MatrixXcd mixed = Eigen::MatrixXcd::Identity(16, 16) / 16.0;
  CHECK((mle_qst(exact_tomography(mixed)) - mixed).cwiseAbs().maxCoeff() < 1e-8);

  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = random_state(4, rng);
    const Eigen::MatrixXcd rho = projector(s);
    const Eigen::MatrixXcd est = mle_qst(exact_tomography(rho));
    CHECK(is_physical(est));
    const double fid = (est * rho).trace().real();
    CHECK(fid >= 1.0 - 1e-8);
  }

  auto data = exact_tomography(zero);
  data.distributions.erase("XYZX");
  CHECK_THROWS_AS(linear_inversion(data), std::invalid_argument);
  data.distributions["XYQX"] = Eigen::VectorXd::Zero(16);
  CHECK_THROWS_AS(linear_inversion(data), std::invalid_argument);
}

TEST_CASE("physical projection is the Frobenius-closest density matrix") {
  Rng rng(11);
  std::normal_distribution<double> g;
  int with_negative = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // A physical state plus a Hermitian trace-zero perturbation.
    Eigen::MatrixXcd e(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) e(i, j) = {g(rng), g(rng)};
    e = (0.5 * (e + e.adjoint())).eval();
    e -= (e.trace() / 4.0) * Eigen::MatrixXcd::Identity(4, 4);
    const Eigen::MatrixXcd h = random_density(2, 1 + trial % 3, rng) + 0.15 * e;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eh(h);
    if (eh.eigenvalues().minCoeff() < 0.0) ++with_negative;

    const Eigen::MatrixXcd p = project_to_physical(h);
    CHECK(is_physical(p));
    // Optimality over the convex set: <H - P, S - P> <= 0 for every density
    // matrix S, whose worst case is the top eigenvector of H - P.
    const Eigen::MatrixXcd d = h - p;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ed(d);
    CHECK(ed.eigenvalues().maxCoeff() <= (d * p).trace().real() + 1e-10);
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXcd other = random_density(2, 1 + k % 4, rng);
      CHECK((h - other).norm() >= (h - p).norm() - 1e-12);
    }
    CHECK((project_to_physical(p) - p).norm() < 1e-12);
  }
  CHECK(with_negative > 10);
}

TEST_CASE("Renyi-2 entropy") {
  Rng rng(13);
  CHECK(renyi2(projector(random_state(3, rng))) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(renyi2(Eigen::MatrixXcd::Identity(2, 2) / 2.0) == doctest::Approx(1.0));
  CHECK(renyi2(Eigen::MatrixXcd::Identity(4, 4) / 4.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(renyi2(2.0 * Eigen::MatrixXcd::Identity(2, 2)), std::domain_error);

  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXcd a = random_density(1, 2, rng);
    const Eigen::MatrixXcd b = random_density(2, 1 + trial % 4, rng);
    Eigen::MatrixXcd ab(8, 8);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) ab.block(4 * i, 4 * j, 4, 4) = a(i, j) * b;
    CHECK(renyi2(ab) == doctest::Approx(renyi2(a) + renyi2(b)).epsilon(1e-9));
  }
}

TEST_CASE("reduced density matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const auto s = random_state(5, rng);
    for (const std::vector<int>& keep : {std::vector<int>{3}, std::vector<int>{4, 1}, std::vector<int>{0, 2, 3}}) {
      const Eigen::MatrixXcd r = reduced_density_matrix(s, keep);
      CHECK((r - pauli_reduced(s, keep)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((partial_trace(projector(s), 5, keep) - r).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  const auto s = random_state(3, rng);
  CHECK_THROWS_AS(reduced_density_matrix(s, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(reduced_density_matrix(s, {3}), std::invalid_argument);
  CHECK_THROWS_AS(partial_trace(Eigen::MatrixXcd::Identity(4, 4), 3, {0}), std::invalid_argument);
}

TEST_CASE("feature map") {
  CHECK(feature_subsets().size() == 15);
  CHECK(default_subsystem() == std::vector<int>{0, 1, 4, 5});

  Rng rng(19);
  sim::StateVector product(9);
  sim::apply_circuit(product, phases::random_product_circuit(9, rng));
  CHECK(feature_map(product, default_subsystem()).cwiseAbs().maxCoeff() < 1e-12);

  // GHZ on the subsystem: every proper subset is one bit, the full set zero.
  sim::Circuit ghz(9);
  ghz.h(0).cx(0, 1).cx(1, 4).cx(4, 5);
  sim::StateVector g(9);
  sim::apply_circuit(g, ghz);
  const FeatureVector phi = feature_map(g, default_subsystem());
  for (int k = 0; k < 14; ++k) CHECK(phi(k) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(phi(14)) < 1e-12);

  // Relabeling the subsystem permutes the entries by the induced subset map.
  const auto s = random_state(9, rng);
  const std::vector<int> sub = {0, 1, 4, 5};
  const std::vector<int> perm = {2, 0, 3, 1};  // position k of the new order is old position perm[k]
  std::vector<int> relabeled(4);
  for (int k = 0; k < 4; ++k) relabeled[static_cast<std::size_t>(k)] = sub[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
  const FeatureVector a = feature_map(s, sub), b = feature_map(s, relabeled);
  const auto& subsets = feature_subsets();
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    std::vector<int> old_positions;
    for (int p : subsets[i]) old_positions.push_back(perm[static_cast<std::size_t>(p)]);
    std::sort(old_positions.begin(), old_positions.end());
    const auto j = std::find(subsets.begin(), subsets.end(), old_positions) - subsets.begin();
    CHECK(b(static_cast<Eigen::Index>(i)) == doctest::Approx(a(j)).epsilon(1e-12));
  }

  // Pure global state: the entropy of A equals that of its complement.
  for (const auto& subset : subsets) {
    std::vector<int> qa, qc;
    for (int p : subset) qa.push_back(sub[static_cast<std::size_t>(p)]);
    for (int q = 0; q < 9; ++q)
      if (std::find(qa.begin(), qa.end(), q) == qa.end()) qc.push_back(q);
    CHECK(renyi2(reduced_density_matrix(s, qa)) == doctest::Approx(renyi2(reduced_density_matrix(s, qc))).epsilon(1e-9));
  }
  for (int k = 0; k < 15; ++k) CHECK(a(k) <= static_cast<double>(subsets[static_cast<std::size_t>(k)].size()) + 1e-12);
  CHECK_THROWS_AS(feature_map(s, {0, 1, 4}), std::invalid_argument);
}

TEST_CASE("measured features agree with exact features") {
  Rng rng(23);
  sim::NoiseModel clean;
  for (int label : {phases::kOrdered, phases::kTrivial}) {
    const auto s = sample_patch_state(label, 2, rng);
    const Eigen::MatrixXcd rho = reduced_density_matrix(s, default_subsystem());
    const FeatureVector exact = feature_map(s, default_subsystem());
    const auto data = sample_tomography(rho, 50000, clean, rng);
    CHECK(data.distributions.size() == 81);
    const Eigen::MatrixXcd est = mle_qst(data);
    CHECK(is_physical(est));
    CHECK((feature_map(data) - exact).cwiseAbs().maxCoeff() <= 0.02);
  }
}

TEST_CASE("mitigated tomography removes the readout bias") {
  Rng rng(29);
  sim::NoiseModel readout;
  readout.p_m = 0.03;
  readout.p_m10 = 0.06;
  const auto s = sample_patch_state(phases::kOrdered, 2, rng);
  const Eigen::MatrixXcd rho = reduced_density_matrix(s, default_subsystem());
  const FeatureVector exact = feature_map(s, default_subsystem());
  const auto response = calibrate_response(readout, 50000, rng);
  const auto raw = sample_tomography(rho, 50000, readout, rng);
  const FeatureVector phi_raw = feature_map(raw);
  const FeatureVector phi_mem = feature_map(mitigate_tomography(raw, response));
  CHECK((phi_mem - exact).cwiseAbs().maxCoeff() < (phi_raw - exact).cwiseAbs().maxCoeff());
  CHECK((phi_mem - exact).cwiseAbs().maxCoeff() <= 0.03);
  // Readout flips only mix the state, so raw entropies sit above the truth.
  CHECK((phi_raw - exact).sum() > 0.0);
}

TEST_CASE("linear classifiers") {
  Rng rng(31);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<FeatureVector> x;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    FeatureVector phi;
    for (int k = 0; k < 15; ++k) phi(k) = g(rng);
    const int label = i % 2 ? 1 : -1;
    phi(3) += label;
    x.push_back(phi);
    y.push_back(label);
  }
  const auto clf = fit_linear_classifier(x, y, 1.0);
  CHECK(clf.training_accuracy == 1.0);
  CHECK(misclassification_rate(clf, x, y) == 0.0);
  CHECK(clf.w(3) > 0.0);

  std::vector<int> flipped(y.size());
  std::transform(y.begin(), y.end(), flipped.begin(), [](int v) { return -v; });
  const auto neg = fit_linear_classifier(x, flipped, 1.0);
  CHECK((neg.w + clf.w).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(neg.w0 == doctest::Approx(-clf.w0).epsilon(1e-5));

  CHECK_THROWS_AS(fit_linear_classifier(x, std::vector<int>(x.size(), 1)), std::invalid_argument);
  CHECK_THROWS_AS(fit_linear_classifier({}, {}), std::invalid_argument);

  const auto back = LinearClassifier::from_json(clf.to_json());
  CHECK(back.w == clf.w);
  CHECK(back.w0 == clf.w0);
  CHECK_THROWS(LinearClassifier::from_json(R"({"w":[1,2],"w0":0})"));

  const auto tee = tee_classifier();
  CHECK(tee.w.sum() == doctest::Approx(1.0));
  CHECK(tee.w0 == 0.1);
  CHECK(tee.w(6) == -1.0);

  const std::string csv = feature_table_csv(x, y);
  CHECK(csv.substr(0, csv.find('\n')) == "S0,S1,S2,S3,S4,S5,S6,S7,S8,S9,S10,S11,S12,S13,S14,label");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
}

TEST_CASE("TEE classifier on fixed points") {
  Rng rng(37);
  const auto topo = sample_patch_state(phases::kOrdered, 0, rng);
  const auto trivial = sample_patch_state(phases::kTrivial, 0, rng);
  const FeatureVector a = feature_map(topo, default_subsystem());
  const FeatureVector b = feature_map(trivial, default_subsystem());
  const auto tee = tee_classifier();
  CHECK(tee.w.dot(a) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(tee.predict(a) == phases::kOrdered);
  CHECK(tee.predict(b) == phases::kTrivial);
  CHECK_THROWS_AS(sample_patch_state(0, 2, rng), std::invalid_argument);
}

TEST_CASE("noisy classifier evaluation") {
  std::vector<FeatureVector> x;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    FeatureVector phi = FeatureVector::Zero();
    const int label = i % 2 ? 1 : -1;
    phi(0) = label;
    x.push_back(phi);
    y.push_back(label);
  }
  LinearClassifier perfect;
  perfect.w(0) = 1.0;
  LinearClassifier wrong;
  wrong.w(0) = -1.0;
  const auto draw = [&](int) { return TestSet{x, y}; };
  const auto r = evaluate_classifiers({perfect, wrong}, draw, 10, 0.0, 1);
  CHECK(r.mean[0] == 0.0);
  CHECK(r.mean[1] == 1.0);
  CHECK(r.stddev[0] == 0.0);

  // Noise larger than the margin produces errors with a spread.
  const auto noisy = evaluate_classifiers({perfect}, draw, 20, 2.0, 1);
  CHECK(noisy.mean[0] > 0.0);
  CHECK(noisy.stddev[0] > 0.0);
  const auto again = evaluate_classifiers({perfect}, draw, 20, 2.0, 1);
  CHECK(again.errors == noisy.errors);
  CHECK_THROWS_AS(evaluate_classifiers({perfect}, draw, 0, 0.1, 1), std::invalid_argument);
}
