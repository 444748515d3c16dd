#include "doctest.h"

#include <bit>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "shadowlab/fermion.hpp"
#include "support/dense_oracle.hpp"

using namespace shadowlab;
using namespace shadowlab::fermion;

namespace {

// Many-body ground state in the n/2-particle sector of
// sum_i x_i (X_i X_{i+1} + Y_i Y_{i+1}) / 2, by dense diagonalization.
Eigen::VectorXcd many_body_ground_state(const HoppingSpec& spec) {
  const int n = spec.n;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(1 << n, 1 << n);
  for (int i = 0; i + 1 < n; ++i) {
    std::string xx(n, 'I'), yy(n, 'I');
    xx[i] = xx[i + 1] = 'X';
    yy[i] = yy[i + 1] = 'Y';
    h += 0.5 * spec.x[i] * (oracle::pauli_string(xx) + oracle::pauli_string(yy));
  }
  std::vector<int> sector;
  for (int k = 0; k < (1 << n); ++k)
    if (std::popcount(static_cast<unsigned>(k)) == n / 2) sector.push_back(k);
  const int d = static_cast<int>(sector.size());
  Eigen::MatrixXcd hs(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) hs(a, b) = h(sector[a], sector[b]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hs);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(1 << n);
  for (int a = 0; a < d; ++a) psi(sector[a]) = es.eigenvectors()(a, 0);
  return psi;
}

sim::StateVector prepare(const GivensNetwork& net) {
  sim::StateVector s(net.n_modes);
  sim::apply_circuit(s, givens_to_circuit(net));
  return s;
}

Eigen::Matrix4cd block_unitary(double theta) {
  sim::Circuit c(2);
  append_givens_block(c, {0, theta});
  return sim::circuit_unitary(c);
}

}  // namespace

TEST_CASE("hopping matrices") {
  HoppingSpec s;
  s.n = 2;
  s.x = {1.0};
  Eigen::MatrixXd expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK((build_hopping(s) - expected).norm() == 0.0);

  const HoppingSpec ssh = HoppingSpec::ssh(4, 1.0, 0.0);
  CHECK(ssh.x == std::vector<double>{1.0, 0.0, 1.0});

  s.n = 4;
  s.x = {1, 2, 3};
  const auto h = build_hopping(s);
  CHECK(h(0, 1) == 1);
  CHECK(h(2, 1) == 2);
  CHECK(h(3, 2) == 3);
  CHECK(h(0, 2) == 0);
  CHECK(h.diagonal().norm() == 0);

  s.n = 3;
  CHECK_THROWS_AS(build_hopping(s), std::invalid_argument);
}

TEST_CASE("hopping spec JSON round trip") {
  const HoppingSpec s = HoppingSpec::uniform(8, 42);
  const HoppingSpec back = HoppingSpec::from_json(s.to_json());
  CHECK(back.n == 8);
  CHECK(back.x == s.x);
  CHECK(back.seed == 42);
  CHECK(back.source == "uniform[0,2]");
}

TEST_CASE("two-site ground state correlation") {
  HoppingSpec s;
  s.n = 2;
  s.x = {1.0};
  const auto g = ground_correlation(build_hopping(s));
  Eigen::MatrixXd expected(2, 2);
  expected << 0.5, -0.5, -0.5, 0.5;
  CHECK((g.correlation - expected).norm() < 1e-14);
}

TEST_CASE("ground correlation is an idempotent half-filled projector") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(12, seed)));
    CHECK((g.correlation * g.correlation - g.correlation).norm() < 1e-10);
    CHECK(g.correlation.trace() == doctest::Approx(6.0).epsilon(1e-12));
    CHECK((g.q * g.q.transpose() - Eigen::MatrixXd::Identity(6, 6)).norm() < 1e-10);
  }
}

TEST_CASE("degenerate Fermi level is flagged") {
  // Two decoupled dimers: spectrum {-1, -1, 1, 1}, n_occ = 1 splits a pair.
  HoppingSpec s;
  s.n = 4;
  s.x = {1, 0, 1};
  CHECK(ground_correlation(build_hopping(s), 1).degenerate_fermi_level);
  CHECK_FALSE(ground_correlation(build_hopping(s), 2).degenerate_fermi_level);
}

TEST_CASE("Givens network size and trivial angles") {
  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(12, 7)));
  CHECK(givens_decompose(g.q).rotations.size() == 36);

  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 6);
  const auto net = givens_decompose(id);
  CHECK(net.rotations.size() == 9);
  for (const auto& r : net.rotations) CHECK(std::abs(std::sin(r.theta)) < 1e-15);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 4);
  CHECK_THROWS_AS(givens_decompose(bad), std::invalid_argument);
}

TEST_CASE("compiled Givens circuit reproduces the ED ground state") {
  for (int n : {2, 4, 6, 8}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const HoppingSpec spec = HoppingSpec::uniform(n, 1000 * n + seed);
      const auto g = ground_correlation(build_hopping(spec));
      const auto net = givens_decompose(g.q);
      CHECK(net.rotations.size() == static_cast<std::size_t>((n / 2) * (n / 2)));
      const auto state = prepare(net);
      const auto ref = many_body_ground_state(spec);
      const double fid = std::norm(oracle::to_vector(state).dot(ref));
      CHECK(fid >= 1 - 1e-10);
    }
  }
}

TEST_CASE("network mode matrix spans the input orbitals") {
  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(10, 3)));
  const auto net = givens_decompose(g.q);
  const Eigen::MatrixXd orb = net.orbitals();
  // Same occupied subspace: projectors agree.
  CHECK((orb.transpose() * orb - g.correlation).norm() < 1e-10);
}

TEST_CASE("Givens block circuit") {
  CHECK((block_unitary(0.0) - Eigen::Matrix4cd::Identity()).norm() < 1e-14);

  Rng rng(17);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  for (int t = 0; t < 20; ++t) {
    const double theta = angle(rng);
    // exp(theta A) with A the antisymmetric generator on |10>, |01>, summed
    // as a Taylor series.
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    a(2, 1) = 1;
    a(1, 2) = -1;
    Eigen::Matrix4d term = Eigen::Matrix4d::Identity(), sum = Eigen::Matrix4d::Identity();
    for (int k = 1; k < 40; ++k) {
      term = term * (theta * a) / k;
      sum += term;
    }
    CHECK((block_unitary(theta) - sum.cast<sim::Complex>()).norm() < 1e-10);
    CHECK((givens_block_matrix(theta) - sum).norm() < 1e-10);
  }
}

TEST_CASE("pi/4 block diagonalizes the hopping term") {
  const Eigen::Matrix4cd b = block_unitary(std::numbers::pi / 4);
  const Eigen::MatrixXcd hop = (oracle::pauli_string("XX") + oracle::pauli_string("YY")) / 4.0;
  const Eigen::MatrixXcd d = b * hop * b.adjoint();
  Eigen::Matrix4cd expected = Eigen::Matrix4cd::Zero();
  expected(1, 1) = -0.5;
  expected(2, 2) = 0.5;
  CHECK((d - expected).norm() < 1e-12);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hop);
  CHECK(es.eigenvalues()(0) == doctest::Approx(-0.5));
  CHECK(std::abs(es.eigenvalues()(1)) < 1e-12);
  CHECK(std::abs(es.eigenvalues()(2)) < 1e-12);
  CHECK(es.eigenvalues()(3) == doctest::Approx(0.5));
}

TEST_CASE("Jordan-Wigner observables") {
  auto ops = jw_observable(1, 4, 6);
  REQUIRE(ops.size() == 2);
  CHECK(ops[0].letters() == "IXZZXI");
  CHECK(ops[1].letters() == "IYZZYI");
  CHECK(ops[0].coefficient() == 0.25);
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      const auto s = jw_observable(i, j, 6)[0].letters();
      CHECK(std::count(s.begin(), s.end(), 'Z') == j - i - 1);
    }
  CHECK(jw_expectation(sim::StateVector::basis(3, 0b010), 1, 1) == doctest::Approx(1.0));
  CHECK(jw_expectation(sim::StateVector::basis(3, 0b010), 0, 0) == doctest::Approx(0.0));

  const double r = 1 / std::sqrt(2.0);
  const auto singlet = sim::StateVector::from_amplitudes(2, {0, r, -r, 0});
  CHECK(jw_expectation(singlet, 0, 1) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(jw_observable(0, 6, 6), std::out_of_range);
}

TEST_CASE("correlation matrix matches JW expectations on the compiled state") {
  for (int n : {4, 6, 8}) {
    const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(n, 55 + n)));
    const auto state = prepare(givens_decompose(g.q));
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) CHECK(std::abs(jw_expectation(state, i, j) - g.correlation(i, j)) < 1e-8);
  }
}

TEST_CASE("parity recompiling equals the explicit layer") {
  for (int n : {4, 6}) {
    const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(n, 900 + n)));
    const auto net = givens_decompose(g.q);
    std::vector<std::vector<ModePair>> sets = {{}, {{0, 1}}, {{1, 2}}};
    if (n == 6) sets.push_back({{0, 1}, {2, 3}, {4, 5}});
    for (const auto& pairs : sets) {
      const auto re = recompile_parity(net, pairs);
      CHECK(re.rotations.size() == net.rotations.size());
      sim::Circuit explicit_circuit = givens_to_circuit(net);
      append_parity_layer(explicit_circuit, pairs);

      // Reference: dense layer unitary applied to the dense preparation.
      Eigen::MatrixXcd layer = Eigen::MatrixXcd::Identity(1 << n, 1 << n);
      for (auto [a, b] : pairs) layer = oracle::embed2(n, a, b, block_unitary(std::numbers::pi / 4)) * layer;
      const Eigen::VectorXcd ref = layer * oracle::to_vector(prepare(net));

      sim::StateVector ex(n), rc(n);
      sim::apply_circuit(ex, explicit_circuit);
      sim::apply_circuit(rc, givens_to_circuit(re));
      const Eigen::VectorXcd v = oracle::to_vector(rc);
      const auto phase = ref.dot(v) / std::abs(ref.dot(v));
      CHECK((v - phase * ref).norm() < 1e-10);
      CHECK((oracle::to_vector(ex) - ref).norm() < 1e-10);
    }
  }
  const auto net = givens_decompose(Eigen::MatrixXd::Identity(2, 4));
  CHECK_THROWS_AS(recompile_parity(net, {{0, 1}, {1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(recompile_parity(net, {{0, 2}}), std::invalid_argument);
}

TEST_CASE("parity measurement recovers off-diagonal correlations") {
  const int n = 6;
  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(n, 4)));
  const auto net = recompile_parity(givens_decompose(g.q), {{0, 1}, {2, 3}, {4, 5}});
  const auto state = prepare(net);
  for (int p = 0; p < n; p += 2) {
    const double np = jw_expectation(state, p, p), nq = jw_expectation(state, p + 1, p + 1);
    CHECK(0.5 * (nq - np) == doctest::Approx(g.correlation(p, p + 1)).epsilon(1e-10));
  }
}

TEST_CASE("post-selection") {
  sim::Histogram h{{0b10, 5}, {0b11, 3}};
  const auto ps = post_select(h, 1);
  CHECK(ps.kept.size() == 1);
  CHECK(ps.kept.at(0b10) == 5);
  CHECK(ps.retained_fraction() == doctest::Approx(5.0 / 8.0));
  CHECK_THROWS_AS(post_select(sim::Histogram{{0b11, 4}}, 1), std::runtime_error);

  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(8, 1)));
  Rng rng(1);
  const auto circuit = givens_to_circuit(givens_decompose(g.q));
  CHECK(post_select(sim::sample_circuit(sim::StateVector(8), circuit, {}, 5000, 1, rng), 4).retained_fraction() == 1.0);
}

TEST_CASE("readout noise retention follows the binomial model") {
  const int n = 12;
  const double p = 0.01;
  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(n, 2)));
  const auto circuit = givens_to_circuit(givens_decompose(g.q));
  sim::NoiseModel noise;
  noise.p_m = p;
  Rng rng(21);
  const std::uint64_t shots = 200000;
  const double kept = post_select(sim::sample_circuit(sim::StateVector(n), circuit, noise, shots, 1, rng), 6)
                          .retained_fraction();
  // Weight survives iff the 1->0 and 0->1 flip counts are equal.
  double exact = 0.0;
  for (int k = 0; k <= 6; ++k) {
    const double c = std::tgamma(7.0) / (std::tgamma(k + 1.0) * std::tgamma(7.0 - k));
    exact += c * c * std::pow(p, 2 * k) * std::pow(1 - p, n - 2 * k);
  }
  CHECK(std::abs(exact - std::pow(1 - p, n)) < 2 * 36 * p * p);
  CHECK(std::abs(kept - exact) < 4 * std::sqrt(exact * (1 - exact) / shots));
}

TEST_CASE("McWeeny purification") {
  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(8, 9)));
  CHECK(mcweeny(g.correlation).iterations == 0);

  Eigen::MatrixXd s(1, 1);
  s << 0.6;
  CHECK(mcweeny(s, 1, 1e-10).c(0, 0) == doctest::Approx(0.648).epsilon(1e-14));
  CHECK(mcweeny(s).c(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  s << 0.4;
  CHECK(mcweeny(s, 1, 1e-10).c(0, 0) == doctest::Approx(0.352).epsilon(1e-14));
  CHECK(std::abs(mcweeny(s).c(0, 0)) < 1e-10);
  CHECK_FALSE(mcweeny(s, 1, 1e-10).converged);

  s << 1.6;
  CHECK_THROWS_AS(mcweeny(s), std::domain_error);

  Rng rng(3);
  std::uniform_real_distribution<double> noise(-0.03, 0.03);
  Eigen::MatrixXd c = g.correlation;
  for (int i = 0; i < 8; ++i)
    for (int j = i; j < 8; ++j) {
      const double e = noise(rng);
      c(i, j) += e;
      if (i != j) c(j, i) += e;
    }
  const auto p = mcweeny(c);
  CHECK(p.converged);
  for (std::size_t k = 1; k < p.residuals.size(); ++k) CHECK(p.residuals[k] < p.residuals[k - 1]);
  CHECK((p.c - g.correlation).norm() < (c - g.correlation).norm());
}

TEST_CASE("round robin covers every pair once") {
  for (int n : {4, 6, 12}) {
    const auto rounds = round_robin_pairs(n);
    CHECK(rounds.size() == static_cast<std::size_t>(n - 1));
    std::set<ModePair> seen;
    for (const auto& r : rounds) {
      std::set<int> modes;
      for (auto [a, b] : r) {
        CHECK(a < b);
        modes.insert(a);
        modes.insert(b);
        seen.insert({a, b});
      }
      CHECK(modes.size() == static_cast<std::size_t>(n));
    }
    CHECK(seen.size() == static_cast<std::size_t>(n * (n - 1) / 2));
  }
}

TEST_CASE("exact-expectation estimate reproduces the ED correlation matrix") {
  for (bool recompile : {true, false}) {
    const HoppingSpec spec = HoppingSpec::uniform(8, 31);
    EstimateOptions opt;
    opt.exact = true;
    opt.mitigation.recompile = recompile;
    const auto est = estimate_correlation_matrix(spec, opt, 1);
    const auto g = ground_correlation(build_hopping(spec));
    CHECK((est.c - g.correlation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(est.circuits == 8);
  }
}

TEST_CASE("mitigation reduces estimation error on a noisy six-site chain") {
  sim::NoiseModel noise;
  noise.p_single = 0.001;
  noise.p_two = 0.01;
  noise.p_m = 0.01;
  double err_raw = 0, err_mit = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const HoppingSpec spec = HoppingSpec::uniform(6, 100 + seed);
    const auto exact = ground_correlation(build_hopping(spec)).correlation;
    EstimateOptions opt;
    opt.noise = noise;
    opt.shots = 20000;
    const auto mit = estimate_correlation_matrix(spec, opt, seed);
    opt.mitigation = {false, false, true};
    const auto raw = estimate_correlation_matrix(spec, opt, seed);
    CHECK((raw.c - raw.c.transpose()).norm() == 0.0);
    err_raw += (raw.c - exact).norm();
    err_mit += (mit.c - exact).norm();
    CHECK(mit.mean_retention < 1.0);
  }
  CHECK(err_mit < err_raw);
}

TEST_CASE("correlation CSV round trip") {
  const auto g = ground_correlation(build_hopping(HoppingSpec::uniform(6, 8)));
  std::stringstream ss;
  write_correlation_csv(ss, g.correlation, 3);
  int occ = 0;
  const auto back = read_correlation_csv(ss, &occ);
  CHECK(occ == 3);
  CHECK((back - g.correlation).norm() == 0.0);
  std::stringstream bad("n,x\n");
  CHECK_THROWS(read_correlation_csv(bad));
}
