#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "shadowlab/ml.hpp"
#include "shadowlab/rng.hpp"

using namespace shadowlab;
using namespace shadowlab::ml;

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = 0.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// Literal triple sum over i != j and k_i, k_j.
double dirichlet_naive(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (i == j) continue;
      for (int a = -3; a <= 3; ++a)
        for (int b = -3; b <= 3; ++b) s += std::cos(M_PI * (a * (x(i) - y(i)) + b * (x(j) - y(j))));
    }
  return s;
}

}  // namespace

TEST_CASE("kernel values") {
  Rng rng(1);
  const Eigen::MatrixXd x = uniform_matrix(2, 11, rng);
  const Eigen::VectorXd a = x.row(0).transpose(), b = x.row(1).transpose();
  CHECK(kernel_eval(KernelSpec::gaussian(0.7), a, a) == 1.0);
  CHECK(dirichlet_raw(a, a) == doctest::Approx(5390.0).epsilon(1e-14));
  CHECK(dirichlet_raw(a, b) == doctest::Approx(dirichlet_naive(a, b)).epsilon(1e-10));
  CHECK(kernel_eval(KernelSpec::dirichlet(), a, a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(kernel_eval(KernelSpec::dirichlet(), a, b) == doctest::Approx(dirichlet_naive(a, b) / 5390.0).epsilon(1e-10));
  CHECK(kernel_eval(KernelSpec::dirichlet(), a, b) == kernel_eval(KernelSpec::dirichlet(), b, a));
  CHECK(kernel_eval(KernelSpec::gaussian(0.7), a, b) == doctest::Approx(std::exp(-0.7 * (a - b).squaredNorm())));
  CHECK_THROWS_AS(kernel_eval(KernelSpec::gaussian(-1.0), a, b), std::invalid_argument);
  CHECK_THROWS_AS(kernel_eval(KernelSpec::gaussian(1.0), a, Eigen::VectorXd::Zero(3)), std::invalid_argument);
  KernelSpec one_d = KernelSpec::dirichlet();
  CHECK_THROWS_AS(kernel_eval(one_d, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), std::domain_error);
}

TEST_CASE("Gaussian alpha heuristic") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 1, 1;
  CHECK(gaussian_alpha(x) == doctest::Approx(1.0));
  CHECK_THROWS(gaussian_alpha(Eigen::MatrixXd::Zero(3, 2)));
}

TEST_CASE("KRR closed forms") {
  RegressionDataset one{Eigen::MatrixXd::Constant(1, 3, 0.4), Eigen::MatrixXd::Constant(1, 2, 0.8)};
  const auto spec = KernelSpec::gaussian(1.0);
  const KRRModel exact = krr_fit(one, spec, 0.0);
  CHECK(exact.predict(Eigen::VectorXd(one.inputs.row(0).transpose()))(1) == doctest::Approx(0.8));
  const KRRModel ridge = krr_fit(one, spec, 0.5);
  CHECK(ridge.predict(Eigen::VectorXd(one.inputs.row(0).transpose()))(0) == doctest::Approx(0.8 / 1.5));

  Rng rng(2);
  RegressionDataset data{uniform_matrix(30, 4, rng), uniform_matrix(30, 3, rng, -1, 1)};
  const Eigen::MatrixXd test = uniform_matrix(7, 4, rng);
  const KRRModel big = krr_fit(data, spec, 1e6);
  CHECK(big.predict(test).cwiseAbs().maxCoeff() < 1e-4);

  const double lambda = 0.05;
  const KRRModel m = krr_fit(data, spec, lambda);
  const Eigen::MatrixXd k = kernel_matrix(spec, data.inputs, data.inputs);
  const Eigen::MatrixXd kinv = (k + lambda * Eigen::MatrixXd::Identity(30, 30)).inverse();
  const Eigen::MatrixXd direct = kernel_matrix(spec, test, data.inputs) * kinv * data.targets;
  CHECK((m.predict(test) - direct).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::MatrixXd a = m.dual;
  CHECK(((k + lambda * Eigen::MatrixXd::Identity(30, 30)) * a - data.targets).norm() <= 1e-8 * data.targets.norm());

  RegressionDataset doubled = data;
  doubled.targets *= 2.0;
  CHECK((krr_fit(doubled, spec, lambda).predict(test) - 2.0 * m.predict(test)).cwiseAbs().maxCoeff() < 1e-10);

  RegressionDataset shuffled = data;
  for (int i = 0; i < 30; ++i) {
    shuffled.inputs.row(i) = data.inputs.row(29 - i);
    shuffled.targets.row(i) = data.targets.row(29 - i);
  }
  CHECK((krr_fit(shuffled, spec, lambda).predict(test) - m.predict(test)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("KRR interpolates as lambda approaches zero") {
  Rng rng(3);
  RegressionDataset data{uniform_matrix(15, 3, rng), uniform_matrix(15, 2, rng)};
  const KRRModel m = krr_fit(data, KernelSpec::gaussian(2.0), 1e-10);
  CHECK((m.predict(data.inputs) - data.targets).cwiseAbs().maxCoeff() <= 1e-6);
  RegressionDataset dup{Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Ones(2, 1)};
  dup.targets(1, 0) = 3.0;
  CHECK_THROWS_AS(krr_fit(dup, KernelSpec::gaussian(1.0), 0.0), std::domain_error);
}

TEST_CASE("precomputed kernels and model serialization") {
  Rng rng(4);
  RegressionDataset data{uniform_matrix(10, 3, rng), uniform_matrix(10, 2, rng)};
  const auto spec = KernelSpec::gaussian(gaussian_alpha(data.inputs));
  const KRRModel m = krr_fit(data, spec, 0.1);
  const KRRModel g = krr_fit_gram(kernel_matrix(spec, data.inputs, data.inputs), data.targets, 0.1);
  const Eigen::MatrixXd test = uniform_matrix(4, 3, rng);
  CHECK((g.predict_from_kernel(kernel_matrix(spec, test, data.inputs)) - m.predict(test)).norm() < 1e-12);
  CHECK_THROWS_AS(g.predict(test), std::logic_error);
  const KRRModel back = KRRModel::from_json(m.to_json());
  CHECK((back.predict(test) - m.predict(test)).norm() == 0.0);
  CHECK(back.kernel.kind == KernelKind::gaussian);
  CHECK(kernel_kind_from_string("modified-dirichlet") == KernelKind::modified_dirichlet);
}

TEST_CASE("rmse") {
  Rng rng(5);
  const Eigen::MatrixXd a = uniform_matrix(6, 5, rng);
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a.array() + 0.3, a) == doctest::Approx(0.3).epsilon(1e-14));
  const Eigen::MatrixXd b = uniform_matrix(6, 5, rng);
  double naive = 0.0;
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    naive += std::sqrt(s / 5.0);
  }
  CHECK(std::abs(rmse(a, b) - naive / 6.0) < 1e-12);
  CHECK_THROWS_AS(rmse(a, Eigen::MatrixXd::Zero(6, 4)), std::invalid_argument);
}

TEST_CASE("lambda selection") {
  Rng rng(6);
  auto target = [](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd y(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) y(i, 0) = 0.5 * x(i, 0) - 0.2 * x(i, 1);
    return y;
  };
  const Eigen::MatrixXd xt = uniform_matrix(60, 2, rng), xv = uniform_matrix(30, 2, rng);
  RegressionDataset train{xt, target(xt)}, valid{xv, target(xv)};
  const auto spec = KernelSpec::gaussian(gaussian_alpha(xt));
  const LambdaSelection sel = select_lambda(train, valid, spec);
  CHECK(sel.lambda == kLambdaGrid.front());
  CHECK(sel.validation_rmse.size() == kLambdaGrid.size());
  CHECK(select_lambda(train, valid, spec, {0.7}).lambda == 0.7);
  // Equal RMSE on a duplicated grid entry resolves to the smaller value.
  CHECK(select_lambda(train, valid, spec, {0.5, 0.5}).lambda == 0.5);
  CHECK(std::find(kLambdaGrid.begin(), kLambdaGrid.end(), 0.05) != kLambdaGrid.end());
}

TEST_CASE("kernel PCA of the identity") {
  const int n = 6;
  const PCAEmbedding e = kernel_pca(Eigen::MatrixXd::Identity(n, n), n - 1);
  for (int c = 0; c < n - 1; ++c) CHECK(e.eigenvalues(c) == doctest::Approx(1.0));
  CHECK(!e.insufficient_positive);
  const double d01 = (e.embedding.row(0) - e.embedding.row(1)).norm();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) CHECK((e.embedding.row(i) - e.embedding.row(j)).norm() == doctest::Approx(d01));
  CHECK(d01 == doctest::Approx(std::sqrt(2.0)));
  const PCAEmbedding all = kernel_pca(Eigen::MatrixXd::Identity(n, n), n);
  CHECK(all.insufficient_positive);
}

TEST_CASE("kernel PCA properties") {
  Rng rng(7);
  std::normal_distribution<double> g(0.0, 0.2);
  Eigen::MatrixXd pts(20, 2);
  for (int i = 0; i < 20; ++i) {
    pts(i, 0) = (i < 10 ? -2.0 : 2.0) + g(rng);
    pts(i, 1) = g(rng);
  }
  const auto spec = KernelSpec::gaussian(0.5);
  const Eigen::MatrixXd k = kernel_matrix(spec, pts, pts);
  const PCAEmbedding e = kernel_pca(k, 2);
  CHECK(e.eigenvalues(0) >= e.eigenvalues(1));
  double max_a = -1e9, min_a = 1e9, max_b = -1e9, min_b = 1e9;
  for (int i = 0; i < 20; ++i) {
    const double v = e.embedding(i, 0);
    if (i < 10) {
      max_a = std::max(max_a, v);
      min_a = std::min(min_a, v);
    } else {
      max_b = std::max(max_b, v);
      min_b = std::min(min_b, v);
    }
  }
  CHECK((min_a > max_b || min_b > max_a));

  // Out-of-sample projection of training points reproduces the embedding.
  CHECK((e.project(k) - e.embedding).cwiseAbs().maxCoeff() < 1e-9);

  // Permutation invariance up to component sign.
  std::vector<int> perm(20);
  for (int i = 0; i < 20; ++i) perm[i] = (i * 7) % 20;
  Eigen::MatrixXd kp(20, 20);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) kp(i, j) = k(perm[i], perm[j]);
  const PCAEmbedding ep = kernel_pca(kp, 2);
  for (int c = 0; c < 2; ++c) {
    double plus = 0.0, minus = 0.0;
    for (int i = 0; i < 20; ++i) {
      plus = std::max(plus, std::abs(ep.embedding(i, c) - e.embedding(perm[i], c)));
      minus = std::max(minus, std::abs(ep.embedding(i, c) + e.embedding(perm[i], c)));
    }
    CHECK(std::min(plus, minus) < 1e-8);
  }

  // A duplicated point gets a duplicated row.
  Eigen::MatrixXd pd(21, 2);
  pd << pts, pts.row(3);
  const PCAEmbedding ed = kernel_pca(kernel_matrix(spec, pd, pd), 2);
  CHECK((ed.embedding.row(3) - ed.embedding.row(20)).norm() < 1e-10);

  CHECK_THROWS_AS(kernel_pca(Eigen::MatrixXd::Random(3, 3) + Eigen::MatrixXd::Identity(3, 3) * 5), std::invalid_argument);
}

TEST_CASE("SVM basics") {
  Eigen::MatrixXd two(2, 2);
  two << -1, 0, 1, 0;
  const SVMModel m = svm_fit(two, {-1, 1}, 1.0);
  CHECK(m.predict(Eigen::VectorXd(two.row(0).transpose())) == -1);
  CHECK(m.predict(Eigen::VectorXd(two.row(1).transpose())) == 1);
  CHECK(std::abs(m.decision(Eigen::Vector2d(0.0, 0.0))) < 1e-9);
  CHECK(m.kkt_gap < 1e-6);

  Eigen::MatrixXd xr(4, 2);
  xr << 0, 0, 1, 1, 0, 1, 1, 0;
  const std::vector<int> yr{1, 1, -1, -1};
  const SVMModel x = svm_fit(xr, yr, 2.0, 10.0);
  CHECK(accuracy(x.predict(xr), yr) == 1.0);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(x.coefficients(i) >= 0.0);
    CHECK(x.coefficients(i) <= 10.0);
  }

  CHECK_THROWS_AS(svm_fit(two, {1, 1}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(svm_fit(two, {1, 0}, 1.0), std::invalid_argument);
}

TEST_CASE("SVM duplicate invariance and KKT") {
  Rng rng(8);
  const Eigen::MatrixXd pts = uniform_matrix(24, 2, rng, -1, 1);
  std::vector<int> y;
  for (int i = 0; i < 24; ++i) y.push_back(pts(i, 0) * pts(i, 0) + pts(i, 1) * pts(i, 1) < 0.5 ? 1 : -1);
  const double alpha = svm_alpha_scale(pts);
  const SVMModel m = svm_fit(pts, y, alpha, 1.0);
  CHECK(m.kkt_gap < 1e-6);
  for (Eigen::Index i = 0; i < 24; ++i) {
    CHECK(m.coefficients(i) >= 0.0);
    CHECK(m.coefficients(i) <= 1.0);
  }
  double ysum = 0.0;
  for (int i = 0; i < 24; ++i) ysum += m.coefficients(i) * y[i];
  CHECK(std::abs(ysum) < 1e-10);

  // A duplicated non-support point leaves the decision function unchanged.
  Eigen::Index idx = 0;
  for (; idx < 24; ++idx)
    if (m.coefficients(idx) == 0.0) break;
  REQUIRE(idx < 24);
  Eigen::MatrixXd pd(25, 2);
  pd << pts, pts.row(idx);
  auto yd = y;
  yd.push_back(y[idx]);
  const SVMModel md = svm_fit(pd, yd, alpha, 1.0);
  const Eigen::MatrixXd probe = uniform_matrix(30, 2, rng, -1, 1);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const Eigen::VectorXd p = probe.row(i).transpose();
    CHECK(md.decision(p) == doctest::Approx(m.decision(p)).epsilon(1e-4));
  }
}

TEST_CASE("SVM alpha rules") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 2, 2;
  CHECK(svm_alpha_scale(x) == doctest::Approx(0.5));
  CHECK(svm_alpha_literal(x) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("metrics rows") {
  std::ostringstream out;
  write_metrics_header(out);
  write_metrics_row(out, {"r1", 25, "gaussian", 0.05, 0.01, 0.02});
  CHECK(out.str() == "run_id,N_data,kernel,lambda,rmse_train,rmse_test\nr1,25,gaussian,0.050000000000000003,"
                     "0.01,0.02\n");
}
