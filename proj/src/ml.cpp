#include "shadowlab/ml.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace shadowlab::ml {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " has non-finite entries");
}

double dirichlet_factor(double d, int cutoff) {
  double s = 1.0;
  for (int k = 1; k <= cutoff; ++k) s += 2.0 * std::cos(M_PI * k * d);
  return s;
}

double self_value(const KernelSpec& spec, const Eigen::VectorXd& x) {
  switch (spec.kind) {
    case KernelKind::gaussian:
      return 1.0;
    case KernelKind::modified_dirichlet: {
      const double m = static_cast<double>(x.size());
      const double per = 2.0 * spec.cutoff + 1.0;
      return m * (m - 1.0) * per * per;
    }
    case KernelKind::precomputed:
      break;
  }
  throw std::invalid_argument("precomputed kernels have no closed form");
}

double raw_value(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  switch (spec.kind) {
    case KernelKind::gaussian:
      return gaussian_raw(x, y, spec.alpha);
    case KernelKind::modified_dirichlet:
      return dirichlet_raw(x, y, spec.cutoff);
    case KernelKind::precomputed:
      break;
  }
  throw std::invalid_argument("precomputed kernels have no closed form");
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::modified_dirichlet:
      return "modified-dirichlet";
    case KernelKind::gaussian:
      return "gaussian";
    case KernelKind::precomputed:
      return "precomputed";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "modified-dirichlet" || name == "dirichlet") return KernelKind::modified_dirichlet;
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "precomputed") return KernelKind::precomputed;
  throw std::invalid_argument("unknown kernel kind: " + name);
}

void KernelSpec::validate() const {
  if (kind == KernelKind::gaussian && !(alpha > 0.0 && std::isfinite(alpha)))
    throw std::invalid_argument("Gaussian alpha must be positive");
  if (kind == KernelKind::modified_dirichlet && cutoff < 0) throw std::invalid_argument("cutoff must be >= 0");
}

double dirichlet_raw(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int cutoff) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel inputs differ in dimension");
  // The sine cross terms cancel between k and -k, leaving products of
  // Dirichlet factors over distinct pairs.
  double sum = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = dirichlet_factor(x(i) - y(i), cutoff);
    sum += d;
    sq += d * d;
  }
  return sum * sum - sq;
}

double gaussian_raw(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double alpha) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel inputs differ in dimension");
  return std::exp(-alpha * (x - y).squaredNorm());
}

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  spec.validate();
  const double k = raw_value(spec, x, y);
  if (!spec.normalize) return k;
  const double sx = self_value(spec, x), sy = self_value(spec, y);
  if (sx <= 0.0 || sy <= 0.0) throw std::domain_error("zero self-kernel in normalization");
  return k / std::sqrt(sx * sy);
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("kernel inputs differ in dimension");
  spec.validate();
  Eigen::MatrixXd k(a.rows(), b.rows());
  const long long rows = a.rows();
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = kernel_eval(spec, a.row(i).transpose(), b.row(j).transpose());
  return k;
}

double gaussian_alpha(const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) total += (x.row(i) - x.row(j)).squaredNorm();
  if (total <= 0.0) throw std::domain_error("Gaussian alpha undefined for identical inputs");
  return n * n / total;
}

void RegressionDataset::validate() const {
  if (inputs.rows() == 0) throw std::invalid_argument("empty dataset");
  if (inputs.rows() != targets.rows()) throw std::invalid_argument("inputs and targets differ in sample count");
  require_finite(inputs, "inputs");
  require_finite(targets, "targets");
}

RegressionDataset RegressionDataset::head(Eigen::Index n) const {
  if (n > size()) throw std::out_of_range("head larger than dataset");
  return {inputs.topRows(n), targets.topRows(n)};
}

Eigen::MatrixXd solve_regularized(const Eigen::MatrixXd& k, const Eigen::MatrixXd& b, double lambda) {
  if (k.rows() != k.cols() || k.rows() != b.rows()) throw std::invalid_argument("system dimensions do not match");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  Eigen::MatrixXd a = k;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    a.diagonal().array() += 1e-10 * std::max(a.trace() / static_cast<double>(a.rows()), 1.0);
    llt.compute(a);
    if (llt.info() != Eigen::Success) throw std::domain_error("kernel system is singular");
  }
  Eigen::MatrixXd x = llt.solve(b);
  if (lambda == 0.0) {
    // Interpolation demands an honest solve; reject numerically singular K.
    const double resid = (k * x - b).norm();
    if (!x.allFinite() || resid > 1e-6 * std::max(b.norm(), 1.0)) throw std::domain_error("kernel system is singular");
  }
  return x;
}

Eigen::MatrixXd KRRModel::predict(const Eigen::MatrixXd& inputs) const {
  if (kernel.kind == KernelKind::precomputed) throw std::logic_error("precomputed model needs predict_from_kernel");
  if (inputs.cols() != train_inputs.cols()) throw std::invalid_argument("input dimension mismatch");
  return kernel_matrix(kernel, inputs, train_inputs) * dual;
}

Eigen::VectorXd KRRModel::predict(const Eigen::VectorXd& input) const {
  return predict(Eigen::MatrixXd(input.transpose())).row(0).transpose();
}

Eigen::MatrixXd KRRModel::predict_from_kernel(const Eigen::MatrixXd& cross) const {
  if (cross.cols() != dual.rows()) throw std::invalid_argument("cross kernel has wrong column count");
  return cross * dual;
}

std::string KRRModel::to_json() const {
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json r = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
      rows.push_back(r);
    }
    return rows;
  };
  nlohmann::json j{{"kernel",
                    {{"kind", to_string(kernel.kind)},
                     {"alpha", kernel.alpha},
                     {"cutoff", kernel.cutoff},
                     {"normalize", kernel.normalize}}},
                   {"lambda", lambda},
                   {"train_inputs", matrix(train_inputs)},
                   {"dual", matrix(dual)}};
  return j.dump();
}

KRRModel KRRModel::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  auto matrix = [](const nlohmann::json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = r ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != c) throw std::runtime_error("ragged matrix in model file");
      for (Eigen::Index k = 0; k < c; ++k) m(i, k) = rows[i][k].get<double>();
    }
    return m;
  };
  KRRModel m;
  const auto& k = j.at("kernel");
  m.kernel.kind = kernel_kind_from_string(k.at("kind").get<std::string>());
  m.kernel.alpha = k.value("alpha", 1.0);
  m.kernel.cutoff = k.value("cutoff", 3);
  m.kernel.normalize = k.value("normalize", true);
  m.lambda = j.at("lambda").get<double>();
  m.train_inputs = matrix(j.at("train_inputs"));
  m.dual = matrix(j.at("dual"));
  return m;
}

KRRModel krr_fit(const RegressionDataset& data, const KernelSpec& kernel, double lambda) {
  data.validate();
  KRRModel m;
  m.kernel = kernel;
  m.lambda = lambda;
  m.train_inputs = data.inputs;
  m.dual = solve_regularized(kernel_matrix(kernel, data.inputs, data.inputs), data.targets, lambda);
  return m;
}

KRRModel krr_fit_gram(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& targets, double lambda) {
  require_finite(gram, "gram");
  KRRModel m;
  m.kernel.kind = KernelKind::precomputed;
  m.lambda = lambda;
  m.dual = solve_regularized(gram, targets, lambda);
  return m;
}

double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& exact) {
  if (predicted.rows() != exact.rows() || predicted.cols() != exact.cols())
    throw std::invalid_argument("rmse shape mismatch");
  if (predicted.size() == 0) throw std::invalid_argument("rmse of empty matrices");
  const Eigen::VectorXd per = ((predicted - exact).array().square().rowwise().mean()).sqrt();
  return per.mean();
}

LambdaSelection select_lambda(const RegressionDataset& train, const RegressionDataset& validation,
                              const KernelSpec& kernel, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("empty lambda grid");
  train.validate();
  validation.validate();
  const Eigen::MatrixXd k = kernel_matrix(kernel, train.inputs, train.inputs);
  const Eigen::MatrixXd cross = kernel_matrix(kernel, validation.inputs, train.inputs);
  LambdaSelection out;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  for (double lambda : grid) {
    const double r = rmse(cross * solve_regularized(k, train.targets, lambda), validation.targets);
    out.validation_rmse.push_back(r);
  }
  for (double lambda : sorted) {
    const auto idx = static_cast<std::size_t>(std::find(grid.begin(), grid.end(), lambda) - grid.begin());
    if (out.validation_rmse[idx] < best) {
      best = out.validation_rmse[idx];
      out.lambda = lambda;
    }
  }
  return out;
}

PCAEmbedding kernel_pca(const Eigen::MatrixXd& gram, int n_components, bool center) {
  const Eigen::Index n = gram.rows();
  if (gram.cols() != n || n == 0) throw std::invalid_argument("gram must be square and non-empty");
  if ((gram - gram.transpose()).norm() > 1e-9 * std::max(gram.norm(), 1.0))
    throw std::invalid_argument("gram must be symmetric");
  if (n_components < 1 || n_components > n) throw std::invalid_argument("invalid component count");
  PCAEmbedding e;
  e.centered = center;
  Eigen::MatrixXd k = gram;
  e.column_means = gram.colwise().mean().transpose();
  e.grand_mean = gram.mean();
  if (center) {
    k.rowwise() -= e.column_means.transpose();
    k.colwise() -= e.column_means;
    k.array() += e.grand_mean;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()));
  e.min_eigenvalue = es.eigenvalues()(0);
  e.eigenvalues.resize(n_components);
  e.eigenvectors.resize(n, n_components);
  e.embedding.resize(n, n_components);
  const double scale = std::max(std::abs(es.eigenvalues()(n - 1)), 1e-300);
  for (int c = 0; c < n_components; ++c) {
    const Eigen::Index src = n - 1 - c;
    const double lambda = es.eigenvalues()(src);
    Eigen::VectorXd v = es.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    if (lambda <= 1e-12 * scale) e.insufficient_positive = true;
    e.eigenvalues(c) = lambda;
    e.eigenvectors.col(c) = v;
    e.embedding.col(c) = v * std::sqrt(std::max(lambda, 0.0));
  }
  return e;
}

Eigen::MatrixXd PCAEmbedding::project(const Eigen::MatrixXd& cross) const {
  if (cross.cols() != eigenvectors.rows()) throw std::invalid_argument("cross kernel has wrong column count");
  Eigen::MatrixXd k = cross;
  if (centered) {
    const Eigen::VectorXd row_means = cross.rowwise().mean();
    k.rowwise() -= column_means.transpose();
    k.colwise() -= row_means;
    k.array() += grand_mean;
  }
  Eigen::MatrixXd out = k * eigenvectors;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    out.col(c) = eigenvalues(c) > 0.0 ? Eigen::VectorXd(out.col(c) / std::sqrt(eigenvalues(c)))
                                       : Eigen::VectorXd::Zero(out.rows());
  return out;
}

// ---------------------------------------------------------------- SVM

double SVMModel::decision(const Eigen::VectorXd& x) const {
  if (x.size() != points.cols()) throw std::invalid_argument("point dimension mismatch");
  double f = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if (coefficients(i) != 0.0) f += coefficients(i) * labels(i) * gaussian_raw(points.row(i).transpose(), x, alpha);
  return f - bias;
}

std::vector<int> SVMModel::predict(const Eigen::MatrixXd& xs) const {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out.push_back(predict(Eigen::VectorXd(xs.row(i).transpose())));
  return out;
}

SVMDual svm_solve_dual(const Eigen::MatrixXd& k, const std::vector<int>& labels, double c, double tol) {
  const Eigen::Index n = k.rows();
  if (k.cols() != n || static_cast<Eigen::Index>(labels.size()) != n || n == 0)
    throw std::invalid_argument("labels do not match kernel matrix");
  if (!(c > 0.0)) throw std::invalid_argument("C must be positive");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l != 1 && l != -1) throw std::invalid_argument("labels must be +1 or -1");
    (l == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) throw std::invalid_argument("SVM needs both classes");
  require_finite(k, "kernel matrix");

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = -Eigen::VectorXd::Ones(n);  // gradient of 1/2 a^T Q a - e^T a

  auto in_up = [&](Eigen::Index t) { return (y(t) > 0 && a(t) < c) || (y(t) < 0 && a(t) > 0); };
  auto in_low = [&](Eigen::Index t) { return (y(t) > 0 && a(t) > 0) || (y(t) < 0 && a(t) < c); };

  const int max_iter = 1000000;
  int iter = 0;
  double gap = 0.0;
  for (; iter < max_iter; ++iter) {
    Eigen::Index i = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (in_up(t) && -y(t) * g(t) > gmax) {
        gmax = -y(t) * g(t);
        i = t;
      }
      if (in_low(t)) gmin = std::min(gmin, -y(t) * g(t));
    }
    gap = gmax - gmin;
    if (i < 0 || gap < tol) break;
    // Second-order working-set selection.
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double b = gmax + y(t) * g(t);
      if (b <= 0.0) continue;
      double quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
      if (quad <= 0.0) quad = 1e-12;
      if (-b * b / quad < best) {
        best = -b * b / quad;
        j = t;
      }
    }
    if (j < 0) break;
    double quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
    if (quad <= 0.0) quad = 1e-12;
    double step = (gmax + y(j) * g(j)) / quad;
    // a_i += y_i step, a_j -= y_j step keeps y^T a fixed.
    const double hi_i = y(i) > 0 ? c - a(i) : a(i);
    const double hi_j = y(j) > 0 ? a(j) : c - a(j);
    step = std::min({step, hi_i, hi_j});
    const double di = y(i) * step, dj = -y(j) * step;
    a(i) += di;
    a(j) += dj;
    a(i) = std::clamp(a(i), 0.0, c);
    a(j) = std::clamp(a(j), 0.0, c);
    for (Eigen::Index t = 0; t < n; ++t) g(t) += y(t) * (y(i) * k(t, i) * di + y(j) * k(t, j) * dj);
  }
  SVMDual m;
  m.iterations = iter;
  m.kkt_gap = gap;
  m.coefficients = a;

  double sum = 0.0;
  int free_count = 0;
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * g(t);
    if (a(t) > 0.0 && a(t) < c) {
      sum += yg;
      ++free_count;
    } else if ((a(t) >= c && y(t) < 0) || (a(t) <= 0.0 && y(t) > 0)) {
      ub = std::min(ub, yg);
    } else {
      lb = std::max(lb, yg);
    }
  }
  if (free_count > 0) {
    m.bias = sum / free_count;
  } else {
    if (!std::isfinite(ub)) ub = lb;
    if (!std::isfinite(lb)) lb = ub;
    m.bias = 0.5 * (ub + lb);
  }
  return m;
}

SVMModel svm_fit(const Eigen::MatrixXd& points, const std::vector<int>& labels, double alpha, double c, double tol) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n || n == 0) throw std::invalid_argument("labels do not match points");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  require_finite(points, "points");
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = gaussian_raw(points.row(i).transpose(), points.row(j).transpose(), alpha);
  const SVMDual dual = svm_solve_dual(k, labels, c, tol);

  SVMModel m;
  m.points = points;
  m.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) m.labels(i) = labels[static_cast<std::size_t>(i)];
  m.alpha = alpha;
  m.c = c;
  m.coefficients = dual.coefficients;
  m.bias = dual.bias;
  m.iterations = dual.iterations;
  m.kkt_gap = dual.kkt_gap;
  return m;
}

double svm_alpha_scale(const Eigen::MatrixXd& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  if (var <= 0.0) throw std::domain_error("features have zero variance");
  return 1.0 / (static_cast<double>(x.cols()) * var);
}

double svm_alpha_literal(const Eigen::MatrixXd& x) {
  const double mean = x.mean();
  const double ss = (x.array() - mean).square().sum();
  if (ss <= 0.0) throw std::domain_error("features have zero variance");
  return 1.0 / (static_cast<double>(x.cols()) * ss);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw std::invalid_argument("accuracy size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

void write_metrics_header(std::ostream& out) { out << "run_id,N_data,kernel,lambda,rmse_train,rmse_test\n"; }

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",%ld,", row.n_data);
  out << row.run_id << buf << row.kernel;
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", row.lambda, row.rmse_train, row.rmse_test);
  out << buf;
}

}  // namespace shadowlab::ml
