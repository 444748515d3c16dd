#pragma once

// Kernel methods: regression kernels, kernel ridge regression, lambda
// selection, kernel PCA and a Gaussian-kernel SVM.

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace shadowlab::ml {

enum class KernelKind { modified_dirichlet, gaussian, precomputed };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double alpha = 1.0;  // Gaussian width
  int cutoff = 3;      // Dirichlet frequency cutoff
  bool normalize = true;

  static KernelSpec gaussian(double alpha) { return {KernelKind::gaussian, alpha, 3, true}; }
  static KernelSpec dirichlet(int cutoff = 3) { return {KernelKind::modified_dirichlet, 1.0, cutoff, true}; }
  void validate() const;
};

// sum_{i != j} sum_{k_i, k_j = -c..c} cos(pi (k_i d_i + k_j d_j)), d = x - x'.
double dirichlet_raw(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int cutoff = 3);
double gaussian_raw(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double alpha);

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& y);
// Rows of a and b are samples.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// N^2 / sum_ij ||x_i - x_j||^2 over the rows of x.
double gaussian_alpha(const Eigen::MatrixXd& x);

struct RegressionDataset {
  Eigen::MatrixXd inputs;   // N x m
  Eigen::MatrixXd targets;  // N x n_targets
  void validate() const;
  Eigen::Index size() const { return inputs.rows(); }
  RegressionDataset head(Eigen::Index n) const;
};

// Solves (k + lambda I) a = b by Cholesky, retrying with a trace-scaled
// 1e-10 ridge if the factorization fails.
Eigen::MatrixXd solve_regularized(const Eigen::MatrixXd& k, const Eigen::MatrixXd& b, double lambda);

struct KRRModel {
  KernelSpec kernel;
  double lambda = 0.0;
  Eigen::MatrixXd train_inputs;
  Eigen::MatrixXd dual;  // N x n_targets

  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& input) const;
  // For precomputed kernels: rows of `cross` are new points, columns training points.
  Eigen::MatrixXd predict_from_kernel(const Eigen::MatrixXd& cross) const;

  std::string to_json() const;
  static KRRModel from_json(const std::string& text);
};

KRRModel krr_fit(const RegressionDataset& data, const KernelSpec& kernel, double lambda);
KRRModel krr_fit_gram(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& targets, double lambda);

// Mean over samples of the per-sample RMSE across columns.
double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& exact);

inline const std::vector<double> kLambdaGrid{0.0125, 0.025, 0.05, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> validation_rmse;  // aligned with the grid
};

// Ties go to the smaller lambda.
LambdaSelection select_lambda(const RegressionDataset& train, const RegressionDataset& validation,
                              const KernelSpec& kernel, const std::vector<double>& grid = kLambdaGrid);

struct PCAEmbedding {
  Eigen::VectorXd eigenvalues;   // top components, non-increasing
  Eigen::MatrixXd eigenvectors;  // N x k, unit norm
  Eigen::MatrixXd embedding;     // N x k, eigenvector * sqrt(eigenvalue)
  double min_eigenvalue = 0.0;   // of the (centered) Gram matrix
  bool insufficient_positive = false;
  bool centered = true;
  Eigen::VectorXd column_means;
  double grand_mean = 0.0;

  // `cross` has one row per new point and one column per training point.
  Eigen::MatrixXd project(const Eigen::MatrixXd& cross) const;
};

PCAEmbedding kernel_pca(const Eigen::MatrixXd& gram, int n_components = 2, bool center = true);

// Soft-margin SVM dual on a precomputed kernel matrix; the decision function
// is sum_i coefficients_i y_i k(x_i, x) - bias.
struct SVMDual {
  Eigen::VectorXd coefficients;
  double bias = 0.0;
  int iterations = 0;
  double kkt_gap = 0.0;
};

SVMDual svm_solve_dual(const Eigen::MatrixXd& k, const std::vector<int>& labels, double c = 1.0, double tol = 1e-6);

struct SVMModel {
  Eigen::MatrixXd points;  // training points, one per row
  Eigen::VectorXd labels;  // +-1
  Eigen::VectorXd coefficients;
  double bias = 0.0;
  double alpha = 1.0;
  double c = 1.0;
  int iterations = 0;
  double kkt_gap = 0.0;

  double decision(const Eigen::VectorXd& x) const;
  int predict(const Eigen::VectorXd& x) const { return decision(x) >= 0.0 ? 1 : -1; }
  std::vector<int> predict(const Eigen::MatrixXd& xs) const;
};

SVMModel svm_fit(const Eigen::MatrixXd& points, const std::vector<int>& labels, double alpha, double c = 1.0,
                 double tol = 1e-6);

// 1 / (n_feature * var(X)) with the variance taken over all entries.
double svm_alpha_scale(const Eigen::MatrixXd& x);
// 1 / (n_feature * sum_ij |X_ij - E(X)|^2), taken literally.
double svm_alpha_literal(const Eigen::MatrixXd& x);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

struct MetricsRow {
  std::string run_id;
  long n_data = 0;
  std::string kernel;
  double lambda = 0.0;
  double rmse_train = 0.0;
  double rmse_test = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

}  // namespace shadowlab::ml
