#pragma once

#include <functional>
#include <vector>

namespace cavsqz {

// Residuals r_i(p) and the row-major Jacobian dr_i/dp_j for a small
// least-squares problem.
using ResidualFn = std::function<void(const std::vector<double>& params, std::vector<double>& residuals,
                                      std::vector<double>& jacobian)>;

struct LsqOptions {
  int max_iterations = 200;
  double rel_tolerance = 1e-12;
};

struct LsqResult {
  std::vector<double> params;
  std::vector<double> std_errors;   // sqrt(diag(cov)) with cov = s^2 (J^T J)^-1
  std::vector<double> covariance;   // row-major n x n
  double residual_norm = 0.0;       // ||r||_2
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt with multiplicative damping. Throws FitError when the
// iteration limit is reached without meeting the tolerance or when the
// normal matrix at the solution is singular.
LsqResult levenberg_marquardt(const ResidualFn& fn, std::vector<double> initial, std::size_t n_residuals,
                              const LsqOptions& options = {});

}  // namespace cavsqz
