#include "cavsqz/lsq.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "cavsqz/error.hpp"

namespace cavsqz {
namespace {

double sum_sq(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

}  // namespace

LsqResult levenberg_marquardt(const ResidualFn& fn, std::vector<double> initial, std::size_t n_residuals,
                              const LsqOptions& options) {
  const std::size_t n = initial.size();
  const std::size_t m = n_residuals;
  if (n == 0 || m < n) throw InvalidArgument("least squares needs at least as many residuals as parameters");

  std::vector<double> p = std::move(initial);
  std::vector<double> r(m), jac(m * n);
  std::vector<double> r_try(m), jac_try(m * n);
  fn(p, r, jac);
  double cost = sum_sq(r);
  if (!std::isfinite(cost)) throw FitError("non-finite residuals at the initial guess", cost, 0);

  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  Eigen::MatrixXd jtj(n, n);
  Eigen::VectorXd jtr(n);

  auto build_normal = [&](const std::vector<double>& jv, const std::vector<double>& rv) {
    jtj.setZero();
    jtr.setZero();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t a = 0; a < n; ++a) {
        const double ja = jv[i * n + a];
        jtr(a) += ja * rv[i];
        for (std::size_t b = 0; b <= a; ++b) jtj(a, b) += ja * jv[i * n + b];
      }
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) jtj(a, b) = jtj(b, a);
  };

  for (; it < options.max_iterations; ++it) {
    build_normal(jac, r);
    bool stepped = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (std::size_t d = 0; d < n; ++d) a(d, d) += lambda * std::max(jtj(d, d), 1e-300);
      const Eigen::VectorXd step = a.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> p_try = p;
      double step_norm = 0.0, p_norm = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        p_try[d] += step(d);
        step_norm += step(d) * step(d);
        p_norm += p[d] * p[d];
      }
      fn(p_try, r_try, jac_try);
      const double cost_try = sum_sq(r_try);
      if (std::isfinite(cost_try) && cost_try <= cost) {
        const double improvement = cost - cost_try;
        p = std::move(p_try);
        r.swap(r_try);
        jac.swap(jac_try);
        lambda = std::max(lambda * 0.3, 1e-12);
        const bool small_step = std::sqrt(step_norm) <= options.rel_tolerance * (std::sqrt(p_norm) + options.rel_tolerance);
        const bool small_gain = improvement <= options.rel_tolerance * cost;
        cost = cost_try;
        stepped = true;
        if (small_step || small_gain || cost == 0.0) converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    if (!stepped || converged) {
      // No downhill step exists at any damping: we are at the minimum to
      // machine precision.
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw FitError("least squares did not converge", std::sqrt(cost), it);
  }

  build_normal(jac, r);
  LsqResult out;
  out.params = p;
  out.iterations = it;
  out.converged = true;
  out.residual_norm = std::sqrt(cost);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (!lu.isInvertible()) throw FitError("singular normal matrix at the solution", out.residual_norm, it);
  const Eigen::MatrixXd inv = lu.inverse();
  const double dof = m > n ? static_cast<double>(m - n) : 1.0;
  const double s2 = cost / dof;
  out.covariance.resize(n * n);
  out.std_errors.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) out.covariance[a * n + b] = s2 * inv(a, b);
    out.std_errors[a] = std::sqrt(std::max(0.0, s2 * inv(a, a)));
  }
  return out;
}

}  // namespace cavsqz
