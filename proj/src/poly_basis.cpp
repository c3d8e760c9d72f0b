#include "hdmr/poly_basis.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hdmr/errors.hpp"

namespace hdmr {
namespace {

void check_alpha(const BasisConfig& cfg, int alpha) {
  if (alpha < 1 || alpha > cfg.max_index()) {
    throw IndexError("polynomial index " + std::to_string(alpha) + " outside 1.." +
                     std::to_string(cfg.max_index()));
  }
}

double to_reference(const BasisConfig& cfg, double xi) {
  return 2.0 * (xi - cfg.lo) / (cfg.hi - cfg.lo) - 1.0;
}

// Legendre P_0..P_{n-1} and derivatives on [-1, 1]:
// (k+1) P_{k+1} = (2k+1) t P_k - k P_{k-1},  P'_{k+1} = P'_{k-1} + (2k+1) P_k.
void legendre(double t, std::span<double> p, std::span<double> dp) {
  const std::size_t n = p.size();
  if (n == 0) return;
  p[0] = 1.0;
  if (!dp.empty()) dp[0] = 0.0;
  if (n == 1) return;
  p[1] = t;
  if (!dp.empty()) dp[1] = 1.0;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double kd = static_cast<double>(k);
    p[k + 1] = ((2.0 * kd + 1.0) * t * p[k] - kd * p[k - 1]) / (kd + 1.0);
    if (!dp.empty()) dp[k + 1] = dp[k - 1] + (2.0 * kd + 1.0) * p[k];
  }
}

}  // namespace

void BasisConfig::validate() const {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ConfigError("basis interval requires lo < hi");
  }
  if (max_degree < 1) throw ConfigError("basis max_degree must be >= 1");
}

void eval_all(const BasisConfig& cfg, double xi, std::span<double> out) {
  legendre(to_reference(cfg, xi), out, {});
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= std::sqrt(2.0 * static_cast<double>(k) + 1.0);
}

void eval_all_deriv(const BasisConfig& cfg, double xi, std::span<double> out) {
  std::vector<double> p(out.size());
  legendre(to_reference(cfg, xi), p, out);
  const double chain = 2.0 / (cfg.hi - cfg.lo);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] *= std::sqrt(2.0 * static_cast<double>(k) + 1.0) * chain;
  }
}

double eval_univariate(const BasisConfig& cfg, int alpha, double xi) {
  check_alpha(cfg, alpha);
  std::vector<double> v(static_cast<std::size_t>(alpha));
  eval_all(cfg, xi, v);
  return v.back();
}

double eval_univariate_deriv(const BasisConfig& cfg, int alpha, double xi) {
  check_alpha(cfg, alpha);
  std::vector<double> v(static_cast<std::size_t>(alpha));
  eval_all_deriv(cfg, xi, v);
  return v.back();
}

double eval_tensor(const BasisConfig& cfg, std::span<const int> dims, std::span<const int> alpha,
                   std::span<const double> xi) {
  if (dims.size() != alpha.size()) throw ShapeError("group and multi-index lengths differ");
  double prod = 1.0;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k] < 0 || static_cast<std::size_t>(dims[k]) >= xi.size()) {
      throw ShapeError("coordinate vector has no entry for dimension " + std::to_string(dims[k] + 1));
    }
    prod *= eval_univariate(cfg, alpha[k], xi[static_cast<std::size_t>(dims[k])]);
  }
  return prod;
}

Eigen::MatrixXd eval_table(const BasisConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& points,
                           int n_index) {
  check_alpha(cfg, n_index);
  Eigen::MatrixXd table(points.size(), n_index);
  std::vector<double> row(static_cast<std::size_t>(n_index));
  for (Eigen::Index q = 0; q < points.size(); ++q) {
    eval_all(cfg, points[q], row);
    for (int a = 0; a < n_index; ++a) table(q, a) = row[static_cast<std::size_t>(a)];
  }
  return table;
}

Eigen::MatrixXd eval_table_deriv(const BasisConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& points,
                                 int n_index) {
  check_alpha(cfg, n_index);
  Eigen::MatrixXd table(points.size(), n_index);
  std::vector<double> row(static_cast<std::size_t>(n_index));
  for (Eigen::Index q = 0; q < points.size(); ++q) {
    eval_all_deriv(cfg, points[q], row);
    for (int a = 0; a < n_index; ++a) table(q, a) = row[static_cast<std::size_t>(a)];
  }
  return table;
}

Quadrature gauss_legendre(int n, double lo, double hi) {
  if (n < 1) throw ConfigError("quadrature order must be >= 1");
  Quadrature quad;
  quad.nodes.resize(static_cast<std::size_t>(n));
  quad.weights.resize(static_cast<std::size_t>(n));
  std::vector<double> p(static_cast<std::size_t>(n) + 1);
  std::vector<double> dp(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k < n; ++k) {
    // Newton on P_n from the Chebyshev-like initial guess.
    double t = -std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      legendre(t, p, dp);
      const double step = p.back() / dp.back();
      t -= step;
      if (std::abs(step) < 1e-16) break;
    }
    legendre(t, p, dp);
    const double w = 2.0 / ((1.0 - t * t) * dp.back() * dp.back());
    quad.nodes[static_cast<std::size_t>(k)] = lo + 0.5 * (t + 1.0) * (hi - lo);
    quad.weights[static_cast<std::size_t>(k)] = 0.5 * w;
  }
  return quad;
}

}  // namespace hdmr
