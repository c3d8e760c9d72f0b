#include "hdmr/linear_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdmr/errors.hpp"

namespace hdmr {
namespace {

void check_finite(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r) {
  if (!psi.allFinite() || !r.allFinite()) throw NonFiniteError("least-squares inputs contain non-finite entries");
}

// Per-sample variances a^T L_q a with jitter; uniform weights when all blocks vanish.
Eigen::VectorXd sample_variances(const CovarianceBlocks& blocks, const Eigen::VectorXd& a) {
  Eigen::VectorXd var(static_cast<Eigen::Index>(blocks.size()));
  double largest = 0.0;
  for (std::size_t q = 0; q < blocks.size(); ++q) {
    const auto& block = blocks[q];
    const double v = a.dot(block * a) + 1e-12 * block.trace();
    var[static_cast<Eigen::Index>(q)] = v;
    largest = std::max(largest, v);
  }
  if (!(largest > 0.0)) return Eigen::VectorXd::Ones(var.size());
  const double floor = 1e-12 * largest;
  for (Eigen::Index q = 0; q < var.size(); ++q) var[q] = std::max(var[q], floor);
  return var;
}

Eigen::VectorXd augmented(const Eigen::VectorXd& c) {
  Eigen::VectorXd a(c.size() + 1);
  a.head(c.size()) = c;
  a[c.size()] = -1.0;
  return a;
}

}  // namespace

Eigen::VectorXd ls_solve(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r, double beta) {
  if (psi.cols() < 1) throw ShapeError("least squares needs at least one column");
  if (psi.rows() != r.size()) throw ShapeError("design rows differ from right-hand side length");
  check_finite(psi, r);
  return LsFactor(psi, beta).solve(r);
}

LsFactor::LsFactor(const Eigen::MatrixXd& psi, double beta)
    : rows_(psi.rows()), cols_(psi.cols()), ridge_(beta > 0.0) {
  if (!psi.allFinite()) throw NonFiniteError("design matrix contains non-finite entries");
  if (ridge_) {
    Eigen::MatrixXd aug(rows_ + cols_, cols_);
    aug << psi, beta * Eigen::MatrixXd::Identity(cols_, cols_);
    cod_.compute(aug);
  } else {
    cod_.compute(psi);
  }
}

Eigen::VectorXd LsFactor::solve(const Eigen::VectorXd& r) const {
  if (r.size() != rows_) throw ShapeError("right-hand side length differs from design rows");
  if (!ridge_) return cod_.solve(r);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows_ + cols_);
  rhs.head(rows_) = r;
  return cod_.solve(rhs);
}

Eigen::MatrixXd build_sample_covariance(std::span<const double> xi, const Group& group,
                                        const std::vector<MultiIndex>& indices, const BasisConfig& basis,
                                        const NoiseModel& noise, double u_q) {
  const auto p = static_cast<Eigen::Index>(indices.size());
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(p + 1, p + 1);
  const int order = group.order();
  if (noise.s > 0.0 && p > 0) {
    int top = 1;
    for (const auto& idx : indices) top = std::max(top, *std::max_element(idx.begin(), idx.end()));
    std::vector<std::vector<double>> val(static_cast<std::size_t>(order), std::vector<double>(static_cast<std::size_t>(top)));
    std::vector<std::vector<double>> der = val;
    for (int k = 0; k < order; ++k) {
      const double x = xi[static_cast<std::size_t>(group.dims[static_cast<std::size_t>(k)])];
      eval_all(basis, x, val[static_cast<std::size_t>(k)]);
      eval_all_deriv(basis, x, der[static_cast<std::size_t>(k)]);
    }
    // grad(a, i) = dpsi_a / dxi_{dims_i}
    Eigen::MatrixXd grad(p, order);
    for (Eigen::Index a = 0; a < p; ++a) {
      const auto& idx = indices[static_cast<std::size_t>(a)];
      for (int i = 0; i < order; ++i) {
        double g = 1.0;
        for (int k = 0; k < order; ++k) {
          const auto& table = (k == i) ? der : val;
          g *= table[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx[static_cast<std::size_t>(k)] - 1)];
        }
        grad(a, i) = g;
      }
    }
    block.topLeftCorner(p, p) = noise.s * noise.s * grad * grad.transpose();
  }
  block(p, p) = noise.s_u * noise.s_u * u_q * u_q;
  return block;
}

CovarianceBlocks build_covariance_blocks(const Eigen::MatrixXd& xi, const Group& group,
                                         const std::vector<MultiIndex>& indices, const BasisConfig& basis,
                                         const NoiseModel& noise, const Eigen::VectorXd& u) {
  CovarianceBlocks blocks;
  blocks.reserve(static_cast<std::size_t>(xi.rows()));
  std::vector<double> row(static_cast<std::size_t>(xi.cols()));
  for (Eigen::Index q = 0; q < xi.rows(); ++q) {
    for (Eigen::Index k = 0; k < xi.cols(); ++k) row[static_cast<std::size_t>(k)] = xi(q, k);
    blocks.push_back(build_sample_covariance(row, group, indices, basis, noise, u[q]));
  }
  return blocks;
}

double wtls_objective(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r, const CovarianceBlocks& blocks,
                      const Eigen::VectorXd& c) {
  const Eigen::VectorXd var = sample_variances(blocks, augmented(c));
  const Eigen::VectorXd e = psi * c - r;
  return (e.array().square() / var.array()).sum();
}

WtlsResult wtls_solve(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r, const CovarianceBlocks& blocks,
                      const Eigen::VectorXd& c0, double tol, int max_iter) {
  if (static_cast<Eigen::Index>(blocks.size()) != psi.rows() || r.size() != psi.rows() || c0.size() != psi.cols()) {
    throw ShapeError("wTLS inputs have inconsistent sizes");
  }
  check_finite(psi, r);
  for (const auto& b : blocks) {
    if (b.rows() != psi.cols() + 1 || b.cols() != psi.cols() + 1) throw ShapeError("covariance block size mismatch");
  }

  WtlsResult res;
  res.coeffs = c0;
  res.rho2 = wtls_objective(psi, r, blocks, c0);
  res.rho2_trace.push_back(res.rho2);

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    if (res.rho2 == 0.0) {
      res.converged = true;
      break;
    }
    // Maximum-likelihood corrections x_q + dx_q, dx_q = -L_q a (a^T L_q a)^{-1} a^T x_q, all satisfy
    // a^T (x_q + dx_q) = 0; for the update of c only the induced weights 1 / (a^T L_q a) matter.
    const Eigen::VectorXd var = sample_variances(blocks, augmented(res.coeffs));
    const Eigen::VectorXd sw = var.cwiseInverse().cwiseSqrt();
    const Eigen::MatrixXd weighted = sw.asDiagonal() * psi;
    const Eigen::VectorXd proposal = ls_solve(weighted, sw.cwiseProduct(r));

    // Halve the step until rho^2 decreases; no decrease means a stationary point.
    Eigen::VectorXd step = proposal - res.coeffs;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd candidate;
    for (int h = 0; h < 40; ++h) {
      candidate = res.coeffs + step;
      best = wtls_objective(psi, r, blocks, candidate);
      if (best <= res.rho2) break;
      step *= 0.5;
    }
    if (!(best <= res.rho2)) {
      res.converged = true;
      break;
    }
    const double change = (res.rho2 - best) / std::max(res.rho2, std::numeric_limits<double>::min());
    res.coeffs = candidate;
    res.rho2 = best;
    res.rho2_trace.push_back(best);
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace hdmr
