#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hdmr/dataset.hpp"
#include "hdmr/model.hpp"
#include "hdmr/poly_basis.hpp"

namespace hdmr {

/// argmin_c ||r - Psi c||^2 + beta^2 ||c||^2 through a complete orthogonal
/// decomposition; minimum-norm solution when beta = 0 and Psi is rank
/// deficient.
Eigen::VectorXd ls_solve(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r, double beta = 0.0);

/// Factorization reused across right-hand sides (the design of a dense mode
/// does not change while the residual does).
class LsFactor {
 public:
  LsFactor() = default;
  LsFactor(const Eigen::MatrixXd& psi, double beta);

  Eigen::VectorXd solve(const Eigen::VectorXd& r) const;
  Eigen::Index cols() const { return cols_; }
  Eigen::Index rank() const { return cod_.rank(); }

 private:
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  bool ridge_ = false;
};

/// Per-sample (p+1)x(p+1) covariance of the data column (predictors..., residual).
using CovarianceBlocks = std::vector<Eigen::MatrixXd>;

/// First-order propagation of coordinate noise through the predictors of a
/// group plus multiplicative value noise on the residual row:
/// L[a,b] = s^2 sum_i dpsi_a/dxi_i dpsi_b/dxi_i,  L[p,p] = (s_u u_q)^2.
Eigen::MatrixXd build_sample_covariance(std::span<const double> xi, const Group& group,
                                        const std::vector<MultiIndex>& indices, const BasisConfig& basis,
                                        const NoiseModel& noise, double u_q);

CovarianceBlocks build_covariance_blocks(const Eigen::MatrixXd& xi, const Group& group,
                                         const std::vector<MultiIndex>& indices, const BasisConfig& basis,
                                         const NoiseModel& noise, const Eigen::VectorXd& u);

struct WtlsResult {
  Eigen::VectorXd coeffs;
  double rho2 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> rho2_trace;  // objective after each accepted iterate
};

/// Weighted residual sum of squares rho^2 = sum_q (a^T x_q)^2 / (a^T L_q a),
/// a = (c, -1), x_q = (Psi_q, r_q).
double wtls_objective(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r, const CovarianceBlocks& blocks,
                      const Eigen::VectorXd& c);

/// Errors-in-variables regression: alternate maximum-likelihood corrections
/// of the data columns with reweighted normal equations for c. Returns the
/// iterate with the smallest rho^2.
WtlsResult wtls_solve(const Eigen::MatrixXd& psi, const Eigen::VectorXd& r, const CovarianceBlocks& blocks,
                      const Eigen::VectorXd& c0, double tol = 1e-10, int max_iter = 100);

}  // namespace hdmr
