#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hdmr {

enum class PolyFamily { Legendre };

/// Orthonormal univariate polynomials under the uniform probability measure
/// on [lo, hi]. Index alpha = degree + 1, so alpha = 1 is the constant and
/// valid indices run over 1..max_degree+1.
struct BasisConfig {
  PolyFamily family = PolyFamily::Legendre;
  double lo = -1.0;
  double hi = 1.0;
  int max_degree = 8;

  int max_index() const { return max_degree + 1; }
  void validate() const;
  bool contains(double xi) const { return xi >= lo && xi <= hi; }

  friend bool operator==(const BasisConfig&, const BasisConfig&) = default;
};

double eval_univariate(const BasisConfig& cfg, int alpha, double xi);
double eval_univariate_deriv(const BasisConfig& cfg, int alpha, double xi);

/// Writes psi_1(xi) .. psi_n(xi) into out, n = out.size() <= max_index().
void eval_all(const BasisConfig& cfg, double xi, std::span<double> out);
void eval_all_deriv(const BasisConfig& cfg, double xi, std::span<double> out);

/// Tensor-product basis function over the dimensions of a group:
/// prod_k psi_{alpha[k]}(xi[dims[k]]). `xi` is indexed by dimension.
double eval_tensor(const BasisConfig& cfg, std::span<const int> dims, std::span<const int> alpha,
                   std::span<const double> xi);

/// Table of psi_1..psi_{n_index} at every entry of `points`:
/// result(q, a) = psi_{a+1}(points[q]).
Eigen::MatrixXd eval_table(const BasisConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& points,
                           int n_index);
Eigen::MatrixXd eval_table_deriv(const BasisConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& points,
                                 int n_index);

/// Gauss-Legendre nodes and weights mapped onto [lo, hi], weights normalized
/// to sum to one (uniform probability measure).
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(int n, double lo, double hi);

}  // namespace hdmr
