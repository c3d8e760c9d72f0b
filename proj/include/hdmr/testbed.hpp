#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include <Eigen/Dense>

#include "hdmr/dataset.hpp"

namespace hdmr {

/// Truncated Karhunen-Loeve expansion of a Gaussian-kernel field.
struct KLField {
  double mean_value = 0.0;
  double sigma = 0.0;
  double lc = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  Eigen::VectorXd grid;            // Nystrom midpoints
  Eigen::VectorXd eigenvalues;     // top Nterms, non-increasing
  Eigen::MatrixXd eigenfunctions;  // grid x Nterms, unit discrete L2 norm
  Eigen::VectorXd spectrum;        // every Nystrom eigenvalue, non-increasing

  int nterms() const { return static_cast<int>(eigenvalues.size()); }
  /// omega_k(x), piecewise linear through the grid values.
  double eigenfunction(int k, double x) const;
};

KLField kl_eigendecompose(double sigma, double lc, double lo, double hi, int mk, int nterms, double mean_value = 0.0);

/// mean + sum_k sqrt(sigma_k) omega_k(x) germ_k
double sample_field(const KLField& f, std::span<const double> germ, double x);

/// Conservative finite differences for (nu u')' = F on a uniform grid of
/// nu.size() nodes with Dirichlet ends. Throws CoercivityError when nu <= 0.
Eigen::VectorXd solve_diffusion(const Eigen::VectorXd& nu, const Eigen::VectorXd& f, double u_minus, double u_plus,
                                double lo = 0.0, double hi = 1.0);

struct DiffusionConfig {
  int nd_nu = 5;
  int nd_f = 5;
  double u_minus = 0.0;
  double u_plus = 0.0;
  int mx = 256;
  int mk = 400;
  double sigma_nu = 0.7;
  double sigma_f = 0.7;
  double lc_nu = 0.3;
  double lc_f = 0.3;
  double nu0 = 1.0;
  double f0 = -1.0;
  double lo = 0.0;
  double hi = 1.0;
  double germ_lo = 0.0;
  double germ_hi = 1.0;
  double x_star = 0.5;

  int nd() const { return nd_nu + nd_f; }
  void validate() const;
};

enum class SampleMode { Point, Scattered };

/// KL fields and their nodal values, shared by all solves.
class DiffusionTestbed {
 public:
  explicit DiffusionTestbed(const DiffusionConfig& cfg);

  const DiffusionConfig& config() const { return cfg_; }
  const KLField& nu_field() const { return nu_; }
  const KLField& f_field() const { return f_; }

  /// Nodal solution for germ = (xi_nu..., xi_F...).
  Eigen::VectorXd solve(std::span<const double> germ) const;
  /// Linear interpolation of a nodal solution.
  double value_at(const Eigen::VectorXd& u, double x) const;

 private:
  DiffusionConfig cfg_;
  KLField nu_;
  KLField f_;
  Eigen::MatrixXd nu_modes_;  // nodes x Nd_nu, sqrt(sigma_k) omega_k
  Eigen::MatrixXd f_modes_;
};

SampleSet generate_dataset(const DiffusionConfig& cfg, int nq, std::uint64_t seed, SampleMode mode);
SampleSet generate_dataset(const DiffusionTestbed& bed, int nq, std::uint64_t seed, SampleMode mode);

void write_spectrum_csv(const KLField& f, std::ostream& out);

}  // namespace hdmr
