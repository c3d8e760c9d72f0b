#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hdmr/dataset.hpp"
#include "hdmr/fitting.hpp"
#include "hdmr/model.hpp"
#include "hdmr/selection.hpp"

namespace hdmr {

enum class SpatialKind { NodalLinear, LegendreTensor };

/// Tensor spatial basis on a box. Nodal: hat functions on a uniform grid of
/// n points per axis. Legendre: orthonormal polynomials of degree < n per
/// axis. cardx = n^Ndx.
struct SpatialBasis {
  SpatialKind kind = SpatialKind::NodalLinear;
  int per_axis = 32;
  std::vector<double> lo{0.0};
  std::vector<double> hi{1.0};

  int ndx() const { return static_cast<int>(lo.size()); }
  int cardx() const;
  void validate() const;

  /// Values of all basis functions at x (length Ndx).
  Eigen::VectorXd eval(std::span<const double> x) const;
  /// Nq x cardx design.
  Eigen::MatrixXd design(const Eigen::MatrixXd& x) const;

  static SpatialBasis make(SpatialKind kind, int cardx, std::vector<double> lo, std::vector<double> hi);
};

struct SeparatedPair {
  Eigen::VectorXd w;                // spatial coefficients
  std::optional<HdmrModel> lambda;  // empty: the unit mode
};

struct SeparatedModel {
  SpatialBasis spatial;
  int nd = 0;
  std::vector<SeparatedPair> pairs;

  int rank() const { return static_cast<int>(pairs.size()) - 1; }
};

struct SeparatedConfig {
  int lambda_max = 2;
  double outer_tol = 1e-4;
  int max_outer_iters = 50;
  double stop_norm_frac = 1e-3;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  bool update_spatial = false;  // joint re-fit of all spatial modes after each pair
  SpatialKind spatial_kind = SpatialKind::NodalLinear;
  int cardx = 32;
  std::vector<double> domain_lo;  // spatial box; empty means the data range
  std::vector<double> domain_hi;

  void validate() const;
};

struct SpatialFit {
  Eigen::VectorXd coeffs;  // normalized so that ||Phi c||_Nq = 1
  double scale = 0.0;      // norm before normalization; 0 means degenerate
};

SpatialFit fit_spatial_mode(const Eigen::VectorXd& residual, const Eigen::VectorXd& lambda_values,
                            const Eigen::MatrixXd& phi, double beta = 0.0);

struct SeparatedTrace {
  std::vector<double> train_residual;  // after each accepted pair, starting with rank 0
  std::vector<int> outer_iterations;
  std::vector<std::string> warnings;
};

SeparatedModel fit_separated(const SampleSet& samples, const SelectionConfig& sel_cfg, const FitConfig& fit_cfg,
                             const SeparatedConfig& sep_cfg, const BasisConfig& basis, SeparatedTrace* trace = nullptr);

double evaluate_separated(const SeparatedModel& m, std::span<const double> x, std::span<const double> xi);
Eigen::VectorXd evaluate_separated(const SeparatedModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& xi);

/// Model with only the first `rank` stochastic pairs (rank 0 = mean field).
SeparatedModel truncate(const SeparatedModel& m, int rank);

double relative_error(const SeparatedModel& m, const SampleSet& test);

std::string save_separated(const SeparatedModel& m);
SeparatedModel load_separated(std::string_view document);

/// "hdmr" or "separated".
std::string document_kind(std::string_view document);

}  // namespace hdmr
