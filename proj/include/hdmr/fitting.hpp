#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdmr/dataset.hpp"
#include "hdmr/model.hpp"
#include "hdmr/poly_basis.hpp"
#include "hdmr/selection.hpp"

namespace hdmr {

struct FitConfig {
  int no = 8;
  int n_pc = 3;
  int ninter = 3;
  int nr = 3;  // CP rank of modes with N_PC < |g| <= Ninter
  double als_tol = 1e-8;
  int als_max_sweeps = 100;
  double update_sweeps_tol = 1e-6;
  int max_update_sweeps = 20;
  double beta = 0.0;
  std::uint64_t seed = 0;
  bool update = true;
  bool robust = false;
  NoiseModel noise;
  int max_groups = 100000;

  void validate() const;
};

/// Least-squares problem for the stochastic modes: fit y_q ~ w_q f(xi_q).
/// An empty `w` means unit weights. `u_raw` is the measured value used by
/// the robust value-noise model (defaults to y).
struct WeightedData {
  Eigen::MatrixXd xi;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Eigen::VectorXd u_raw;

  Eigen::Index nq() const { return y.size(); }
  bool weighted() const { return w.size() > 0; }
  static WeightedData from(const SampleSet& s);
};

DenseMode fit_dense_mode(const Group& g, const Eigen::VectorXd& residual, const SampleSet& train, const FitConfig& cfg,
                         const BasisConfig& basis);

/// Greedy rank-by-rank ALS. `sweep_residuals`, when given, receives the
/// training residual norm after every factor update.
CPMode fit_cp_mode(const Group& g, const Eigen::VectorXd& residual, const SampleSet& train, const FitConfig& cfg,
                   const BasisConfig& basis, std::vector<double>* sweep_residuals = nullptr);

struct FitPass {
  int pass = 0;
  Group group;
  double train_residual = 0.0;
  double cv = 0.0;
};

struct FitDiagnostics {
  std::vector<FitPass> passes;
  int retained = 0;           // number of path groups kept in the model
  double train_residual = 0.0;  // after the final refit
  bool used_validation = true;
  std::vector<std::string> warnings;
};

struct FitResult {
  HdmrModel model;
  FitDiagnostics diagnostics;
};

FitResult fit_hdmr(const SampleSet& train, const SampleSet& validation, const SelectionPath& path, const FitConfig& cfg,
                   const BasisConfig& basis);

/// Weighted variant. With `validation` null (or empty) every path group is
/// fitted; `refit_union` merges validation into the final coefficient fit.
FitResult fit_hdmr_weighted(const WeightedData& train, const WeightedData* validation, const std::vector<Group>& groups,
                            const FitConfig& cfg, const BasisConfig& basis, bool refit_union = true);

/// Re-estimates all coefficients of `start` on `data` with the skeleton
/// fixed (warm start from the current coefficients).
HdmrModel refit_coefficients(const HdmrModel& start, const WeightedData& data, const FitConfig& cfg);

/// ||u - u_hat|| / ||u|| on the test set.
double relative_error(const Eigen::VectorXd& truth, const Eigen::VectorXd& prediction);
double relative_error(const HdmrModel& m, const SampleSet& test);

void write_diagnostics_csv(const FitDiagnostics& d, std::ostream& out);

}  // namespace hdmr
