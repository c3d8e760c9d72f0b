#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "hdmr/fitting.hpp"
#include "hdmr/selection.hpp"
#include "hdmr/separated.hpp"
#include "hdmr/testbed.hpp"

namespace hdmr {

struct ConvergenceRow {
  int nq = 0;
  std::uint64_t seed = 0;
  double test_error = 0.0;
  int groups = 0;
  double seconds = 0.0;
};

/// Random-variable benchmark at the probe point: for every (Nq, seed) draw
/// Nq samples (a fraction held out for validation), select, fit and score
/// on a common test set.
std::vector<ConvergenceRow> convergence_study(const DiffusionConfig& cfg, const std::vector<int>& nq_list, int n_seeds,
                                              int n_test, const SelectionConfig& sel, const FitConfig& fit,
                                              const BasisConfig& basis, double val_fraction = 0.2);
void write_convergence_csv(const std::vector<ConvergenceRow>& rows, std::ostream& out);

struct RankRow {
  int rank = 0;
  double test_error = 0.0;
};

/// Separated-model benchmark on scattered samples; test error for every
/// prefix rank 0..lambda_max.
std::vector<RankRow> separated_study(const DiffusionConfig& cfg, int nq, int n_test, std::uint64_t seed,
                                     const SelectionConfig& sel, const FitConfig& fit, const SeparatedConfig& sep,
                                     const BasisConfig& basis);
void write_rank_csv(const std::vector<RankRow>& rows, std::ostream& out);

struct ScalingRow {
  const char* quantity = "";
  double size_small = 0.0;
  double size_large = 0.0;
  double seconds_small = 0.0;
  double seconds_large = 0.0;
  double ratio = 0.0;
};

/// Inactive-scan time of the selection path for a dictionary and its double
/// (first-order dictionary over nd and 2 nd dimensions, same Nq and number
/// of steps).
ScalingRow measure_scan_scaling(int nq, int nd, int nolars, int steps, int repeats, std::uint64_t seed);

/// Coefficient-evaluation time for a fixed skeleton when Nd doubles.
ScalingRow measure_fit_scaling(int nq, int nd, int no, int repeats, std::uint64_t seed);

void write_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out);

}  // namespace hdmr
