#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hdmr {

enum class SplitTag { Unsplit, Train, Validation, Test };

/// Scattered samples {x_q, xi_q, u_q}. Row q of `x` and `xi` holds the
/// spatial and stochastic coordinates of sample q.
struct SampleSet {
  Eigen::MatrixXd x;   // Nq x Ndx (Ndx may be 0)
  Eigen::MatrixXd xi;  // Nq x Nd
  Eigen::VectorXd u;   // Nq
  SplitTag tag = SplitTag::Unsplit;

  int nq() const { return static_cast<int>(u.size()); }
  int nd() const { return static_cast<int>(xi.cols()); }
  int ndx() const { return static_cast<int>(x.cols()); }

  /// Throws ShapeError / NonFiniteError / SizeError on a broken invariant.
  void validate() const;

  SampleSet subset(std::span<const int> rows, SplitTag new_tag) const;
};

/// Rows of `a` followed by rows of `b`; widths must agree.
SampleSet concat(const SampleSet& a, const SampleSet& b);

struct NoiseModel {
  double s = 0.0;    // additive coordinate noise scale
  double s_u = 0.0;  // multiplicative value noise scale
  double box_lo = -1.0;
  double box_hi = 1.0;
};

SampleSet read_csv(std::istream& in);
SampleSet load_csv(const std::string& path);
void write_csv(const SampleSet& set, std::ostream& out);
void save_csv(const SampleSet& set, const std::string& path);

struct Split {
  SampleSet train;
  SampleSet validation;
  SampleSet test;
};

/// Disjoint random partition from a seeded Fisher-Yates shuffle.
Split split(const SampleSet& set, int n_train, int n_val, int n_test, std::uint64_t seed);

/// xi <- xi + s * N(0,1) reflected into the box, u <- u * (1 + s_u * N(0,1)).
/// Draw (row, column) comes from its own counter-based stream.
SampleSet inject_noise(const SampleSet& set, const NoiseModel& noise, std::uint64_t seed);

/// <v, w>_Nq = sum_q v_q w_q.
double empirical_inner(std::span<const double> v, std::span<const double> w);

/// Reflects `v` into [lo, hi] (mirror at the faces, repeated if needed).
double reflect_into(double v, double lo, double hi);

}  // namespace hdmr
