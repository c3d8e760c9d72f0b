#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hdmr/poly_basis.hpp"

namespace hdmr {

/// Sorted, duplicate-free set of stochastic dimensions (0-based internally,
/// printed 1-based).
struct Group {
  std::vector<int> dims;

  Group() = default;
  explicit Group(std::vector<int> d);

  int order() const { return static_cast<int>(dims.size()); }
  bool contains(int dim) const;

  friend auto operator<=>(const Group&, const Group&) = default;
  friend bool operator==(const Group&, const Group&) = default;
};

/// "1;3" style label with 1-based dimensions.
std::string format_group(const Group& g);
Group parse_group(std::string_view label);

using MultiIndex = std::vector<int>;

/// All multi-indices with alpha_k in {2..No+1} and sum(alpha_k - 1) <= No,
/// in lexicographic order. Count is C(No, order).
std::vector<MultiIndex> enumerate_dense_indices(int order, int max_degree);
inline std::vector<MultiIndex> enumerate_dense_indices(const Group& g, int max_degree) {
  return enumerate_dense_indices(g.order(), max_degree);
}

/// Mode linear in its coefficients: sum_a c_a prod_k psi_{a_k}(xi_{dims_k}).
struct DenseMode {
  Group group;
  std::vector<MultiIndex> indices;
  Eigen::VectorXd coeffs;
};

/// Rank-nr canonical mode: sum_r prod_k sum_a F_r(k, a) psi_{a+2}(xi_{dims_k}).
/// Each factor matrix is |group| x No (the constant is never included).
struct CPMode {
  Group group;
  std::vector<Eigen::MatrixXd> factors;

  int rank() const { return static_cast<int>(factors.size()); }
};

using Mode = std::variant<DenseMode, CPMode>;

const Group& mode_group(const Mode& m);
double mode_variance(const Mode& m);

/// Values of a mode at every row of `xi` (Nq x Nd).
Eigen::VectorXd mode_values(const Mode& m, const BasisConfig& basis, const Eigen::MatrixXd& xi);

struct HdmrModel {
  BasisConfig basis;
  int nd = 1;
  int n_pc = 1;
  int ninter = 1;
  double f_empty = 0.0;
  std::vector<Mode> modes;

  void validate() const;
};

double evaluate_model(const HdmrModel& m, std::span<const double> xi);
Eigen::VectorXd evaluate_model(const HdmrModel& m, const Eigen::MatrixXd& xi);

double model_mean(const HdmrModel& m);
double model_variance(const HdmrModel& m);
std::map<Group, double> sobol_indices(const HdmrModel& m);
std::vector<double> total_sobol(const HdmrModel& m);

/// Upper bound on the a-priori dictionary size:
/// sum_{l<=N_PC} C(Nd,l) C(No,l) + sum_{N_PC<l<=Ninter} C(Nd,l) nr l No.
std::uint64_t dictionary_cardinality(int nd, int no, int ninter, int n_pc, int nr);

std::uint64_t binomial(int n, int k);

std::string save_model(const HdmrModel& m);
HdmrModel load_model(std::string_view document);

}  // namespace hdmr
