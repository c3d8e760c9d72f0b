#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "hdmr/dataset.hpp"
#include "hdmr/model.hpp"
#include "hdmr/poly_basis.hpp"

namespace hdmr {

struct SelectionConfig {
  int nolars = 5;  // total degree of the linear selection dictionary
  int ninter = 3;
  int max_groups = 100000;
  double residual_tol = 1e-10;
  bool hierarchical = false;
  int dof_buffer = 1;

  void validate() const;
};

/// Lazy enumeration of all groups with 1 <= |g| <= ninter, ordered by
/// interaction order and then lexicographically.
class GroupEnumerator {
 public:
  GroupEnumerator(int nd, int ninter);

  std::optional<Group> next();
  static std::uint64_t count(int nd, int ninter);

 private:
  int nd_;
  int ninter_;
  int order_ = 1;
  std::vector<int> cur_;
  bool started_ = false;
};

/// Dictionary over groups. In hierarchical mode a group of order l > 1 is
/// only admissible once all of its (l-1)-subsets are active.
class GroupDictionary {
 public:
  GroupDictionary(int nd, const SelectionConfig& cfg) : nd_(nd), cfg_(cfg) {}

  GroupEnumerator enumerate() const { return GroupEnumerator(nd_, cfg_.hierarchical ? 1 : cfg_.ninter); }
  /// Groups that become admissible when `entered` joins `active`.
  std::vector<Group> unlocked_by(const Group& entered, const std::set<Group>& active) const;
  std::vector<MultiIndex> predictors(const Group& g) const { return enumerate_dense_indices(g, cfg_.nolars); }

 private:
  int nd_;
  SelectionConfig cfg_;
};

GroupDictionary build_group_dictionary(int nd, const SelectionConfig& cfg);

/// ||Q^T r||^2 / p for group columns Q orthonormal under the empirical inner
/// product; nullopt when the group has no columns left.
std::optional<double> group_correlation(const Eigen::MatrixXd& q_cols, const Eigen::VectorXd& residual);

struct PathStep {
  Group group;
  double entry_score = 0.0;
  double step_size = 0.0;
  double residual_norm_after = 0.0;
  int active_predictors = 0;
  double active_score_spread = 0.0;  // (max - min) / max over active scores after the step
};

struct SelectionPath {
  std::vector<PathStep> steps;
  double scan_seconds = 0.0;  // time spent scoring the dictionary
  int scans = 0;
  std::uint64_t dictionary_groups = 0;
  std::uint64_t dictionary_predictors = 0;
  int dropped_columns = 0;

  std::vector<Group> groups() const;
};

/// Group least angle regression on the training set.
SelectionPath glars_select(const SampleSet& train, const SelectionConfig& cfg, const BasisConfig& basis);

/// Same, for an explicit response with optional per-row weights: the
/// predictor columns become w_q psi(xi_q) and the intercept column is w.
SelectionPath glars_select(const Eigen::MatrixXd& xi, const Eigen::VectorXd& response,
                           const Eigen::VectorXd* row_weights, const SelectionConfig& cfg, const BasisConfig& basis);

void write_path_csv(const SelectionPath& path, std::ostream& out);

}  // namespace hdmr
