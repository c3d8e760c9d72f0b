#include "hdmr/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "hdmr/errors.hpp"
#include "hdmr/parallel.hpp"

namespace hdmr {

void SelectionConfig::validate() const {
  if (nolars < 1) throw ConfigError("NoLARS must be >= 1");
  if (ninter < 1) throw ConfigError("Ninter must be >= 1");
  if (max_groups < 1) throw ConfigError("max_groups must be >= 1");
  if (dof_buffer < 0) throw ConfigError("dof_buffer must be >= 0");
  if (!(residual_tol >= 0.0)) throw ConfigError("residual_tol must be >= 0");
}

GroupEnumerator::GroupEnumerator(int nd, int ninter) : nd_(nd), ninter_(std::min(ninter, nd)) {}

std::optional<Group> GroupEnumerator::next() {
  if (!started_) {
    started_ = true;
    if (ninter_ < 1 || nd_ < 1) return std::nullopt;
    cur_ = {0};
    return Group(cur_);
  }
  // Advance to the next combination of the current order.
  const int k = static_cast<int>(cur_.size());
  int i = k - 1;
  while (i >= 0 && cur_[static_cast<std::size_t>(i)] == nd_ - k + i) --i;
  if (i >= 0) {
    ++cur_[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) cur_[static_cast<std::size_t>(j)] = cur_[static_cast<std::size_t>(j - 1)] + 1;
    return Group(cur_);
  }
  if (++order_ > ninter_) return std::nullopt;
  cur_.resize(static_cast<std::size_t>(order_));
  for (int j = 0; j < order_; ++j) cur_[static_cast<std::size_t>(j)] = j;
  return Group(cur_);
}

std::uint64_t GroupEnumerator::count(int nd, int ninter) {
  std::uint64_t n = 0;
  for (int l = 1; l <= std::min(ninter, nd); ++l) n += binomial(nd, l);
  return n;
}

std::vector<Group> GroupDictionary::unlocked_by(const Group& entered, const std::set<Group>& active) const {
  std::vector<Group> out;
  if (!cfg_.hierarchical || entered.order() >= cfg_.ninter) return out;
  for (int j = 0; j < nd_; ++j) {
    if (entered.contains(j)) continue;
    std::vector<int> dims = entered.dims;
    dims.insert(std::upper_bound(dims.begin(), dims.end(), j), j);
    bool ok = true;
    for (std::size_t drop = 0; drop < dims.size() && ok; ++drop) {
      std::vector<int> sub = dims;
      sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
      Group sg(std::move(sub));
      ok = (sg == entered) || active.count(sg) > 0;
    }
    if (ok) out.emplace_back(std::move(dims));
  }
  return out;
}

GroupDictionary build_group_dictionary(int nd, const SelectionConfig& cfg) {
  cfg.validate();
  if (nd < 1) throw ConfigError("Nd must be >= 1");
  return GroupDictionary(nd, cfg);
}

std::optional<double> group_correlation(const Eigen::MatrixXd& q_cols, const Eigen::VectorXd& residual) {
  if (q_cols.cols() == 0) return std::nullopt;
  if (q_cols.rows() != residual.size()) throw ShapeError("group columns and residual lengths differ");
  return (q_cols.transpose() * residual).squaredNorm() / static_cast<double>(q_cols.cols());
}

std::vector<Group> SelectionPath::groups() const {
  std::vector<Group> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.group);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct GroupState {
  Group group;
  std::vector<MultiIndex> idx;
  Eigen::MatrixXd whiten;     // p x k, Q = Psi_c * whiten orthonormal
  Eigen::VectorXd corr;       // Psi^T r for the current residual
  Eigen::VectorXd corr_step;  // Psi^T v for the current direction
  bool active = false;
};

class Selector {
 public:
  Selector(const Eigen::MatrixXd& xi, const Eigen::VectorXd& response, const Eigen::VectorXd* weights,
           const SelectionConfig& cfg, const BasisConfig& basis)
      : cfg_(cfg), dict_(build_group_dictionary(static_cast<int>(xi.cols()), cfg)), nq_(xi.rows()) {
    BasisConfig sel_basis = basis;
    sel_basis.max_degree = cfg.nolars;
    sel_basis.validate();
    tables_.reserve(static_cast<std::size_t>(xi.cols()));
    for (Eigen::Index d = 0; d < xi.cols(); ++d) tables_.push_back(eval_table(sel_basis, xi.col(d), cfg.nolars + 1));
    weights_ = weights ? *weights : Eigen::VectorXd::Ones(nq_);
    if (weights_.size() != nq_ || response.size() != nq_) throw ShapeError("response/weights length differs from Nq");
    zz_ = weights_.squaredNorm();
    response_norm_ = 0.0;
    if (zz_ > 0.0) {
      residual_ = response - weights_ * (weights_.dot(response) / zz_);
      response_norm_ = residual_.norm();
    } else {
      residual_ = Eigen::VectorXd::Zero(nq_);
    }
  }

  SelectionPath run() {
    SelectionPath path;
    if (!(response_norm_ > 0.0)) return path;

    std::vector<Group> initial;
    auto en = dict_.enumerate();
    while (auto g = en.next()) initial.push_back(*g);
    add_candidates(initial);
    path.dictionary_groups = states_.size();
    for (const auto& s : states_) path.dictionary_predictors += s.idx.size();

    // First entry: the best-correlated group.
    std::size_t entering = npos;
    double best = -1.0;
    for (std::size_t k = 0; k < states_.size(); ++k) {
      const double sc = score(states_[k], states_[k].corr);
      if (entering == npos || sc > best || (sc == best && states_[k].group < states_[entering].group)) {
        best = sc;
        entering = k;
      }
    }
    if (entering == npos || !(best > 0.0)) return path;
    double active_score = best;
    double entry_score = best;
    path.dropped_columns = 0;

    while (true) {
      const Group entered = states_[entering].group;
      active_predictors_ += activate(states_[entering], path.dropped_columns);
      active_set_.insert(entered);
      add_candidates(dict_.unlocked_by(entered, active_set_));

      // Equiangular direction: projection of the residual on the active span.
      const Eigen::VectorXd v = basis_.leftCols(active_predictors_) *
                                (basis_.leftCols(active_predictors_).transpose() * residual_);
      const auto t0 = Clock::now();
      scan(v);
      path.scan_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
      ++path.scans;

      std::size_t next = npos;
      double step = 1.0;
      for (std::size_t k = 0; k < states_.size(); ++k) {
        if (states_[k].active || states_[k].whiten.cols() == 0) continue;
        const double t = tie_step(states_[k], active_score);
        if (next == npos || t < step || (t == step && states_[k].group < states_[next].group)) {
          step = t;
          next = k;
        }
      }
      if (next == npos) step = 1.0;

      residual_ -= step * v;
      for (auto& s : states_) s.corr -= step * s.corr_step;
      active_score *= (1.0 - step) * (1.0 - step);

      PathStep ps;
      ps.group = entered;
      ps.entry_score = entry_score;
      ps.step_size = step;
      ps.residual_norm_after = residual_.norm();
      ps.active_predictors = active_predictors_;
      ps.active_score_spread = active_spread();
      path.steps.push_back(ps);

      if (next == npos) break;
      if (static_cast<int>(path.steps.size()) >= cfg_.max_groups) break;
      if (ps.residual_norm_after <= cfg_.residual_tol * response_norm_) break;
      if (active_predictors_ >= nq_ - cfg_.dof_buffer) break;
      if (active_predictors_ + states_[next].whiten.cols() > nq_ - cfg_.dof_buffer) break;
      entering = next;
      entry_score = score(states_[next], states_[next].corr);
      if (!(entry_score > 0.0)) break;
    }
    return path;
  }

 private:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  // out[a] = sum_q vec_q prod_k T_{dims_k}(q, idx_a_k - 1)
  void group_dots(const GroupState& st, const Eigen::VectorXd& vec, Eigen::VectorXd& out) const {
    const auto& dims = st.group.dims;
    out.resize(static_cast<Eigen::Index>(st.idx.size()));
    for (std::size_t a = 0; a < st.idx.size(); ++a) {
      const auto& id = st.idx[a];
      double s = 0.0;
      switch (dims.size()) {
        case 1:
          s = vec.dot(tables_[static_cast<std::size_t>(dims[0])].col(id[0] - 1));
          break;
        case 2:
          s = (vec.array() * tables_[static_cast<std::size_t>(dims[0])].col(id[0] - 1).array() *
               tables_[static_cast<std::size_t>(dims[1])].col(id[1] - 1).array())
                  .sum();
          break;
        default: {
          Eigen::ArrayXd prod = vec.array();
          for (std::size_t k = 0; k < dims.size(); ++k) {
            prod *= tables_[static_cast<std::size_t>(dims[k])].col(id[k] - 1).array();
          }
          s = prod.sum();
        }
      }
      out[static_cast<Eigen::Index>(a)] = s;
    }
  }

  Eigen::MatrixXd group_columns(const GroupState& st) const {
    Eigen::MatrixXd cols(nq_, static_cast<Eigen::Index>(st.idx.size()));
    for (std::size_t a = 0; a < st.idx.size(); ++a) {
      Eigen::ArrayXd prod = weights_.array();
      for (std::size_t k = 0; k < st.group.dims.size(); ++k) {
        prod *= tables_[static_cast<std::size_t>(st.group.dims[k])].col(st.idx[a][k] - 1).array();
      }
      cols.col(static_cast<Eigen::Index>(a)) = prod.matrix();
    }
    return cols;
  }

  Eigen::MatrixXd centered_columns(const GroupState& st) const {
    Eigen::MatrixXd cols = group_columns(st);
    if (zz_ > 0.0) cols -= weights_ * ((weights_.transpose() * cols) / zz_);
    return cols;
  }

  void add_candidates(const std::vector<Group>& groups) {
    const std::size_t first = states_.size();
    for (const auto& g : groups) {
      if (known_.count(g)) continue;
      known_.insert(g);
      GroupState st;
      st.group = g;
      st.idx = dict_.predictors(g);
      states_.push_back(std::move(st));
    }
    const Eigen::VectorXd wr = weights_.cwiseProduct(residual_);
    parallel_for(states_.size() - first, [&](std::size_t i) {
      GroupState& st = states_[first + i];
      if (st.idx.empty()) return;
      const Eigen::MatrixXd cols = centered_columns(st);
      const Eigen::MatrixXd gram = cols.transpose() * cols;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
      const Eigen::VectorXd& lam = eig.eigenvalues();
      const double top = lam.maxCoeff();
      std::vector<Eigen::Index> keep;
      for (Eigen::Index k = 0; k < lam.size(); ++k) {
        if (top > 0.0 && lam[k] > 1e-10 * top) keep.push_back(k);
      }
      st.whiten.resize(static_cast<Eigen::Index>(st.idx.size()), static_cast<Eigen::Index>(keep.size()));
      for (std::size_t c = 0; c < keep.size(); ++c) {
        st.whiten.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]) / std::sqrt(lam[keep[c]]);
      }
      // The residual is orthogonal to the intercept column, so raw and centered correlations agree.
      group_dots(st, wr, st.corr);
      st.corr_step = Eigen::VectorXd::Zero(st.corr.size());
    });
  }

  double score(const GroupState& st, const Eigen::VectorXd& raw) const {
    if (st.whiten.cols() == 0) return 0.0;
    return (st.whiten.transpose() * raw).squaredNorm() / static_cast<double>(st.whiten.cols());
  }

  // Smallest t in [0, 1] with ||a - t b||^2 = p C (1 - t)^2.
  double tie_step(const GroupState& st, double active_score) const {
    const Eigen::VectorXd a = st.whiten.transpose() * st.corr;
    const Eigen::VectorXd b = st.whiten.transpose() * st.corr_step;
    const double pc = static_cast<double>(st.whiten.cols()) * active_score;
    const double a2 = b.squaredNorm() - pc;
    const double a1 = -2.0 * a.dot(b) + 2.0 * pc;
    const double a0 = a.squaredNorm() - pc;
    if (a0 >= 0.0) return 0.0;
    const double scale = std::max({std::abs(a2), std::abs(a1), std::abs(a0)});
    double best = 1.0;
    auto consider = [&](double t) {
      if (std::isfinite(t) && t >= 0.0 && t <= 1.0) best = std::min(best, t);
    };
    if (std::abs(a2) <= 1e-14 * scale) {
      if (a1 != 0.0) consider(-a0 / a1);
      return best;
    }
    const double disc = std::max(0.0, a1 * a1 - 4.0 * a2 * a0);
    const double q = -0.5 * (a1 + std::copysign(std::sqrt(disc), a1));
    consider(q / a2);
    if (q != 0.0) consider(a0 / q);
    return best;
  }

  void scan(const Eigen::VectorXd& v) {
    const Eigen::VectorXd wv = weights_.cwiseProduct(v);
    parallel_for(states_.size(), [&](std::size_t k) {
      GroupState& st = states_[k];
      if (st.whiten.cols() == 0) return;
      group_dots(st, wv, st.corr_step);
    });
  }

  // Appends the group's orthonormalized columns to the active basis; returns
  // the number of independent columns kept.
  int activate(GroupState& st, int& dropped) {
    st.active = true;
    if (st.whiten.cols() == 0) return 0;
    if (basis_.cols() == 0) basis_.resize(nq_, std::min<Eigen::Index>(nq_, 64));
    const Eigen::MatrixXd q = centered_columns(st) * st.whiten;
    int kept = 0;
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      Eigen::VectorXd col = q.col(c);
      const double norm0 = col.norm();
      const Eigen::Index n = active_predictors_ + kept;
      for (int pass = 0; pass < 2 && n > 0; ++pass) {
        col -= basis_.leftCols(n) * (basis_.leftCols(n).transpose() * col);
      }
      const double norm = col.norm();
      if (!(norm > 1e-8 * std::max(norm0, 1e-300)) || n >= nq_) {
        ++dropped;
        continue;
      }
      if (n >= basis_.cols()) basis_.conservativeResize(nq_, std::min<Eigen::Index>(nq_, 2 * basis_.cols() + 1));
      basis_.col(n) = col / norm;
      ++kept;
    }
    return kept;
  }

  double active_spread() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& s : states_) {
      if (!s.active || s.whiten.cols() == 0) continue;
      const double sc = score(s, s.corr);
      lo = std::min(lo, sc);
      hi = std::max(hi, sc);
    }
    return hi > 0.0 ? (hi - lo) / hi : 0.0;
  }

  SelectionConfig cfg_;
  GroupDictionary dict_;
  Eigen::Index nq_;
  std::vector<Eigen::MatrixXd> tables_;
  Eigen::VectorXd weights_;
  double zz_ = 0.0;
  Eigen::VectorXd residual_;
  double response_norm_ = 0.0;
  std::vector<GroupState> states_;
  std::set<Group> known_;
  std::set<Group> active_set_;
  Eigen::MatrixXd basis_;
  int active_predictors_ = 0;
};

}  // namespace

SelectionPath glars_select(const Eigen::MatrixXd& xi, const Eigen::VectorXd& response,
                           const Eigen::VectorXd* row_weights, const SelectionConfig& cfg, const BasisConfig& basis) {
  cfg.validate();
  if (xi.rows() != response.size()) throw ShapeError("coordinates and response lengths differ");
  if (!xi.allFinite() || !response.allFinite()) throw NonFiniteError("selection inputs contain non-finite values");
  if (xi.rows() < 2) throw SizeError("selection needs at least two samples");
  Selector sel(xi, response, row_weights, cfg, basis);
  return sel.run();
}

SelectionPath glars_select(const SampleSet& train, const SelectionConfig& cfg, const BasisConfig& basis) {
  train.validate();
  return glars_select(train.xi, train.u, nullptr, cfg, basis);
}

void write_path_csv(const SelectionPath& path, std::ostream& out) {
  out << "step,dims,entry_score,residual_norm\n";
  out.precision(17);
  for (std::size_t s = 0; s < path.steps.size(); ++s) {
    const auto& st = path.steps[s];
    out << s + 1 << ',' << format_group(st.group) << ',' << st.entry_score << ',' << st.residual_norm_after << '\n';
  }
}

}  // namespace hdmr
