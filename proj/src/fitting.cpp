#include "hdmr/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <variant>

#include "hdmr/errors.hpp"
#include "hdmr/linear_solvers.hpp"
#include "hdmr/parallel.hpp"
#include "hdmr/rng.hpp"

namespace hdmr {

void FitConfig::validate() const {
  if (no < 1) throw ConfigError("No must be >= 1");
  if (n_pc < 0 || ninter < 1 || n_pc > ninter) throw ConfigError("need 0 <= N_PC <= Ninter and Ninter >= 1");
  if (nr < 1) throw ConfigError("nr must be >= 1");
  if (!(als_tol >= 0.0) || als_max_sweeps < 1) throw ConfigError("invalid ALS settings");
  if (!(update_sweeps_tol >= 0.0) || max_update_sweeps < 0) throw ConfigError("invalid update-sweep settings");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("ridge beta must be finite and >= 0");
  if (max_groups < 0) throw ConfigError("max_groups must be >= 0");
  if (!(noise.s >= 0.0) || !(noise.s_u >= 0.0)) throw ConfigError("noise scales must be >= 0");
}

WeightedData WeightedData::from(const SampleSet& s) {
  WeightedData d;
  d.xi = s.xi;
  d.y = s.u;
  d.u_raw = s.u;
  return d;
}

namespace {

BasisConfig fit_basis(const BasisConfig& basis, const FitConfig& cfg) {
  BasisConfig b = basis;
  b.max_degree = cfg.no;
  b.validate();
  return b;
}

std::uint64_t group_stream(const Group& g) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (int d : g.dims) h = StreamRng::stream_id(h, static_cast<std::uint64_t>(d) + 1);
  return h;
}

// Univariate tables over one data set, built on first use.
class Tables {
 public:
  Tables(const Eigen::MatrixXd& xi, const Eigen::VectorXd& w, const BasisConfig& basis)
      : xi_(&xi), w_(&w), basis_(basis), tables_(static_cast<std::size_t>(xi.cols())) {}

  const Eigen::MatrixXd& table(int dim) {
    auto& t = tables_[static_cast<std::size_t>(dim)];
    if (t.size() == 0) t = eval_table(basis_, xi_->col(dim), basis_.max_index());
    return t;
  }

  // Columns w_q prod_k psi_{idx_k}(xi_{q,dims_k}).
  Eigen::MatrixXd dense_design(const Group& g, const std::vector<MultiIndex>& indices) {
    for (int d : g.dims) table(d);
    const Eigen::Index nq = xi_->rows();
    Eigen::MatrixXd out(nq, static_cast<Eigen::Index>(indices.size()));
    parallel_for(indices.size(), [&](std::size_t a) {
      Eigen::ArrayXd col = w_->size() ? Eigen::ArrayXd(w_->array()) : Eigen::ArrayXd::Ones(nq);
      for (std::size_t k = 0; k < g.dims.size(); ++k) {
        col *= tables_[static_cast<std::size_t>(g.dims[k])].col(indices[a][k] - 1).array();
      }
      out.col(static_cast<Eigen::Index>(a)) = col.matrix();
    });
    return out;
  }

  Eigen::Index rows() const { return xi_->rows(); }
  const Eigen::VectorXd& weights() const { return *w_; }
  const BasisConfig& basis() const { return basis_; }

 private:
  const Eigen::MatrixXd* xi_;
  const Eigen::VectorXd* w_;
  BasisConfig basis_;
  std::vector<Eigen::MatrixXd> tables_;
};

// Values of one CP rank: prod_k T_k F(k,:)^T (unweighted).
Eigen::VectorXd rank_values(Tables& t, const Group& g, const Eigen::MatrixXd& f, int skip = -1) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(t.rows());
  const int no = t.basis().max_degree;
  for (int k = 0; k < g.order(); ++k) {
    if (k == skip) continue;
    v.array() *= (t.table(g.dims[static_cast<std::size_t>(k)]).rightCols(no) * f.row(k).transpose()).array();
  }
  return v;
}

void balance(Eigen::MatrixXd& f) {
  const Eigen::VectorXd n = f.rowwise().norm();
  if ((n.array() <= 0.0).any()) return;
  const double g = std::exp(n.array().log().mean());
  for (Eigen::Index k = 0; k < f.rows(); ++k) f.row(k) *= g / n[k];
}

Eigen::VectorXd weighted(const Tables& t, Eigen::VectorXd v) {
  if (t.weights().size()) v.array() *= t.weights().array();
  return v;
}

// One ALS pass over the dimensions of rank f against `target`; returns the
// residual norm afterwards.
double als_pass(Tables& t, const Group& g, Eigen::MatrixXd& f, const Eigen::VectorXd& target, double beta,
                std::vector<double>* trace) {
  const int no = t.basis().max_degree;
  double norm = 0.0;
  for (int k = 0; k < g.order(); ++k) {
    const Eigen::VectorXd partial = weighted(t, rank_values(t, g, f, k));
    Eigen::MatrixXd design = partial.asDiagonal() * t.table(g.dims[static_cast<std::size_t>(k)]).rightCols(no);
    if (partial.isZero(0.0)) {
      f.row(k).setZero();
    } else {
      f.row(k) = ls_solve(design, target, beta).transpose();
    }
    norm = (target - design * f.row(k).transpose()).norm();
    if (trace) trace->push_back(norm);
  }
  return norm;
}

Eigen::MatrixXd random_factor(const FitConfig& cfg, const Group& g, int rank, int attempt) {
  StreamRng rng(cfg.seed, StreamRng::stream_id(group_stream(g), static_cast<std::uint64_t>(rank) * 16 + attempt));
  Eigen::MatrixXd f(g.order(), cfg.no);
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    for (Eigen::Index a = 0; a < f.cols(); ++a) f(k, a) = rng.uniform(-1.0, 1.0);
  }
  return f;
}

CPMode greedy_cp(Tables& t, const Group& g, Eigen::VectorXd target, const FitConfig& cfg, std::vector<double>* trace,
                 std::vector<std::string>* warnings) {
  CPMode mode;
  mode.group = g;
  const double scale = target.norm();
  if (!(scale > 0.0)) {
    mode.factors.assign(1, Eigen::MatrixXd::Zero(g.order(), cfg.no));
    return mode;
  }
  for (int r = 0; r < cfg.nr; ++r) {
    bool kept = false;
    for (int attempt = 0; attempt < 2 && !kept; ++attempt) {
      Eigen::MatrixXd f = random_factor(cfg, g, r, attempt);
      double prev = target.norm();
      for (int sweep = 0; sweep < cfg.als_max_sweeps; ++sweep) {
        const double cur = als_pass(t, g, f, target, cfg.beta, trace);
        balance(f);
        if (std::abs(prev - cur) <= cfg.als_tol * std::max(prev, 1e-300) || cur <= 1e-15 * scale) break;
        prev = cur;
      }
      if (f.isZero(0.0)) continue;
      target -= weighted(t, rank_values(t, g, f));
      mode.factors.push_back(std::move(f));
      kept = true;
    }
    if (!kept) {
      if (warnings) warnings->push_back("CP rank " + std::to_string(r + 1) + " of group " + format_group(g) + " vanished; skipped");
      break;
    }
    if (target.norm() <= 1e-15 * scale) break;
  }
  if (mode.factors.empty()) mode.factors.assign(1, Eigen::MatrixXd::Zero(g.order(), cfg.no));
  return mode;
}

// Joint warm-started ALS over every rank of an existing mode.
void update_cp(Tables& t, CPMode& mode, const Eigen::VectorXd& target, const FitConfig& cfg) {
  const int nr = mode.rank();
  std::vector<Eigen::VectorXd> vals(static_cast<std::size_t>(nr));
  for (int r = 0; r < nr; ++r) vals[static_cast<std::size_t>(r)] = weighted(t, rank_values(t, mode.group, mode.factors[static_cast<std::size_t>(r)]));
  Eigen::VectorXd total = Eigen::VectorXd::Zero(t.rows());
  for (const auto& v : vals) total += v;
  double prev = (target - total).norm();
  const double scale = target.norm();
  for (int sweep = 0; sweep < cfg.als_max_sweeps; ++sweep) {
    for (int r = 0; r < nr; ++r) {
      auto& f = mode.factors[static_cast<std::size_t>(r)];
      auto& v = vals[static_cast<std::size_t>(r)];
      total -= v;
      const Eigen::VectorXd sub = target - total;
      if (!f.isZero(0.0)) {
        als_pass(t, mode.group, f, sub, cfg.beta, nullptr);
        balance(f);
      }
      v = weighted(t, rank_values(t, mode.group, f));
      total += v;
    }
    const double cur = (target - total).norm();
    if (std::abs(prev - cur) <= cfg.als_tol * std::max(prev, 1e-300) || cur <= 1e-15 * scale) break;
    prev = cur;
  }
}

struct Slot {
  Mode mode;
  Eigen::MatrixXd design;  // dense modes only
  LsFactor factor;
  CovarianceBlocks blocks;
  Eigen::VectorXd contrib;  // w * mode values on the data rows
};

class Engine {
 public:
  Engine(const WeightedData& data, const FitConfig& cfg, const BasisConfig& basis)
      : data_(data), cfg_(cfg), tables_(data_.xi, data_.w, basis) {
    if (data_.nq() < 1) throw SizeError("empty training set");
    if (data_.xi.rows() != data_.nq()) throw ShapeError("coordinates and response lengths differ");
    if (data_.weighted() && data_.w.size() != data_.nq()) throw ShapeError("weights length differs from Nq");
    if (!data_.xi.allFinite() || !data_.y.allFinite()) throw NonFiniteError("fit inputs contain non-finite values");
    ww_ = data_.weighted() ? data_.w.squaredNorm() : static_cast<double>(data_.nq());
    residual_ = data_.y;
    refit_mean();
  }

  bool robust() const { return cfg_.robust && !data_.weighted(); }

  // Adds the mode of `g` fitted to the current residual. Returns false when
  // the group admits no predictors.
  bool add(const Group& g, std::vector<std::string>* warnings, std::vector<double>* trace = nullptr) {
    Slot s;
    if (g.order() <= cfg_.n_pc) {
      DenseMode dm;
      dm.group = g;
      dm.indices = enumerate_dense_indices(g, cfg_.no);
      if (dm.indices.empty()) return false;
      dm.coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dm.indices.size()));
      s.mode = std::move(dm);
    } else if (g.order() <= cfg_.ninter) {
      CPMode cm;
      cm.group = g;
      s.mode = std::move(cm);
    } else {
      return false;
    }
    s.contrib = Eigen::VectorXd::Zero(data_.nq());
    slots_.push_back(std::move(s));
    Slot& slot = slots_.back();
    if (auto* cm = std::get_if<CPMode>(&slot.mode)) {
      *cm = greedy_cp(tables_, g, residual_, cfg_, trace, warnings);
      slot.contrib = contribution(slot);
      residual_ -= slot.contrib;
    } else {
      refit(slot);
    }
    return true;
  }

  void load(const HdmrModel& m) {
    slots_.clear();
    for (const auto& mode : m.modes) {
      Slot s;
      s.mode = mode;
      s.contrib = contribution(s);
      slots_.push_back(std::move(s));
    }
    recompute_residual(m.f_empty);
    refit_mean();
  }

  // Cyclic re-fit of every mode and the constant; returns the number of sweeps.
  int update_sweeps(double tol, int max_sweeps) {
    const double scale = data_.y.norm();
    double prev = residual_.norm();
    int n = 0;
    for (; n < max_sweeps; ++n) {
      for (auto& s : slots_) refit(s);
      refit_mean();
      const double cur = residual_.norm();
      if (prev - cur <= tol * prev || cur <= 1e-14 * scale) {
        ++n;
        break;
      }
      prev = cur;
    }
    return n;
  }

  double residual_norm() const { return residual_.norm(); }

  HdmrModel model(const BasisConfig& basis, int nd) const {
    HdmrModel m;
    m.basis = basis;
    m.nd = nd;
    m.n_pc = cfg_.n_pc;
    m.ninter = cfg_.ninter;
    m.f_empty = f_empty_;
    for (const auto& s : slots_) m.modes.push_back(s.mode);
    return m;
  }

  std::size_t size() const { return slots_.size(); }

 private:
  Eigen::VectorXd contribution(Slot& s) {
    if (auto* dm = std::get_if<DenseMode>(&s.mode)) {
      ensure_design(s);
      return s.design * dm->coeffs;
    }
    const auto& cm = std::get<CPMode>(s.mode);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(data_.nq());
    for (const auto& f : cm.factors) v += rank_values(tables_, cm.group, f);
    return weighted(tables_, std::move(v));
  }

  void ensure_design(Slot& s) {
    auto& dm = std::get<DenseMode>(s.mode);
    if (s.design.size() == 0) {
      s.design = tables_.dense_design(dm.group, dm.indices);
      s.factor = LsFactor(s.design, cfg_.beta);
    }
  }

  void refit(Slot& s) {
    const Eigen::VectorXd target = residual_ + s.contrib;
    if (auto* dm = std::get_if<DenseMode>(&s.mode)) {
      ensure_design(s);
      Eigen::VectorXd c = s.factor.solve(target);
      if (robust()) {
        if (s.blocks.empty()) {
          s.blocks = build_covariance_blocks(data_.xi, dm->group, dm->indices, tables_.basis(), cfg_.noise,
                                             data_.u_raw.size() ? data_.u_raw : data_.y);
        }
        // value-noise variance from the current prediction rather than the noisy measurement
        const Eigen::Index p = s.design.cols();
        const double su2 = cfg_.noise.s_u * cfg_.noise.s_u;
        for (Eigen::Index q = 0; q < data_.nq(); ++q) {
          const double pred = data_.y[q] - residual_[q];
          s.blocks[static_cast<std::size_t>(q)](p, p) = su2 * pred * pred;
        }
        c = wtls_solve(s.design, target, s.blocks, c).coeffs;
      }
      dm->coeffs = c;
    } else {
      update_cp(tables_, std::get<CPMode>(s.mode), target, cfg_);
    }
    s.contrib = contribution(s);
    residual_ = target - s.contrib;
  }

  void refit_mean() {
    const double old = f_empty_;
    const Eigen::VectorXd base = residual_ + (data_.weighted() ? Eigen::VectorXd(data_.w * old) : Eigen::VectorXd::Constant(data_.nq(), old));
    f_empty_ = ww_ > 0.0 ? (data_.weighted() ? data_.w.dot(base) : base.sum()) / ww_ : 0.0;
    if (robust() && cfg_.noise.s_u > 0.0) {
      // inverse-variance weighted mean under the value-noise model
      Eigen::ArrayXd var = (data_.y - residual_).array().square();
      const double top = var.maxCoeff();
      if (top > 0.0) {
        var = var.max(1e-12 * top);
        f_empty_ = (base.array() / var).sum() / var.inverse().sum();
      }
    }
    residual_ = base - (data_.weighted() ? Eigen::VectorXd(data_.w * f_empty_) : Eigen::VectorXd::Constant(data_.nq(), f_empty_));
  }

  void recompute_residual(double f) {
    f_empty_ = f;
    residual_ = data_.y - (data_.weighted() ? Eigen::VectorXd(data_.w * f) : Eigen::VectorXd::Constant(data_.nq(), f));
    for (const auto& s : slots_) residual_ -= s.contrib;
  }

  const WeightedData& data_;
  FitConfig cfg_;
  Tables tables_;
  std::vector<Slot> slots_;
  Eigen::VectorXd residual_;
  double f_empty_ = 0.0;
  double ww_ = 0.0;
};

// Validation-set predictor with per-mode design caches.
class Evaluator {
 public:
  Evaluator(const WeightedData& data, const BasisConfig& basis) : data_(data), tables_(data_.xi, data_.w, basis) {}

  double relative_error(const HdmrModel& m) {
    Eigen::VectorXd pred = data_.weighted() ? Eigen::VectorXd(data_.w * m.f_empty)
                                            : Eigen::VectorXd::Constant(data_.nq(), m.f_empty);
    for (const auto& mode : m.modes) {
      if (const auto* dm = std::get_if<DenseMode>(&mode)) {
        auto it = designs_.find(dm->group);
        if (it == designs_.end()) it = designs_.emplace(dm->group, tables_.dense_design(dm->group, dm->indices)).first;
        pred += it->second * dm->coeffs;
      } else {
        const auto& cm = std::get<CPMode>(mode);
        Eigen::VectorXd v = Eigen::VectorXd::Zero(data_.nq());
        for (const auto& f : cm.factors) v += rank_values(tables_, cm.group, f);
        pred += weighted(tables_, std::move(v));
      }
    }
    const double n = data_.y.norm();
    const double e = (data_.y - pred).norm();
    return n > 0.0 ? e / n : e;
  }

 private:
  const WeightedData& data_;
  Tables tables_;
  std::map<Group, Eigen::MatrixXd> designs_;
};

WeightedData merge(const WeightedData& a, const WeightedData& b) {
  WeightedData m;
  m.xi.resize(a.xi.rows() + b.xi.rows(), a.xi.cols());
  m.xi << a.xi, b.xi;
  m.y.resize(a.nq() + b.nq());
  m.y << a.y, b.y;
  if (a.weighted() || b.weighted()) {
    m.w.resize(m.y.size());
    m.w << (a.weighted() ? a.w : Eigen::VectorXd::Ones(a.nq())), (b.weighted() ? b.w : Eigen::VectorXd::Ones(b.nq()));
  }
  const Eigen::VectorXd ua = a.u_raw.size() ? a.u_raw : a.y;
  const Eigen::VectorXd ub = b.u_raw.size() ? b.u_raw : b.y;
  m.u_raw.resize(m.y.size());
  m.u_raw << ua, ub;
  return m;
}

}  // namespace

DenseMode fit_dense_mode(const Group& g, const Eigen::VectorXd& residual, const SampleSet& train, const FitConfig& cfg,
                         const BasisConfig& basis) {
  cfg.validate();
  train.validate();
  if (g.order() > cfg.n_pc) throw ConfigError("dense modes need |g| <= N_PC");
  if (residual.size() != train.nq()) throw ShapeError("residual length differs from Nq");
  const BasisConfig b = fit_basis(basis, cfg);
  DenseMode dm;
  dm.group = g;
  dm.indices = enumerate_dense_indices(g, cfg.no);
  if (dm.indices.empty()) throw DegenerateModeError("group " + format_group(g) + " has no predictors at this degree");
  const Eigen::VectorXd none;
  Tables t(train.xi, none, b);
  const Eigen::MatrixXd design = t.dense_design(g, dm.indices);
  dm.coeffs = ls_solve(design, residual, cfg.beta);
  if (cfg.robust) {
    const auto blocks = build_covariance_blocks(train.xi, g, dm.indices, b, cfg.noise, train.u);
    dm.coeffs = wtls_solve(design, residual, blocks, dm.coeffs).coeffs;
  }
  return dm;
}

CPMode fit_cp_mode(const Group& g, const Eigen::VectorXd& residual, const SampleSet& train, const FitConfig& cfg,
                   const BasisConfig& basis, std::vector<double>* sweep_residuals) {
  cfg.validate();
  train.validate();
  if (g.order() <= cfg.n_pc || g.order() > cfg.ninter) throw ConfigError("CP modes need N_PC < |g| <= Ninter");
  if (residual.size() != train.nq()) throw ShapeError("residual length differs from Nq");
  const Eigen::VectorXd none;
  Tables t(train.xi, none, fit_basis(basis, cfg));
  return greedy_cp(t, g, residual, cfg, sweep_residuals, nullptr);
}

FitResult fit_hdmr_weighted(const WeightedData& train, const WeightedData* validation, const std::vector<Group>& groups,
                            const FitConfig& cfg, const BasisConfig& basis, bool refit_union) {
  cfg.validate();
  const BasisConfig b = fit_basis(basis, cfg);
  const int nd = static_cast<int>(train.xi.cols());
  FitResult out;
  auto& diag = out.diagnostics;
  const bool have_val = validation && validation->nq() > 0;
  if (!have_val) {
    diag.used_validation = false;
    diag.warnings.push_back("validation set empty; fitting every selected group");
  }

  Engine eng(train, cfg, b);
  std::optional<Evaluator> val;
  if (have_val) val.emplace(*validation, b);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  HdmrModel best = eng.model(b, nd);
  double best_cv = have_val ? val->relative_error(best) : nan;
  std::vector<double> history{best_cv};

  int pass = 0;
  for (const auto& g : groups) {
    if (pass >= cfg.max_groups) break;
    if (!eng.add(g, &diag.warnings)) {
      diag.warnings.push_back("group " + format_group(g) + " skipped: no admissible predictors");
      continue;
    }
    ++pass;
    if (cfg.update) eng.update_sweeps(cfg.update_sweeps_tol, cfg.max_update_sweeps);
    HdmrModel cur = eng.model(b, nd);
    FitPass fp;
    fp.pass = pass;
    fp.group = g;
    fp.train_residual = eng.residual_norm();
    fp.cv = have_val ? val->relative_error(cur) : nan;
    diag.passes.push_back(fp);
    if (!have_val || fp.cv < best_cv) {
      best = std::move(cur);
      best_cv = fp.cv;
    }
    history.push_back(fp.cv);
    const std::size_t n = history.size();
    if (have_val && n >= 3 && history[n - 1] > history[n - 2] && history[n - 2] > history[n - 3]) break;
  }
  diag.retained = static_cast<int>(best.modes.size());

  if (have_val && refit_union) {
    const WeightedData all = merge(train, *validation);
    Engine fin(all, cfg, b);
    fin.load(best);
    fin.update_sweeps(std::min(cfg.update_sweeps_tol, 1e-10), std::max(cfg.max_update_sweeps, 50));
    out.model = fin.model(b, nd);
    diag.train_residual = fin.residual_norm();
  } else {
    Engine fin(train, cfg, b);
    fin.load(best);
    out.model = std::move(best);
    diag.train_residual = fin.residual_norm();
  }
  return out;
}

FitResult fit_hdmr(const SampleSet& train, const SampleSet& validation, const SelectionPath& path, const FitConfig& cfg,
                   const BasisConfig& basis) {
  train.validate();
  if (train.nq() < 1) throw SizeError("empty training set");
  const WeightedData t = WeightedData::from(train);
  if (validation.nq() > 0) {
    validation.validate();
    if (validation.nd() != train.nd()) throw ShapeError("validation and training dimensions differ");
    const WeightedData v = WeightedData::from(validation);
    return fit_hdmr_weighted(t, &v, path.groups(), cfg, basis);
  }
  return fit_hdmr_weighted(t, nullptr, path.groups(), cfg, basis);
}

HdmrModel refit_coefficients(const HdmrModel& start, const WeightedData& data, const FitConfig& cfg) {
  Engine eng(data, cfg, fit_basis(start.basis, cfg));
  eng.load(start);
  eng.update_sweeps(cfg.update_sweeps_tol, std::max(cfg.max_update_sweeps, 1));
  HdmrModel m = eng.model(start.basis, start.nd);
  m.n_pc = start.n_pc;
  m.ninter = start.ninter;
  return m;
}

double relative_error(const Eigen::VectorXd& truth, const Eigen::VectorXd& prediction) {
  if (truth.size() != prediction.size()) throw ShapeError("truth and prediction lengths differ");
  if (truth.size() == 0) throw SizeError("empty test set");
  const double n = truth.norm();
  if (!(n > 0.0)) throw UndefinedStatisticsError("relative error undefined for a zero-norm truth");
  return (truth - prediction).norm() / n;
}

double relative_error(const HdmrModel& m, const SampleSet& test) {
  test.validate();
  return relative_error(test.u, evaluate_model(m, test.xi));
}

void write_diagnostics_csv(const FitDiagnostics& d, std::ostream& out) {
  out << "pass,dims,train_residual,cv\n";
  out.precision(17);
  for (const auto& p : d.passes) out << p.pass << ',' << format_group(p.group) << ',' << p.train_residual << ',' << p.cv << '\n';
}

}  // namespace hdmr
