#include "hdmr/separated.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "hdmr/errors.hpp"
#include "hdmr/linear_solvers.hpp"
#include "hdmr/poly_basis.hpp"
#include "hdmr/rng.hpp"
#include "hdmr/serialization.hpp"

namespace hdmr {

int SpatialBasis::cardx() const {
  int c = 1;
  for (int k = 0; k < ndx(); ++k) c *= per_axis;
  return c;
}

void SpatialBasis::validate() const {
  if (lo.empty() || lo.size() != hi.size()) throw ConfigError("spatial domain bounds malformed");
  for (std::size_t k = 0; k < lo.size(); ++k) {
    if (!(lo[k] < hi[k])) throw ConfigError("spatial domain needs lo < hi");
  }
  if (per_axis < (kind == SpatialKind::NodalLinear ? 2 : 1)) throw ConfigError("spatial basis too small");
}

SpatialBasis SpatialBasis::make(SpatialKind kind, int cardx, std::vector<double> lo, std::vector<double> hi) {
  SpatialBasis b;
  b.kind = kind;
  b.lo = std::move(lo);
  b.hi = std::move(hi);
  const int n = static_cast<int>(std::lround(std::pow(static_cast<double>(cardx), 1.0 / std::max<std::size_t>(1, b.lo.size()))));
  b.per_axis = n;
  if (b.lo.empty() || b.cardx() != cardx) throw ConfigError("cardx must be a perfect power of the spatial dimension");
  b.validate();
  return b;
}

Eigen::VectorXd SpatialBasis::eval(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != ndx()) throw ShapeError("spatial point has the wrong dimension");
  std::vector<Eigen::VectorXd> axis(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double span = hi[k] - lo[k];
    const double tol = 1e-12 * span;
    if (!(x[k] >= lo[k] - tol && x[k] <= hi[k] + tol)) throw ShapeError("spatial point outside the basis domain");
    const double xc = std::clamp(x[k], lo[k], hi[k]);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(per_axis);
    if (kind == SpatialKind::NodalLinear) {
      const double t = (xc - lo[k]) / span * (per_axis - 1);
      const int j = std::min(static_cast<int>(std::floor(t)), per_axis - 2);
      const double f = t - j;
      v[j] = 1.0 - f;
      v[j + 1] = f;
    } else {
      BasisConfig b;
      b.lo = lo[k];
      b.hi = hi[k];
      b.max_degree = per_axis - 1;
      eval_all(b, xc, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
    }
    axis[k] = std::move(v);
  }
  // Tensor product, first axis fastest.
  Eigen::VectorXd out = axis[0];
  for (std::size_t k = 1; k < axis.size(); ++k) {
    Eigen::VectorXd next(out.size() * axis[k].size());
    for (Eigen::Index j = 0; j < axis[k].size(); ++j) next.segment(j * out.size(), out.size()) = out * axis[k][j];
    out = std::move(next);
  }
  return out;
}

Eigen::MatrixXd SpatialBasis::design(const Eigen::MatrixXd& x) const {
  if (x.cols() != ndx()) throw ShapeError("spatial coordinates have the wrong dimension");
  Eigen::MatrixXd out(x.rows(), cardx());
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index q = 0; q < x.rows(); ++q) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) row[static_cast<std::size_t>(k)] = x(q, k);
    out.row(q) = eval(row).transpose();
  }
  return out;
}

void SeparatedConfig::validate() const {
  if (lambda_max < 0) throw ConfigError("rank must be >= 0");
  if (!(outer_tol > 0.0) || max_outer_iters < 1) throw ConfigError("invalid outer iteration settings");
  if (!(stop_norm_frac >= 0.0)) throw ConfigError("stop_norm_frac must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  if (cardx < 1) throw ConfigError("cardx must be >= 1");
}

SpatialFit fit_spatial_mode(const Eigen::VectorXd& residual, const Eigen::VectorXd& lambda_values,
                            const Eigen::MatrixXd& phi, double beta) {
  if (residual.size() != phi.rows() || lambda_values.size() != phi.rows()) throw ShapeError("spatial fit sizes differ");
  if (!lambda_values.allFinite()) throw NonFiniteError("stochastic mode values are not finite");
  if (lambda_values.isZero(0.0)) throw DegenerateModeError("stochastic mode vanishes at every sample");
  const Eigen::MatrixXd scaled = lambda_values.asDiagonal() * phi;
  SpatialFit fit;
  fit.coeffs = ls_solve(scaled, residual, beta);
  fit.scale = (phi * fit.coeffs).norm();
  if (fit.scale > 0.0) {
    fit.coeffs /= fit.scale;
  } else {
    fit.coeffs.setZero();
  }
  return fit;
}

namespace {

// Leading direction of a spatial x linear-in-xi fit of the residual; seeds
// the stochastic mode values.
Eigen::VectorXd initial_lambda(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& psi2, const Eigen::VectorXd& res) {
  const Eigen::Index nx = phi.cols();
  const Eigen::Index nd = psi2.cols();
  Eigen::MatrixXd design(phi.rows(), nx * nd);
  for (Eigen::Index i = 0; i < nd; ++i) design.middleCols(i * nx, nx) = psi2.col(i).asDiagonal() * phi;
  const Eigen::VectorXd c = ls_solve(design, res);
  const Eigen::MatrixXd b = Eigen::Map<const Eigen::MatrixXd>(c.data(), nx, nd);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd v = svd.matrixV().col(0) * svd.singularValues()[0];
  // Sign convention: largest entry positive.
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v[imax] < 0.0) v = -v;
  Eigen::VectorXd lam = psi2 * v;
  if (lam.isZero(0.0)) lam.setOnes();
  return lam;
}

// Joint least squares of u over the earlier spatial modes (stochastic values
// fixed) and the new one; the new block is normalized like fit_spatial_mode.
SpatialFit joint_spatial_fit(const Eigen::VectorXd& u, const std::vector<Eigen::VectorXd>& prev_l,
                             const Eigen::VectorXd& lam, const Eigen::MatrixXd& phi, double beta,
                             std::vector<Eigen::VectorXd>& prev_w, Eigen::VectorXd& target) {
  if (!lam.allFinite()) throw NonFiniteError("stochastic mode values are not finite");
  if (lam.isZero(0.0)) throw DegenerateModeError("stochastic mode vanishes at every sample");
  const Eigen::Index nx = phi.cols();
  const auto np = static_cast<Eigen::Index>(prev_l.size());
  Eigen::MatrixXd design(phi.rows(), nx * (np + 1));
  for (Eigen::Index k = 0; k < np; ++k) design.middleCols(k * nx, nx) = prev_l[static_cast<std::size_t>(k)].asDiagonal() * phi;
  design.rightCols(nx) = lam.asDiagonal() * phi;
  const Eigen::VectorXd c = ls_solve(design, u, beta);
  target = u;
  for (Eigen::Index k = 0; k < np; ++k) {
    prev_w[static_cast<std::size_t>(k)] = c.segment(k * nx, nx);
    target -= prev_l[static_cast<std::size_t>(k)].cwiseProduct(phi * c.segment(k * nx, nx));
  }
  SpatialFit fit;
  fit.coeffs = c.tail(nx);
  fit.scale = (phi * fit.coeffs).norm();
  if (fit.scale > 0.0) {
    fit.coeffs /= fit.scale;
  } else {
    fit.coeffs.setZero();
  }
  return fit;
}

}  // namespace

SeparatedModel fit_separated(const SampleSet& samples, const SelectionConfig& sel_cfg, const FitConfig& fit_cfg,
                             const SeparatedConfig& sep_cfg, const BasisConfig& basis, SeparatedTrace* trace) {
  samples.validate();
  sel_cfg.validate();
  fit_cfg.validate();
  sep_cfg.validate();
  if (samples.nq() < 2) throw SizeError("separated fit needs at least two samples");
  if (samples.ndx() < 1) throw ShapeError("separated fit needs spatial coordinates");
  SeparatedTrace local;
  SeparatedTrace& tr = trace ? *trace : local;

  SeparatedModel m;
  m.nd = samples.nd();
  std::vector<double> lo(static_cast<std::size_t>(samples.ndx()));
  std::vector<double> hi(lo.size());
  for (int k = 0; k < samples.ndx(); ++k) {
    lo[static_cast<std::size_t>(k)] = samples.x.col(k).minCoeff();
    hi[static_cast<std::size_t>(k)] = samples.x.col(k).maxCoeff();
    if (!(lo[static_cast<std::size_t>(k)] < hi[static_cast<std::size_t>(k)])) hi[static_cast<std::size_t>(k)] = lo[static_cast<std::size_t>(k)] + 1.0;
  }
  if (!sep_cfg.domain_lo.empty()) {
    if (sep_cfg.domain_lo.size() != lo.size() || sep_cfg.domain_hi.size() != lo.size())
      throw ConfigError("spatial domain has the wrong dimension");
    for (std::size_t k = 0; k < lo.size(); ++k) {
      lo[k] = std::min(lo[k], sep_cfg.domain_lo[k]);
      hi[k] = std::max(hi[k], sep_cfg.domain_hi[k]);
    }
  }
  m.spatial = SpatialBasis::make(sep_cfg.spatial_kind, sep_cfg.cardx, lo, hi);
  const Eigen::MatrixXd phi = m.spatial.design(samples.x);
  const Eigen::Index nq = samples.nq();

  // Rank 0: the mean field.
  Eigen::VectorXd res = samples.u;
  SeparatedPair p0;
  p0.w = ls_solve(phi, res, fit_cfg.beta);
  res -= phi * p0.w;
  m.pairs.push_back(p0);
  tr.train_residual.push_back(res.norm());
  tr.outer_iterations.push_back(0);
  const double u_norm = samples.u.norm();

  // Fixed train / validation rows for the selection stage.
  const int n_val = static_cast<int>(std::floor(sep_cfg.validation_fraction * static_cast<double>(nq)));
  std::vector<int> order(static_cast<std::size_t>(nq));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> train_rows(order.begin(), order.end());
  std::vector<int> val_rows;
  if (n_val > 0) {
    StreamRng rng(sep_cfg.seed, 0x5eed5eedULL);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
      std::swap(order[i], order[j]);
    }
    train_rows.assign(order.begin(), order.end() - n_val);
    val_rows.assign(order.end() - n_val, order.end());
  }
  auto take = [&](const std::vector<int>& rows, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    WeightedData d;
    const auto n = static_cast<Eigen::Index>(rows.size());
    d.xi.resize(n, samples.nd());
    d.y.resize(n);
    d.w.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int q = rows[static_cast<std::size_t>(i)];
      d.xi.row(i) = samples.xi.row(q);
      d.y[i] = y[q];
      d.w[i] = w[q];
    }
    return d;
  };

  BasisConfig psi_basis = basis;
  psi_basis.max_degree = std::max(psi_basis.max_degree, 1);
  Eigen::MatrixXd psi2(nq, samples.nd());
  for (int i = 0; i < samples.nd(); ++i) psi2.col(i) = eval_table(psi_basis, samples.xi.col(i), 2).col(1);

  for (int n = 1; n <= sep_cfg.lambda_max; ++n) {
    if (!(res.norm() > sep_cfg.stop_norm_frac * u_norm)) break;
    Eigen::VectorXd lam = initial_lambda(phi, psi2, res);
    HdmrModel lam_model;
    Eigen::VectorXd wc;
    Eigen::VectorXd wq;
    double prev_norm = -1.0;
    int it = 0;
    bool degenerate = false;
    // With the joint update the earlier spatial modes are refit together with
    // the new one at every alternation; `target` is then u minus the updated
    // lower-rank part.
    std::vector<Eigen::VectorXd> prev_l;
    std::vector<Eigen::VectorXd> prev_w;
    if (sep_cfg.update_spatial) {
      for (const auto& pk : m.pairs) {
        prev_l.push_back(pk.lambda ? evaluate_model(*pk.lambda, samples.xi) : Eigen::VectorXd::Ones(nq));
        prev_w.push_back(pk.w);
      }
    }
    Eigen::VectorXd target = res;
    for (; it < sep_cfg.max_outer_iters; ++it) {
      SpatialFit sp;
      try {
        if (sep_cfg.update_spatial) {
          sp = joint_spatial_fit(samples.u, prev_l, lam, phi, fit_cfg.beta, prev_w, target);
        } else {
          sp = fit_spatial_mode(res, lam, phi, fit_cfg.beta);
        }
      } catch (const DegenerateModeError&) {
        degenerate = true;
        break;
      }
      if (!(sp.scale > 0.0)) {
        degenerate = true;
        break;
      }
      wc = sp.coeffs;
      wq = phi * wc;
      if (it == 0) {
        const WeightedData tr_data = take(train_rows, target, wq);
        const SelectionPath path = glars_select(tr_data.xi, tr_data.y, &tr_data.w, sel_cfg, basis);
        if (val_rows.empty()) {
          lam_model = fit_hdmr_weighted(tr_data, nullptr, path.groups(), fit_cfg, basis).model;
        } else {
          const WeightedData va_data = take(val_rows, target, wq);
          FitResult fr = fit_hdmr_weighted(tr_data, &va_data, path.groups(), fit_cfg, basis);
          for (auto& w : fr.diagnostics.warnings) tr.warnings.push_back(std::move(w));
          lam_model = std::move(fr.model);
        }
      } else {
        WeightedData all;
        all.xi = samples.xi;
        all.y = target;
        all.w = wq;
        lam_model = refit_coefficients(lam_model, all, fit_cfg);
      }
      lam = evaluate_model(lam_model, samples.xi);
      const double nrm = lam.norm();
      if (prev_norm >= 0.0 && std::abs(nrm - prev_norm) < sep_cfg.outer_tol * std::max(prev_norm, 1e-300)) {
        ++it;
        break;
      }
      prev_norm = nrm;
    }
    if (degenerate || wq.size() == 0) {
      tr.warnings.push_back("rank " + std::to_string(n) + " degenerate; stopping");
      break;
    }
    const Eigen::VectorXd contrib = wq.cwiseProduct(lam);
    const Eigen::VectorXd next = target - contrib;
    if (next.norm() > res.norm()) {
      tr.warnings.push_back("rank " + std::to_string(n) + " rejected: training residual increased");
      break;
    }
    res = next;
    for (std::size_t k = 0; k < prev_w.size(); ++k) m.pairs[k].w = prev_w[k];
    SeparatedPair pn;
    pn.w = wc;
    pn.lambda = std::move(lam_model);
    m.pairs.push_back(std::move(pn));

    if (sep_cfg.update_spatial) {
      // Joint least squares over all spatial coefficient vectors.
      const auto np = static_cast<Eigen::Index>(m.pairs.size());
      const Eigen::Index nx = phi.cols();
      Eigen::MatrixXd design(nq, nx * np);
      for (Eigen::Index k = 0; k < np; ++k) {
        const auto& pk = m.pairs[static_cast<std::size_t>(k)];
        const Eigen::VectorXd lk = pk.lambda ? evaluate_model(*pk.lambda, samples.xi) : Eigen::VectorXd::Ones(nq);
        design.middleCols(k * nx, nx) = lk.asDiagonal() * phi;
      }
      const Eigen::VectorXd c = ls_solve(design, samples.u, fit_cfg.beta);
      const Eigen::VectorXd r2 = samples.u - design * c;
      if (r2.norm() <= res.norm()) {
        for (Eigen::Index k = 0; k < np; ++k) m.pairs[static_cast<std::size_t>(k)].w = c.segment(k * nx, nx);
        res = r2;
      }
    }
    tr.train_residual.push_back(res.norm());
    tr.outer_iterations.push_back(it);
    if (contrib.norm() < sep_cfg.stop_norm_frac * u_norm) break;
  }
  return m;
}

double evaluate_separated(const SeparatedModel& m, std::span<const double> x, std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != m.nd) throw ShapeError("germ has the wrong dimension");
  const Eigen::VectorXd phi = m.spatial.eval(x);
  double v = 0.0;
  for (const auto& p : m.pairs) {
    const double w = phi.dot(p.w);
    v += p.lambda ? w * evaluate_model(*p.lambda, xi) : w;
  }
  return v;
}

Eigen::VectorXd evaluate_separated(const SeparatedModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& xi) {
  if (x.rows() != xi.rows()) throw ShapeError("spatial and stochastic coordinates differ in length");
  if (xi.cols() != m.nd) throw ShapeError("germ has the wrong dimension");
  const Eigen::MatrixXd phi = m.spatial.design(x);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.rows());
  for (const auto& p : m.pairs) {
    const Eigen::VectorXd w = phi * p.w;
    v += p.lambda ? Eigen::VectorXd(w.cwiseProduct(evaluate_model(*p.lambda, xi))) : w;
  }
  return v;
}

SeparatedModel truncate(const SeparatedModel& m, int rank) {
  SeparatedModel t = m;
  t.pairs.resize(static_cast<std::size_t>(std::clamp(rank + 1, 1, static_cast<int>(m.pairs.size()))));
  return t;
}

double relative_error(const SeparatedModel& m, const SampleSet& test) {
  test.validate();
  return relative_error(test.u, evaluate_separated(m, test.x, test.xi));
}

std::string save_separated(const SeparatedModel& m) {
  nlohmann::json j;
  j["schema"] = kModelSchemaVersion;
  j["kind"] = "separated";
  j["nd"] = m.nd;
  j["spatial_basis"] = {{"kind", m.spatial.kind == SpatialKind::NodalLinear ? "nodal-linear" : "legendre-tensor"},
                        {"per_axis", m.spatial.per_axis},
                        {"lo", m.spatial.lo},
                        {"hi", m.spatial.hi}};
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : m.pairs) {
    nlohmann::json jp;
    jp["w_coeffs"] = std::vector<double>(p.w.data(), p.w.data() + p.w.size());
    jp["lambda"] = p.lambda ? model_to_json(*p.lambda) : nlohmann::json("unit");
    pairs.push_back(jp);
  }
  j["pairs"] = pairs;
  return j.dump(1) + "\n";
}

SeparatedModel load_separated(std::string_view document) {
  const auto j = parse_document(document);
  if (j.value("kind", std::string()) != "separated") throw MalformedDocumentError("document is not a separated model");
  try {
    SeparatedModel m;
    m.nd = j.at("nd").get<int>();
    const auto& sb = j.at("spatial_basis");
    const auto kind = sb.at("kind").get<std::string>();
    if (kind == "nodal-linear") {
      m.spatial.kind = SpatialKind::NodalLinear;
    } else if (kind == "legendre-tensor") {
      m.spatial.kind = SpatialKind::LegendreTensor;
    } else {
      throw MalformedDocumentError("unknown spatial basis kind " + kind);
    }
    m.spatial.per_axis = sb.at("per_axis").get<int>();
    m.spatial.lo = sb.at("lo").get<std::vector<double>>();
    m.spatial.hi = sb.at("hi").get<std::vector<double>>();
    m.spatial.validate();
    for (const auto& jp : j.at("pairs")) {
      SeparatedPair p;
      const auto w = jp.at("w_coeffs").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != m.spatial.cardx()) throw MalformedDocumentError("spatial coefficient count mismatch");
      p.w = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
      const auto& jl = jp.at("lambda");
      if (jl.is_string()) {
        if (jl.get<std::string>() != "unit") throw MalformedDocumentError("unknown stochastic mode tag");
      } else {
        p.lambda = model_from_json(jl);
      }
      m.pairs.push_back(std::move(p));
    }
    if (m.pairs.empty()) throw MalformedDocumentError("separated model has no pairs");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedDocumentError(std::string("malformed separated model: ") + e.what());
  } catch (const ConfigError& e) {
    throw MalformedDocumentError(e.what());
  }
}

std::string document_kind(std::string_view document) {
  const auto j = parse_document(document);
  return j.value("kind", std::string("hdmr"));
}

}  // namespace hdmr
