#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "hdmr/errors.hpp"
#include "hdmr/fitting.hpp"
#include "hdmr/linear_solvers.hpp"
#include "hdmr/rng.hpp"
#include "helpers.hpp"

using namespace hdmr;
using testing::psi;

TEST_CASE("ls_solve") {
  Eigen::MatrixXd a(3, 2);
  a << 1, 0, 0, 1, 0, 0;
  Eigen::VectorXd r(3);
  r << 2, 3, 5;
  const Eigen::VectorXd c = ls_solve(a, r);
  CHECK(c[0] == doctest::Approx(2));
  CHECK(c[1] == doctest::Approx(3));

  // duplicated column: minimum-norm solution splits the weight evenly
  Eigen::MatrixXd d(3, 2);
  d << 1, 1, 2, 2, 3, 3;
  Eigen::VectorXd rd(3);
  rd << 2, 4, 6;
  const Eigen::VectorXd cd = ls_solve(d, rd);
  CHECK(cd[0] == doctest::Approx(1).epsilon(1e-10));
  CHECK(cd[1] == doctest::Approx(1).epsilon(1e-10));

  // random rank-deficient system against the pseudo-inverse from an SVD
  Eigen::MatrixXd m(20, 6);
  StreamRng rng(11, 0);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = rng.normal();
  m.col(4) = m.col(0) - 2 * m.col(1);
  m.col(5) = 0.5 * m.col(3);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y[i] = rng.normal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  const Eigen::VectorXd ref = svd.solve(y);
  const Eigen::VectorXd got = ls_solve(m, y);
  CHECK((got - ref).norm() < 1e-10 * ref.norm());
  // normal equations hold
  CHECK((m.transpose() * (y - m * got)).norm() < 1e-10 * y.norm());

  // ridge against the closed form
  const double beta = 0.3;
  const Eigen::MatrixXd g = m.transpose() * m + beta * beta * Eigen::MatrixXd::Identity(6, 6);
  const Eigen::VectorXd ridge = g.ldlt().solve(m.transpose() * y);
  CHECK((ls_solve(m, y, beta) - ridge).norm() < 1e-10 * ridge.norm());

  const LsFactor f(m, 0.0);
  CHECK(f.rank() == 4);
  CHECK((f.solve(y) - ref).norm() < 1e-10 * ref.norm());
}

TEST_CASE("relative error") {
  Eigen::VectorXd t(3), p(3);
  t << 3, 0, 4;
  p << 3, 0, 4;
  CHECK(relative_error(t, p) == 0.0);
  p << 0, 0, 0;
  CHECK(relative_error(t, p) == doctest::Approx(1.0));
  p << 3, 1, 4;
  CHECK(relative_error(t, p) == doctest::Approx(0.2));
  CHECK_THROWS_AS(relative_error(Eigen::VectorXd::Zero(3), p), UndefinedStatisticsError);
  CHECK_THROWS_AS(relative_error(t, Eigen::VectorXd::Zero(2)), ShapeError);
}

TEST_CASE("dense mode recovers an exact interaction") {
  const SampleSet s = testing::make_set(400, 3, 21, [](const Eigen::RowVectorXd& r) { return 2 * psi(2, r[0]) * psi(2, r[1]); });
  FitConfig cfg;
  cfg.no = 4;
  cfg.n_pc = 2;
  const DenseMode dm = fit_dense_mode(Group({0, 1}), s.u, s, cfg, testing::sym_basis(4));
  CHECK(dm.indices.size() == 6);
  for (std::size_t a = 0; a < dm.indices.size(); ++a) {
    const double expect = dm.indices[a] == MultiIndex{2, 2} ? 2.0 : 0.0;
    CHECK(dm.coeffs[static_cast<Eigen::Index>(a)] == doctest::Approx(expect).epsilon(1e-10).scale(1));
  }
  CHECK_THROWS_AS(fit_dense_mode(Group({0, 1, 2}), s.u, s, cfg, testing::sym_basis(4)), ConfigError);
}

TEST_CASE("CP mode recovers a rank-one four-way product") {
  const auto f = [](const Eigen::RowVectorXd& r) {
    return (psi(2, r[0]) + 0.5 * psi(3, r[0])) * psi(2, r[1]) * (psi(4, r[2]) - psi(2, r[2])) * psi(3, r[3]);
  };
  const SampleSet s = testing::make_set(1500, 4, 22, f);
  FitConfig cfg;
  cfg.no = 4;
  cfg.n_pc = 2;
  cfg.ninter = 4;
  cfg.nr = 1;
  cfg.als_tol = 1e-14;
  cfg.als_max_sweeps = 500;
  const CPMode m = fit_cp_mode(Group({0, 1, 2, 3}), s.u, s, cfg, testing::sym_basis(4));
  CHECK(m.rank() == 1);
  const Eigen::VectorXd pred = mode_values(m, testing::sym_basis(4), s.xi);
  CHECK(relative_error(s.u, pred) <= 1e-6);
}

TEST_CASE("ALS residual is monotone and deterministic") {
  const SampleSet s = testing::make_set(600, 3, 23, [](const Eigen::RowVectorXd& r) {
    return std::exp(r[0] * r[1] * r[2]) - 1.0 - r[0] * r[1] * r[2];
  });
  FitConfig cfg;
  cfg.no = 4;
  cfg.n_pc = 2;
  cfg.ninter = 3;
  cfg.nr = 2;
  std::vector<double> trace;
  const CPMode a = fit_cp_mode(Group({0, 1, 2}), s.u, s, cfg, testing::sym_basis(4), &trace);
  REQUIRE(trace.size() > 2);
  // greedy ranks restart from a fresh random factor, so check within each run of sweeps
  int violations = 0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] * (1 + 1e-12) && trace[i] > trace[0] * 1e-12) ++violations;
  CHECK(violations <= cfg.nr - 1);
  CHECK(trace.back() <= s.u.norm());
  const CPMode b = fit_cp_mode(Group({0, 1, 2}), s.u, s, cfg, testing::sym_basis(4));
  REQUIRE(a.rank() == b.rank());
  for (int r = 0; r < a.rank(); ++r) CHECK(a.factors[r] == b.factors[r]);
}

TEST_CASE("constant data fit") {
  const SampleSet s = testing::make_set(50, 3, 24, [](const Eigen::RowVectorXd&) { return 1.75; });
  const SampleSet v = testing::make_set(20, 3, 25, [](const Eigen::RowVectorXd&) { return 1.75; });
  SelectionPath path;
  for (int d = 0; d < 3; ++d) path.steps.push_back(PathStep{Group({d})});
  FitConfig cfg;
  cfg.no = 3;
  const FitResult r = fit_hdmr(s, v, path, cfg, testing::sym_basis(3));
  CHECK(r.model.f_empty == doctest::Approx(1.75));
  CHECK(relative_error(r.model, v) < 1e-12);
  CHECK(model_variance(r.model) < 1e-20);
}

TEST_CASE("sparse target recovery") {
  const auto f = [](const Eigen::RowVectorXd& r) {
    return 1.0 + psi(2, r[0]) + 0.5 * psi(3, r[0]) + psi(2, r[1]) * psi(3, r[2]) + 0.25 * psi(4, r[1]) * psi(2, r[2]);
  };
  const SampleSet train = testing::make_set(800, 6, 26, f);
  const SampleSet val = testing::make_set(200, 6, 27, f);
  const SampleSet test = testing::make_set(1000, 6, 28, f);
  const BasisConfig b = testing::sym_basis(5);
  SelectionConfig sc;
  sc.nolars = 5;
  sc.ninter = 2;
  const auto path = glars_select(train, sc, b);
  FitConfig cfg;
  cfg.no = 5;
  cfg.n_pc = 2;
  cfg.ninter = 2;
  const FitResult r = fit_hdmr(train, val, path, cfg, b);
  CHECK(relative_error(r.model, test) < 1e-8);
  const auto s = sobol_indices(r.model);
  double main_groups = 0.0;
  for (const auto& [g, v] : s)
    if (g == Group({0}) || g == Group({1, 2})) main_groups += v;
  CHECK(main_groups > 1 - 1e-8);
  CHECK(r.model.f_empty == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("training residual decreases along the passes") {
  const auto f = [](const Eigen::RowVectorXd& r) { return std::sin(r[0] + 2 * r[1]) + r[2] * r[3] * r[4]; };
  const SampleSet train = testing::make_set(700, 5, 29, f);
  const SampleSet val = testing::make_set(200, 5, 30, f);
  const BasisConfig b = testing::sym_basis(6);
  SelectionConfig sc;
  sc.nolars = 4;
  const auto path = glars_select(train, sc, b);
  FitConfig cfg;
  cfg.no = 6;
  cfg.n_pc = 2;
  cfg.ninter = 3;
  const FitResult r = fit_hdmr(train, SampleSet{}, path, cfg, b);
  CHECK_FALSE(r.diagnostics.used_validation);
  CHECK_FALSE(r.diagnostics.warnings.empty());
  REQUIRE(r.diagnostics.passes.size() > 2);
  double prev = train.u.norm();
  for (const auto& p : r.diagnostics.passes) {
    CHECK(p.train_residual <= prev * (1 + 1e-9));
    CHECK(std::isnan(p.cv));
    prev = p.train_residual;
  }
  const FitResult rv = fit_hdmr(train, val, path, cfg, b);
  CHECK(rv.diagnostics.used_validation);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : rv.diagnostics.passes) best = std::min(best, p.cv);
  CHECK(rv.diagnostics.retained <= static_cast<int>(rv.diagnostics.passes.size()));
  CHECK(best < 0.05);
  std::ostringstream csv;
  write_diagnostics_csv(rv.diagnostics, csv);
  CHECK(csv.str().rfind("pass,dims,train_residual,cv\n", 0) == 0);
}

TEST_CASE("refit keeps the skeleton") {
  const auto f = [](const Eigen::RowVectorXd& r) { return r[0] + r[0] * r[1]; };
  const SampleSet train = testing::make_set(300, 2, 31, f);
  SelectionPath path;
  path.steps.push_back(PathStep{Group({0})});
  path.steps.push_back(PathStep{Group({0, 1})});
  FitConfig cfg;
  cfg.no = 3;
  cfg.n_pc = 2;
  cfg.ninter = 2;
  const FitResult r = fit_hdmr(train, SampleSet{}, path, cfg, testing::sym_basis(3));
  const SampleSet more = testing::make_set(300, 2, 32, f);
  const HdmrModel m = refit_coefficients(r.model, WeightedData::from(more), cfg);
  REQUIRE(m.modes.size() == r.model.modes.size());
  for (std::size_t i = 0; i < m.modes.size(); ++i) CHECK(mode_group(m.modes[i]) == mode_group(r.model.modes[i]));
  CHECK(relative_error(m, more) < 1e-10);
}

TEST_CASE("covariance blocks") {
  const BasisConfig b = testing::sym_basis(3);
  const std::vector<MultiIndex> idx{{2}, {3}};
  NoiseModel nm;
  nm.s = 0.1;
  nm.s_u = 0.2;
  const double xi[2] = {0.3, -0.4};
  const Eigen::MatrixXd l = build_sample_covariance(xi, Group({0}), idx, b, nm, 2.0);
  REQUIRE(l.rows() == 3);
  const double d2 = eval_univariate_deriv(b, 2, 0.3), d3 = eval_univariate_deriv(b, 3, 0.3);
  CHECK(l(0, 0) == doctest::Approx(0.01 * d2 * d2));
  CHECK(l(0, 1) == doctest::Approx(0.01 * d2 * d3));
  CHECK(l(1, 0) == doctest::Approx(l(0, 1)));
  CHECK(l(2, 2) == doctest::Approx(0.16));
  CHECK(l(0, 2) == 0.0);

  // two-dimensional group: derivative chain over both coordinates
  const std::vector<MultiIndex> idx2{{2, 2}};
  const Eigen::MatrixXd l2 = build_sample_covariance(xi, Group({0, 1}), idx2, b, nm, 1.0);
  const double p0 = eval_univariate(b, 2, 0.3), p1 = eval_univariate(b, 2, -0.4);
  const double g0 = eval_univariate_deriv(b, 2, 0.3) * p1, g1 = p0 * eval_univariate_deriv(b, 2, -0.4);
  CHECK(l2(0, 0) == doctest::Approx(0.01 * (g0 * g0 + g1 * g1)));
  CHECK(l2(1, 1) == doctest::Approx(0.04));

  NoiseModel zero;
  const Eigen::MatrixXd z = build_sample_covariance(xi, Group({0}), idx, b, zero, 2.0);
  CHECK(z.isZero());
}

TEST_CASE("wTLS") {
  const BasisConfig b = testing::sym_basis(3);
  const std::vector<MultiIndex> idx{{2}, {3}, {4}};
  const Group g({0});
  const auto design = [&](const Eigen::MatrixXd& xi) {
    Eigen::MatrixXd d(xi.rows(), 3);
    for (Eigen::Index q = 0; q < xi.rows(); ++q)
      for (int a = 0; a < 3; ++a) d(q, a) = eval_univariate(b, idx[a][0], xi(q, 0));
    return d;
  };
  const Eigen::Vector3d truth(1.0, -0.5, 0.25);

  SUBCASE("exact data") {
    const SampleSet s = testing::make_set(200, 1, 41, [&](const Eigen::RowVectorXd& r) {
      return truth[0] * psi(2, r[0]) + truth[1] * psi(3, r[0]) + truth[2] * psi(4, r[0]);
    });
    NoiseModel nm;
    nm.s = 1e-3;
    nm.s_u = 1e-3;
    const auto blocks = build_covariance_blocks(s.xi, g, idx, b, nm, s.u);
    const Eigen::MatrixXd d = design(s.xi);
    const auto res = wtls_solve(d, s.u, blocks, Eigen::VectorXd::Zero(3));
    CHECK((res.coeffs - truth).norm() < 1e-8);
    CHECK(res.rho2 < 1e-14);
  }

  SUBCASE("reduces to least squares with value noise only") {
    const SampleSet s = testing::make_set(200, 1, 42, [&](const Eigen::RowVectorXd& r) { return std::sin(3 * r[0]); });
    NoiseModel nm;
    nm.s_u = 0.0;
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(s.nq());
    nm.s_u = 0.1;
    const auto blocks = build_covariance_blocks(s.xi, g, idx, b, nm, one);
    const Eigen::MatrixXd d = design(s.xi);
    const Eigen::VectorXd ls = ls_solve(d, s.u);
    const auto res = wtls_solve(d, s.u, blocks, Eigen::VectorXd::Zero(3));
    CHECK((res.coeffs - ls).norm() < 1e-8 * ls.norm());
    CHECK(wtls_objective(d, s.u, blocks, ls) == doctest::Approx(res.rho2).epsilon(1e-10));
  }

  SUBCASE("errors in variables") {
    int wins = 0;
    for (int rep = 0; rep < 10; ++rep) {
      const SampleSet clean = testing::make_set(300, 1, 100 + rep, [&](const Eigen::RowVectorXd& r) {
        return truth[0] * psi(2, r[0]) + truth[1] * psi(3, r[0]) + truth[2] * psi(4, r[0]);
      });
      NoiseModel nm;
      nm.s = 0.08;
      nm.s_u = 0.0;
      nm.box_lo = -1e9;
      nm.box_hi = 1e9;
      const SampleSet noisy = inject_noise(clean, nm, 500 + rep);
      const Eigen::MatrixXd d = design(noisy.xi);
      const auto blocks = build_covariance_blocks(noisy.xi, g, idx, b, nm, noisy.u);
      const Eigen::VectorXd ls = ls_solve(d, noisy.u);
      const auto res = wtls_solve(d, noisy.u, blocks, ls);
      for (std::size_t i = 1; i < res.rho2_trace.size(); ++i) CHECK(res.rho2_trace[i] <= res.rho2_trace[i - 1] * (1 + 1e-12));
      if ((res.coeffs - truth).norm() < (ls - truth).norm()) ++wins;
    }
    CHECK(wins >= 8);
  }
}

TEST_CASE("robust fit with zero noise equals the plain fit") {
  const auto f = [](const Eigen::RowVectorXd& r) { return r[0] * r[0] + std::cos(r[1]) + r[0] * r[1]; };
  const SampleSet train = testing::make_set(300, 3, 51, f);
  SelectionPath path;
  path.steps.push_back(PathStep{Group({0})});
  path.steps.push_back(PathStep{Group({1})});
  path.steps.push_back(PathStep{Group({0, 1})});
  FitConfig cfg;
  cfg.no = 4;
  cfg.n_pc = 2;
  cfg.ninter = 2;
  const FitResult plain = fit_hdmr(train, SampleSet{}, path, cfg, testing::sym_basis(4));
  cfg.robust = true;
  const FitResult robust = fit_hdmr(train, SampleSet{}, path, cfg, testing::sym_basis(4));
  const Eigen::VectorXd a = evaluate_model(plain.model, train.xi), c = evaluate_model(robust.model, train.xi);
  CHECK((a - c).norm() <= 1e-8 * a.norm());
}

TEST_CASE("fit config validation") {
  FitConfig cfg;
  cfg.n_pc = 4;
  cfg.ninter = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = FitConfig{};
  cfg.beta = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
