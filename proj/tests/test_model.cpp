#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "hdmr/errors.hpp"
#include "hdmr/model.hpp"
#include "hdmr/rng.hpp"
#include "hdmr/serialization.hpp"
#include "helpers.hpp"

using namespace hdmr;

namespace {

HdmrModel base_model(int nd, int degree, int n_pc = 3, int ninter = 3) {
  HdmrModel m;
  m.basis = testing::sym_basis(degree);
  m.nd = nd;
  m.n_pc = n_pc;
  m.ninter = ninter;
  return m;
}

DenseMode dense(std::vector<int> dims, int degree, StreamRng& rng) {
  DenseMode d;
  d.group = Group(std::move(dims));
  d.indices = enumerate_dense_indices(d.group, degree);
  d.coeffs.resize(static_cast<Eigen::Index>(d.indices.size()));
  for (Eigen::Index a = 0; a < d.coeffs.size(); ++a) d.coeffs[a] = rng.uniform(-1, 1);
  return d;
}

CPMode cp(std::vector<int> dims, int degree, int rank, StreamRng& rng) {
  CPMode c;
  c.group = Group(std::move(dims));
  for (int r = 0; r < rank; ++r) {
    Eigen::MatrixXd f(c.group.order(), degree);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform(-1, 1);
    c.factors.push_back(f);
  }
  return c;
}

// Tensor Gauss quadrature over [-1,1]^nd of a function of the point.
double integrate(int nd, int n, const std::function<double(const std::vector<double>&)>& f) {
  const auto q = gauss_legendre(n, -1.0, 1.0);
  std::vector<int> idx(static_cast<std::size_t>(nd), 0);
  std::vector<double> x(static_cast<std::size_t>(nd));
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (int k = 0; k < nd; ++k) {
      x[k] = q.nodes[idx[k]];
      w *= q.weights[idx[k]];
    }
    total += w * f(x);
    int k = 0;
    while (k < nd && ++idx[k] == n) idx[k++] = 0;
    if (k == nd) break;
  }
  return total;
}

HdmrModel small_mixed() {
  StreamRng rng(21, 0);
  HdmrModel m = base_model(3, 4, 2, 3);
  m.f_empty = 0.7;
  m.modes.push_back(dense({0}, 4, rng));
  m.modes.push_back(dense({1}, 4, rng));
  m.modes.push_back(dense({0, 2}, 4, rng));
  m.modes.push_back(cp({0, 1, 2}, 4, 2, rng));
  return m;
}

}  // namespace

TEST_CASE("groups") {
  CHECK_THROWS_AS(Group({2, 1}), ConfigError);
  CHECK_THROWS_AS(Group({1, 1}), ConfigError);
  CHECK(format_group(Group({0, 2})) == "1;3");
  CHECK(parse_group("1;3") == Group({0, 2}));
  CHECK(Group({0, 1}) < Group({1}));
}

TEST_CASE("dense index enumeration") {
  const auto a = enumerate_dense_indices(1, 3);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == MultiIndex{2});
  CHECK(a[2] == MultiIndex{4});
  CHECK(enumerate_dense_indices(2, 8).size() == 28);
  CHECK(enumerate_dense_indices(3, 2).empty());
  for (int l = 1; l <= 4; ++l) {
    for (int no = l; no <= 10; ++no) CHECK(enumerate_dense_indices(l, no).size() == binomial(no, l));
  }
  const auto b = enumerate_dense_indices(2, 4);
  for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i - 1] < b[i]);
}

TEST_CASE("evaluation examples") {
  HdmrModel m = base_model(2, 3);
  m.f_empty = 3.5;
  const std::vector<double> x{0.2, -0.4};
  CHECK(evaluate_model(m, x) == 3.5);

  m.f_empty = 0.0;
  DenseMode d;
  d.group = Group({0});
  d.indices = {{2}};
  d.coeffs = Eigen::VectorXd::Ones(1);
  m.modes.push_back(d);
  const std::vector<double> half{0.5, 0.0};
  CHECK(evaluate_model(m, half) == doctest::Approx(0.8660254037844386).epsilon(1e-14));

  HdmrModel c = base_model(2, 3);
  CPMode cm;
  cm.group = Group({0, 1});
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2, 3);
  f(0, 0) = 1.0;
  f(1, 0) = 1.0;
  cm.factors.push_back(f);
  c.modes.push_back(cm);
  const std::vector<double> ones{1.0, 1.0};
  CHECK(evaluate_model(c, ones) == doctest::Approx(3.0).epsilon(1e-14));
  const std::vector<double> short_x{1.0};
  CHECK_THROWS_AS(evaluate_model(c, short_x), ShapeError);
}

TEST_CASE("matrix evaluation matches pointwise evaluation") {
  const HdmrModel m = small_mixed();
  const SampleSet s = testing::make_set(40, 3, 2, [](const Eigen::RowVectorXd&) { return 0.0; });
  const Eigen::VectorXd v = evaluate_model(m, s.xi);
  for (int q = 0; q < 40; ++q) {
    const std::vector<double> x{s.xi(q, 0), s.xi(q, 1), s.xi(q, 2)};
    CHECK(v[q] == doctest::Approx(evaluate_model(m, x)).epsilon(1e-13));
  }
}

TEST_CASE("modes are zero mean and mutually orthogonal") {
  const HdmrModel m = small_mixed();
  for (std::size_t i = 0; i < m.modes.size(); ++i) {
    HdmrModel mi = m;
    mi.f_empty = 0.0;
    mi.modes = {m.modes[i]};
    const double mean = integrate(3, 6, [&](const std::vector<double>& x) { return evaluate_model(mi, x); });
    CHECK(std::abs(mean) < 1e-12);
    for (std::size_t j = i + 1; j < m.modes.size(); ++j) {
      HdmrModel mj = mi;
      mj.modes = {m.modes[j]};
      const double ip = integrate(3, 6, [&](const std::vector<double>& x) { return evaluate_model(mi, x) * evaluate_model(mj, x); });
      CHECK(std::abs(ip) < 1e-12);
    }
  }
}

TEST_CASE("variance and mean against quadrature and Monte Carlo") {
  const HdmrModel m = small_mixed();
  const double mean = integrate(3, 6, [&](const std::vector<double>& x) { return evaluate_model(m, x); });
  const double second = integrate(3, 6, [&](const std::vector<double>& x) { const double v = evaluate_model(m, x); return v * v; });
  CHECK(model_mean(m) == 0.7);
  CHECK(mean == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(std::abs(second - mean * mean - model_variance(m)) < 1e-10);

  // Rank-2 CP mode by sampling.
  StreamRng rng(5, 1);
  HdmrModel c = base_model(2, 3);
  c.modes.push_back(cp({0, 1}, 3, 2, rng));
  const int n = 1000000;
  double s1 = 0.0, s2 = 0.0;
  StreamRng draw(6, 2);
  std::vector<double> x(2);
  for (int i = 0; i < n; ++i) {
    x[0] = draw.uniform(-1, 1);
    x[1] = draw.uniform(-1, 1);
    const double v = evaluate_model(c, x);
    s1 += v;
    s2 += v * v;
  }
  const double mc_mean = s1 / n;
  const double mc_var = s2 / n - mc_mean * mc_mean;
  CHECK(std::abs(mc_var / model_variance(c) - 1.0) < 0.01);
  CHECK(std::abs(mc_mean) < 3.0 * std::sqrt(mc_var / n));
}

TEST_CASE("variance examples and sobol indices") {
  HdmrModel m = base_model(3, 3);
  CHECK(model_variance(m) == 0.0);
  CHECK_THROWS_AS(sobol_indices(m), UndefinedStatisticsError);
  CHECK_THROWS_AS(total_sobol(m), UndefinedStatisticsError);

  DenseMode d;
  d.group = Group({0});
  d.indices = {{2}, {3}};
  d.coeffs = Eigen::Vector2d(1.0, 2.0);
  m.modes.push_back(d);
  CHECK(model_variance(m) == doctest::Approx(5.0));
  const auto s = sobol_indices(m);
  REQUIRE(s.size() == 1);
  CHECK(s.at(Group({0})) == doctest::Approx(1.0));

  DenseMode e;
  e.group = Group({0, 1});
  e.indices = {{2, 2}};
  e.coeffs = Eigen::VectorXd::Constant(1, std::sqrt(15.0));
  m.modes.push_back(e);
  const auto s2 = sobol_indices(m);
  CHECK(s2.at(Group({0})) == doctest::Approx(0.25));
  CHECK(s2.at(Group({0, 1})) == doctest::Approx(0.75));
  const auto st = total_sobol(m);
  REQUIRE(st.size() == 3);
  CHECK(st[0] == doctest::Approx(1.0));
  CHECK(st[1] == doctest::Approx(0.75));
  CHECK(st[2] == 0.0);

  const HdmrModel mixed = small_mixed();
  double sum = 0.0;
  for (const auto& [g, v] : sobol_indices(mixed)) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-10);
  const auto tot = total_sobol(mixed);
  for (const auto& [g, v] : sobol_indices(mixed)) {
    for (int dim : g.dims) CHECK(tot[dim] >= v - 1e-15);
  }
}

TEST_CASE("total indices for two unit modes") {
  HdmrModel m = base_model(2, 2);
  DenseMode a;
  a.group = Group({0});
  a.indices = {{2}};
  a.coeffs = Eigen::VectorXd::Ones(1);
  DenseMode b;
  b.group = Group({0, 1});
  b.indices = {{2, 2}};
  b.coeffs = Eigen::VectorXd::Ones(1);
  m.modes = {a, b};
  const auto st = total_sobol(m);
  CHECK(st[0] == doctest::Approx(1.0));
  CHECK(st[1] == doctest::Approx(0.5));
}

TEST_CASE("evaluation is linear in each coefficient") {
  HdmrModel m = small_mixed();
  const std::vector<double> x{0.3, -0.2, 0.9};
  auto& d = std::get<DenseMode>(m.modes[2]);
  const double base = evaluate_model(m, x);
  d.coeffs[1] += 0.5;
  const double bumped = evaluate_model(m, x);
  const double sens = eval_univariate(m.basis, d.indices[1][0], x[0]) * eval_univariate(m.basis, d.indices[1][1], x[2]);
  CHECK(bumped - base == doctest::Approx(0.5 * sens).epsilon(1e-12));
}

TEST_CASE("dictionary cardinality") {
  CHECK(dictionary_cardinality(2, 2, 1, 1, 1) == 5);
  CHECK(dictionary_cardinality(3, 2, 2, 1, 1) == 19);
  CHECK(dictionary_cardinality(8, 8, 3, 3, 1) == 3985);
  CHECK_THROWS_AS(dictionary_cardinality(3, 2, 1, 2, 1), ConfigError);
  CHECK_THROWS_AS(dictionary_cardinality(2, 2, 3, 1, 1), ConfigError);
}

TEST_CASE("serialization round trip") {
  const HdmrModel m = small_mixed();
  const std::string doc = save_model(m);
  const HdmrModel back = load_model(doc);
  CHECK(save_model(back) == doc);
  CHECK(back.f_empty == m.f_empty);
  CHECK(back.modes.size() == m.modes.size());
  CHECK(std::get<DenseMode>(back.modes[2]).coeffs == std::get<DenseMode>(m.modes[2]).coeffs);
  CHECK(std::get<CPMode>(back.modes[3]).factors[1] == std::get<CPMode>(m.modes[3]).factors[1]);
  const SampleSet s = testing::make_set(100, 3, 8, [](const Eigen::RowVectorXd&) { return 0.0; });
  CHECK(evaluate_model(back, s.xi) == evaluate_model(m, s.xi));

  CHECK_THROWS_AS(load_model(doc.substr(0, doc.size() / 2)), MalformedDocumentError);
  auto j = nlohmann::json::parse(doc);
  j["schema"] = 2;
  CHECK_THROWS_AS(load_model(j.dump()), SchemaVersionError);
  j["schema"] = 1;
  j["modes"][0]["kind"] = "tucker";
  CHECK_THROWS_AS(load_model(j.dump()), MalformedDocumentError);
}
