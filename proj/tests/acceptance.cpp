#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "hdmr/bench.hpp"
#include "hdmr/fitting.hpp"
#include "hdmr/linear_solvers.hpp"
#include "hdmr/model.hpp"
#include "hdmr/parallel.hpp"
#include "hdmr/rng.hpp"
#include "hdmr/selection.hpp"
#include "hdmr/separated.hpp"
#include "hdmr/testbed.hpp"

using namespace hdmr;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;
std::vector<HdmrModel> fitted;  // every model fitted here, for the statistics check

void report(int id, bool ok, double seconds, double limit, const std::string& detail) {
  const bool in_time = seconds < limit;
  if (!ok || !in_time) ++failures;
  std::printf("criterion %d: %s  %s  (%.2f s, limit %.0f s)\n", id, ok && in_time ? "PASS" : "FAIL", detail.c_str(),
              seconds, limit);
  std::fflush(stdout);
}

std::set<int> only;

template <class F>
void run(int id, double limit, F&& body) {
  if (!only.empty() && !only.count(id)) return;
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail += std::string(" exception: ") + e.what();
  }
  report(id, ok, std::chrono::duration<double>(Clock::now() - t0).count(), limit, detail);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BasisConfig unit_basis(int degree) {
  BasisConfig b;
  b.lo = 0.0;
  b.hi = 1.0;
  b.max_degree = degree;
  return b;
}

bool orthonormality(std::string& d) {
  double worst = 0.0;
  for (auto [lo, hi] : {std::pair{-1.0, 1.0}, std::pair{0.0, 1.0}}) {
    BasisConfig b;
    b.lo = lo;
    b.hi = hi;
    b.max_degree = 9;
    const Quadrature q = gauss_legendre(12, lo, hi);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(10, 10);
    std::vector<double> v(10);
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      eval_all(b, q.nodes[k], v);
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) g(i, j) += q.weights[k] * v[i] * v[j];
    }
    worst = std::max(worst, (g - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff());
  }
  d = fmt("max |G - I| = %.2e", worst);
  return worst < 1e-12;
}

bool kl_spectrum(std::string& d) {
  const double table[6] = {0.1815, 0.1396, 0.0906, 0.0450, 0.0236, 0.0097};
  const KLField f = kl_eigendecompose(0.7, 0.3, 0.0, 1.0, 400, 8);
  const double first = std::abs(f.eigenvalues[0] - table[0]) / table[0];
  double worst = 0.0;
  for (int k = 0; k < 6; ++k) worst = std::max(worst, std::abs(f.eigenvalues[k] - table[k]) / table[k]);
  const double sum = std::abs(f.spectrum.sum() - 0.49) / 0.49;
  d = fmt("sigma_1 = %.4f", f.eigenvalues[0]) + fmt(" (dev %.1f%%)", 100 * first) +
      fmt(", worst of first six %.1f%%", 100 * worst) + fmt(", trace dev %.2e", sum);
  return first <= 0.02 && worst <= 0.05 && sum <= 0.005;
}

double manufactured_error(int n) {
  const double pi = std::acos(-1.0);
  Eigen::VectorXd nu(n), f(n), exact(n);
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / (n - 1);
    nu[i] = 1 + x;
    f[i] = pi * std::cos(pi * x) - (1 + x) * pi * pi * std::sin(pi * x);
    exact[i] = std::sin(pi * x);
  }
  return (solve_diffusion(nu, f, 0, 0) - exact).lpNorm<Eigen::Infinity>();
}

bool solver(std::string& d) {
  const int n = 513;
  const Eigen::VectorXd u = solve_diffusion(Eigen::VectorXd::Ones(n), Eigen::VectorXd::Constant(n, -1.0), 0.0, 0.0);
  const double mid = u[256];
  const double e1 = manufactured_error(129), e2 = manufactured_error(257), e3 = manufactured_error(513);
  const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
  d = fmt("u(0.5) = %.8f", mid) + fmt(", orders %.3f", p1) + fmt(" %.3f", p2);
  return std::abs(mid - 0.125) <= 1e-5 && std::abs(p1 - 2.0) <= 0.2 && std::abs(p2 - 2.0) <= 0.2;
}

bool sparse_recovery(std::string& d) {
  const int nd = 20, nq = 1000, no = 4;
  BasisConfig basis;
  basis.max_degree = no;
  int ranked = 0;
  double worst = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    StreamRng rng(static_cast<std::uint64_t>(seed), 0xacce55ULL);
    std::set<Group> truth;
    while (truth.size() < 3) truth.insert(Group({static_cast<int>(rng.next_u64() % nd)}));
    while (truth.size() < 5) {
      const int a = static_cast<int>(rng.next_u64() % nd), b = static_cast<int>(rng.next_u64() % nd);
      if (a != b) truth.insert(Group({std::min(a, b), std::max(a, b)}));
    }
    HdmrModel target;
    target.basis = basis;
    target.nd = nd;
    target.n_pc = 2;
    target.ninter = 2;
    for (const auto& g : truth) {
      DenseMode m;
      m.group = g;
      m.indices = enumerate_dense_indices(g, no);
      m.coeffs.resize(static_cast<Eigen::Index>(m.indices.size()));
      for (auto& c : m.coeffs) c = rng.uniform(0.5, 2.0);
      target.modes.push_back(m);
    }
    auto draw = [&](int n, std::uint64_t s) {
      SampleSet out;
      out.x.resize(n, 0);
      out.xi.resize(n, nd);
      for (int q = 0; q < n; ++q) {
        StreamRng r(s, static_cast<std::uint64_t>(q));
        for (int k = 0; k < nd; ++k) out.xi(q, k) = r.uniform(-1.0, 1.0);
      }
      out.u = evaluate_model(target, out.xi);
      return out;
    };
    const SampleSet data = draw(nq, 1000 + seed);
    const SampleSet test = draw(1000, 2000 + seed);
    const Split parts = split(data, 800, 200, 0, static_cast<std::uint64_t>(seed));
    SelectionConfig sc;
    sc.nolars = 4;
    sc.ninter = 2;
    const SelectionPath path = glars_select(parts.train, sc, basis);
    std::set<Group> head;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, path.steps.size()); ++i) head.insert(path.steps[i].group);
    if (head == truth) ++ranked;
    FitConfig fc;
    fc.no = no;
    fc.n_pc = 2;
    fc.ninter = 2;
    fc.seed = static_cast<std::uint64_t>(seed);
    const FitResult fr = fit_hdmr(parts.train, parts.validation, path, fc, basis);
    fitted.push_back(fr.model);
    worst = std::max(worst, relative_error(fr.model, test));
  }
  d = "true groups ranked first in " + std::to_string(ranked) + "/10 seeds" + fmt(", worst test eps %.2e", worst);
  return ranked >= 9 && worst <= 1e-8;
}

bool convergence(std::string& d) {
  DiffusionConfig cfg;
  SelectionConfig sc;
  FitConfig fc;
  fc.no = 8;
  fc.n_pc = 3;
  fc.ninter = 3;
  const std::vector<int> sizes{500, 1000, 3000};
  const auto rows = convergence_study(cfg, sizes, 5, 10000, sc, fc, unit_basis(8));
  std::vector<double> med;
  for (int nq : sizes) {
    std::vector<double> e;
    for (const auto& r : rows)
      if (r.nq == nq) e.push_back(r.test_error);
    med.push_back(median(e));
  }
  // refit one model per size for the statistics check
  const DiffusionTestbed bed(cfg);
  for (int nq : sizes) {
    const SampleSet data = generate_dataset(bed, nq, 0, SampleMode::Point);
    const int nv = nq / 5;
    const Split parts = split(data, nq - nv, nv, 0, 0);
    fitted.push_back(fit_hdmr(parts.train, parts.validation, glars_select(parts.train, sc, unit_basis(8)), fc,
                              unit_basis(8)).model);
  }
  d = "median eps" + fmt(" %.3e", med[0]) + fmt(" %.3e", med[1]) + fmt(" %.3e", med[2]) + " at Nq 500 1000 3000";
  return med[1] <= med[0] && med[2] <= med[1] && med[2] <= 1e-2;
}

bool separated(std::string& d) {
  DiffusionConfig cfg;
  cfg.nd_nu = 3;
  cfg.nd_f = 3;
  SelectionConfig sc;
  FitConfig fc;
  fc.no = 10;
  fc.n_pc = 3;
  fc.ninter = 3;
  SeparatedConfig sep;
  sep.cardx = 32;
  sep.lambda_max = 2;
  const auto rows = separated_study(cfg, 3000, 10000, 1, sc, fc, sep, unit_basis(10));
  d = "eps by rank";
  for (const auto& r : rows) d += fmt(" %.3e", r.test_error);
  if (rows.size() < 3) {
    d += " (fewer than two stochastic pairs)";
    return false;
  }
  const bool decreasing = rows[1].test_error < rows[0].test_error && rows[2].test_error < rows[1].test_error;
  return rows[0].test_error >= 3e-3 && rows[0].test_error <= 9e-3 && rows[2].test_error <= 1.1e-3 && decreasing;
}

bool robustness(std::string& d) {
  DiffusionConfig cfg;
  cfg.nd_nu = 3;
  cfg.nd_f = 2;
  const DiffusionTestbed bed(cfg);
  const SampleSet test = generate_dataset(bed, 5000, 0x7e57ULL, SampleMode::Point);
  SelectionConfig sc;
  FitConfig fc;
  fc.no = 6;
  fc.n_pc = 3;
  fc.ninter = 3;
  const BasisConfig basis = unit_basis(6);
  NoiseModel noise;
  noise.s = 3e-3;
  noise.s_u = 0.2;
  noise.box_lo = 0.0;
  noise.box_hi = 1.0;
  int wins = 0;
  std::string errs;
  for (int seed = 0; seed < 5; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    const SampleSet clean = generate_dataset(bed, 500, 100 + s, SampleMode::Point);
    const SampleSet noisy = inject_noise(clean, noise, 200 + s);
    const Split parts = split(noisy, 400, 100, 0, s);
    const SelectionPath path = glars_select(parts.train, sc, basis);
    FitConfig ls = fc;
    ls.seed = s;
    FitConfig tls = ls;
    tls.robust = true;
    tls.noise = noise;
    const FitResult a = fit_hdmr(parts.train, parts.validation, path, ls, basis);
    const FitResult b = fit_hdmr(parts.train, parts.validation, path, tls, basis);
    fitted.push_back(a.model);
    fitted.push_back(b.model);
    const double ea = relative_error(a.model, test), eb = relative_error(b.model, test);
    if (eb <= ea) ++wins;
    errs += fmt(" %.2e", eb) + fmt("/%.2e", ea);
  }
  // zero noise: the robust estimator collapses onto least squares
  const SampleSet clean = generate_dataset(bed, 500, 100, SampleMode::Point);
  const Split parts = split(clean, 400, 100, 0, 0);
  const SelectionPath path = glars_select(parts.train, sc, basis);
  FitConfig tls = fc;
  tls.robust = true;
  const FitResult a = fit_hdmr(parts.train, parts.validation, path, fc, basis);
  const FitResult b = fit_hdmr(parts.train, parts.validation, path, tls, basis);
  double diff = std::abs(a.model.f_empty - b.model.f_empty);
  bool same_shape = a.model.modes.size() == b.model.modes.size();
  for (std::size_t i = 0; same_shape && i < a.model.modes.size(); ++i) {
    const auto* da = std::get_if<DenseMode>(&a.model.modes[i]);
    const auto* db = std::get_if<DenseMode>(&b.model.modes[i]);
    if (!da || !db || da->coeffs.size() != db->coeffs.size()) {
      same_shape = false;
      break;
    }
    diff = std::max(diff, (da->coeffs - db->coeffs).cwiseAbs().maxCoeff());
  }
  d = "wTLS <= LS in " + std::to_string(wins) + "/5 seeds (wTLS/LS:" + errs + ")" + fmt(", zero-noise max coeff diff %.2e", diff);
  return wins >= 4 && same_shape && diff <= 1e-8;
}

bool statistics(std::string& d) {
  double worst_sum = 0.0, worst_var = 0.0;
  int checked = 0;
  const std::size_t draws = 1000000, chunk = 50000;
  for (const auto& m : fitted) {
    const double var = model_variance(m);
    if (!(var > 0.0)) continue;
    double total = 0.0;
    for (const auto& [g, v] : sobol_indices(m)) total += v;
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    // two-pass Monte Carlo variance over chunks
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (std::size_t c0 = 0; c0 < draws; c0 += chunk) {
      Eigen::MatrixXd xi(static_cast<Eigen::Index>(chunk), m.nd);
      for (std::size_t q = 0; q < chunk; ++q) {
        StreamRng rng(0x5747ULL + static_cast<std::uint64_t>(checked), c0 + q);
        for (int k = 0; k < m.nd; ++k) xi(static_cast<Eigen::Index>(q), k) = rng.uniform(m.basis.lo, m.basis.hi);
      }
      const Eigen::VectorXd y = evaluate_model(m, xi);
      for (Eigen::Index q = 0; q < y.size(); ++q) {
        ++n;
        const double delta = y[q] - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (y[q] - mean);
      }
    }
    const double mc = m2 / static_cast<double>(n - 1);
    worst_var = std::max(worst_var, std::abs(mc - var) / var);
    ++checked;
  }
  d = std::to_string(checked) + " models" + fmt(", max |sum S - 1| = %.2e", worst_sum) +
      fmt(", max variance deviation vs MC %.3f%%", 100 * worst_var);
  return checked > 0 && worst_sum <= 1e-10 && worst_var <= 0.01;
}

bool scaling(std::string& d) {
  const ScalingRow scan = measure_scan_scaling(2000, 100, 5, 30, 5, 7);
  const ScalingRow fit = measure_fit_scaling(2000, 10, 6, 5, 7);
  d = fmt("scan ratio %.2f", scan.ratio) + fmt(" (%.3f", scan.seconds_small) + fmt(" -> %.3f s)", scan.seconds_large) +
      fmt(", fit ratio %.2f", fit.ratio) + fmt(" (%.3f", fit.seconds_small) + fmt(" -> %.3f s)", fit.seconds_large);
  return scan.ratio >= 1.5 && scan.ratio <= 2.8 && fit.ratio >= 0.8 && fit.ratio <= 1.5;
}

bool determinism(std::string& d) {
  DiffusionConfig cfg;
  const DiffusionTestbed bed(cfg);
  const int before = worker_count();
  std::vector<std::string> hdmr_docs, sep_docs;
  for (int workers : {1, 2, 4}) {
    set_worker_count(workers);
    const SampleSet data = generate_dataset(bed, 1000, 3, SampleMode::Point);
    const Split parts = split(data, 800, 200, 0, 3);
    SelectionConfig sc;
    FitConfig fc;
    fc.seed = 3;
    fc.no = 6;
    fc.n_pc = 2;  // exercises the CP modes too
    hdmr_docs.push_back(save_model(fit_hdmr(parts.train, parts.validation, glars_select(parts.train, sc, unit_basis(6)),
                                            fc, unit_basis(6))
                                       .model));
    DiffusionConfig small = cfg;
    small.nd_nu = 2;
    small.nd_f = 2;
    const SampleSet scattered = generate_dataset(small, 800, 4, SampleMode::Scattered);
    SeparatedConfig sep;
    sep.cardx = 16;
    sep.lambda_max = 2;
    sep.seed = 4;
    FitConfig sf;
    sf.no = 5;
    sep_docs.push_back(save_separated(fit_separated(scattered, sc, sf, sep, unit_basis(5))));
  }
  set_worker_count(before);
  const bool ok = std::all_of(hdmr_docs.begin(), hdmr_docs.end(), [&](const auto& s) { return s == hdmr_docs[0]; }) &&
                  std::all_of(sep_docs.begin(), sep_docs.end(), [&](const auto& s) { return s == sep_docs[0]; });
  d = ok ? "HDMR and separated model files identical for 1, 2 and 4 workers" : "model files differ across worker counts";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  run(1, 1, orthonormality);
  run(2, 5, kl_spectrum);
  run(3, 1, solver);
  run(4, 30, sparse_recovery);
  run(5, 600, convergence);
  run(6, 900, separated);
  run(7, 600, robustness);
  run(8, 600, statistics);
  run(9, 600, scaling);
  run(10, 600, determinism);
  std::printf("%d of %zu criteria failed\n", failures, only.empty() ? std::size_t{10} : only.size());
  return failures == 0 ? 0 : 1;
}
