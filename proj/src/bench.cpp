#include "hdmr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "hdmr/rng.hpp"

namespace hdmr {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr std::uint64_t kTestSeed = 0x7e57'0000'0000'0001ULL;

// u = sum of decaying first-order terms plus a few pair terms and a small
// pseudo-random perturbation (keeps the selection path from terminating early).
SampleSet synthetic(int nq, int nd, int active, std::uint64_t seed) {
  BasisConfig b;
  b.max_degree = 3;
  SampleSet s;
  s.xi.resize(nq, nd);
  s.u.resize(nq);
  s.x.resize(nq, 0);
  for (int q = 0; q < nq; ++q) {
    StreamRng rng(seed, static_cast<std::uint64_t>(q));
    for (int k = 0; k < nd; ++k) s.xi(q, k) = rng.uniform(-1.0, 1.0);
    double u = 0.0;
    for (int k = 0; k < std::min(active, nd); ++k) {
      u += std::pow(0.8, k) * eval_univariate(b, 2 + k % 3, s.xi(q, k));
    }
    if (nd > 1) u += 0.3 * eval_univariate(b, 2, s.xi(q, 0)) * eval_univariate(b, 2, s.xi(q, 1));
    s.u[q] = u + 1e-3 * rng.normal();
  }
  return s;
}

}  // namespace

std::vector<ConvergenceRow> convergence_study(const DiffusionConfig& cfg, const std::vector<int>& nq_list, int n_seeds,
                                              int n_test, const SelectionConfig& sel, const FitConfig& fit,
                                              const BasisConfig& basis, double val_fraction) {
  const DiffusionTestbed bed(cfg);
  const SampleSet test = generate_dataset(bed, n_test, kTestSeed, SampleMode::Point);
  std::vector<ConvergenceRow> rows;
  for (int nq : nq_list) {
    for (int s = 0; s < n_seeds; ++s) {
      const auto t0 = Clock::now();
      const auto seed = static_cast<std::uint64_t>(s);
      const SampleSet data = generate_dataset(bed, nq, seed, SampleMode::Point);
      const int n_val = static_cast<int>(std::floor(val_fraction * nq));
      const Split parts = split(data, nq - n_val, n_val, 0, seed);
      FitConfig fc = fit;
      fc.seed = seed;
      const SelectionPath path = glars_select(parts.train, sel, basis);
      const FitResult fr = fit_hdmr(parts.train, parts.validation, path, fc, basis);
      ConvergenceRow row;
      row.nq = nq;
      row.seed = seed;
      row.test_error = relative_error(fr.model, test);
      row.groups = static_cast<int>(fr.model.modes.size());
      row.seconds = seconds_since(t0);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_convergence_csv(const std::vector<ConvergenceRow>& rows, std::ostream& out) {
  out << "nq,seed,test_error,groups,seconds\n";
  out.precision(17);
  for (const auto& r : rows) out << r.nq << ',' << r.seed << ',' << r.test_error << ',' << r.groups << ',' << r.seconds << '\n';
}

std::vector<RankRow> separated_study(const DiffusionConfig& cfg, int nq, int n_test, std::uint64_t seed,
                                     const SelectionConfig& sel, const FitConfig& fit, const SeparatedConfig& sep,
                                     const BasisConfig& basis) {
  const DiffusionTestbed bed(cfg);
  const SampleSet data = generate_dataset(bed, nq, seed, SampleMode::Scattered);
  const SampleSet test = generate_dataset(bed, n_test, kTestSeed, SampleMode::Scattered);
  SeparatedConfig sc = sep;
  sc.seed = seed;
  sc.domain_lo = {cfg.lo};
  sc.domain_hi = {cfg.hi};
  FitConfig fc = fit;
  fc.seed = seed;
  const SeparatedModel m = fit_separated(data, sel, fc, sc, basis);
  std::vector<RankRow> rows;
  for (int r = 0; r <= m.rank(); ++r) rows.push_back({r, relative_error(truncate(m, r), test)});
  return rows;
}

void write_rank_csv(const std::vector<RankRow>& rows, std::ostream& out) {
  out << "rank,test_error\n";
  out.precision(17);
  for (const auto& r : rows) out << r.rank << ',' << r.test_error << '\n';
}

ScalingRow measure_scan_scaling(int nq, int nd, int nolars, int steps, int repeats, std::uint64_t seed) {
  const SampleSet large = synthetic(nq, 2 * nd, std::min(nd, steps + 5), seed);
  SampleSet small = large;
  small.xi = large.xi.leftCols(nd);
  SelectionConfig cfg;
  cfg.nolars = nolars;
  cfg.ninter = 1;
  cfg.max_groups = steps;
  BasisConfig basis;
  ScalingRow row;
  row.quantity = "scan_seconds";
  row.size_small = static_cast<double>(nd) * nolars;
  row.size_large = 2.0 * nd * nolars;
  std::vector<double> ts, tl;
  for (int r = 0; r < repeats; ++r) {
    ts.push_back(glars_select(small, cfg, basis).scan_seconds);
    tl.push_back(glars_select(large, cfg, basis).scan_seconds);
  }
  row.seconds_small = median(ts);
  row.seconds_large = median(tl);
  row.ratio = row.seconds_large / row.seconds_small;
  return row;
}

ScalingRow measure_fit_scaling(int nq, int nd, int no, int repeats, std::uint64_t seed) {
  const SampleSet large = synthetic(nq, 2 * nd, nd, seed);
  SampleSet small = large;
  small.xi = large.xi.leftCols(nd);
  // Same skeleton in both cases: every first-order group of the small
  // problem and the pairs of its first four dimensions.
  std::vector<Group> groups;
  for (int k = 0; k < nd; ++k) groups.emplace_back(std::vector<int>{k});
  for (int i = 0; i < std::min(nd, 4); ++i) {
    for (int j = i + 1; j < std::min(nd, 4); ++j) groups.emplace_back(std::vector<int>{i, j});
  }
  FitConfig fc;
  fc.no = no;
  fc.n_pc = 2;
  fc.ninter = 2;
  BasisConfig basis;
  ScalingRow row;
  row.quantity = "fit_seconds";
  row.size_small = nd;
  row.size_large = 2.0 * nd;
  std::vector<double> ts, tl;
  const WeightedData ds = WeightedData::from(small);
  const WeightedData dl = WeightedData::from(large);
  for (int r = 0; r < repeats; ++r) {
    auto t0 = Clock::now();
    fit_hdmr_weighted(ds, nullptr, groups, fc, basis);
    ts.push_back(seconds_since(t0));
    t0 = Clock::now();
    fit_hdmr_weighted(dl, nullptr, groups, fc, basis);
    tl.push_back(seconds_since(t0));
  }
  row.seconds_small = median(ts);
  row.seconds_large = median(tl);
  row.ratio = row.seconds_large / row.seconds_small;
  return row;
}

void write_scaling_csv(const std::vector<ScalingRow>& rows, std::ostream& out) {
  out << "quantity,size_small,size_large,seconds_small,seconds_large,ratio\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.quantity << ',' << r.size_small << ',' << r.size_large << ',' << r.seconds_small << ',' << r.seconds_large
        << ',' << r.ratio << '\n';
  }
}

}  // namespace hdmr
