#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "hdmr/dataset.hpp"
#include "hdmr/poly_basis.hpp"
#include "hdmr/rng.hpp"

namespace testing {

inline hdmr::BasisConfig sym_basis(int degree) {
  hdmr::BasisConfig b;
  b.lo = -1.0;
  b.hi = 1.0;
  b.max_degree = degree;
  return b;
}

inline double psi(int alpha, double x) { return hdmr::eval_univariate(sym_basis(12), alpha, x); }

// Uniform coordinates on [lo, hi]^nd with u given by f(row).
inline hdmr::SampleSet make_set(int nq, int nd, std::uint64_t seed, const std::function<double(const Eigen::RowVectorXd&)>& f,
                                double lo = -1.0, double hi = 1.0) {
  hdmr::SampleSet s;
  s.xi.resize(nq, nd);
  s.x.resize(nq, 0);
  s.u.resize(nq);
  for (int q = 0; q < nq; ++q) {
    hdmr::StreamRng rng(seed, static_cast<std::uint64_t>(q));
    for (int k = 0; k < nd; ++k) s.xi(q, k) = rng.uniform(lo, hi);
    s.u[q] = f(s.xi.row(q));
  }
  return s;
}

}  // namespace testing
