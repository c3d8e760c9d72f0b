#include "hdmr/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hdmr/errors.hpp"
#include "hdmr/parallel.hpp"
#include "hdmr/rng.hpp"

namespace hdmr {

double KLField::eigenfunction(int k, double x) const {
  if (k < 0 || k >= nterms()) throw IndexError("eigenfunction index out of range");
  const double span = hi - lo;
  if (!(x >= lo - 1e-12 * span && x <= hi + 1e-12 * span)) throw ShapeError("point outside the field domain");
  const auto m = grid.size();
  if (m == 1) return eigenfunctions(0, k);
  const double h = span / static_cast<double>(m);
  // Midpoint i sits at lo + (i + 1/2) h; extrapolate linearly in the end half-cells.
  const double t = (x - lo) / h - 0.5;
  const auto i = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t)), 0, m - 2);
  const double f = t - static_cast<double>(i);
  return (1.0 - f) * eigenfunctions(i, k) + f * eigenfunctions(i + 1, k);
}

KLField kl_eigendecompose(double sigma, double lc, double lo, double hi, int mk, int nterms, double mean_value) {
  if (!(hi > lo)) throw ConfigError("field domain needs lo < hi");
  if (!(lc > 0.0) || !(sigma >= 0.0)) throw ConfigError("kernel needs Lc > 0 and sigma >= 0");
  if (mk < 1 || nterms < 0) throw ConfigError("invalid quadrature or term count");
  if (nterms > mk) throw ConfigError("more KL terms requested than quadrature points");
  KLField f;
  f.mean_value = mean_value;
  f.sigma = sigma;
  f.lc = lc;
  f.lo = lo;
  f.hi = hi;
  const double h = (hi - lo) / mk;
  f.grid.resize(mk);
  for (int i = 0; i < mk; ++i) f.grid[i] = lo + (i + 0.5) * h;
  Eigen::MatrixXd a(mk, mk);
  for (int i = 0; i < mk; ++i) {
    for (int j = 0; j < mk; ++j) {
      const double d = f.grid[i] - f.grid[j];
      a(i, j) = h * sigma * sigma * std::exp(-d * d / (2.0 * lc * lc));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd& lam = eig.eigenvalues();  // ascending
  f.spectrum.resize(mk);
  for (int i = 0; i < mk; ++i) f.spectrum[i] = std::max(lam[mk - 1 - i], 0.0);
  f.eigenvalues = f.spectrum.head(nterms);
  f.eigenfunctions.resize(mk, nterms);
  for (int k = 0; k < nterms; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(mk - 1 - k);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    f.eigenfunctions.col(k) = v / std::sqrt(h);
  }
  return f;
}

double sample_field(const KLField& f, std::span<const double> germ, double x) {
  if (static_cast<int>(germ.size()) != f.nterms()) throw ShapeError("germ length differs from the KL term count");
  double v = f.mean_value;
  for (int k = 0; k < f.nterms(); ++k) v += std::sqrt(f.eigenvalues[k]) * f.eigenfunction(k, x) * germ[static_cast<std::size_t>(k)];
  return v;
}

Eigen::VectorXd solve_diffusion(const Eigen::VectorXd& nu, const Eigen::VectorXd& f, double u_minus, double u_plus,
                                double lo, double hi) {
  const Eigen::Index n = nu.size();
  if (n < 3 || f.size() != n) throw ShapeError("diffusion solve needs matching nodal arrays of length >= 3");
  if (!nu.allFinite() || !f.allFinite()) throw NonFiniteError("diffusion coefficients are not finite");
  if (!(nu.minCoeff() > 0.0)) throw CoercivityError("diffusion coefficient is not positive");
  const double h = (hi - lo) / static_cast<double>(n - 1);
  // Face coefficients nu_{i+1/2} (harmonic mean).
  Eigen::VectorXd face(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) face[i] = 2.0 * nu[i] * nu[i + 1] / (nu[i] + nu[i + 1]);
  // Interior unknowns 1..n-2; rows scaled by h^2:
  // face_{i-1/2} u_{i-1} - (face_{i-1/2} + face_{i+1/2}) u_i + face_{i+1/2} u_{i+1} = h^2 F_i
  const Eigen::Index m = n - 2;
  Eigen::VectorXd lower(m), diag(m), upper(m), rhs(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = k + 1;
    lower[k] = face[i - 1];
    upper[k] = face[i];
    diag[k] = -(face[i - 1] + face[i]);
    rhs[k] = h * h * f[i];
  }
  rhs[0] -= lower[0] * u_minus;
  rhs[m - 1] -= upper[m - 1] * u_plus;
  // Thomas algorithm (the matrix is diagonally dominant).
  for (Eigen::Index k = 1; k < m; ++k) {
    const double w = lower[k] / diag[k - 1];
    diag[k] -= w * upper[k - 1];
    rhs[k] -= w * rhs[k - 1];
  }
  Eigen::VectorXd u(n);
  u[0] = u_minus;
  u[n - 1] = u_plus;
  u[m] = rhs[m - 1] / diag[m - 1];
  for (Eigen::Index k = m - 2; k >= 0; --k) u[k + 1] = (rhs[k] - upper[k] * u[k + 2]) / diag[k];
  return u;
}

void DiffusionConfig::validate() const {
  if (nd_nu < 0 || nd_f < 0 || nd() < 1) throw ConfigError("need at least one stochastic dimension");
  if (mx < 16) throw ConfigError("M_x must be >= 16");
  if (mk < 4 * std::max(nd_nu, nd_f)) throw ConfigError("M_k must be >= 4 Nterms");
  if (!(hi > lo)) throw ConfigError("domain needs lo < hi");
  if (!(germ_hi > germ_lo)) throw ConfigError("germ interval needs lo < hi");
  if (!(x_star >= lo && x_star <= hi)) throw ConfigError("probe location outside the domain");
  if (!(lc_nu > 0.0 && lc_f > 0.0)) throw ConfigError("correlation lengths must be > 0");
  if (!(sigma_nu >= 0.0 && sigma_f >= 0.0)) throw ConfigError("field scales must be >= 0");
}

DiffusionTestbed::DiffusionTestbed(const DiffusionConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nu_ = kl_eigendecompose(cfg_.sigma_nu, cfg_.lc_nu, cfg_.lo, cfg_.hi, cfg_.mk, cfg_.nd_nu, cfg_.nu0);
  f_ = kl_eigendecompose(cfg_.sigma_f, cfg_.lc_f, cfg_.lo, cfg_.hi, cfg_.mk, cfg_.nd_f, cfg_.f0);
  const int nodes = cfg_.mx + 1;
  auto modes = [&](const KLField& fld) {
    Eigen::MatrixXd out(nodes, fld.nterms());
    for (int i = 0; i < nodes; ++i) {
      const double x = cfg_.lo + (cfg_.hi - cfg_.lo) * i / cfg_.mx;
      for (int k = 0; k < fld.nterms(); ++k) out(i, k) = std::sqrt(fld.eigenvalues[k]) * fld.eigenfunction(k, x);
    }
    return out;
  };
  nu_modes_ = modes(nu_);
  f_modes_ = modes(f_);
}

Eigen::VectorXd DiffusionTestbed::solve(std::span<const double> germ) const {
  if (static_cast<int>(germ.size()) != cfg_.nd()) throw ShapeError("germ length differs from Nd");
  const Eigen::Map<const Eigen::VectorXd> g(germ.data(), static_cast<Eigen::Index>(germ.size()));
  const Eigen::VectorXd nu = Eigen::VectorXd::Constant(cfg_.mx + 1, cfg_.nu0) + nu_modes_ * g.head(cfg_.nd_nu);
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(cfg_.mx + 1, cfg_.f0) + f_modes_ * g.tail(cfg_.nd_f);
  return solve_diffusion(nu, f, cfg_.u_minus, cfg_.u_plus, cfg_.lo, cfg_.hi);
}

double DiffusionTestbed::value_at(const Eigen::VectorXd& u, double x) const {
  const double t = (x - cfg_.lo) / (cfg_.hi - cfg_.lo) * cfg_.mx;
  const int i = std::clamp(static_cast<int>(std::floor(t)), 0, cfg_.mx - 1);
  const double f = t - i;
  return (1.0 - f) * u[i] + f * u[i + 1];
}

SampleSet generate_dataset(const DiffusionTestbed& bed, int nq, std::uint64_t seed, SampleMode mode) {
  if (nq < 0) throw ConfigError("sample count must be >= 0");
  const auto& cfg = bed.config();
  SampleSet s;
  s.xi.resize(nq, cfg.nd());
  s.u.resize(nq);
  s.x.resize(nq, mode == SampleMode::Scattered ? 1 : 0);
  parallel_for(static_cast<std::size_t>(nq), [&](std::size_t q) {
    StreamRng rng(seed, static_cast<std::uint64_t>(q));
    std::vector<double> germ(static_cast<std::size_t>(cfg.nd()));
    for (auto& g : germ) g = rng.uniform(cfg.germ_lo, cfg.germ_hi);
    const double x = mode == SampleMode::Scattered ? rng.uniform(cfg.lo, cfg.hi) : cfg.x_star;
    const Eigen::VectorXd u = bed.solve(germ);
    const auto row = static_cast<Eigen::Index>(q);
    for (int k = 0; k < cfg.nd(); ++k) s.xi(row, k) = germ[static_cast<std::size_t>(k)];
    if (mode == SampleMode::Scattered) s.x(row, 0) = x;
    s.u[row] = bed.value_at(u, x);
  });
  return s;
}

SampleSet generate_dataset(const DiffusionConfig& cfg, int nq, std::uint64_t seed, SampleMode mode) {
  return generate_dataset(DiffusionTestbed(cfg), nq, seed, mode);
}

void write_spectrum_csv(const KLField& f, std::ostream& out) {
  out << "k,eigenvalue\n";
  out.precision(17);
  for (int k = 0; k < f.nterms(); ++k) out << k + 1 << ',' << f.eigenvalues[k] << '\n';
}

}  // namespace hdmr
