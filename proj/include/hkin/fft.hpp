#ifndef HKIN_FFT_HPP
#define HKIN_FFT_HPP

#include <fftw3.h>

#include <complex>
#include <map>
#include <tuple>

#include "hkin/grid.hpp"

namespace hkin {

namespace detail {

/// Cached FFTW plans + buffers for one (n0, n1) periodic field size.
/// Layout: real field idx = i0 + n0*i1 (i0 contiguous), so FFTW sees a
/// rank-2 transform with dims {n1, n0}.
struct FftPlan {
  int n0 = 0, n1 = 0, nc = 0;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan fwd{}, bwd{};

  FftPlan(int n0_, int n1_) : n0(n0_), n1(n1_) {
    nc = (n0 / 2 + 1) * n1;
    real = fftw_alloc_real(static_cast<size_t>(n0) * n1);
    cplx = fftw_alloc_complex(nc);
    if (n1 == 1) {
      fwd = fftw_plan_dft_r2c_1d(n0, real, cplx, FFTW_ESTIMATE);
      bwd = fftw_plan_dft_c2r_1d(n0, cplx, real, FFTW_ESTIMATE);
    } else {
      fwd = fftw_plan_dft_r2c_2d(n1, n0, real, cplx, FFTW_ESTIMATE);
      bwd = fftw_plan_dft_c2r_2d(n1, n0, cplx, real, FFTW_ESTIMATE);
    }
  }
  FftPlan(const FftPlan&) = delete;
  ~FftPlan() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real);
    fftw_free(cplx);
  }
};

inline FftPlan& fft_plan(int n0, int n1) {
  static std::map<std::pair<int, int>, FftPlan*> cache;
  auto key = std::make_pair(n0, n1);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, new FftPlan(n0, n1)).first;
  return *it->second;
}

}  // namespace detail

/// Spectral derivative of given order along spatial dim on the periodic grid.
/// Odd orders zero the Nyquist mode of that axis.
inline std::vector<double> spectral_deriv(const SGrid& g,
                                          const std::vector<double>& f,
                                          int dim, int order) {
  require(dim >= 0 && dim < g.dx, "spectral_deriv: bad dimension");
  require(static_cast<int>(f.size()) == g.total, "spectral_deriv: bad size");
  if (order == 0) return f;
  auto& pl = detail::fft_plan(g.nx[0], g.nx[1]);
  for (int i = 0; i < g.total; ++i) pl.real[i] = f[i];
  fftw_execute(pl.fwd);
  const int nc0 = g.nx[0] / 2 + 1;
  for (int k1 = 0; k1 < g.nx[1]; ++k1) {
    int m1 = (k1 <= g.nx[1] / 2) ? k1 : k1 - g.nx[1];
    for (int k0 = 0; k0 < nc0; ++k0) {
      const int m = (dim == 0) ? k0 : m1;
      double k = 2.0 * M_PI * m / g.L[dim];
      bool nyq = (dim == 0 && g.nx[0] % 2 == 0 && k0 == g.nx[0] / 2) ||
                 (dim == 1 && g.nx[1] % 2 == 0 && k1 == g.nx[1] / 2);
      std::complex<double> z(pl.cplx[k0 + nc0 * k1][0],
                             pl.cplx[k0 + nc0 * k1][1]);
      std::complex<double> ik(0.0, k);
      std::complex<double> fac(1.0, 0.0);
      for (int p = 0; p < order; ++p) fac *= ik;
      if (nyq && order % 2 == 1) fac = 0.0;
      z *= fac;
      pl.cplx[k0 + nc0 * k1][0] = z.real();
      pl.cplx[k0 + nc0 * k1][1] = z.imag();
    }
  }
  fftw_execute(pl.bwd);
  std::vector<double> out(g.total);
  const double norm = 1.0 / g.total;
  for (int i = 0; i < g.total; ++i) out[i] = pl.real[i] * norm;
  return out;
}

/// Solve  laplace(phi) = rhs  on the periodic grid (mean-free rhs required);
/// returns the mean-free solution.
inline std::vector<double> poisson_solve(const SGrid& g,
                                         const std::vector<double>& rhs) {
  require(static_cast<int>(rhs.size()) == g.total, "poisson: bad size");
  double mean = 0.0, nrm = 0.0;
  for (double r : rhs) {
    mean += r;
    nrm += r * r;
  }
  mean /= g.total;
  nrm = std::sqrt(nrm / g.total);
  require(std::abs(mean) <= 1e-10 * std::max(nrm, 1e-30) + 1e-14,
          "poisson: right-hand side must be mean-free");
  auto& pl = detail::fft_plan(g.nx[0], g.nx[1]);
  for (int i = 0; i < g.total; ++i) pl.real[i] = rhs[i];
  fftw_execute(pl.fwd);
  const int nc0 = g.nx[0] / 2 + 1;
  for (int k1 = 0; k1 < g.nx[1]; ++k1) {
    int m1 = (k1 <= g.nx[1] / 2) ? k1 : k1 - g.nx[1];
    for (int k0 = 0; k0 < nc0; ++k0) {
      double kx = 2.0 * M_PI * k0 / g.L[0];
      double ky = (g.dx == 2) ? 2.0 * M_PI * m1 / g.L[1] : 0.0;
      double k2 = kx * kx + ky * ky;
      double fac = (k2 == 0.0) ? 0.0 : -1.0 / k2;
      pl.cplx[k0 + nc0 * k1][0] *= fac;
      pl.cplx[k0 + nc0 * k1][1] *= fac;
    }
  }
  fftw_execute(pl.bwd);
  std::vector<double> out(g.total);
  const double norm = 1.0 / g.total;
  for (int i = 0; i < g.total; ++i) out[i] = pl.real[i] * norm;
  return out;
}

}  // namespace hkin

#endif
