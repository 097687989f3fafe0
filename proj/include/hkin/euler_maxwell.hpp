#ifndef HKIN_EULER_MAXWELL_HPP
#define HKIN_EULER_MAXWELL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hkin/core.hpp"
#include "hkin/fft.hpp"
#include "hkin/grid.hpp"
#include "hkin/maxwellian.hpp"
#include "hkin/rng.hpp"

namespace hkin {

/// Fluid-Maxwell time integration on the periodic spatial grid.
///
/// Scheme: conservative finite volumes for (rho, rho*u, total energy) with
/// 2nd-order MUSCL reconstruction and local Lax-Friedrichs fluxes; the field
/// equations use spectral curls, which keep the discrete div B at roundoff
/// (div of curl vanishes mode by mode).  Time stepping is three-stage SSP-RK3
/// over the combined state.  Sources couple cell-centered values, so the
/// energy exchange between fluid and field cancels exactly in the total.
///
/// Component layout on FluidState: u and E use slots 0..dv-1; B carries
/// b_components(dv) entries, the planar (dv = 2) case storing its single
/// out-of-plane component in B[0].
struct EulerMaxwellConfig {
  double amplitude = 1e-3;  // initial perturbation scale
  double cfl = 0.45;
  double t_end = 1.0;
  enum class Constraint { monitor, clean };
  Constraint constraint = Constraint::monitor;
  int clean_every = 20;  // divergence-cleaning cadence when active

  void validate() const {
    require(cfl > 0.0 && cfl < 1.0, "euler-maxwell: CFL must be in (0,1)");
    require(amplitude >= 0.0, "euler-maxwell: amplitude must be nonnegative");
    require(t_end >= 0.0, "euler-maxwell: end time must be nonnegative");
    require(clean_every >= 1, "euler-maxwell: cleaning cadence must be >= 1");
  }
};

/// Adiabatic index of the reduced monatomic gas, e = (dv/2) R T.
inline double em_gamma(int dv) { return 1.0 + 2.0 / dv; }

namespace detail {

inline double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return (a > 0.0) ? std::min(a, b) : std::max(a, b);
}

/// Combined conservative state: fluid (rho, momentum, energy) plus fields.
struct EMCons {
  int dv = 3, nb = 1, nc = 0;
  std::vector<double> rho, en;
  std::array<std::vector<double>, 3> m, E, B;

  void resize(int dv_, int nc_) {
    dv = dv_;
    nb = b_components(dv_);
    nc = nc_;
    rho.assign(nc, 0.0);
    en.assign(nc, 0.0);
    for (int d = 0; d < 3; ++d) {
      m[d].assign(nc, 0.0);
      E[d].assign(nc, 0.0);
      B[d].assign(nc, 0.0);
    }
  }
  void axpy(double a, const EMCons& o) {
    for (int c = 0; c < nc; ++c) {
      rho[c] += a * o.rho[c];
      en[c] += a * o.en[c];
    }
    for (int d = 0; d < 3; ++d)
      for (int c = 0; c < nc; ++c) {
        m[d][c] += a * o.m[d][c];
        E[d][c] += a * o.E[d][c];
        B[d][c] += a * o.B[d][c];
      }
  }
  void scale(double a) {
    for (int c = 0; c < nc; ++c) {
      rho[c] *= a;
      en[c] *= a;
    }
    for (int d = 0; d < 3; ++d)
      for (int c = 0; c < nc; ++c) {
        m[d][c] *= a;
        E[d][c] *= a;
        B[d][c] *= a;
      }
  }
};

inline EMCons to_cons(const FluidState& fs) {
  EMCons U;
  U.resize(fs.dv, fs.ncells());
  for (int c = 0; c < U.nc; ++c) {
    const double r = fs.rho[c];
    double ke = 0.0;
    for (int d = 0; d < fs.dv; ++d) {
      U.m[d][c] = r * fs.u[d][c];
      ke += sqr(fs.u[d][c]);
    }
    U.en[c] = r * (0.5 * fs.dv * gas_constant * fs.T[c] + 0.5 * ke);
    U.rho[c] = r;
    for (int d = 0; d < fs.dv; ++d) U.E[d][c] = fs.E[d][c];
    for (int d = 0; d < U.nb; ++d) U.B[d][c] = fs.B[d][c];
  }
  return U;
}

inline FluidState to_fluid(const EMCons& U) {
  FluidState fs;
  fs.resize(U.dv, U.nc);
  for (int c = 0; c < U.nc; ++c) {
    const double r = U.rho[c];
    require(r > 0.0, "euler-maxwell: vacuum state (rho <= 0)");
    double ke = 0.0;
    for (int d = 0; d < U.dv; ++d) {
      fs.u[d][c] = U.m[d][c] / r;
      ke += sqr(fs.u[d][c]);
    }
    const double T = (U.en[c] / r - 0.5 * ke) / (0.5 * U.dv * gas_constant);
    require(T > 0.0, "euler-maxwell: nonpositive temperature");
    fs.rho[c] = r;
    fs.T[c] = T;
    for (int d = 0; d < U.dv; ++d) fs.E[d][c] = U.E[d][c];
    for (int d = 0; d < U.nb; ++d) fs.B[d][c] = U.B[d][c];
  }
  return fs;
}

/// v x B with the reduced planar convention (B[0] out of plane when dv = 2).
inline std::array<double, 3> cross_uB(int dv, const std::array<double, 3>& u,
                                      const std::array<double, 3>& B) {
  if (dv == 2) return {u[1] * B[0], -u[0] * B[0], 0.0};
  return {u[1] * B[2] - u[2] * B[1], u[2] * B[0] - u[0] * B[2],
          u[0] * B[1] - u[1] * B[0]};
}

/// Conservative flux along axis ax from primitive values.
inline void prim_flux(int dv, int ax, double r, const std::array<double, 3>& u,
                      double T, double* out /* 2 + dv entries */) {
  const double p = gas_constant * r * T;
  const double en = r * (0.5 * dv * gas_constant * T) +
                    0.5 * r * (sqr(u[0]) + sqr(u[1]) + sqr(u[2]));
  out[0] = r * u[ax];
  for (int d = 0; d < dv; ++d) out[1 + d] = r * u[ax] * u[d];
  out[1 + ax] += p;
  out[1 + dv] = u[ax] * (en + p);
}

}  // namespace detail

/// Largest stable step: acoustic and bulk speeds against the light speed 1,
/// one factor of dx for the multidimensional spectral bound.
inline double em_max_dt(const SGrid& s, const FluidState& fs, double cfl) {
  double speed = 1.0;  // normalized light speed
  for (int c = 0; c < fs.ncells(); ++c) {
    const double cs = std::sqrt(em_gamma(fs.dv) * gas_constant * fs.T[c]);
    for (int d = 0; d < s.dx; ++d)
      speed = std::max(speed, std::abs(fs.u[d][c]) + cs);
  }
  const double h = (s.dx == 2) ? std::min(s.hx[0], s.hx[1]) : s.hx[0];
  return cfl * h / (s.dx * speed);
}

namespace detail {

/// Time derivative of the combined state.
inline EMCons em_rhs(const SGrid& s, const EMCons& U) {
  const int dv = U.dv, nc = U.nc, ncons = 2 + dv;
  EMCons R;
  R.resize(dv, nc);

  // primitives
  std::vector<double> rho(nc), T(nc);
  std::array<std::vector<double>, 3> u;
  for (int d = 0; d < dv; ++d) u[d].assign(nc, 0.0);
  for (int c = 0; c < nc; ++c) {
    const double r = U.rho[c];
    require(r > 0.0, "euler-maxwell: vacuum state (rho <= 0)");
    double ke = 0.0;
    for (int d = 0; d < dv; ++d) {
      u[d][c] = U.m[d][c] / r;
      ke += sqr(u[d][c]);
    }
    rho[c] = r;
    T[c] = (U.en[c] / r - 0.5 * ke) / (0.5 * dv * gas_constant);
    require(T[c] > 0.0, "euler-maxwell: nonpositive temperature");
  }

  // fluid: MUSCL-reconstructed local Lax-Friedrichs fluxes, one axis sweep
  // at a time; primitive variables are reconstructed with minmod slopes.
  const int nprim = 2 + dv;
  auto prim_at = [&](int c, double* w) {
    w[0] = rho[c];
    for (int d = 0; d < dv; ++d) w[1 + d] = u[d][c];
    w[1 + dv] = T[c];
  };
  std::vector<double> fhat(static_cast<size_t>(nc) * ncons);
  for (int ax = 0; ax < s.dx; ++ax) {
    const double invh = 1.0 / s.hx[ax];
    auto shift = [&](int c, int step) {
      auto id = s.unpack(c);
      id[ax] = (id[ax] + step + s.nx[ax]) % s.nx[ax];
      return s.index(id[0], id[1]);
    };
    // interface flux stored at the cell on its left
    for (int c = 0; c < nc; ++c) {
      const int cm = shift(c, -1), cp = shift(c, +1), cpp = shift(c, +2);
      double wm[6], wc[6], wp[6], wpp[6], wl[6], wr[6];
      prim_at(cm, wm);
      prim_at(c, wc);
      prim_at(cp, wp);
      prim_at(cpp, wpp);
      for (int q = 0; q < nprim; ++q) {
        wl[q] = wc[q] + 0.5 * minmod(wc[q] - wm[q], wp[q] - wc[q]);
        wr[q] = wp[q] - 0.5 * minmod(wp[q] - wc[q], wpp[q] - wp[q]);
      }
      std::array<double, 3> ul{}, ur{};
      for (int d = 0; d < dv; ++d) {
        ul[d] = wl[1 + d];
        ur[d] = wr[1 + d];
      }
      double fl[5], fr[5];
      prim_flux(dv, ax, wl[0], ul, wl[1 + dv], fl);
      prim_flux(dv, ax, wr[0], ur, wr[1 + dv], fr);
      const double al =
          std::abs(ul[ax]) + std::sqrt(em_gamma(dv) * gas_constant * wl[1 + dv]);
      const double ar =
          std::abs(ur[ax]) + std::sqrt(em_gamma(dv) * gas_constant * wr[1 + dv]);
      const double alpha = std::max(al, ar);
      // conservative jumps for the dissipation term
      double cl[5], cr[5];
      cl[0] = wl[0];
      cr[0] = wr[0];
      double kel = 0.0, ker = 0.0;
      for (int d = 0; d < dv; ++d) {
        cl[1 + d] = wl[0] * ul[d];
        cr[1 + d] = wr[0] * ur[d];
        kel += sqr(ul[d]);
        ker += sqr(ur[d]);
      }
      cl[1 + dv] = wl[0] * (0.5 * dv * gas_constant * wl[1 + dv] + 0.5 * kel);
      cr[1 + dv] = wr[0] * (0.5 * dv * gas_constant * wr[1 + dv] + 0.5 * ker);
      for (int q = 0; q < ncons; ++q)
        fhat[static_cast<size_t>(c) * ncons + q] =
            0.5 * (fl[q] + fr[q]) - 0.5 * alpha * (cr[q] - cl[q]);
    }
    for (int c = 0; c < nc; ++c) {
      const int cm = shift(c, -1);
      const double* fp = &fhat[static_cast<size_t>(c) * ncons];
      const double* fm = &fhat[static_cast<size_t>(cm) * ncons];
      R.rho[c] -= invh * (fp[0] - fm[0]);
      for (int d = 0; d < dv; ++d) R.m[d][c] -= invh * (fp[1 + d] - fm[1 + d]);
      R.en[c] -= invh * (fp[1 + dv] - fm[1 + dv]);
    }
  }

  // Lorentz sources on cell centers
  for (int c = 0; c < nc; ++c) {
    std::array<double, 3> uc{}, Bc{}, Ec{};
    for (int d = 0; d < dv; ++d) {
      uc[d] = u[d][c];
      Ec[d] = U.E[d][c];
    }
    for (int d = 0; d < U.nb; ++d) Bc[d] = U.B[d][c];
    auto uxB = cross_uB(dv, uc, Bc);
    double udotE = 0.0;
    for (int d = 0; d < dv; ++d) {
      R.m[d][c] -= rho[c] * (Ec[d] + uxB[d]);
      udotE += uc[d] * Ec[d];
    }
    R.en[c] -= rho[c] * udotE;
  }

  // Maxwell part: dE/dt = curl B + 4 pi rho u, dB/dt = -curl E, spectral
  // derivatives (d1 terms drop on one-dimensional grids).
  auto dx0 = [&](const std::vector<double>& f) {
    return spectral_deriv(s, f, 0, 1);
  };
  auto dx1 = [&](const std::vector<double>& f) {
    return spectral_deriv(s, f, 1, 1);
  };
  if (dv == 2) {
    auto d0B = dx0(U.B[0]);
    auto d0E1 = dx0(U.E[1]);
    for (int c = 0; c < nc; ++c) {
      R.E[1][c] -= d0B[c];
      R.B[0][c] -= d0E1[c];
    }
    if (s.dx == 2) {
      auto d1B = dx1(U.B[0]);
      auto d1E0 = dx1(U.E[0]);
      for (int c = 0; c < nc; ++c) {
        R.E[0][c] += d1B[c];
        R.B[0][c] += d1E0[c];
      }
    }
  } else {
    auto d0B1 = dx0(U.B[1]);
    auto d0B2 = dx0(U.B[2]);
    auto d0E1 = dx0(U.E[1]);
    auto d0E2 = dx0(U.E[2]);
    for (int c = 0; c < nc; ++c) {
      R.E[1][c] -= d0B2[c];
      R.E[2][c] += d0B1[c];
      R.B[1][c] += d0E2[c];
      R.B[2][c] -= d0E1[c];
    }
    if (s.dx == 2) {
      auto d1B0 = dx1(U.B[0]);
      auto d1B2 = dx1(U.B[2]);
      auto d1E0 = dx1(U.E[0]);
      auto d1E2 = dx1(U.E[2]);
      for (int c = 0; c < nc; ++c) {
        R.E[0][c] += d1B2[c];
        R.E[2][c] -= d1B0[c];
        R.B[0][c] -= d1E2[c];
        R.B[2][c] += d1E0[c];
      }
    }
  }
  for (int d = 0; d < dv; ++d)
    for (int c = 0; c < nc; ++c)
      R.E[d][c] += 4.0 * M_PI * rho[c] * u[d][c];
  return R;
}

}  // namespace detail

/// One SSP-RK3 step of the combined system.
inline void euler_maxwell_step(const SGrid& s, FluidState& fs, double dt) {
  using detail::EMCons;
  EMCons U = detail::to_cons(fs);
  EMCons k1 = detail::em_rhs(s, U);

  EMCons U1 = U;
  U1.axpy(dt, k1);
  EMCons k2 = detail::em_rhs(s, U1);

  EMCons U2 = U1;
  U2.axpy(dt, k2);
  U2.scale(0.25);
  U2.axpy(0.75, U);
  EMCons k3 = detail::em_rhs(s, U2);

  EMCons U3 = U2;
  U3.axpy(dt, k3);
  U3.scale(2.0 / 3.0);
  U3.axpy(1.0 / 3.0, U);
  fs = detail::to_fluid(U3);
}

/// Restore the electric Gauss constraint by a gradient correction, built
/// mode by mode with the same derivative symbols the residual monitor uses
/// (axis-Nyquist symbols vanish).  Every representable residual mode is
/// removed; only the mean and the all-Nyquist corner are unreachable by any
/// real grid field.
inline void em_clean_gauss(const SGrid& s, FluidState& fs) {
  std::vector<double> res(s.total, 0.0);
  for (int d = 0; d < s.dx; ++d) {
    auto dd = spectral_deriv(s, fs.E[d], d, 1);
    for (int c = 0; c < s.total; ++c) res[c] += dd[c];
  }
  for (int c = 0; c < s.total; ++c)
    res[c] -= 4.0 * M_PI * (1.0 - fs.rho[c]);

  auto& pl = detail::fft_plan(s.nx[0], s.nx[1]);
  for (int c = 0; c < s.total; ++c) pl.real[c] = res[c];
  fftw_execute(pl.fwd);
  std::vector<std::complex<double>> rhat(pl.nc);
  for (int i = 0; i < pl.nc; ++i)
    rhat[i] = {pl.cplx[i][0], pl.cplx[i][1]};

  const int nc0 = s.nx[0] / 2 + 1;
  const double norm = 1.0 / s.total;
  for (int d = 0; d < s.dx; ++d) {
    for (int k1 = 0; k1 < s.nx[1]; ++k1) {
      const int m1 = (k1 <= s.nx[1] / 2) ? k1 : k1 - s.nx[1];
      for (int k0 = 0; k0 < nc0; ++k0) {
        const bool ny0 = (s.nx[0] % 2 == 0 && k0 == s.nx[0] / 2);
        const bool ny1 = (s.nx[1] % 2 == 0 && k1 == s.nx[1] / 2);
        const double kt0 = ny0 ? 0.0 : 2.0 * M_PI * k0 / s.L[0];
        const double kt1 =
            (s.dx == 2 && !ny1) ? 2.0 * M_PI * m1 / s.L[1] : 0.0;
        const double K2 = kt0 * kt0 + kt1 * kt1;
        std::complex<double> z(0.0, 0.0);
        if (K2 > 0.0) {
          const double kd = (d == 0) ? kt0 : kt1;
          z = std::complex<double>(0.0, kd) * rhat[k0 + nc0 * k1] / K2;
        }
        pl.cplx[k0 + nc0 * k1][0] = z.real();
        pl.cplx[k0 + nc0 * k1][1] = z.imag();
      }
    }
    fftw_execute(pl.bwd);
    for (int c = 0; c < s.total; ++c) fs.E[d][c] += pl.real[c] * norm;
  }
}

/// Well-prepared random initial state: smooth low-mode perturbation of the
/// uniform equilibrium with T = rho^{2/3}, the electric field built from the
/// Gauss potential, and B the (reduced) curl of u.
inline FluidState init_well_prepared(std::uint64_t seed, double amplitude,
                                     const SGrid& s, int dv) {
  require(amplitude >= 0.0, "init: amplitude must be nonnegative");
  Rng rng(seed);
  // smooth mean-free field from modes |k| <= 2, normalized to peak 1
  auto smooth = [&]() {
    std::vector<double> f(s.total, 0.0);
    for (int k0 = 0; k0 <= 2; ++k0)
      for (int k1 = 0; k1 <= (s.dx == 2 ? 2 : 0); ++k1) {
        if (k0 == 0 && k1 == 0) continue;
        const double ac = rng.uniform(-1.0, 1.0), as = rng.uniform(-1.0, 1.0);
        for (int c = 0; c < s.total; ++c) {
          auto id = s.unpack(c);
          double ph = 2.0 * M_PI * k0 * s.center(0, id[0]) / s.L[0];
          if (s.dx == 2) ph += 2.0 * M_PI * k1 * s.center(1, id[1]) / s.L[1];
          f[c] += ac * std::cos(ph) + as * std::sin(ph);
        }
      }
    double peak = 0.0;
    for (double v : f) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
      for (double& v : f) v /= peak;
    return f;
  };

  FluidState fs;
  fs.resize(dv, s.total);
  auto r = smooth();
  for (int c = 0; c < s.total; ++c) {
    fs.rho[c] = 1.0 + amplitude * r[c];
    require(fs.rho[c] > 0.0, "init: amplitude too large for positive density");
    fs.T[c] = std::pow(fs.rho[c], 2.0 / 3.0);
  }
  for (int d = 0; d < dv; ++d) {
    auto ud = smooth();
    for (int c = 0; c < s.total; ++c) fs.u[d][c] = amplitude * ud[c];
  }
  // E from the Gauss potential: div E = 4 pi (1 - rho)
  std::vector<double> rhs(s.total);
  for (int c = 0; c < s.total; ++c)
    rhs[c] = 4.0 * M_PI * (1.0 - fs.rho[c]);
  auto psi = poisson_solve(s, rhs);
  for (int d = 0; d < s.dx; ++d)
    fs.E[d] = spectral_deriv(s, psi, d, 1);
  // B as the reduced curl of u (divergence-free by construction)
  if (dv == 2) {
    auto d0u1 = spectral_deriv(s, fs.u[1], 0, 1);
    fs.B[0] = d0u1;
    if (s.dx == 2) {
      auto d1u0 = spectral_deriv(s, fs.u[0], 1, 1);
      for (int c = 0; c < s.total; ++c) fs.B[0][c] -= d1u0[c];
    }
  } else {
    auto d0u1 = spectral_deriv(s, fs.u[1], 0, 1);
    auto d0u2 = spectral_deriv(s, fs.u[2], 0, 1);
    for (int c = 0; c < s.total; ++c) {
      fs.B[1][c] = -d0u2[c];
      fs.B[2][c] = d0u1[c];
    }
    if (s.dx == 2) {
      auto d1u0 = spectral_deriv(s, fs.u[0], 1, 1);
      auto d1u2 = spectral_deriv(s, fs.u[2], 1, 1);
      for (int c = 0; c < s.total; ++c) {
        fs.B[0][c] = d1u2[c];
        fs.B[2][c] -= d1u0[c];
      }
    }
  }
  return fs;
}

/// Pointwise monitors and conserved totals.
struct EMDiag {
  double t = 0.0;
  double min_rho = 0.0, max_u = 0.0;
  double divB_inf = 0.0, gauss_inf = 0.0;
  double mass = 0.0, fluid_energy = 0.0, field_energy = 0.0;
};

inline EMDiag em_diagnostics(const SGrid& s, const FluidState& fs, double t) {
  EMDiag d;
  d.t = t;
  d.min_rho = fs.rho[0];
  const double vol = s.hx[0] * (s.dx == 2 ? s.hx[1] : 1.0);
  for (int c = 0; c < s.total; ++c) {
    d.min_rho = std::min(d.min_rho, fs.rho[c]);
    double ke = 0.0, e2 = 0.0, b2 = 0.0;
    for (int dd = 0; dd < fs.dv; ++dd) {
      d.max_u = std::max(d.max_u, std::abs(fs.u[dd][c]));
      ke += sqr(fs.u[dd][c]);
      e2 += sqr(fs.E[dd][c]);
    }
    for (int dd = 0; dd < b_components(fs.dv); ++dd) b2 += sqr(fs.B[dd][c]);
    d.mass += vol * fs.rho[c];
    d.fluid_energy +=
        vol * fs.rho[c] * (0.5 * fs.dv * gas_constant * fs.T[c] + 0.5 * ke);
    d.field_energy += vol * (e2 + b2) / (8.0 * M_PI);
  }
  // constraint residuals with spectral divergences
  std::vector<double> divE(s.total, 0.0), divB(s.total, 0.0);
  for (int dd = 0; dd < s.dx; ++dd) {
    auto de = spectral_deriv(s, fs.E[dd], dd, 1);
    for (int c = 0; c < s.total; ++c) divE[c] += de[c];
  }
  if (fs.dv == 3) {
    for (int dd = 0; dd < s.dx; ++dd) {
      auto db = spectral_deriv(s, fs.B[dd], dd, 1);
      for (int c = 0; c < s.total; ++c) divB[c] += db[c];
    }
  }  // planar B has no in-plane components: div B = 0 identically
  for (int c = 0; c < s.total; ++c) {
    d.gauss_inf = std::max(
        d.gauss_inf, std::abs(divE[c] - 4.0 * M_PI * (1.0 - fs.rho[c])));
    d.divB_inf = std::max(d.divB_inf, std::abs(divB[c]));
  }
  return d;
}

inline std::string em_csv_header() {
  return "t,min_rho,max_u,divB_inf,gauss_res,fluid_energy,field_energy";
}

inline std::string em_csv_row(const EMDiag& d) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                d.t, d.min_rho, d.max_u, d.divB_inf, d.gauss_inf,
                d.fluid_energy, d.field_energy);
  return buf;
}

/// Integrated run with sampled history.
struct EMRun {
  FluidState final_state;
  std::vector<EMDiag> series;
  std::vector<double> times;
  std::vector<FluidState> snapshots;  // populated when snap_stride > 0
};

inline EMRun run_euler_maxwell(const SGrid& s, const EulerMaxwellConfig& cfg,
                               FluidState fs, int snap_stride = 0) {
  cfg.validate();
  EMRun run;
  double t = 0.0;
  int step = 0;
  run.series.push_back(em_diagnostics(s, fs, t));
  if (snap_stride > 0) {
    run.times.push_back(t);
    run.snapshots.push_back(fs);
  }
  while (t < cfg.t_end) {
    double dt = std::min(em_max_dt(s, fs, cfg.cfl), cfg.t_end - t);
    euler_maxwell_step(s, fs, dt);
    t += dt;
    ++step;
    if (cfg.constraint == EulerMaxwellConfig::Constraint::clean &&
        step % cfg.clean_every == 0)
      em_clean_gauss(s, fs);
    run.series.push_back(em_diagnostics(s, fs, t));
    if (snap_stride > 0 && (step % snap_stride == 0 || t >= cfg.t_end)) {
      run.times.push_back(t);
      run.snapshots.push_back(fs);
    }
  }
  run.final_state = std::move(fs);
  return run;
}

/// Least-squares decay exponent of log(norm) against log(1+t).  Norms at or
/// below the floor are treated as converged-to-zero and skipped; if fewer
/// than two samples survive, no fit is attempted.
struct DecayFit {
  bool fitted = false;
  double exponent = 0.0;
  double rss = 0.0;  // residual sum of squares of the log fit
};

inline DecayFit fit_decay(const std::vector<double>& t,
                          const std::vector<double>& norms,
                          double floor = 1e-13) {
  require(t.size() == norms.size(), "fit_decay: length mismatch");
  DecayFit out;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    if (norms[i] <= floor) continue;
    const double x = std::log(1.0 + t[i]), y = std::log(norms[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return out;
  const double det = n * sxx - sx * sx;
  if (det <= 0.0) return out;
  const double slope = (n * sxy - sx * sy) / det;
  const double icpt = (sy * sxx - sx * sxy) / det;
  out.fitted = true;
  out.exponent = slope;
  for (size_t i = 0; i < t.size(); ++i) {
    if (norms[i] <= floor) continue;
    const double x = std::log(1.0 + t[i]);
    out.rss += sqr(std::log(norms[i]) - (icpt + slope * x));
  }
  return out;
}

/// Sup norms of the smooth fields and their first gradients, fitted against
/// (1+t)^{-p}.  Reported, not asserted: the periodic box has no dispersive
/// spreading, so exponents are diagnostics only.
struct DecayReport {
  DecayFit u, E, B, grad_u, grad_E, grad_B;
};

inline DecayReport decay_report(const SGrid& s,
                                const std::vector<double>& times,
                                const std::vector<FluidState>& snaps) {
  require(times.size() == snaps.size(), "decay_report: length mismatch");
  require(times.size() >= 10, "decay_report: need at least 10 samples");
  std::vector<double> nu, nE, nB, gu, gE, gB;
  for (const auto& fs : snaps) {
    double mu = 0.0, mE = 0.0, mB = 0.0, du = 0.0, dE = 0.0, dB = 0.0;
    auto grad_sup = [&](const std::vector<double>& f) {
      double m = 0.0;
      for (int dd = 0; dd < s.dx; ++dd) {
        auto g = spectral_deriv(s, f, dd, 1);
        for (double v : g) m = std::max(m, std::abs(v));
      }
      return m;
    };
    for (int d = 0; d < fs.dv; ++d) {
      for (int c = 0; c < s.total; ++c) {
        mu = std::max(mu, std::abs(fs.u[d][c]));
        mE = std::max(mE, std::abs(fs.E[d][c]));
      }
      du = std::max(du, grad_sup(fs.u[d]));
      dE = std::max(dE, grad_sup(fs.E[d]));
    }
    for (int d = 0; d < b_components(fs.dv); ++d) {
      for (int c = 0; c < s.total; ++c)
        mB = std::max(mB, std::abs(fs.B[d][c]));
      dB = std::max(dB, grad_sup(fs.B[d]));
    }
    nu.push_back(mu);
    nE.push_back(mE);
    nB.push_back(mB);
    gu.push_back(du);
    gE.push_back(dE);
    gB.push_back(dB);
  }
  DecayReport rep;
  rep.u = fit_decay(times, nu);
  rep.E = fit_decay(times, nE);
  rep.B = fit_decay(times, nB);
  rep.grad_u = fit_decay(times, gu);
  rep.grad_E = fit_decay(times, gE);
  rep.grad_B = fit_decay(times, gB);
  return rep;
}

}  // namespace hkin

#endif
