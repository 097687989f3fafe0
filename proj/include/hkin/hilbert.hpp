#ifndef HKIN_HILBERT_HPP
#define HKIN_HILBERT_HPP

#include "hkin/boltzmann.hpp"
#include "hkin/euler_maxwell.hpp"
#include "hkin/fft.hpp"
#include "hkin/landau_linear.hpp"

namespace hkin {

/// Collision family driving the expansion, with its parameters.  Both
/// families expose the same three entry points used below: a dense
/// linearization around a local Maxwellian, the bilinear form C(G, H), and
/// the shared grid stencils.
struct CollisionSpec {
  enum class Family { landau, boltzmann };
  Family family = Family::landau;
  LandauParams landau;
  BoltzmannParams boltz;
};

/// Grid-bound collision tables shared by every cell-level operation of one
/// expansion build.
struct CollisionCtx {
  CollisionSpec spec;
  Axis4Stencil st;
  LandauKernel kern;  // landau family only
};

inline CollisionCtx make_collision_ctx(const VGrid& g,
                                       const CollisionSpec& spec) {
  CollisionCtx c;
  c.spec = spec;
  c.st = make_axis4(g.nv, g.h);
  if (spec.family == CollisionSpec::Family::landau)
    c.kern = build_landau_kernel(g, spec.landau);
  else
    spec.boltz.validate(g.dv);
  return c;
}

inline DenseCollision collision_dense(const VGrid& g, const CollisionCtx& ctx,
                                      const CellFluid& cf,
                                      double stab_coef = 1.0) {
  if (ctx.spec.family == CollisionSpec::Family::landau)
    return assemble_linearized(g, ctx.st, ctx.kern, local_maxwellian(g, cf),
                               stab_coef);
  return assemble_boltz_linearized(g, ctx.spec.boltz, cf);
}

/// Bilinear collision form C(G, H) with the reference Maxwellian of the cell
/// fixing the derivative weighting (landau) or the ratio tables (boltzmann).
inline std::vector<double> collision_bilinear(const VGrid& g,
                                              const CollisionCtx& ctx,
                                              const CellFluid& ref,
                                              const std::vector<double>& G,
                                              const std::vector<double>& H) {
  if (ctx.spec.family == CollisionSpec::Family::landau)
    return landau_bilinear(g, ctx.st, ctx.kern, maxwellian_weight(g, ref), G,
                           H, ctx.spec.landau);
  return boltzmann_bilinear(g, ctx.spec.boltz, ref, G, H);
}

/// Velocity box half-width for expansion work: wide enough that Gaussian
/// moment closures hold to the hydrodynamic-residue tolerance, narrow enough
/// that the trapezoid rule still resolves the core at the given node count.
inline double hilbert_Lv(int nv, double maxT, double max_speed) {
  const double f = nv <= 13 ? 5.5 : nv <= 20 ? 6.5 : 7.5;
  return f * std::sqrt(gas_constant * maxT) + max_speed;
}

// ---------------------------------------------------------------------------
// Spectral evaluation of the fluid system: primitive-variable right-hand
// side on the periodic grid.  This is the time derivative the cascade
// attaches to the leading-order fluid; the finite-volume solver remains the
// shock-capable production route.
// ---------------------------------------------------------------------------

struct FluidDeriv {
  std::vector<double> drho, dT;
  std::array<std::vector<double>, 3> du, dE, dB;

  void resize(int ncells) {
    drho.assign(ncells, 0.0);
    dT.assign(ncells, 0.0);
    for (int d = 0; d < 3; ++d) {
      du[d].assign(ncells, 0.0);
      dE[d].assign(ncells, 0.0);
      dB[d].assign(ncells, 0.0);
    }
  }
};

/// dE += curl B with the reduced planar convention.
inline void add_curl_B(const SGrid& s, int dv,
                       const std::array<std::vector<double>, 3>& B,
                       std::array<std::vector<double>, 3>& dE) {
  const int nc = s.total;
  if (dv == 2) {
    auto d0B = spectral_deriv(s, B[0], 0, 1);
    for (int c = 0; c < nc; ++c) dE[1][c] -= d0B[c];
    if (s.dx == 2) {
      auto d1B = spectral_deriv(s, B[0], 1, 1);
      for (int c = 0; c < nc; ++c) dE[0][c] += d1B[c];
    }
    return;
  }
  auto d0B1 = spectral_deriv(s, B[1], 0, 1);
  auto d0B2 = spectral_deriv(s, B[2], 0, 1);
  for (int c = 0; c < nc; ++c) {
    dE[1][c] -= d0B2[c];
    dE[2][c] += d0B1[c];
  }
  if (s.dx == 2) {
    auto d1B0 = spectral_deriv(s, B[0], 1, 1);
    auto d1B2 = spectral_deriv(s, B[2], 1, 1);
    for (int c = 0; c < nc; ++c) {
      dE[0][c] += d1B2[c];
      dE[2][c] -= d1B0[c];
    }
  }
}

/// dB -= curl E with the reduced planar convention.
inline void add_minus_curl_E(const SGrid& s, int dv,
                             const std::array<std::vector<double>, 3>& E,
                             std::array<std::vector<double>, 3>& dB) {
  const int nc = s.total;
  if (dv == 2) {
    auto d0E1 = spectral_deriv(s, E[1], 0, 1);
    for (int c = 0; c < nc; ++c) dB[0][c] -= d0E1[c];
    if (s.dx == 2) {
      auto d1E0 = spectral_deriv(s, E[0], 1, 1);
      for (int c = 0; c < nc; ++c) dB[0][c] += d1E0[c];
    }
    return;
  }
  auto d0E1 = spectral_deriv(s, E[1], 0, 1);
  auto d0E2 = spectral_deriv(s, E[2], 0, 1);
  for (int c = 0; c < nc; ++c) {
    dB[1][c] += d0E2[c];
    dB[2][c] -= d0E1[c];
  }
  if (s.dx == 2) {
    auto d1E0 = spectral_deriv(s, E[0], 1, 1);
    auto d1E2 = spectral_deriv(s, E[2], 1, 1);
    for (int c = 0; c < nc; ++c) {
      dB[0][c] -= d1E2[c];
      dB[2][c] += d1E0[c];
    }
  }
}

/// Instantaneous time derivative of (rho, u, T, E, B) given by the fluid
/// system itself, evaluated spectrally:
///   d_t rho = -div(rho u)
///   d_t u   = -(u.grad) u - R grad(rho T)/rho - (E + u x B)
///   d_t T   = -u.grad T - (2/dv) T div u
///   d_t E   =  curl B + 4 pi rho u,     d_t B = -curl E.
inline FluidDeriv fluid_time_derivative(const SGrid& s, const FluidState& fs) {
  const int nc = s.total, dv = fs.dv;
  FluidDeriv d;
  d.resize(nc);
  std::vector<double> tmp(nc), rT(nc);
  for (int c = 0; c < nc; ++c) rT[c] = fs.rho[c] * fs.T[c];
  for (int ax = 0; ax < s.dx; ++ax) {
    for (int c = 0; c < nc; ++c) tmp[c] = fs.rho[c] * fs.u[ax][c];
    auto dflux = spectral_deriv(s, tmp, ax, 1);
    auto dp = spectral_deriv(s, rT, ax, 1);
    auto dT = spectral_deriv(s, fs.T, ax, 1);
    std::array<std::vector<double>, 3> dua;
    for (int k = 0; k < dv; ++k) dua[k] = spectral_deriv(s, fs.u[k], ax, 1);
    for (int c = 0; c < nc; ++c) {
      d.drho[c] -= dflux[c];
      const double ua = fs.u[ax][c];
      for (int k = 0; k < dv; ++k) d.du[k][c] -= ua * dua[k][c];
      d.du[ax][c] -= gas_constant * dp[c] / fs.rho[c];
      d.dT[c] -= ua * dT[c] + (2.0 / dv) * fs.T[c] * dua[ax][c];
    }
  }
  for (int c = 0; c < nc; ++c) {
    std::array<double, 3> uc{fs.u[0][c], fs.u[1][c], fs.u[2][c]};
    std::array<double, 3> Bc{fs.B[0][c], fs.B[1][c], fs.B[2][c]};
    auto uxB = detail::cross_uB(dv, uc, Bc);
    for (int k = 0; k < dv; ++k) d.du[k][c] -= fs.E[k][c] + uxB[k];
  }
  add_curl_B(s, dv, fs.B, d.dE);
  add_minus_curl_E(s, dv, fs.E, d.dB);
  for (int k = 0; k < dv; ++k)
    for (int c = 0; c < nc; ++c)
      d.dE[k][c] += 4.0 * M_PI * fs.rho[c] * fs.u[k][c];
  return d;
}

inline void fluid_add_scaled(FluidState& fs, const FluidDeriv& d, double a) {
  const int nc = fs.ncells();
  for (int c = 0; c < nc; ++c) {
    fs.rho[c] += a * d.drho[c];
    fs.T[c] += a * d.dT[c];
  }
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < nc; ++c) {
      fs.u[k][c] += a * d.du[k][c];
      fs.E[k][c] += a * d.dE[k][c];
      fs.B[k][c] += a * d.dB[k][c];
    }
}

/// Spectral spatial gradients of the fluid scalars entering the Maxwellian
/// transport.
struct FluidGrad {
  std::array<std::vector<double>, 2> rho, T;
  std::array<std::array<std::vector<double>, 3>, 2> u;
};

inline FluidGrad fluid_gradients(const SGrid& s, const FluidState& fs) {
  FluidGrad gr;
  for (int ax = 0; ax < s.dx; ++ax) {
    gr.rho[ax] = spectral_deriv(s, fs.rho, ax, 1);
    gr.T[ax] = spectral_deriv(s, fs.T, ax, 1);
    for (int k = 0; k < fs.dv; ++k)
      gr.u[ax][k] = spectral_deriv(s, fs.u[k], ax, 1);
  }
  return gr;
}

// ---------------------------------------------------------------------------
// First-order microscopic part.  The leading Maxwellian's transport, pushed
// to weighted space, is solved against the linearized collision operator on
// the orthogonal complement of the hydrodynamic null space.  The size of the
// hydrodynamic component of the right-hand side measures how far the fluid
// state is from solving the fluid system; it must stay below reject_tol.
// ---------------------------------------------------------------------------

/// -M^{-1/2} (d_t + v.grad_x - (E + v x B).grad_v) M at cell c, with the
/// fluid time derivative supplied analytically.  Since every term is M times
/// a low-degree polynomial in v, the whole bracket is formed pointwise.
inline std::vector<double> micro_rhs_level1(const SGrid& s, const VGrid& g,
                                            const FluidState& fs,
                                            const FluidDeriv& dd,
                                            const FluidGrad& gr, int c) {
  const int dv = g.dv;
  const CellFluid cf = cell_fluid(fs, c);
  const double RT = gas_constant * cf.T;
  const auto M = local_maxwellian(g, cf);
  std::array<double, 3> Bc{fs.B[0][c], fs.B[1][c], fs.B[2][c]};
  std::vector<double> rhs(g.total);
  for (int a = 0; a < g.total; ++a) {
    const Vec3& v = g.v[a];
    double q = 0.0;
    for (int k = 0; k < dv; ++k) q += sqr(v[k] - cf.u[k]);
    const double pexp = q / (2.0 * RT) - 0.5 * dv;
    double A = dd.drho[c] / cf.rho + dd.dT[c] / cf.T * pexp;
    for (int k = 0; k < dv; ++k) A += (v[k] - cf.u[k]) * dd.du[k][c] / RT;
    for (int ax = 0; ax < s.dx; ++ax) {
      double Ax = gr.rho[ax][c] / cf.rho + gr.T[ax][c] / cf.T * pexp;
      for (int k = 0; k < dv; ++k)
        Ax += (v[k] - cf.u[k]) * gr.u[ax][k][c] / RT;
      A += v[ax] * Ax;
    }
    std::array<double, 3> vv{v[0], v[1], v[2]};
    auto vxB = detail::cross_uB(dv, vv, Bc);
    double lor = 0.0;
    for (int k = 0; k < dv; ++k)
      lor += (fs.E[k][c] + vxB[k]) * (v[k] - cf.u[k]);
    A += lor / RT;
    rhs[a] = -std::sqrt(M[a]) * A;
  }
  return rhs;
}

/// Frozen per-cell machinery for the constrained micro solves: the dense
/// quadratic form and its shifted factorization, plus the projector the
/// shift was built with.  Factors may be reused across nearby times; the
/// projection is always taken with a projector rebuilt at the current fluid.
struct CellSolver {
  Projector proj;
  Eigen::VectorXd Wd;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
};

inline CellSolver make_cell_solver(const VGrid& g, const CollisionCtx& ctx,
                                   const CellFluid& cf,
                                   double stab_coef = 1.0) {
  CellSolver cs;
  cs.proj = build_projector(g, cf);
  DenseCollision op = collision_dense(g, ctx, cf, stab_coef);
  cs.Wd = op.Wd;
  Eigen::MatrixXd S = op.B;
  const double tau = std::max(S.trace() / op.n, 1e-300);
  for (int j = 0; j < cs.proj.nmom; ++j) {
    Eigen::VectorXd wchi(op.n);
    for (int a = 0; a < op.n; ++a) wchi(a) = op.Wd(a) * cs.proj.chi[j][a];
    S.noalias() += tau * wchi * wchi.transpose();
  }
  cs.ldlt.compute(S);
  require(cs.ldlt.info() == Eigen::Success,
          "micro solver: factorization failed");
  return cs;
}

/// Solve the constrained micro equation with frozen factors and a fresh
/// projector.  Throws when the right-hand side carries a hydrodynamic
/// component above reject_tol, which signals that the supplied fluid state
/// does not solve the fluid system to the demanded accuracy.
inline std::vector<double> cell_micro_solve(const VGrid& g,
                                            const CellSolver& cs,
                                            const Projector& fresh,
                                            const std::vector<double>& rhs,
                                            double reject_tol,
                                            double* kernel_frac = nullptr) {
  Eigen::VectorXd coef = project_coeffs(g, fresh, rhs.data());
  const double nr = wnorm(g, rhs);
  const double frac = nr > 0.0 ? coef.norm() / nr : 0.0;
  if (kernel_frac) *kernel_frac = frac;
  require(frac <= reject_tol, "Euler-Maxwell residual too large");
  Eigen::VectorXd b(cs.Wd.size());
  for (int a = 0; a < b.size(); ++a) b(a) = cs.Wd(a) * rhs[a];
  Eigen::VectorXd x = cs.ldlt.solve(b);
  std::vector<double> out(x.data(), x.data() + x.size());
  std::vector<double> clean(out.size());
  apply_ImPM(g, fresh, out.data(), clean.data());
  return clean;
}

/// Micro part of the first-order coefficient over the whole spatial grid, in
/// weighted representation.  Builds fresh factors; the cascade state below
/// keeps its own frozen set for trajectory work.
inline KineticState build_F1_micro(const SGrid& s, const VGrid& g,
                                   const CollisionCtx& ctx,
                                   const FluidState& fs, const FluidDeriv& dd,
                                   double reject_tol = 1e-6,
                                   double* worst_frac = nullptr) {
  KineticState micro = make_state(Rep::remainder_f, s.total, g.total);
  const FluidGrad gr = fluid_gradients(s, fs);
  double worst = 0.0;
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(fs, c);
    CellSolver cs = make_cell_solver(g, ctx, cf);
    auto rhs = micro_rhs_level1(s, g, fs, dd, gr, c);
    double frac = 0.0;
    auto m = cell_micro_solve(g, cs, cs.proj, rhs, reject_tol, &frac);
    worst = std::max(worst, frac);
    std::copy(m.begin(), m.end(), micro.cell(c));
  }
  if (worst_frac) *worst_frac = worst;
  return micro;
}

// ---------------------------------------------------------------------------
// Macroscopic part of a coefficient level, carried in conservative moment
// variables: sig = <F_n>, mom = <v F_n>, en = <|v|^2 F_n>, plus the level's
// own fields.  The moment equations follow from the level-n kinetic
// equation; the collision terms drop because the bilinear conserves the
// invariants, so the system closes once the flux tensors are evaluated from
// the materialized coefficient.
// ---------------------------------------------------------------------------

struct MacroLevel {
  std::vector<double> sig, en;
  std::array<std::vector<double>, 3> mom, E, B;

  void resize(int ncells) {
    sig.assign(ncells, 0.0);
    en.assign(ncells, 0.0);
    for (int d = 0; d < 3; ++d) {
      mom[d].assign(ncells, 0.0);
      E[d].assign(ncells, 0.0);
      B[d].assign(ncells, 0.0);
    }
  }
  int ncells() const { return static_cast<int>(sig.size()); }
};

inline void macro_add_scaled(MacroLevel& y, const MacroLevel& d, double a) {
  const int nc = y.ncells();
  for (int c = 0; c < nc; ++c) {
    y.sig[c] += a * d.sig[c];
    y.en[c] += a * d.en[c];
  }
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < nc; ++c) {
      y.mom[k][c] += a * d.mom[k][c];
      y.E[k][c] += a * d.E[k][c];
      y.B[k][c] += a * d.B[k][c];
    }
}

/// Generator coordinates of the hydrodynamic span at one cell: the raw
/// coefficients (alpha, beta_d, gamma) multiplying M, (v_d - u_d) M, and
/// (|v-u|^2/(RT) - dv) M.  Physical coordinates follow as rho_n = alpha rho,
/// u_n = beta R rho T, T_n = gamma 2 dv rho.
struct HydroCoords {
  double alpha = 0.0;
  Vec3 beta{0.0, 0.0, 0.0};
  double gamma = 0.0;
};

/// Solve the (dv+2) linear system matching the discrete (1, v, |v|^2)
/// moments of the generator span to the conservative variables of the level.
/// The micro part carries exactly zero discrete moments, so it never enters.
inline HydroCoords recover_coords(const VGrid& g, const CellFluid& cf,
                                  double sig, const Vec3& mom, double en) {
  const int dv = g.dv, n = dv + 2;
  const double RT = gas_constant * cf.T;
  const auto M = local_maxwellian(g, cf);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < g.total; ++a) {
    const Vec3& v = g.v[a];
    double q = 0.0, v2 = 0.0;
    for (int k = 0; k < dv; ++k) {
      q += sqr(v[k] - cf.u[k]);
      v2 += sqr(v[k]);
    }
    double gen[5];
    gen[0] = M[a];
    for (int k = 0; k < dv; ++k) gen[1 + k] = (v[k] - cf.u[k]) * M[a];
    gen[n - 1] = (q / RT - dv) * M[a];
    const double w = g.w[a];
    for (int col = 0; col < n; ++col) {
      A(0, col) += w * gen[col];
      for (int k = 0; k < dv; ++k) A(1 + k, col) += w * v[k] * gen[col];
      A(n - 1, col) += w * v2 * gen[col];
    }
  }
  Eigen::VectorXd b(n);
  b(0) = sig;
  for (int k = 0; k < dv; ++k) b(1 + k) = mom[k];
  b(n - 1) = en;
  Eigen::VectorXd x = A.fullPivLu().solve(b);
  HydroCoords hc;
  hc.alpha = x(0);
  for (int k = 0; k < dv; ++k) hc.beta[k] = x(1 + k);
  hc.gamma = x(n - 1);
  return hc;
}

/// Materialize the full kinetic coefficient of a level: hydrodynamic span
/// with the recovered generator coordinates plus sqrt(M) times the micro
/// part.  Pass an empty micro for a purely hydrodynamic level.
inline KineticState materialize_level(const SGrid& s, const VGrid& g,
                                      const FluidState& fs,
                                      const MacroLevel& lev,
                                      const KineticState* micro) {
  KineticState F = make_state(Rep::full_F, s.total, g.total);
  const int dv = g.dv;
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(fs, c);
    const double RT = gas_constant * cf.T;
    const auto M = local_maxwellian(g, cf);
    Vec3 mc{lev.mom[0][c], lev.mom[1][c], lev.mom[2][c]};
    const HydroCoords hc = recover_coords(g, cf, lev.sig[c], mc, lev.en[c]);
    double* out = F.cell(c);
    const double* mi = micro ? micro->cell(c) : nullptr;
    for (int a = 0; a < g.total; ++a) {
      const Vec3& v = g.v[a];
      double q = 0.0, lin = 0.0;
      for (int k = 0; k < dv; ++k) {
        q += sqr(v[k] - cf.u[k]);
        lin += hc.beta[k] * (v[k] - cf.u[k]);
      }
      double val = (hc.alpha + lin + hc.gamma * (q / RT - dv)) * M[a];
      if (mi) val += std::sqrt(M[a]) * mi[a];
      out[a] = val;
    }
  }
  return F;
}

/// Right-hand side of the conservative moment system of level n, with the
/// flux tensors integrated directly from the materialized coefficient and
/// the lower-level couplings supplied as (E_i + v x B_i) acting on F_j with
/// i + j = n, both at least one.
inline MacroLevel macro_rhs(const SGrid& s, const VGrid& g,
                            const FluidState& fs, const KineticState& Fn,
                            const MacroLevel& lev,
                            const std::vector<const MacroLevel*>& lowers) {
  const int nc = s.total, dv = g.dv;
  MacroLevel d;
  d.resize(nc);

  // moment fluxes: mom along each axis for sig, v_i v_ax for mom, |v|^2 v_ax
  // for en; spectral divergence.
  for (int ax = 0; ax < s.dx; ++ax) {
    std::vector<double> flux(nc);
    std::array<std::vector<double>, 3> fmom;
    std::vector<double> fen(nc);
    for (int k = 0; k < dv; ++k) fmom[k].assign(nc, 0.0);
    for (int c = 0; c < nc; ++c) {
      const double* F = Fn.cell(c);
      double f0 = 0.0, f2 = 0.0;
      Vec3 f1{0.0, 0.0, 0.0};
      for (int a = 0; a < g.total; ++a) {
        const Vec3& v = g.v[a];
        const double wv = g.w[a] * v[ax] * F[a];
        f0 += wv;
        double v2 = 0.0;
        for (int k = 0; k < dv; ++k) {
          f1[k] += wv * v[k];
          v2 += sqr(v[k]);
        }
        f2 += wv * v2;
      }
      flux[c] = f0;
      for (int k = 0; k < dv; ++k) fmom[k][c] = f1[k];
      fen[c] = f2;
    }
    auto dflux = spectral_deriv(s, flux, ax, 1);
    auto dfen = spectral_deriv(s, fen, ax, 1);
    for (int c = 0; c < nc; ++c) {
      d.sig[c] -= dflux[c];
      d.en[c] -= dfen[c];
    }
    for (int k = 0; k < dv; ++k) {
      auto dfm = spectral_deriv(s, fmom[k], ax, 1);
      for (int c = 0; c < nc; ++c) d.mom[k][c] -= dfm[c];
    }
  }

  // field couplings: the leading Maxwellian reacts to the level's fields,
  // the level reacts to the leading fields, and paired lower levels drive
  // each other.  All reduce to local moment products after integrating the
  // force terms by parts.
  std::vector<double> m0F0(nc);
  std::array<std::vector<double>, 3> m1F0;
  for (int k = 0; k < 3; ++k) m1F0[k].assign(nc, 0.0);
  {
    // discrete moments of the leading Maxwellian, cell by cell
    for (int c = 0; c < nc; ++c) {
      const CellFluid cf = cell_fluid(fs, c);
      const auto M = local_maxwellian(g, cf);
      double s0 = 0.0;
      Vec3 s1{0.0, 0.0, 0.0};
      for (int a = 0; a < g.total; ++a) {
        const double w = g.w[a] * M[a];
        s0 += w;
        for (int k = 0; k < dv; ++k) s1[k] += w * g.v[a][k];
      }
      m0F0[c] = s0;
      for (int k = 0; k < dv; ++k) m1F0[k][c] = s1[k];
    }
  }
  for (int c = 0; c < nc; ++c) {
    std::array<double, 3> m1c{m1F0[0][c], m1F0[1][c], m1F0[2][c]};
    std::array<double, 3> Bn{lev.B[0][c], lev.B[1][c], lev.B[2][c]};
    auto m1xBn = detail::cross_uB(dv, m1c, Bn);
    std::array<double, 3> mn{lev.mom[0][c], lev.mom[1][c], lev.mom[2][c]};
    std::array<double, 3> Bf{fs.B[0][c], fs.B[1][c], fs.B[2][c]};
    auto mnxB = detail::cross_uB(dv, mn, Bf);
    double eDotMom = 0.0, enDotM1 = 0.0;
    for (int k = 0; k < dv; ++k) {
      d.mom[k][c] -= m0F0[c] * lev.E[k][c] + m1xBn[k];
      d.mom[k][c] -= lev.sig[c] * fs.E[k][c] + mnxB[k];
      eDotMom += fs.E[k][c] * lev.mom[k][c];
      enDotM1 += lev.E[k][c] * m1F0[k][c];
    }
    d.en[c] -= 2.0 * (enDotM1 + eDotMom);
  }
  const int n = static_cast<int>(lowers.size()) + 1;
  for (int ip = 1; ip <= n - 1; ++ip) {
    const MacroLevel& Li = *lowers[ip - 1];
    const MacroLevel& Lj = *lowers[n - ip - 1];
    for (int c = 0; c < nc; ++c) {
      std::array<double, 3> mj{Lj.mom[0][c], Lj.mom[1][c], Lj.mom[2][c]};
      std::array<double, 3> Bi{Li.B[0][c], Li.B[1][c], Li.B[2][c]};
      auto mjxBi = detail::cross_uB(dv, mj, Bi);
      double acc = 0.0;
      for (int k = 0; k < dv; ++k) {
        d.mom[k][c] -= Lj.sig[c] * Li.E[k][c] + mjxBi[k];
        acc += Li.E[k][c] * Lj.mom[k][c];
      }
      d.en[c] -= 2.0 * acc;
    }
  }

  // the level's own Maxwell system
  add_curl_B(s, dv, lev.B, d.E);
  add_minus_curl_E(s, dv, lev.E, d.B);
  for (int k = 0; k < dv; ++k)
    for (int c = 0; c < nc; ++c)
      d.E[k][c] += 4.0 * M_PI * lev.mom[k][c];
  return d;
}

/// Conservative variables and Gauss-consistent field of a level prescribed
/// by physical coordinate fields; the electric field solves
/// div E = -4 pi sig with sig required mean-free, B starts at zero.
inline MacroLevel macro_init_from_coords(
    const SGrid& s, const VGrid& g, const FluidState& fs,
    const std::vector<double>& rho_n,
    const std::array<std::vector<double>, 3>& u_n,
    const std::vector<double>& T_n) {
  const int nc = s.total, dv = g.dv;
  MacroLevel lev;
  lev.resize(nc);
  for (int c = 0; c < nc; ++c) {
    const CellFluid cf = cell_fluid(fs, c);
    const double RT = gas_constant * cf.T;
    const auto M = local_maxwellian(g, cf);
    const double alpha = rho_n[c] / cf.rho;
    Vec3 beta{0.0, 0.0, 0.0};
    for (int k = 0; k < dv; ++k)
      beta[k] = u_n[k][c] / (gas_constant * cf.rho * cf.T);
    const double gamma = T_n[c] / (2.0 * dv * cf.rho);
    double s0 = 0.0, s2 = 0.0;
    Vec3 s1{0.0, 0.0, 0.0};
    for (int a = 0; a < g.total; ++a) {
      const Vec3& v = g.v[a];
      double q = 0.0, lin = 0.0, v2 = 0.0;
      for (int k = 0; k < dv; ++k) {
        q += sqr(v[k] - cf.u[k]);
        lin += beta[k] * (v[k] - cf.u[k]);
        v2 += sqr(v[k]);
      }
      const double val = (alpha + lin + gamma * (q / RT - dv)) * M[a];
      const double w = g.w[a] * val;
      s0 += w;
      for (int k = 0; k < dv; ++k) s1[k] += w * v[k];
      s2 += w * v2;
    }
    lev.sig[c] = s0;
    for (int k = 0; k < dv; ++k) lev.mom[k][c] = s1[k];
    lev.en[c] = s2;
  }
  double mean = 0.0;
  for (int c = 0; c < nc; ++c) mean += lev.sig[c];
  require(std::abs(mean) / nc < 1e-10,
          "level init: density coordinate must be mean-free");
  std::vector<double> rhs(nc);
  for (int c = 0; c < nc; ++c) rhs[c] = -4.0 * M_PI * (lev.sig[c] - mean / nc);
  auto psi = poisson_solve(s, rhs);
  for (int ax = 0; ax < s.dx; ++ax) lev.E[ax] = spectral_deriv(s, psi, ax, 1);
  return lev;
}

// ---------------------------------------------------------------------------
// Cascade state: the leading fluid and the first-order level advanced
// jointly by classical RK4, with the micro part resolved at every stage from
// frozen per-cell factors and a fresh projection.
// ---------------------------------------------------------------------------

struct HilbertConfig {
  double reject_tol = 1e-6;  // hydrodynamic-residue bound for micro solves
  double dt_macro = 5e-4;    // joint RK4 step
  double stab_coef = 1.0;    // dense-assembly stabilization (landau)
};

struct HilbertState {
  SGrid s;
  VGrid g;
  CollisionCtx ctx;
  HilbertConfig cfg;
  double t = 0.0;
  FluidState fluid;
  GlobalRef ref;
  MacroLevel m1;
  std::vector<CellSolver> solvers;
  double worst_frac = 0.0;  // largest hydrodynamic residue seen
};

inline void refresh_micro_factors(HilbertState& st) {
  st.solvers.clear();
  st.solvers.reserve(st.s.total);
  for (int c = 0; c < st.s.total; ++c)
    st.solvers.push_back(make_cell_solver(
        st.g, st.ctx, cell_fluid(st.fluid, c), st.cfg.stab_coef));
}

inline HilbertState make_hilbert(const SGrid& s, const VGrid& g,
                                 const CollisionSpec& spec,
                                 const HilbertConfig& cfg,
                                 const FluidState& fluid0,
                                 const MacroLevel* m1_init = nullptr) {
  require(cfg.dt_macro > 0.0, "cascade: dt must be positive");
  HilbertState st;
  st.s = s;
  st.g = g;
  st.ctx = make_collision_ctx(g, spec);
  st.cfg = cfg;
  st.fluid = fluid0;
  st.ref = select_Tc(g, fluid0, 2.0);
  if (m1_init)
    st.m1 = *m1_init;
  else
    st.m1.resize(s.total);
  refresh_micro_factors(st);
  return st;
}

/// Micro part at an arbitrary stage state, using the frozen factors.
inline KineticState stage_micro(const HilbertState& st, const FluidState& fs,
                                const FluidDeriv& dd, double* worst = nullptr) {
  KineticState micro = make_state(Rep::remainder_f, st.s.total, st.g.total);
  const FluidGrad gr = fluid_gradients(st.s, fs);
  double w = 0.0;
  for (int c = 0; c < st.s.total; ++c) {
    Projector fresh = build_projector(st.g, cell_fluid(fs, c));
    auto rhs = micro_rhs_level1(st.s, st.g, fs, dd, gr, c);
    double frac = 0.0;
    auto m = cell_micro_solve(st.g, st.solvers[c], fresh, rhs,
                              st.cfg.reject_tol, &frac);
    w = std::max(w, frac);
    std::copy(m.begin(), m.end(), micro.cell(c));
  }
  if (worst) *worst = w;
  return micro;
}

namespace detail {

struct JointDeriv {
  FluidDeriv df;
  MacroLevel dm;
};

inline JointDeriv joint_rhs(const HilbertState& st, const FluidState& fs,
                            const MacroLevel& m1, double* worst) {
  JointDeriv jd;
  jd.df = fluid_time_derivative(st.s, fs);
  KineticState micro = stage_micro(st, fs, jd.df, worst);
  KineticState F1 = materialize_level(st.s, st.g, fs, m1, &micro);
  jd.dm = macro_rhs(st.s, st.g, fs, F1, m1, {});
  return jd;
}

}  // namespace detail

/// One joint RK4 step of (fluid, level one).
inline void hilbert_step(HilbertState& st, double dt) {
  double w = 0.0, wmax = 0.0;
  auto eval = [&](const FluidState& fs, const MacroLevel& m1) {
    auto jd = detail::joint_rhs(st, fs, m1, &w);
    wmax = std::max(wmax, w);
    return jd;
  };
  const auto k1 = eval(st.fluid, st.m1);
  FluidState f2 = st.fluid;
  MacroLevel m2 = st.m1;
  fluid_add_scaled(f2, k1.df, 0.5 * dt);
  macro_add_scaled(m2, k1.dm, 0.5 * dt);
  const auto k2 = eval(f2, m2);
  FluidState f3 = st.fluid;
  MacroLevel m3 = st.m1;
  fluid_add_scaled(f3, k2.df, 0.5 * dt);
  macro_add_scaled(m3, k2.dm, 0.5 * dt);
  const auto k3 = eval(f3, m3);
  FluidState f4 = st.fluid;
  MacroLevel m4 = st.m1;
  fluid_add_scaled(f4, k3.df, dt);
  macro_add_scaled(m4, k3.dm, dt);
  const auto k4 = eval(f4, m4);
  const double c1 = dt / 6.0, c2 = dt / 3.0;
  fluid_add_scaled(st.fluid, k1.df, c1);
  fluid_add_scaled(st.fluid, k2.df, c2);
  fluid_add_scaled(st.fluid, k3.df, c2);
  fluid_add_scaled(st.fluid, k4.df, c1);
  macro_add_scaled(st.m1, k1.dm, c1);
  macro_add_scaled(st.m1, k2.dm, c2);
  macro_add_scaled(st.m1, k3.dm, c2);
  macro_add_scaled(st.m1, k4.dm, c1);
  st.t += dt;
  st.worst_frac = std::max(st.worst_frac, wmax);
}

/// Advance to t_target with the configured step, shortening the last one.
inline void advance_hilbert(HilbertState& st, double t_target) {
  require(t_target >= st.t - 1e-15, "cascade: cannot advance backwards");
  while (st.t < t_target - 1e-13) {
    const double dt = std::min(st.cfg.dt_macro, t_target - st.t);
    hilbert_step(st, dt);
  }
  st.t = t_target;
}

// ---------------------------------------------------------------------------
// Materialized expansion coefficients.
// ---------------------------------------------------------------------------

struct ExpansionCoeff {
  std::vector<double> rho_n, T_n;
  std::array<std::vector<double>, 3> u_n, E_n, B_n;
  KineticState F;
};

struct ExpansionSet {
  int k_trunc = 1;
  SGrid s;
  VGrid g;
  double t = 0.0;
  FluidState fluid;
  GlobalRef ref;
  KineticState F0;
  std::vector<ExpansionCoeff> coeff;  // level n stored at coeff[n-1]
};

/// Materialize a coefficient level from its conservative variables and an
/// optional micro part.
inline ExpansionCoeff make_coeff(const SGrid& s, const VGrid& g,
                                 const FluidState& fs, const MacroLevel& lev,
                                 const KineticState* micro) {
  ExpansionCoeff co;
  co.F = materialize_level(s, g, fs, lev, micro);
  co.rho_n.resize(s.total);
  co.T_n.resize(s.total);
  for (int k = 0; k < 3; ++k) {
    co.u_n[k].assign(s.total, 0.0);
    co.E_n[k] = lev.E[k];
    co.B_n[k] = lev.B[k];
  }
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(fs, c);
    Vec3 mc{lev.mom[0][c], lev.mom[1][c], lev.mom[2][c]};
    const HydroCoords hc = recover_coords(g, cf, lev.sig[c], mc, lev.en[c]);
    co.rho_n[c] = hc.alpha * cf.rho;
    for (int k = 0; k < g.dv; ++k)
      co.u_n[k][c] = hc.beta[k] * gas_constant * cf.rho * cf.T;
    co.T_n[c] = hc.gamma * 2.0 * g.dv * cf.rho;
  }
  return co;
}

/// Snapshot of the cascade at its current time as a materialized expansion.
inline ExpansionSet expansion_at(const HilbertState& st) {
  ExpansionSet set;
  set.k_trunc = 1;
  set.s = st.s;
  set.g = st.g;
  set.t = st.t;
  set.fluid = st.fluid;
  set.ref = st.ref;
  set.F0 = make_state(Rep::full_F, st.s.total, st.g.total);
  for (int c = 0; c < st.s.total; ++c) {
    const auto M = local_maxwellian(st.g, cell_fluid(st.fluid, c));
    std::copy(M.begin(), M.end(), set.F0.cell(c));
  }
  const FluidDeriv dd = fluid_time_derivative(st.s, st.fluid);
  const KineticState micro = stage_micro(st, st.fluid, dd);
  set.coeff.push_back(make_coeff(st.s, st.g, st.fluid, st.m1, &micro));
  return set;
}

/// Advance through the given nondecreasing times, materializing a snapshot
/// at each.
inline std::vector<ExpansionSet> hilbert_slices(HilbertState& st,
                                                const std::vector<double>& ts) {
  std::vector<ExpansionSet> out;
  out.reserve(ts.size());
  for (double t : ts) {
    advance_hilbert(st, t);
    out.push_back(expansion_at(st));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly of the truncated expansion, the higher-order source, and the
// residual of the full kinetic system.
// ---------------------------------------------------------------------------

struct AssembledFields {
  KineticState F;
  std::array<std::vector<double>, 3> E, B;
};

/// Sum of the coefficients with the remainder slot zero: F0 plus eps^n F_n,
/// and the matching field sums.
inline AssembledFields assemble_expansion(const ExpansionSet& set,
                                          double eps) {
  AssembledFields A;
  A.F = set.F0;
  for (int k = 0; k < 3; ++k) {
    A.E[k] = set.fluid.E[k];
    A.B[k] = set.fluid.B[k];
  }
  double p = 1.0;
  for (int n = 1; n <= set.k_trunc; ++n) {
    p *= eps;
    const ExpansionCoeff& co = set.coeff[n - 1];
    for (size_t i = 0; i < A.F.vals.size(); ++i)
      A.F.vals[i] += p * co.F.vals[i];
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < set.s.total; ++c) {
        A.E[k][c] += p * co.E_n[k][c];
        A.B[k][c] += p * co.B_n[k][c];
      }
  }
  return A;
}

struct QSource {
  KineticState Q;   // kinetic normalization
  KineticState Q0;  // divided by sqrt of the local Maxwellian
  KineticState Q1;  // divided by sqrt of the global reference
};

/// Higher-order source carrying every truncation tail term: collision pairs
/// with i + j >= 2k + 1 and field-force pairs with i + j >= 2k, all indices
/// between 1 and min(2k - 1, k_trunc).  The collision-pair constraint forces
/// both indices to be at least 2.
inline QSource assemble_Q(const CollisionCtx& ctx, const ExpansionSet& set,
                          double eps, int k) {
  require(k >= 1, "source assembly: k must be at least 1");
  const SGrid& s = set.s;
  const VGrid& g = set.g;
  const int top = std::min(2 * k - 1, set.k_trunc);
  QSource qs;
  qs.Q = make_state(Rep::full_F, s.total, g.total);
  std::vector<double> scratch;
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(set.fluid, c);
    const DerivWeight wt = maxwellian_weight(g, cf);
    double* out = qs.Q.cell(c);
    for (int i = 1; i <= top; ++i)
      for (int j = 1; j <= top; ++j) {
        const ExpansionCoeff& ci = set.coeff[i - 1];
        const ExpansionCoeff& cj = set.coeff[j - 1];
        if (i >= 2 && j >= 2 && i + j >= 2 * k + 1) {
          const double p = std::pow(eps, i + j - 2 * k - 1);
          std::vector<double> Fi(ci.F.cell(c), ci.F.cell(c) + g.total);
          std::vector<double> Fj(cj.F.cell(c), cj.F.cell(c) + g.total);
          auto C = collision_bilinear(g, ctx, cf, Fi, Fj);
          for (int a = 0; a < g.total; ++a) out[a] += p * C[a];
        }
        if (i + j >= 2 * k) {
          const double p = std::pow(eps, i + j - 2 * k);
          std::array<std::vector<double>, 3> DF;
          for (int d = 0; d < g.dv; ++d) {
            DF[d].resize(g.total);
            deriv_weighted(g, ctx.st, d, wt, cj.F.cell(c), DF[d].data(),
                           scratch);
          }
          std::array<double, 3> Bi{ci.B_n[0][c], ci.B_n[1][c], ci.B_n[2][c]};
          for (int a = 0; a < g.total; ++a) {
            std::array<double, 3> vv{g.v[a][0], g.v[a][1], g.v[a][2]};
            auto vxB = detail::cross_uB(g.dv, vv, Bi);
            double acc = 0.0;
            for (int d = 0; d < g.dv; ++d)
              acc += (ci.E_n[d][c] + vxB[d]) * DF[d][a];
            out[a] += p * acc;
          }
        }
      }
  }
  qs.Q0 = make_state(Rep::remainder_f, s.total, g.total);
  qs.Q1 = make_state(Rep::remainder_h, s.total, g.total);
  for (int c = 0; c < s.total; ++c) {
    const auto M = local_maxwellian(g, cell_fluid(set.fluid, c));
    const double* q = qs.Q.cell(c);
    double* q0 = qs.Q0.cell(c);
    double* q1 = qs.Q1.cell(c);
    for (int a = 0; a < g.total; ++a) {
      q0[a] = M[a] > 1e-300 ? q[a] / std::sqrt(M[a]) : 0.0;
      const double mu = set.ref.mu[a];
      q1[a] = mu > 1e-300 ? q[a] / std::sqrt(mu) : 0.0;
    }
  }
  return qs;
}

struct ResidualNorms {
  double kinetic = 0.0;  // transport minus collision over eps
  double ampere = 0.0;
  double faraday = 0.0;
  double gauss_E = 0.0;
  double gauss_B = 0.0;
};

/// Residual of the full kinetic system at one time slice, with the time
/// derivatives of the assembled state supplied by the caller.  The velocity
/// derivative uses the Maxwellian-weighted stencil, exact on the leading
/// order, and the spatial transport is spectral.
inline ResidualNorms system_residual(
    const SGrid& s, const VGrid& g, const CollisionCtx& ctx,
    const FluidState& fs, double eps, const AssembledFields& A,
    const KineticState& dF, const std::array<std::vector<double>, 3>& dE,
    const std::array<std::vector<double>, 3>& dB) {
  require(eps > 0.0, "residual: eps must be positive");
  const int nc = s.total, dv = g.dv;
  const double vol = s.hx[0] * s.hx[1];
  ResidualNorms rn;

  // spectral x-derivatives of the distribution, one held node at a time
  std::array<std::vector<double>, 2> dxF;
  for (int ax = 0; ax < s.dx; ++ax) {
    dxF[ax].assign(static_cast<size_t>(nc) * g.total, 0.0);
    std::vector<double> fld(nc);
    for (int a = 0; a < g.total; ++a) {
      for (int c = 0; c < nc; ++c) fld[c] = A.F.cell(c)[a];
      auto der = spectral_deriv(s, fld, ax, 1);
      for (int c = 0; c < nc; ++c)
        dxF[ax][static_cast<size_t>(c) * g.total + a] = der[c];
    }
  }

  std::vector<double> scratch;
  for (int c = 0; c < nc; ++c) {
    const CellFluid cf = cell_fluid(fs, c);
    const DerivWeight wt = maxwellian_weight(g, cf);
    const double* F = A.F.cell(c);
    std::vector<double> Fc(F, F + g.total);
    auto C = collision_bilinear(g, ctx, cf, Fc, Fc);
    std::array<std::vector<double>, 3> DvF;
    for (int d = 0; d < dv; ++d) {
      DvF[d].resize(g.total);
      deriv_weighted(g, ctx.st, d, wt, F, DvF[d].data(), scratch);
    }
    std::array<double, 3> Ba{A.B[0][c], A.B[1][c], A.B[2][c]};
    double acc = 0.0;
    for (int a = 0; a < g.total; ++a) {
      double r = dF.cell(c)[a];
      for (int ax = 0; ax < s.dx; ++ax)
        r += g.v[a][ax] * dxF[ax][static_cast<size_t>(c) * g.total + a];
      std::array<double, 3> vv{g.v[a][0], g.v[a][1], g.v[a][2]};
      auto vxB = detail::cross_uB(dv, vv, Ba);
      for (int d = 0; d < dv; ++d)
        r -= (A.E[d][c] + vxB[d]) * DvF[d][a];
      r -= C[a] / eps;
      acc += g.w[a] * sqr(r);
    }
    rn.kinetic += vol * acc;
  }
  rn.kinetic = std::sqrt(rn.kinetic);

  // field residuals
  std::array<std::vector<double>, 3> curlB, mcurlE;
  for (int k = 0; k < 3; ++k) {
    curlB[k].assign(nc, 0.0);
    mcurlE[k].assign(nc, 0.0);
  }
  add_curl_B(s, dv, A.B, curlB);
  add_minus_curl_E(s, dv, A.E, mcurlE);
  double amp = 0.0, far = 0.0, gE = 0.0, gB = 0.0;
  std::vector<double> divE(nc, 0.0), divB(nc, 0.0), m0(nc, 0.0);
  for (int ax = 0; ax < s.dx; ++ax) {
    auto dEx = spectral_deriv(s, A.E[ax], ax, 1);
    for (int c = 0; c < nc; ++c) divE[c] += dEx[c];
    if (dv == 3) {
      auto dBx = spectral_deriv(s, A.B[ax], ax, 1);
      for (int c = 0; c < nc; ++c) divB[c] += dBx[c];
    }
  }
  for (int c = 0; c < nc; ++c) {
    const double* F = A.F.cell(c);
    double s0 = 0.0;
    Vec3 s1{0.0, 0.0, 0.0};
    for (int a = 0; a < g.total; ++a) {
      const double w = g.w[a] * F[a];
      s0 += w;
      for (int k = 0; k < dv; ++k) s1[k] += w * g.v[a][k];
    }
    m0[c] = s0;
    for (int k = 0; k < dv; ++k)
      amp += vol * sqr(dE[k][c] - curlB[k][c] - 4.0 * M_PI * s1[k]);
    const int nb = b_components(dv);
    for (int k = 0; k < nb; ++k)
      far += vol * sqr(dB[k][c] - mcurlE[k][c]);
    gE += vol * sqr(divE[c] - 4.0 * M_PI * (1.0 - m0[c]));
    gB += vol * sqr(divB[c]);
  }
  rn.ampere = std::sqrt(amp);
  rn.faraday = std::sqrt(far);
  rn.gauss_E = std::sqrt(gE);
  rn.gauss_B = std::sqrt(gB);
  return rn;
}

/// Per-level constraint residuals: div E_n + 4 pi <F_n> and div B_n, both in
/// the cell-averaged two-norm.
struct LevelGauss {
  double gauss_E = 0.0;
  double gauss_B = 0.0;
};

inline LevelGauss level_gauss_residual(const SGrid& s, const VGrid& g,
                                       const ExpansionCoeff& co) {
  const int nc = s.total;
  std::vector<double> divE(nc, 0.0), divB(nc, 0.0);
  for (int ax = 0; ax < s.dx; ++ax) {
    auto dEx = spectral_deriv(s, co.E_n[ax], ax, 1);
    for (int c = 0; c < nc; ++c) divE[c] += dEx[c];
    if (g.dv == 3) {
      auto dBx = spectral_deriv(s, co.B_n[ax], ax, 1);
      for (int c = 0; c < nc; ++c) divB[c] += dBx[c];
    }
  }
  const double vol = s.hx[0] * s.hx[1];
  LevelGauss lg;
  for (int c = 0; c < nc; ++c) {
    double s0 = 0.0;
    const double* F = co.F.cell(c);
    for (int a = 0; a < g.total; ++a) s0 += g.w[a] * F[a];
    lg.gauss_E += vol * sqr(divE[c] + 4.0 * M_PI * s0);
    lg.gauss_B += vol * sqr(divB[c]);
  }
  lg.gauss_E = std::sqrt(lg.gauss_E);
  lg.gauss_B = std::sqrt(lg.gauss_B);
  return lg;
}

}  // namespace hkin

#endif
