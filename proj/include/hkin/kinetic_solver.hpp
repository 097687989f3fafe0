#ifndef HKIN_KINETIC_SOLVER_HPP
#define HKIN_KINETIC_SOLVER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "hkin/conservation.hpp"
#include "hkin/diagnostics.hpp"
#include "hkin/hilbert.hpp"

namespace hkin {

// ---------------------------------------------------------------------------
// Stiff IMEX integrator for the scaled kinetic system.  Three unknowns are
// supported: the full distribution F with its self-consistent fields, and
// the two remainder normalizations f = (F - sum) / sqrt(M) and
// h = (F - sum) / sqrt(mu), each coupled to the remainder fields and driven
// by a stored expansion trajectory.  Transport and forces are explicit
// (two-stage, second order); the linearized collision operator is implicit
// per cell with the quadratic part applied as a lagged explicit correction.
// ---------------------------------------------------------------------------

enum class RunMode { full_F, remainder_f, remainder_h };

struct RunConfig {
  double eps = 0.1;
  double kappa = default_kappa;
  int k = 1;       // remainder scaling order: F = sum + eps^k sqrt(M) f
  double dt = 1e-3;
  double t_end = 0.1;
  RunMode mode = RunMode::full_F;
  CollisionSpec collision;
  int n_refresh = 5;       // implicit-factor reuse cadence, in steps
  bool collisionless = false;
  bool horizon_override = false;
  int diag_every = 0;      // energy rows every so many steps (remainder runs)
  bool tripwire = true;    // abort when the energy leaves its a priori envelope

  void validate() const {
    require(eps > 0.0, "run: eps must be positive");
    require(kappa > 0.0, "run: kappa must be positive");
    require(k >= 1, "run: remainder order must be at least 1");
    require(dt > 0.0, "run: dt must be positive");
    require(t_end >= 0.0, "run: t_end must be nonnegative");
    require(n_refresh >= 1, "run: refresh cadence must be at least 1");
    if (!horizon_override)
      require(t_end <= std::pow(eps, -kappa) * (1.0 + 1e-12),
              "run horizon exceeds eps^{-kappa}; set horizon_override to "
              "proceed anyway");
  }
};

// ---------------------------------------------------------------------------
// Expansion trajectory with time interpolation.  Remainder runs need the
// coefficients, fluid, and fields at arbitrary times; stored slices are
// blended with a four-point Lagrange cubic (degrading to the available
// order near the ends or with fewer slices), and the leading Maxwellian is
// rebuilt from the blended fluid so the local frame stays exactly Gaussian.
// ---------------------------------------------------------------------------

struct ExpansionTrack {
  std::vector<ExpansionSet> sets;  // strictly increasing times
};

inline ExpansionTrack make_track(std::vector<ExpansionSet> sets) {
  require(!sets.empty(), "track: need at least one slice");
  for (size_t i = 1; i < sets.size(); ++i) {
    require(sets[i].t > sets[i - 1].t, "track: slice times must increase");
    require(sets[i].k_trunc == sets[0].k_trunc &&
                sets[i].s.total == sets[0].s.total &&
                sets[i].g.total == sets[0].g.total,
            "track: slices disagree on shape");
  }
  ExpansionTrack tr;
  tr.sets = std::move(sets);
  return tr;
}

inline ExpansionSet track_at(const ExpansionTrack& tr, double t) {
  const int n = static_cast<int>(tr.sets.size());
  require(n >= 1, "track: no slices stored");
  const double ta = tr.sets.front().t, tb = tr.sets.back().t;
  const double slack = 1e-9 * (1.0 + std::abs(tb));
  require(t >= ta - slack && t <= tb + slack,
          "track: requested time outside the stored range");
  if (n == 1) {
    ExpansionSet out = tr.sets[0];
    out.t = t;
    return out;
  }
  int i1 = 0;
  while (i1 + 1 < n && tr.sets[i1 + 1].t <= t) ++i1;
  const int m = std::min(4, n);
  const int lo = std::clamp(i1 - 1, 0, n - m);
  std::array<double, 4> wt{};
  for (int j = 0; j < m; ++j) {
    double w = 1.0;
    for (int l = 0; l < m; ++l)
      if (l != j)
        w *= (t - tr.sets[lo + l].t) / (tr.sets[lo + j].t - tr.sets[lo + l].t);
    wt[j] = w;
  }
  ExpansionSet out = tr.sets[lo];
  out.t = t;
  auto blend = [&](std::vector<double>& dst, auto&& get) {
    std::fill(dst.begin(), dst.end(), 0.0);
    for (int j = 0; j < m; ++j) {
      const std::vector<double>& src = get(tr.sets[lo + j]);
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += wt[j] * src[i];
    }
  };
  blend(out.fluid.rho,
        [](const ExpansionSet& e) -> const auto& { return e.fluid.rho; });
  blend(out.fluid.T,
        [](const ExpansionSet& e) -> const auto& { return e.fluid.T; });
  for (int d = 0; d < 3; ++d) {
    blend(out.fluid.u[d],
          [d](const ExpansionSet& e) -> const auto& { return e.fluid.u[d]; });
    blend(out.fluid.E[d],
          [d](const ExpansionSet& e) -> const auto& { return e.fluid.E[d]; });
    blend(out.fluid.B[d],
          [d](const ExpansionSet& e) -> const auto& { return e.fluid.B[d]; });
  }
  for (int lev = 0; lev < out.k_trunc; ++lev) {
    blend(out.coeff[lev].rho_n, [lev](const ExpansionSet& e) -> const auto& {
      return e.coeff[lev].rho_n;
    });
    blend(out.coeff[lev].T_n, [lev](const ExpansionSet& e) -> const auto& {
      return e.coeff[lev].T_n;
    });
    for (int d = 0; d < 3; ++d) {
      blend(out.coeff[lev].u_n[d],
            [lev, d](const ExpansionSet& e) -> const auto& {
              return e.coeff[lev].u_n[d];
            });
      blend(out.coeff[lev].E_n[d],
            [lev, d](const ExpansionSet& e) -> const auto& {
              return e.coeff[lev].E_n[d];
            });
      blend(out.coeff[lev].B_n[d],
            [lev, d](const ExpansionSet& e) -> const auto& {
              return e.coeff[lev].B_n[d];
            });
    }
    blend(out.coeff[lev].F.vals, [lev](const ExpansionSet& e) -> const auto& {
      return e.coeff[lev].F.vals;
    });
  }
  for (int c = 0; c < out.s.total; ++c) {
    const auto M = local_maxwellian(out.g, cell_fluid(out.fluid, c));
    std::copy(M.begin(), M.end(), out.F0.cell(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Explicit building blocks.
// ---------------------------------------------------------------------------

namespace detail {

/// out += -v . grad_x F, second-order upwind-biased difference per axis,
/// periodic.  The biased stencil's coefficients sum to zero along each ring
/// of cells, so the total of F over space is conserved exactly.
inline void add_transport(const SGrid& s, const VGrid& g,
                          const KineticState& F, KineticState& out) {
  const int n0 = s.nx[0], n1 = s.nx[1];
  const int nn = g.total;
  for (int ax = 0; ax < s.dx; ++ax) {
    const double c2 = 1.0 / (2.0 * s.hx[ax]);
    const int na = ax == 0 ? n0 : n1;
    for (int i1 = 0; i1 < n1; ++i1)
      for (int i0 = 0; i0 < n0; ++i0) {
        const int c = s.index(i0, i1);
        auto nb = [&](int shift) {
          const int j = ((ax == 0 ? i0 : i1) + shift + 2 * na) % na;
          return ax == 0 ? s.index(j, i1) : s.index(i0, j);
        };
        const double* Fc = F.cell(c);
        const double* Fm1 = F.cell(nb(-1));
        const double* Fm2 = F.cell(nb(-2));
        const double* Fp1 = F.cell(nb(+1));
        const double* Fp2 = F.cell(nb(+2));
        double* oc = out.cell(c);
        for (int a = 0; a < nn; ++a) {
          const double vd = g.v[a][ax];
          if (vd == 0.0) continue;
          const double der =
              vd > 0.0 ? 3.0 * Fc[a] - 4.0 * Fm1[a] + Fm2[a]
                       : -3.0 * Fc[a] + 4.0 * Fp1[a] - Fp2[a];
          oc[a] -= c2 * vd * der;
        }
      }
  }
}

/// out += sc * div_v(a F) on one cell, with a_d = E_d + (v x B)_d
/// divergence-free in v.  Conservative fourth-order central flux with zero
/// exterior values: the interior difference reduces to the five-point
/// fourth-order derivative, and the flux telescope leaves the cell's
/// velocity total untouched up to the (Gaussian-small) edge fluxes.
inline void add_v_divflux(const VGrid& g, const std::array<double, 3>& E,
                          const std::array<double, 3>& B, const double* F,
                          double sc, double* out) {
  const int nv = g.nv;
  const int nlines = g.total / nv;
  std::vector<double> G(nv);
  for (int d = 0; d < g.dv; ++d) {
    const int stride = g.stride(d);
    const double ch = sc / (12.0 * g.h);
    for (int line = 0; line < nlines; ++line) {
      int base = 0;
      int rem = line;
      int mult = 1;
      for (int k = 0; k < g.dv; ++k) {
        if (k == d) {
          mult *= nv;
          continue;
        }
        base += (rem % nv) * mult;
        rem /= nv;
        mult *= nv;
      }
      for (int i = 0; i < nv; ++i) {
        const int a = base + i * stride;
        const std::array<double, 3> vv{g.v[a][0], g.v[a][1], g.v[a][2]};
        const auto vxB = cross_uB(g.dv, vv, B);
        G[i] = (E[d] + vxB[d]) * F[a];
      }
      auto Gat = [&](int j) { return (j >= 0 && j < nv) ? G[j] : 0.0; };
      for (int i = 0; i < nv; ++i) {
        const double up =
            -Gat(i - 1) + 7.0 * (Gat(i) + Gat(i + 1)) - Gat(i + 2);
        const double dn =
            -Gat(i - 2) + 7.0 * (Gat(i - 1) + Gat(i)) - Gat(i + 1);
        out[base + i * stride] += ch * (up - dn);
      }
    }
  }
}

}  // namespace detail

struct StateRHS {
  KineticState dF;
  std::array<std::vector<double>, 3> dE, dB;
};

inline StateRHS make_rhs(Rep rep, const SGrid& s, const VGrid& g) {
  StateRHS r;
  r.dF = make_state(rep, s.total, g.total);
  for (int d = 0; d < 3; ++d) {
    r.dE[d].assign(s.total, 0.0);
    r.dB[d].assign(s.total, 0.0);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Run state.
// ---------------------------------------------------------------------------

struct KineticRun {
  RunConfig cfg;
  SGrid s;
  VGrid g;
  CollisionCtx ctx;
  KineticState F;                           // evolved kinetic unknown
  std::array<std::vector<double>, 3> E, B;  // full or remainder fields
  ExpansionTrack track;                     // remainder modes only
  GlobalRef ref;                            // remainder modes only
  std::vector<double> sqmu;                 // sqrt of the reference Maxwellian
  double t = 0.0;
  long step_count = 0;

  // implicit collision stage cache (frames, operators, factorizations)
  std::vector<CellFluid> iframe;
  std::vector<std::vector<double>> isqM;
  std::vector<DenseCollision> iop;
  std::vector<ImplicitFactor> ifac;
  double ifac_alpha = -1.0;
  long iframe_step = -1;

  // monitors
  double mass0 = 0.0;
  std::array<double, 3> mom0{};
  double energy0 = 0.0;
  double diag_E0 = -1.0;
  std::vector<std::array<double, 2>> energy_rows;  // (t, weighted energy)
};

struct PositivityReport {
  double min_value = 0.0;
  double neg_fraction = 0.0;
  double most_negative = 0.0;  // magnitude of the deepest undershoot
};

/// Scan of a state: values are reported, never clipped.  An empty run hands
/// back whatever state it was initialized with.
inline PositivityReport positivity_monitor(const KineticState& F) {
  PositivityReport rep;
  if (F.vals.empty()) return rep;
  double mn = F.vals[0];
  size_t nneg = 0;
  for (double v : F.vals) {
    mn = std::min(mn, v);
    if (v < 0.0) ++nneg;
  }
  rep.min_value = mn;
  rep.neg_fraction = static_cast<double>(nneg) / F.vals.size();
  rep.most_negative = mn < 0.0 ? -mn : 0.0;
  return rep;
}

struct BudgetTotals {
  double mass = 0.0;
  std::array<double, 3> momentum{};  // kinetic plus field
  double energy = 0.0;               // kinetic plus field
};

/// Conserved totals of a full-distribution run: mass, momentum with the
/// field contribution E x B / 4 pi, and energy with (|E|^2 + |B|^2) / 8 pi.
inline BudgetTotals kinetic_budget(const SGrid& s, const VGrid& g,
                                   const KineticState& F,
                                   const std::array<std::vector<double>, 3>& E,
                                   const std::array<std::vector<double>, 3>& B) {
  require(F.rep == Rep::full_F, "budget: expects the full distribution");
  const double vol = s.hx[0] * s.hx[1];
  BudgetTotals bt;
  for (int c = 0; c < s.total; ++c) {
    const double* Fc = F.cell(c);
    for (int a = 0; a < g.total; ++a) {
      const double wF = g.w[a] * Fc[a];
      bt.mass += vol * wF;
      double q = 0.0;
      for (int d = 0; d < g.dv; ++d) {
        bt.momentum[d] += vol * wF * g.v[a][d];
        q += sqr(g.v[a][d]);
      }
      bt.energy += vol * 0.5 * q * wF;
    }
    const std::array<double, 3> Ec{E[0][c], E[1][c], E[2][c]};
    const std::array<double, 3> Bc{B[0][c], B[1][c], B[2][c]};
    const auto ExB = detail::cross_uB(g.dv, Ec, Bc);
    double e2 = 0.0, b2 = 0.0;
    for (int d = 0; d < g.dv; ++d) e2 += sqr(Ec[d]);
    for (int d = 0; d < b_components(g.dv); ++d) b2 += sqr(Bc[d]);
    bt.energy += vol * (e2 + b2) / (8.0 * M_PI);
    for (int d = 0; d < 3; ++d)
      bt.momentum[d] += vol * ExB[d] / (4.0 * M_PI);
  }
  return bt;
}

// ---------------------------------------------------------------------------
// Explicit right-hand sides.
// ---------------------------------------------------------------------------

/// Transport, force advection, and Maxwell coupling of the full system:
///   d_t F = -v . grad_x F + (E + v x B) . grad_v F
///   d_t E =  curl B + 4 pi int v F dv,   d_t B = -curl E.
inline StateRHS explicit_rhs_fullF(const KineticRun& run,
                                   const KineticState& F,
                                   const std::array<std::vector<double>, 3>& E,
                                   const std::array<std::vector<double>, 3>& B) {
  const SGrid& s = run.s;
  const VGrid& g = run.g;
  StateRHS r = make_rhs(Rep::full_F, s, g);
  detail::add_transport(s, g, F, r.dF);
  for (int c = 0; c < s.total; ++c) {
    const std::array<double, 3> Ec{E[0][c], E[1][c], E[2][c]};
    const std::array<double, 3> Bc{B[0][c], B[1][c], B[2][c]};
    detail::add_v_divflux(g, Ec, Bc, F.cell(c), 1.0, r.dF.cell(c));
    const double* Fc = F.cell(c);
    for (int d = 0; d < g.dv; ++d) {
      double j = 0.0;
      for (int a = 0; a < g.total; ++a) j += g.w[a] * g.v[a][d] * Fc[a];
      r.dE[d][c] = 4.0 * M_PI * j;
    }
  }
  add_curl_B(s, g.dv, B, r.dE);
  add_minus_curl_E(s, g.dv, E, r.dB);
  return r;
}

/// Every coupling of the remainder system in the requested frame.  The
/// expansion data is interpolated from the stored trajectory at the stage
/// time; empty coupling ranges fall out of the loops rather than being
/// special-cased, so nothing is dropped silently when k grows.
inline StateRHS explicit_rhs_remainder(
    const KineticRun& run, const KineticState& rF,
    const std::array<std::vector<double>, 3>& ER,
    const std::array<std::vector<double>, 3>& BR, double tq) {
  const SGrid& s = run.s;
  const VGrid& g = run.g;
  const RunConfig& cfg = run.cfg;
  const bool hframe = cfg.mode == RunMode::remainder_h;
  const double eps = cfg.eps;
  const int top = 2 * cfg.k - 1;  // highest coupled level, present by contract
  const double epsk = std::pow(eps, cfg.k);
  const double RTc = gas_constant * run.ref.Tc;
  const ExpansionSet set = track_at(run.track, tq);
  const QSource qs = assemble_Q(run.ctx, set, eps, cfg.k);
  const FluidDeriv fd = fluid_time_derivative(s, set.fluid);

  // spatial fluid gradients for the local-frame transport multiplier
  std::array<std::vector<double>, 2> gr_rho, gr_T;
  std::array<std::array<std::vector<double>, 3>, 2> gr_u;
  if (!hframe)
    for (int ax = 0; ax < s.dx; ++ax) {
      gr_rho[ax] = spectral_deriv(s, set.fluid.rho, ax, 1);
      gr_T[ax] = spectral_deriv(s, set.fluid.T, ax, 1);
      for (int kdim = 0; kdim < g.dv; ++kdim)
        gr_u[ax][kdim] = spectral_deriv(s, set.fluid.u[kdim], ax, 1);
    }

  StateRHS r = make_rhs(rF.rep, s, g);
  detail::add_transport(s, g, rF, r.dF);

  const CellFluid muf{1.0, {0.0, 0.0, 0.0}, run.ref.Tc};
  std::vector<double> scratch;
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(set.fluid, c);
    const double RTl = gas_constant * cf.T;
    const auto M = local_maxwellian(g, cf);
    std::vector<double> sqM(g.total);
    for (int a = 0; a < g.total; ++a) sqM[a] = std::sqrt(M[a]);
    const std::vector<double>& wdiv = hframe ? run.sqmu : sqM;

    // fields assembled through the coupled levels plus the scaled remainder
    std::array<double, 3> Ee{}, Be{}, E0{}, B0{};
    for (int d = 0; d < 3; ++d) {
      E0[d] = set.fluid.E[d][c];
      B0[d] = set.fluid.B[d][c];
      Ee[d] = E0[d];
      Be[d] = B0[d];
    }
    double p = 1.0;
    for (int n = 1; n <= top; ++n) {
      p *= eps;
      for (int d = 0; d < 3; ++d) {
        Ee[d] += p * set.coeff[n - 1].E_n[d][c];
        Be[d] += p * set.coeff[n - 1].B_n[d][c];
      }
    }
    const std::array<double, 3> ERc{ER[0][c], ER[1][c], ER[2][c]};
    const std::array<double, 3> BRc{BR[0][c], BR[1][c], BR[2][c]};
    for (int d = 0; d < 3; ++d) {
      Ee[d] += epsk * ERc[d];
      Be[d] += epsk * BRc[d];
    }

    double* out = r.dF.cell(c);
    const double* fc = rF.cell(c);

    // conservative force advection with the assembled fields
    detail::add_v_divflux(g, Ee, Be, fc, 1.0, out);

    for (int a = 0; a < g.total; ++a) {
      const std::array<double, 3> vv{g.v[a][0], g.v[a][1], g.v[a][2]};

      // frame-weight multiplier with the assembled fields: the local frame
      // couples the full Lorentz force to (v - u) / 2RT, the global frame
      // only the electric part to v / 2RTc since (v x B) . v = 0
      if (hframe) {
        double acc = 0.0;
        for (int d = 0; d < g.dv; ++d) acc += Ee[d] * vv[d];
        out[a] -= acc / (2.0 * RTc) * fc[a];
      } else {
        const auto vxBe = detail::cross_uB(g.dv, vv, Be);
        double acc = 0.0;
        for (int d = 0; d < g.dv; ++d)
          acc += (Ee[d] + vxBe[d]) * (vv[d] - cf.u[d]);
        out[a] -= acc / (2.0 * RTl) * fc[a];
      }

      // remainder-field stretch against the local Maxwellian
      const auto vxBR = detail::cross_uB(g.dv, vv, BRc);
      double str = 0.0;
      for (int d = 0; d < g.dv; ++d)
        str += (ERc[d] + vxBR[d]) * (vv[d] - cf.u[d]);
      const double amp =
          hframe ? M[a] / std::max(run.sqmu[a], 1e-300) : sqM[a];
      out[a] -= str / RTl * amp;

      // local-frame transport multiplier:
      //   -(1/2) f [d_t + v . grad_x - (E0 + v x B0) . grad_v] ln M,
      // with the time derivative supplied by the fluid system itself
      if (!hframe) {
        double q = 0.0;
        for (int d = 0; d < g.dv; ++d) q += sqr(vv[d] - cf.u[d]);
        double At = fd.drho[c] / cf.rho - 0.5 * g.dv * fd.dT[c] / cf.T +
                    q * fd.dT[c] / (2.0 * RTl * cf.T);
        for (int d = 0; d < g.dv; ++d)
          At += (vv[d] - cf.u[d]) * fd.du[d][c] / RTl;
        double Ax = 0.0;
        for (int ax = 0; ax < s.dx; ++ax) {
          double lg = gr_rho[ax][c] / cf.rho - 0.5 * g.dv * gr_T[ax][c] / cf.T +
                      q * gr_T[ax][c] / (2.0 * RTl * cf.T);
          for (int d = 0; d < g.dv; ++d)
            lg += (vv[d] - cf.u[d]) * gr_u[ax][d][c] / RTl;
          Ax += vv[ax] * lg;
        }
        const auto vxB0 = detail::cross_uB(g.dv, vv, B0);
        double Af = 0.0;
        for (int d = 0; d < g.dv; ++d)
          Af += (E0[d] + vxB0[d]) * (vv[d] - cf.u[d]);
        out[a] -= 0.5 * fc[a] * (At + Ax + Af / RTl);
      }

      // truncation-tail source
      out[a] += epsk * (hframe ? qs.Q1 : qs.Q0).cell(c)[a];
    }

    if (!cfg.collisionless) {
      const CellFluid frame = hframe ? muf : cf;
      std::vector<double> Gv(g.total);
      for (int a = 0; a < g.total; ++a) Gv[a] = wdiv[a] * fc[a];

      // quadratic self-interaction at eps^{k-1}
      const double pk = std::pow(eps, cfg.k - 1);
      auto Cgg = collision_bilinear(g, run.ctx, frame, Gv, Gv);
      for (int a = 0; a < g.total; ++a)
        out[a] += pk * Cgg[a] / std::max(wdiv[a], 1e-300);

      // couplings to the expansion levels at eps^{n-1}
      double pn = 1.0;
      for (int n = 1; n <= top; ++n) {
        const double* Fn = set.coeff[n - 1].F.cell(c);
        std::vector<double> Fnv(Fn, Fn + g.total);
        auto C1 = collision_bilinear(g, run.ctx, frame, Fnv, Gv);
        auto C2 = collision_bilinear(g, run.ctx, frame, Gv, Fnv);
        for (int a = 0; a < g.total; ++a)
          out[a] += pn * (C1[a] + C2[a]) / std::max(wdiv[a], 1e-300);
        pn *= eps;
      }

      // global frame: the near-reference linear defect stays explicit
      if (hframe) {
        std::vector<double> Dv(g.total);
        for (int a = 0; a < g.total; ++a) Dv[a] = M[a] - run.ref.mu[a];
        auto C1 = collision_bilinear(g, run.ctx, frame, Dv, Gv);
        auto C2 = collision_bilinear(g, run.ctx, frame, Gv, Dv);
        for (int a = 0; a < g.total; ++a)
          out[a] += (C1[a] + C2[a]) / (eps * std::max(wdiv[a], 1e-300));
      }
    }

    // remainder fields driving the level derivatives at eps^n
    {
      const DerivWeight wt = maxwellian_weight(g, hframe ? muf : cf);
      std::array<std::vector<double>, 3> DF;
      double pn = eps;
      for (int n = 1; n <= top; ++n) {
        const double* Fn = set.coeff[n - 1].F.cell(c);
        for (int d = 0; d < g.dv; ++d) {
          DF[d].resize(g.total);
          deriv_weighted(g, run.ctx.st, d, wt, Fn, DF[d].data(), scratch);
        }
        for (int a = 0; a < g.total; ++a) {
          const std::array<double, 3> vv{g.v[a][0], g.v[a][1], g.v[a][2]};
          const auto vxBR = detail::cross_uB(g.dv, vv, BRc);
          double acc = 0.0;
          for (int d = 0; d < g.dv; ++d) acc += (ERc[d] + vxBR[d]) * DF[d][a];
          out[a] += pn * acc / std::max(wdiv[a], 1e-300);
        }
        pn *= eps;
      }
    }

    // remainder Maxwell source: 4 pi times the frame-weighted current
    for (int d = 0; d < g.dv; ++d) {
      double j = 0.0;
      for (int a = 0; a < g.total; ++a)
        j += g.w[a] * g.v[a][d] * wdiv[a] * fc[a];
      r.dE[d][c] = 4.0 * M_PI * j;
    }
  }
  add_curl_B(s, g.dv, BR, r.dE);
  add_minus_curl_E(s, g.dv, ER, r.dB);
  return r;
}

// ---------------------------------------------------------------------------
// Implicit collision stage.
// ---------------------------------------------------------------------------

/// Rebuild the per-cell relaxation frames and dense operators.  The frame is
/// the moment-matched Maxwellian of the current distribution (full runs),
/// the trajectory's local Maxwellian (local-frame remainder), or the single
/// global reference (global-frame remainder, one factor for every cell).
inline void refresh_implicit_frames(KineticRun& run) {
  const bool shared = run.cfg.mode == RunMode::remainder_h;
  const int nf = shared ? 1 : run.s.total;
  run.iframe.resize(nf);
  run.isqM.resize(nf);
  run.iop.resize(nf);
  FluidState traj_fluid;
  if (run.cfg.mode == RunMode::remainder_f)
    traj_fluid = track_at(run.track, run.t).fluid;
  for (int c = 0; c < nf; ++c) {
    CellFluid cf;
    if (shared)
      cf = CellFluid{1.0, {0.0, 0.0, 0.0}, run.ref.Tc};
    else if (run.cfg.mode == RunMode::remainder_f)
      cf = cell_fluid(traj_fluid, c);
    else
      cf = fit_maxwellian(run.g, run.F.cell(c));
    run.iframe[c] = cf;
    const auto M = local_maxwellian(run.g, cf);
    run.isqM[c].resize(run.g.total);
    for (int a = 0; a < run.g.total; ++a) run.isqM[c][a] = std::sqrt(M[a]);
    run.iop[c] = collision_dense(run.g, run.ctx, cf);
  }
  run.iframe_step = run.step_count;
  run.ifac_alpha = -1.0;  // force refactorization
}

inline void refresh_implicit_factors(KineticRun& run, double alpha) {
  run.ifac.resize(run.iop.size());
  for (size_t c = 0; c < run.iop.size(); ++c)
    run.ifac[c] = factor_implicit(run.iop[c], alpha);
  run.ifac_alpha = alpha;
}

/// One implicit relaxation of the collision stage over dt.  Full runs relax
/// the fluctuation around the frozen frame and restore exact moment
/// neutrality of the combined implicit-plus-quadratic increment; remainder
/// runs relax the remainder itself.
inline void implicit_collision_stage(KineticRun& run, double dt) {
  const VGrid& g = run.g;
  const double alpha = dt / run.cfg.eps;
  const bool full = run.cfg.mode == RunMode::full_F;
  if (run.iframe.empty() ||
      run.step_count - run.iframe_step >= run.cfg.n_refresh)
    refresh_implicit_frames(run);
  if (alpha != run.ifac_alpha) refresh_implicit_factors(run, alpha);
  std::vector<double> fstar(g.total), rhs(g.total), dC(g.total);
  for (int c = 0; c < run.s.total; ++c) {
    const int fi = run.cfg.mode == RunMode::remainder_h ? 0 : c;
    const auto& sqM = run.isqM[fi];
    double* Fc = run.F.cell(c);
    if (full) {
      std::vector<double> delta(g.total);
      for (int a = 0; a < g.total; ++a) {
        delta[a] = Fc[a] - sqM[a] * sqM[a];
        fstar[a] = delta[a] / std::max(sqM[a], 1e-300);
      }
      auto Cq = collision_bilinear(g, run.ctx, run.iframe[c], delta, delta);
      for (int a = 0; a < g.total; ++a)
        rhs[a] = fstar[a] + alpha * Cq[a] / std::max(sqM[a], 1e-300);
      const auto x = run.ifac[c].solve(rhs);
      for (int a = 0; a < g.total; ++a)
        dC[a] = sqM[a] * (x[a] - fstar[a]);
      conserve_collision(g, dC);
      for (int a = 0; a < g.total; ++a) Fc[a] += dC[a];
    } else {
      std::copy(Fc, Fc + g.total, rhs.begin());
      const auto x = run.ifac[fi].solve(rhs);
      std::copy(x.begin(), x.end(), Fc);
    }
  }
}

// ---------------------------------------------------------------------------
// Stepping.
// ---------------------------------------------------------------------------

inline void check_finite(const KineticRun& run) {
  double acc = 0.0;
  for (double v : run.F.vals) acc += v;
  for (int d = 0; d < 3; ++d)
    for (int c = 0; c < run.s.total; ++c) acc += run.E[d][c] + run.B[d][c];
  require(std::isfinite(acc), "kinetic state lost finiteness");
}

inline void append_energy_row(KineticRun& run) {
  if (run.cfg.diag_every <= 0 || run.cfg.mode == RunMode::full_F) return;
  if (run.step_count % run.cfg.diag_every != 0) return;
  const ExpansionSet set = track_at(run.track, run.t);
  KineticState f, h;
  if (run.cfg.mode == RunMode::remainder_f) {
    f = run.F;
    h = remainder_f_to_h(run.s, run.g, set.fluid, run.ref, run.F);
  } else {
    h = run.F;
    f = remainder_h_to_f(run.s, run.g, set.fluid, run.ref, run.F);
  }
  DiagSpec ds;
  ds.family = run.cfg.collision.family;
  ds.eps = run.cfg.eps;
  ds.kappa = run.cfg.kappa;
  ds.w.Tc = run.ref.Tc;
  const EnergyBreakdown eb = energy_functional(run.s, run.g, set.fluid,
                                               run.ctx.st, ds, run.t, f, h,
                                               run.E, run.B);
  if (run.diag_E0 < 0.0)
    run.diag_E0 = eb.total;
  else if (run.cfg.tripwire)
    energy_tripwire(eb.total, run.diag_E0, run.cfg.eps);
  run.energy_rows.push_back({run.t, eb.total});
}

/// One IMEX step of length dt: a two-stage explicit advance of transport,
/// forces, and fields, then the implicit collision relaxation.
inline void kinetic_step(KineticRun& run, double dt) {
  require(dt > 0.0, "step: dt must be positive");
  const bool full = run.cfg.mode == RunMode::full_F;
  auto rhs_at = [&](const KineticState& F,
                    const std::array<std::vector<double>, 3>& E,
                    const std::array<std::vector<double>, 3>& B, double tq) {
    return full ? explicit_rhs_fullF(run, F, E, B)
                : explicit_rhs_remainder(run, F, E, B, tq);
  };
  const StateRHS r1 = rhs_at(run.F, run.E, run.B, run.t);
  KineticState F1 = run.F;
  std::array<std::vector<double>, 3> E1 = run.E, B1 = run.B;
  for (size_t i = 0; i < F1.vals.size(); ++i)
    F1.vals[i] += dt * r1.dF.vals[i];
  for (int d = 0; d < 3; ++d)
    for (int c = 0; c < run.s.total; ++c) {
      E1[d][c] += dt * r1.dE[d][c];
      B1[d][c] += dt * r1.dB[d][c];
    }
  const StateRHS r2 = rhs_at(F1, E1, B1, run.t + dt);
  for (size_t i = 0; i < run.F.vals.size(); ++i)
    run.F.vals[i] += 0.5 * dt * (r1.dF.vals[i] + r2.dF.vals[i]);
  for (int d = 0; d < 3; ++d)
    for (int c = 0; c < run.s.total; ++c) {
      run.E[d][c] += 0.5 * dt * (r1.dE[d][c] + r2.dE[d][c]);
      run.B[d][c] += 0.5 * dt * (r1.dB[d][c] + r2.dB[d][c]);
    }
  if (!run.cfg.collisionless) implicit_collision_stage(run, dt);
  run.t += dt;
  run.F.t = run.t;
  ++run.step_count;
  check_finite(run);
  append_energy_row(run);
}

inline void run_to(KineticRun& run, double t_stop) {
  require(t_stop <= run.cfg.t_end * (1.0 + 1e-12) + 1e-15,
          "target time beyond the configured horizon");
  while (run.t < t_stop - 1e-12 * (1.0 + std::abs(t_stop))) {
    const double dt = std::min(run.cfg.dt, t_stop - run.t);
    kinetic_step(run, dt);
  }
}

inline void run_all(KineticRun& run) { run_to(run, run.cfg.t_end); }

// ---------------------------------------------------------------------------
// Construction.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_cfl(const RunConfig& cfg, const SGrid& s, const VGrid& g) {
  double vmax = 0.0;
  for (int a = 0; a < g.total; ++a)
    for (int d = 0; d < g.dv; ++d) vmax = std::max(vmax, std::abs(g.v[a][d]));
  double hmin = s.hx[0];
  if (s.dx == 2) hmin = std::min(hmin, s.hx[1]);
  require(cfg.dt * vmax / hmin <= 1.0 + 1e-12,
          "transport stability: dt times the fastest node speed exceeds one "
          "cell");
}

inline void check_fields(const SGrid& s,
                         const std::array<std::vector<double>, 3>& E,
                         const std::array<std::vector<double>, 3>& B) {
  for (int d = 0; d < 3; ++d)
    require(static_cast<int>(E[d].size()) == s.total &&
                static_cast<int>(B[d].size()) == s.total,
            "field arrays must hold one value per cell");
}

}  // namespace detail

inline KineticRun make_run_fullF(const RunConfig& cfg, const SGrid& s,
                                 const VGrid& g, const KineticState& F0,
                                 const std::array<std::vector<double>, 3>& E0,
                                 const std::array<std::vector<double>, 3>& B0) {
  cfg.validate();
  require(cfg.mode == RunMode::full_F, "full-distribution run expects the "
                                       "full mode");
  require(F0.rep == Rep::full_F && F0.ncells == s.total &&
              F0.nnodes == g.total,
          "initial state shape mismatch");
  detail::check_cfl(cfg, s, g);
  detail::check_fields(s, E0, B0);
  KineticRun run;
  run.cfg = cfg;
  run.s = s;
  run.g = g;
  run.ctx = make_collision_ctx(g, cfg.collision);
  run.F = F0;
  run.E = E0;
  run.B = B0;
  run.t = F0.t;
  const BudgetTotals bt = kinetic_budget(s, g, F0, E0, B0);
  run.mass0 = bt.mass;
  run.mom0 = bt.momentum;
  run.energy0 = bt.energy;
  return run;
}

inline KineticRun make_run_remainder(
    const RunConfig& cfg, ExpansionTrack track, const KineticState& r0,
    const std::array<std::vector<double>, 3>& ER0,
    const std::array<std::vector<double>, 3>& BR0) {
  cfg.validate();
  require(cfg.mode != RunMode::full_F,
          "remainder run expects a remainder mode");
  const Rep want =
      cfg.mode == RunMode::remainder_f ? Rep::remainder_f : Rep::remainder_h;
  require(r0.rep == want, "initial state carries the wrong frame");
  require(!track.sets.empty(), "remainder run needs an expansion track");
  const ExpansionSet& first = track.sets.front();
  const SGrid s = first.s;
  const VGrid g = first.g;
  require(r0.ncells == s.total && r0.nnodes == g.total,
          "initial state shape mismatch");
  require(first.k_trunc >= 2 * cfg.k - 1,
          "track carries fewer levels than the remainder system couples to");
  const double tb = track.sets.back().t;
  require(r0.t >= first.t - 1e-12 && cfg.t_end <= tb + 1e-9 * (1.0 + tb),
          "track does not cover the run interval");
  detail::check_cfl(cfg, s, g);
  detail::check_fields(s, ER0, BR0);
  KineticRun run;
  run.cfg = cfg;
  run.s = s;
  run.g = g;
  run.ctx = make_collision_ctx(g, cfg.collision);
  run.F = r0;
  run.E = ER0;
  run.B = BR0;
  run.track = std::move(track);
  run.ref = first.ref;
  run.sqmu.resize(g.total);
  for (int a = 0; a < g.total; ++a)
    run.sqmu[a] = std::sqrt(std::max(run.ref.mu[a], 0.0));
  run.t = r0.t;
  append_energy_row(run);
  return run;
}

/// Residual of the charge constraint of the remainder fields: the divergence
/// of E_R against the frame-weighted density, with the same 4 pi coupling as
/// the evolution equation so that the monitored quantity is transported
/// exactly by the discrete dynamics.
inline double remainder_gauss_residual(const KineticRun& run) {
  require(run.cfg.mode != RunMode::full_F,
          "constraint monitor applies to remainder runs");
  const SGrid& s = run.s;
  const VGrid& g = run.g;
  const bool hframe = run.cfg.mode == RunMode::remainder_h;
  const ExpansionSet set = track_at(run.track, run.t);
  double worst = 0.0;
  std::array<std::vector<double>, 2> dE;
  for (int ax = 0; ax < s.dx; ++ax) dE[ax] = spectral_deriv(s, run.E[ax], ax, 1);
  for (int c = 0; c < s.total; ++c) {
    double div = 0.0;
    for (int ax = 0; ax < s.dx; ++ax) div += dE[ax][c];
    const double* fc = run.F.cell(c);
    double dens = 0.0;
    if (hframe) {
      for (int a = 0; a < g.total; ++a)
        dens += g.w[a] * run.sqmu[a] * fc[a];
    } else {
      const auto M = local_maxwellian(g, cell_fluid(set.fluid, c));
      for (int a = 0; a < g.total; ++a)
        dens += g.w[a] * std::sqrt(M[a]) * fc[a];
    }
    worst = std::max(worst, std::abs(div + 4.0 * M_PI * dens));
  }
  return worst;
}

}  // namespace hkin

#endif
