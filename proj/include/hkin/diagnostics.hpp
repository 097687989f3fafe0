#ifndef HKIN_DIAGNOSTICS_HPP
#define HKIN_DIAGNOSTICS_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "hkin/boltzmann.hpp"
#include "hkin/core.hpp"
#include "hkin/fft.hpp"
#include "hkin/grid.hpp"
#include "hkin/hilbert.hpp"
#include "hkin/landau.hpp"
#include "hkin/landau_linear.hpp"
#include "hkin/maxwellian.hpp"
#include "hkin/projector.hpp"
#include "hkin/stencil.hpp"

namespace hkin {

// ---------------------------------------------------------------------------
// Time-velocity weights.
//
// X(t)   = exp(1 / (8 R Tc ln(e + t)))
// Y(t)   = -X'(t)/X(t) = 1 / (8 R Tc (e + t) ln(e + t)^2) > 0
// w_i    = <v>^(ell - i) exp(<v>^2 / (8 R Tc ln(e + t))),  0 <= i <= m
// wbar   = exp(<v>^p / (8 R Tc ln(e + t))),  p = 1 (soft tail) or 2 (cutoff)
//
// with <v> = sqrt(1 + |v|^2).  All weights decrease towards their polynomial
// limit as t grows.

struct WeightSpec {
  double ell = 4.0;            // polynomial index, must satisfy ell >= m
  int m = 2;                   // highest derivative order the weights cover
  double Tc = 1.0;             // uniform reference temperature
  bool vmb_quadratic = false;  // Gaussian-tail variant of the scalar weight
};

inline void validate(const WeightSpec& w) {
  require(w.m >= 0, "weight spec: derivative budget must be nonnegative");
  require(w.ell >= static_cast<double>(w.m),
          "weight spec: polynomial index must be at least the derivative "
          "budget");
  require(w.Tc > 0.0, "weight spec: reference temperature must be positive");
}

/// <v> bracket of a velocity node.
inline double vbracket(const VGrid& g, int a) {
  double q = 1.0;
  for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
  return std::sqrt(q);
}

inline double diag_lnet(double t) { return std::log(std::exp(1.0) + t); }

inline double diag_X(const WeightSpec& w, double t) {
  return std::exp(1.0 / (8.0 * gas_constant * w.Tc * diag_lnet(t)));
}

inline double diag_Y(const WeightSpec& w, double t) {
  const double lnet = diag_lnet(t);
  return 1.0 /
         (8.0 * gas_constant * w.Tc * (std::exp(1.0) + t) * sqr(lnet));
}

/// Derivative-indexed weight for the diffusive family, av = <v>.
inline double diag_wi(const WeightSpec& w, int i, double t, double av) {
  require(i >= 0 && i <= w.m, "weight index out of range");
  return std::pow(av, w.ell - i) *
         std::exp(sqr(av) / (8.0 * gas_constant * w.Tc * diag_lnet(t)));
}

/// Scalar weight for the binary-collision family.
inline double diag_wbar(const WeightSpec& w, double t, double av) {
  const double p = w.vmb_quadratic ? sqr(av) : av;
  return std::exp(p / (8.0 * gas_constant * w.Tc * diag_lnet(t)));
}

// ---------------------------------------------------------------------------
// Frame conversion between the two remainder normalizations,
// F_R = sqrt(M) f = sqrt(mu) h pointwise in (x, v).

inline KineticState remainder_f_to_h(const SGrid& s, const VGrid& g,
                                     const FluidState& fluid,
                                     const GlobalRef& ref,
                                     const KineticState& f) {
  require(f.rep == Rep::remainder_f, "expected a sqrt(M)-frame state");
  KineticState h = make_state(Rep::remainder_h, f.ncells, f.nnodes);
  h.t = f.t;
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(fluid, c);
    const std::vector<double> M = local_maxwellian(g, cf);
    const double* fp = f.cell(c);
    double* hp = h.cell(c);
    for (int a = 0; a < g.total; ++a) {
      const double mu = std::max(ref.mu[a], 1e-300);
      hp[a] = fp[a] * std::sqrt(M[a] / mu);
    }
  }
  return h;
}

inline KineticState remainder_h_to_f(const SGrid& s, const VGrid& g,
                                     const FluidState& fluid,
                                     const GlobalRef& ref,
                                     const KineticState& h) {
  require(h.rep == Rep::remainder_h, "expected a sqrt(mu)-frame state");
  KineticState f = make_state(Rep::remainder_f, h.ncells, h.nnodes);
  f.t = h.t;
  for (int c = 0; c < s.total; ++c) {
    const CellFluid cf = cell_fluid(fluid, c);
    const std::vector<double> M = local_maxwellian(g, cf);
    const double* hp = h.cell(c);
    double* fp = f.cell(c);
    for (int a = 0; a < g.total; ++a) {
      const double M_a = std::max(M[a], 1e-300);
      fp[a] = hp[a] * std::sqrt(ref.mu[a] / M_a);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Dissipation norms.  The diffusive family uses the sigma-weighted seminorm
// around the global reference Maxwellian; the binary family uses the
// scatter/weight quadrature around the same reference.

struct DnormCtx {
  CollisionSpec::Family family = CollisionSpec::Family::landau;
  Axis4Stencil st;
  // diffusive pieces
  SigmaField sig_mu;
  double RTc = gas_constant;
  // binary pieces
  BoltzmannParams bp;
  CellFluid mu_cf;
};

inline DnormCtx make_dnorm_ctx(const VGrid& g, const GlobalRef& ref,
                               const CollisionSpec& spec) {
  DnormCtx ctx;
  ctx.family = spec.family;
  ctx.st = make_axis4(g.nv, g.h);
  if (spec.family == CollisionSpec::Family::landau) {
    const LandauKernel kern = build_landau_kernel(g, spec.landau);
    ctx.sig_mu =
        sigma_field(g, kern, ref.mu.data(), spec.landau.support_cut);
    ctx.RTc = gas_constant * ref.Tc;
  } else {
    spec.boltz.validate(g.dv);
    ctx.bp = spec.boltz;
    ctx.mu_cf.rho = 1.0;
    ctx.mu_cf.u = {0.0, 0.0, 0.0};
    ctx.mu_cf.T = ref.Tc;
  }
  return ctx;
}

/// |f|_D^2 on one cell's node vector.
inline double dnorm_sq_cell(const VGrid& g, const DnormCtx& ctx,
                            const std::vector<double>& fv) {
  if (ctx.family == CollisionSpec::Family::landau)
    return landau_dnorm_sq(g, ctx.st, ctx.sig_mu, ctx.RTc, fv);
  return boltz_dnorm_sq(g, ctx.bp, ctx.mu_cf, fv);
}

// ---------------------------------------------------------------------------
// Derivative plumbing.

/// All spatial multi-indices of exact total order `ord`.
inline std::vector<std::array<int, 2>> x_multi_indices(int dx, int ord) {
  std::vector<std::array<int, 2>> out;
  if (dx == 1) {
    out.push_back({ord, 0});
  } else {
    for (int a = ord; a >= 0; --a) out.push_back({a, ord - a});
  }
  return out;
}

/// All velocity multi-indices of exact total order `ord`.
inline std::vector<std::array<int, 3>> v_multi_indices(int dv, int ord) {
  std::vector<std::array<int, 3>> out;
  if (dv == 2) {
    for (int a = ord; a >= 0; --a) out.push_back({a, ord - a, 0});
  } else {
    for (int a = ord; a >= 0; --a)
      for (int b = ord - a; b >= 0; --b) out.push_back({a, b, ord - a - b});
  }
  return out;
}

/// Spectral x-derivative of a cell scalar field along a multi-index.
inline std::vector<double> x_derivative_field(const SGrid& s,
                                              std::vector<double> u,
                                              const std::array<int, 2>& al) {
  for (int d = 0; d < 2; ++d)
    if (al[d] > 0) u = spectral_deriv(s, u, d, al[d]);
  return u;
}

/// Spectral x-derivative of a kinetic state, node by node.
inline KineticState x_derivative(const SGrid& s, const VGrid& g,
                                 const KineticState& F,
                                 const std::array<int, 2>& al) {
  if (al[0] == 0 && al[1] == 0) return F;
  KineticState out = make_state(F.rep, F.ncells, F.nnodes);
  out.t = F.t;
  std::vector<double> line(s.total);
  for (int a = 0; a < g.total; ++a) {
    for (int c = 0; c < s.total; ++c) line[c] = F.cell(c)[a];
    line = x_derivative_field(s, std::move(line), al);
    for (int c = 0; c < s.total; ++c) out.cell(c)[a] = line[c];
  }
  return out;
}

/// Stencil v-derivative of one cell's node vector along a multi-index.
inline std::vector<double> v_derivative_cell(const VGrid& g,
                                             const Axis4Stencil& st,
                                             std::vector<double> fv,
                                             const std::array<int, 3>& be) {
  std::vector<double> tmp(g.total);
  for (int d = 0; d < g.dv; ++d)
    for (int k = 0; k < be[d]; ++k) {
      deriv_axis(g, st, d, fv.data(), tmp.data());
      fv.swap(tmp);
    }
  return fv;
}

/// Cellwise micro projection (I - P_M) around the local Maxwellian.
inline KineticState micro_project(const SGrid& s, const VGrid& g,
                                  const FluidState& fluid,
                                  const KineticState& f) {
  KineticState out = make_state(f.rep, f.ncells, f.nnodes);
  out.t = f.t;
  for (int c = 0; c < s.total; ++c) {
    const Projector P = build_projector(g, cell_fluid(fluid, c));
    apply_ImPM(g, P, f.cell(c), out.cell(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energy functional and dissipation rate.
//
// Diffusive family (orders i = 0..2):
//   E(t) = sum_i eps^i [ ||sqrt(4 pi R T) D^i f||^2 + ||D^i E_R||^2
//                        + ||D^i B_R||^2 + eps^(1+kappa) ||w_i D^i h||^2 ]
//   D(t) = sum_i eps^i [ (1/eps) ||D^i (I-P_M) f||_D^2
//                        + eps^kappa ||w_i D^i h||_D^2
//                        + eps^(1+kappa) Y(t) ||(1+|v|) w_i D^i h||^2 ]
//
// Binary family (total order |alpha| + |beta| <= 4):
//   E(t) = sum_alpha eps^|alpha| (||sqrt(4 pi R T) d^a f||^2 + fields)
//        + sum_{|beta|>=1} eps^{|a|+|b|} ||d^a_b (I-P_M) f||^2
//        + sum eps^{|a|+|b|+1+kappa} ||wbar d^a_b h||^2
//   D(t) = sum eps^{|a|+|b|-1} ||d^a_b (I-P_M) f||_D^2
//        + Y(t) sum eps^{|a|+|b|+kappa} ||<v>^(1/2) wbar d^a_b h||^2
//        + sum eps^{|a|+|b|+kappa} ||wbar d^a_b h||_D^2
//
// D^i sums all multi-indices of exact order i with unit coefficients (the
// dissipation is only fixed up to norm equivalence; we pin unit constants).
// Mixed fourth-order velocity derivatives are only trusted on grids with at
// least 16 nodes per axis; below that the budget degrades to second order
// and the report is flagged.

struct DiagSpec {
  CollisionSpec::Family family = CollisionSpec::Family::landau;
  WeightSpec w;
  double eps = 1e-1;
  double kappa = default_kappa;
};

inline void validate(const DiagSpec& d) {
  validate(d.w);
  require(d.eps > 0.0, "diagnostics: eps must be positive");
  require(d.kappa > 0.0, "diagnostics: kappa must be positive");
  if (d.family == CollisionSpec::Family::landau)
    require(d.w.m >= 2, "diagnostics: diffusive family carries two orders");
}

struct EnergyBreakdown {
  // eps-weighted contributions per derivative order (diffusive: 0..2 spatial;
  // binary: total order 0..4).  Sums of the entries equal `total`.
  std::vector<double> ef, eE, eB, emic, eh;
  double total = 0.0;
  bool vmb_degraded = false;
};

struct DissipationBreakdown {
  std::vector<double> dmic, dhD, dhY;  // eps-weighted, per order as above
  double total = 0.0;
  bool vmb_degraded = false;
};

namespace detail {

inline double cell_volume(const SGrid& s) { return s.hx[0] * s.hx[1]; }

/// Weighted L2^2 of one state; node_w (optional) multiplies pointwise in v,
/// cell_w (optional) weighs cells.
inline double l2sq_state(const SGrid& s, const VGrid& g,
                         const KineticState& F,
                         const std::vector<double>* node_w,
                         const std::vector<double>* cell_w) {
  const double vol = cell_volume(s);
  double acc = 0.0;
  for (int c = 0; c < s.total; ++c) {
    const double* p = F.cell(c);
    double cs = 0.0;
    for (int a = 0; a < g.total; ++a) {
      double x = p[a];
      if (node_w) x *= (*node_w)[a];
      cs += g.w[a] * sqr(x);
    }
    acc += vol * (cell_w ? (*cell_w)[c] : 1.0) * cs;
  }
  return acc;
}

inline double l2sq_field(const SGrid& s, const std::vector<double>& u) {
  const double vol = cell_volume(s);
  double acc = 0.0;
  for (int c = 0; c < s.total; ++c) acc += vol * sqr(u[c]);
  return acc;
}

inline int vmb_beta_cap(const VGrid& g) { return g.nv >= 16 ? 4 : 2; }

}  // namespace detail

inline EnergyBreakdown energy_functional(
    const SGrid& s, const VGrid& g, const FluidState& fluid,
    const Axis4Stencil& st, const DiagSpec& spec, double t,
    const KineticState& f, const KineticState& h,
    const std::array<std::vector<double>, 3>& ER,
    const std::array<std::vector<double>, 3>& BR) {
  validate(spec);
  require(f.rep == Rep::remainder_f && h.rep == Rep::remainder_h,
          "energy functional expects both remainder frames");
  EnergyBreakdown out;
  const double eps = spec.eps, kap = spec.kappa;
  // 4 pi R T cell weight for the macroscopic part
  std::vector<double> fourPiRT(s.total);
  for (int c = 0; c < s.total; ++c)
    fourPiRT[c] = 4.0 * M_PI * gas_constant * fluid.T[c];

  if (spec.family == CollisionSpec::Family::landau) {
    out.ef.assign(3, 0.0);
    out.eE.assign(3, 0.0);
    out.eB.assign(3, 0.0);
    out.eh.assign(3, 0.0);
    for (int i = 0; i <= 2; ++i) {
      std::vector<double> wi(g.total);
      for (int a = 0; a < g.total; ++a)
        wi[a] = diag_wi(spec.w, i, t, vbracket(g, a));
      double ef = 0.0, eE = 0.0, eB = 0.0, eh = 0.0;
      for (const auto& al : x_multi_indices(s.dx, i)) {
        const KineticState df = x_derivative(s, g, f, al);
        const KineticState dh = x_derivative(s, g, h, al);
        ef += detail::l2sq_state(s, g, df, nullptr, &fourPiRT);
        eh += detail::l2sq_state(s, g, dh, &wi, nullptr);
        for (int k = 0; k < g.dv; ++k)
          eE += detail::l2sq_field(s, x_derivative_field(s, ER[k], al));
        for (int k = 0; k < b_components(g.dv); ++k)
          eB += detail::l2sq_field(s, x_derivative_field(s, BR[k], al));
      }
      const double pi_ = std::pow(eps, i);
      out.ef[i] = pi_ * ef;
      out.eE[i] = pi_ * eE;
      out.eB[i] = pi_ * eB;
      out.eh[i] = pi_ * std::pow(eps, 1.0 + kap) * eh;
    }
  } else {
    const int cap = detail::vmb_beta_cap(g);
    out.vmb_degraded = cap < 4;
    out.ef.assign(5, 0.0);
    out.eE.assign(5, 0.0);
    out.eB.assign(5, 0.0);
    out.emic.assign(5, 0.0);
    out.eh.assign(5, 0.0);
    std::vector<double> wbar(g.total);
    for (int a = 0; a < g.total; ++a)
      wbar[a] = diag_wbar(spec.w, t, vbracket(g, a));
    const KineticState micro = micro_project(s, g, fluid, f);
    for (int ao = 0; ao <= 4; ++ao) {
      for (const auto& al : x_multi_indices(s.dx, ao)) {
        const KineticState df = x_derivative(s, g, f, al);
        out.ef[ao] += std::pow(eps, ao) *
                      detail::l2sq_state(s, g, df, nullptr, &fourPiRT);
        for (int k = 0; k < g.dv; ++k)
          out.eE[ao] += std::pow(eps, ao) * detail::l2sq_field(
              s, x_derivative_field(s, ER[k], al));
        for (int k = 0; k < b_components(g.dv); ++k)
          out.eB[ao] += std::pow(eps, ao) * detail::l2sq_field(
              s, x_derivative_field(s, BR[k], al));
        const KineticState dm = x_derivative(s, g, micro, al);
        const KineticState dh = x_derivative(s, g, h, al);
        const int bmax = std::min(4 - ao, cap);
        const double vol = detail::cell_volume(s);
        for (int bo = 0; bo <= bmax; ++bo) {
          for (const auto& be : v_multi_indices(g.dv, bo)) {
            double am = 0.0, ah = 0.0;
            for (int c = 0; c < s.total; ++c) {
              std::vector<double> mcell(dm.cell(c), dm.cell(c) + g.total);
              std::vector<double> hcell(dh.cell(c), dh.cell(c) + g.total);
              mcell = v_derivative_cell(g, st, std::move(mcell), be);
              hcell = v_derivative_cell(g, st, std::move(hcell), be);
              double sm = 0.0, sh = 0.0;
              for (int a = 0; a < g.total; ++a) {
                sm += g.w[a] * sqr(mcell[a]);
                sh += g.w[a] * sqr(wbar[a] * hcell[a]);
              }
              am += vol * sm;
              ah += vol * sh;
            }
            if (bo >= 1) out.emic[ao + bo] += std::pow(eps, ao + bo) * am;
            out.eh[ao + bo] +=
                std::pow(eps, ao + bo + 1.0 + kap) * ah;
          }
        }
      }
    }
  }
  for (size_t i = 0; i < out.ef.size(); ++i)
    out.total += out.ef[i] + out.eE[i] + out.eB[i] + out.eh[i];
  for (double x : out.emic) out.total += x;
  return out;
}

inline DissipationBreakdown dissipation_rate(
    const SGrid& s, const VGrid& g, const FluidState& fluid,
    const DnormCtx& ctx, const DiagSpec& spec, double t,
    const KineticState& f, const KineticState& h) {
  validate(spec);
  require(f.rep == Rep::remainder_f && h.rep == Rep::remainder_h,
          "dissipation rate expects both remainder frames");
  DissipationBreakdown out;
  const double eps = spec.eps, kap = spec.kappa;
  const double Y = diag_Y(spec.w, t);
  const double vol = detail::cell_volume(s);
  const KineticState micro = micro_project(s, g, fluid, f);

  if (spec.family == CollisionSpec::Family::landau) {
    out.dmic.assign(3, 0.0);
    out.dhD.assign(3, 0.0);
    out.dhY.assign(3, 0.0);
    std::vector<double> onev(g.total);
    for (int a = 0; a < g.total; ++a) {
      double q = 0.0;
      for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
      onev[a] = 1.0 + std::sqrt(q);
    }
    for (int i = 0; i <= 2; ++i) {
      std::vector<double> wi(g.total);
      for (int a = 0; a < g.total; ++a)
        wi[a] = diag_wi(spec.w, i, t, vbracket(g, a));
      double dm = 0.0, dD = 0.0, dY = 0.0;
      for (const auto& al : x_multi_indices(s.dx, i)) {
        const KineticState dmic = x_derivative(s, g, micro, al);
        const KineticState dh = x_derivative(s, g, h, al);
        std::vector<double> cellv(g.total);
        for (int c = 0; c < s.total; ++c) {
          const double* mp = dmic.cell(c);
          cellv.assign(mp, mp + g.total);
          dm += vol * dnorm_sq_cell(g, ctx, cellv);
          const double* hp = dh.cell(c);
          double sy = 0.0;
          for (int a = 0; a < g.total; ++a) {
            cellv[a] = wi[a] * hp[a];
            sy += g.w[a] * sqr(onev[a] * wi[a] * hp[a]);
          }
          dD += vol * dnorm_sq_cell(g, ctx, cellv);
          dY += vol * sy;
        }
      }
      out.dmic[i] = std::pow(eps, i - 1.0) * dm;
      out.dhD[i] = std::pow(eps, i + kap) * dD;
      out.dhY[i] = std::pow(eps, i + 1.0 + kap) * Y * dY;
    }
  } else {
    const int cap = detail::vmb_beta_cap(g);
    out.vmb_degraded = cap < 4;
    out.dmic.assign(5, 0.0);
    out.dhD.assign(5, 0.0);
    out.dhY.assign(5, 0.0);
    std::vector<double> wbar(g.total), halfv(g.total);
    for (int a = 0; a < g.total; ++a) {
      const double av = vbracket(g, a);
      wbar[a] = diag_wbar(spec.w, t, av);
      halfv[a] = std::sqrt(av);
    }
    for (int ao = 0; ao <= 4; ++ao) {
      for (const auto& al : x_multi_indices(s.dx, ao)) {
        const KineticState dm = x_derivative(s, g, micro, al);
        const KineticState dh = x_derivative(s, g, h, al);
        const int bmax = std::min(4 - ao, cap);
        for (int bo = 0; bo <= bmax; ++bo) {
          const int so = ao + bo;
          for (const auto& be : v_multi_indices(g.dv, bo)) {
            double am = 0.0, aD = 0.0, aY = 0.0;
            std::vector<double> cellv(g.total);
            for (int c = 0; c < s.total; ++c) {
              std::vector<double> mcell(dm.cell(c), dm.cell(c) + g.total);
              mcell = v_derivative_cell(g, ctx.st, std::move(mcell), be);
              am += vol * dnorm_sq_cell(g, ctx, mcell);
              std::vector<double> hcell(dh.cell(c), dh.cell(c) + g.total);
              hcell = v_derivative_cell(g, ctx.st, std::move(hcell), be);
              double sy = 0.0;
              for (int a = 0; a < g.total; ++a) {
                cellv[a] = wbar[a] * hcell[a];
                sy += g.w[a] * sqr(halfv[a] * wbar[a] * hcell[a]);
              }
              aD += vol * dnorm_sq_cell(g, ctx, cellv);
              aY += vol * sy;
            }
            out.dmic[so] += std::pow(eps, so - 1.0) * am;
            out.dhD[so] += std::pow(eps, so + kap) * aD;
            out.dhY[so] += Y * std::pow(eps, so + kap) * aY;
          }
        }
      }
    }
  }
  for (size_t i = 0; i < out.dmic.size(); ++i)
    out.total += out.dmic[i] + out.dhD[i] + out.dhY[i];
  return out;
}

/// A priori envelope tripwire: the continuation argument needs the energy to
/// stay well under eps^(-1/2); a run that crosses ten times the initial
/// envelope aborts loudly rather than integrating garbage.
inline void energy_tripwire(double E_t, double E_0, double eps) {
  require(E_t <= 10.0 * (1.0 + E_0) / std::sqrt(eps),
          "energy exceeded the a priori envelope");
}

// ---------------------------------------------------------------------------
// Report rows and the fixed CSV schema.

struct DiagnosticsRow {
  double t = 0.0;
  double E_total = 0.0;
  double D_total = 0.0;
  double Y = 0.0;
  EnergyBreakdown E;
  DissipationBreakdown D;
  double mass_res = 0.0;
  double mom_res = 0.0;
  double en_res = 0.0;
  double gauss_E = 0.0;
  double gauss_B = 0.0;
  double min_F = 0.0;
  double neg_frac = 0.0;
  double delta_hat = std::numeric_limits<double>::quiet_NaN();
  double ratio_R = std::numeric_limits<double>::quiet_NaN();
};

inline std::string diag_csv_header(CollisionSpec::Family fam) {
  const int n = fam == CollisionSpec::Family::landau ? 3 : 5;
  std::string s = "t,E_total,D_total,Y";
  auto block = [&](const char* base) {
    for (int i = 0; i < n; ++i) s += "," + std::string(base) + std::to_string(i);
  };
  block("ef");
  block("eE");
  block("eB");
  if (fam == CollisionSpec::Family::boltzmann) block("emic");
  block("eh");
  block("dmic");
  block("dhD");
  block("dhY");
  s += ",mass_res,mom_res,en_res,gauss_E,gauss_B,min_F,neg_frac,delta_hat,"
       "ratio_R";
  return s;
}

inline std::string diag_csv_row(const DiagnosticsRow& r) {
  char buf[64];
  std::string s;
  auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    if (!s.empty()) s += ",";
    s += buf;
  };
  put(r.t);
  put(r.E_total);
  put(r.D_total);
  put(r.Y);
  for (double x : r.E.ef) put(x);
  for (double x : r.E.eE) put(x);
  for (double x : r.E.eB) put(x);
  for (double x : r.E.emic) put(x);
  for (double x : r.E.eh) put(x);
  for (double x : r.D.dmic) put(x);
  for (double x : r.D.dhD) put(x);
  for (double x : r.D.dhY) put(x);
  put(r.mass_res);
  put(r.mom_res);
  put(r.en_res);
  put(r.gauss_E);
  put(r.gauss_B);
  put(r.min_F);
  put(r.neg_frac);
  put(r.delta_hat);
  put(r.ratio_R);
  return s;
}

}  // namespace hkin

#endif
