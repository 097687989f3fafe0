#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hkin/diagnostics.hpp"
#include "hkin/rng.hpp"

using namespace hkin;

namespace {

SGrid sg1(int nx) { return make_sgrid(1, {nx, 1}, {1.0, 1.0}); }

FluidState harmonic_fluid(const SGrid& s, int dv) {
  FluidState fs;
  fs.resize(dv, s.total);
  for (int c = 0; c < s.total; ++c) {
    const double x = s.center(0, s.unpack(c)[0]);
    const double ph = 2.0 * M_PI * x / s.L[0];
    fs.rho[c] = 1.0 + 0.03 * std::sin(ph);
    fs.u[0][c] = 0.02 * std::cos(ph);
    fs.u[1][c] = 0.015 * std::sin(ph);
    fs.T[c] = 1.0 + 0.02 * std::cos(ph);
  }
  return fs;
}

/// Band-limited kinetic state: per node, constant + single harmonic in x.
struct HarmonicState {
  KineticState F;
  std::vector<double> base, sa, ca;  // per-node coefficients
  double k = 0.0;
};

HarmonicState harmonic_state(const SGrid& s, const VGrid& g, Rep rep,
                             double amp, uint64_t seed) {
  HarmonicState hs;
  hs.k = 2.0 * M_PI / s.L[0];
  hs.base.resize(g.total);
  hs.sa.resize(g.total);
  hs.ca.resize(g.total);
  Rng rng(seed);
  for (int a = 0; a < g.total; ++a) {
    double q = 0.0;
    for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
    const double decay = std::exp(-0.25 * q);
    hs.base[a] = amp * rng.normal() * decay;
    hs.sa[a] = amp * rng.normal() * decay;
    hs.ca[a] = amp * rng.normal() * decay;
  }
  hs.F = make_state(rep, s.total, g.total);
  for (int c = 0; c < s.total; ++c) {
    const double x = s.center(0, s.unpack(c)[0]);
    double* p = hs.F.cell(c);
    for (int a = 0; a < g.total; ++a)
      p[a] = hs.base[a] + hs.sa[a] * std::sin(hs.k * x) +
             hs.ca[a] * std::cos(hs.k * x);
  }
  return hs;
}

/// Analytic i-th x-derivative of a harmonic state at (cell, node).
double harmonic_deriv(const HarmonicState& hs, const SGrid& s, int c, int a,
                      int ord) {
  const double x = s.center(0, s.unpack(c)[0]);
  if (ord == 0)
    return hs.base[a] + hs.sa[a] * std::sin(hs.k * x) +
           hs.ca[a] * std::cos(hs.k * x);
  const double shift = 0.5 * M_PI * ord;
  return std::pow(hs.k, ord) * (hs.sa[a] * std::sin(hs.k * x + shift) +
                                hs.ca[a] * std::cos(hs.k * x + shift));
}

struct HarmonicField {
  std::vector<double> u;
  double p = 0.0, q = 0.0, r = 0.0, k = 0.0;
};

HarmonicField harmonic_field(const SGrid& s, double amp, Rng& rng) {
  HarmonicField hf;
  hf.k = 2.0 * M_PI / s.L[0];
  hf.p = amp * rng.normal();
  hf.q = amp * rng.normal();
  hf.r = amp * rng.normal();
  hf.u.resize(s.total);
  for (int c = 0; c < s.total; ++c) {
    const double x = s.center(0, s.unpack(c)[0]);
    hf.u[c] = hf.r + hf.p * std::sin(hf.k * x) + hf.q * std::cos(hf.k * x);
  }
  return hf;
}

double field_deriv(const HarmonicField& hf, const SGrid& s, int c, int ord) {
  const double x = s.center(0, s.unpack(c)[0]);
  if (ord == 0)
    return hf.r + hf.p * std::sin(hf.k * x) + hf.q * std::cos(hf.k * x);
  const double shift = 0.5 * M_PI * ord;
  return std::pow(hf.k, ord) * (hf.p * std::sin(hf.k * x + shift) +
                                hf.q * std::cos(hf.k * x + shift));
}

}  // namespace

TEST_CASE("weight closed forms at t = 0 and the rate formula") {
  WeightSpec w;
  w.ell = 4.0;
  w.m = 2;
  w.Tc = 0.9;
  const double RTc = gas_constant * w.Tc;
  // ln(e + 0) = 1 collapses every exponent
  CHECK(diag_X(w, 0.0) == Catch::Approx(std::exp(1.0 / (8.0 * RTc)))
                              .epsilon(1e-14));
  CHECK(diag_Y(w, 0.0) ==
        Catch::Approx(1.0 / (8.0 * RTc * std::exp(1.0))).epsilon(1e-14));
  for (double av : {1.0, 1.7, 3.2}) {
    for (int i = 0; i <= 2; ++i) {
      const double expect =
          std::pow(av, w.ell - i) * std::exp(av * av / (8.0 * RTc));
      CHECK(diag_wi(w, i, 0.0, av) == Catch::Approx(expect).epsilon(1e-13));
    }
    CHECK(diag_wbar(w, 0.0, av) ==
          Catch::Approx(std::exp(av / (8.0 * RTc))).epsilon(1e-13));
    WeightSpec wq = w;
    wq.vmb_quadratic = true;
    CHECK(diag_wbar(wq, 0.0, av) ==
          Catch::Approx(std::exp(av * av / (8.0 * RTc))).epsilon(1e-13));
  }
  CHECK_THROWS_AS(diag_wi(w, 3, 0.0, 1.0), HkinError);
  WeightSpec bad = w;
  bad.ell = 1.0;
  CHECK_THROWS_AS(validate(bad), HkinError);
}

TEST_CASE("rate equals the logarithmic derivative of the envelope") {
  WeightSpec w;
  w.Tc = 1.1;
  for (double t : {0.5, 5.0, 50.0}) {
    const double d = 1e-4 * (std::exp(1.0) + t);
    const double fd =
        (std::log(diag_X(w, t - d)) - std::log(diag_X(w, t + d))) / (2.0 * d);
    REQUIRE(std::abs(fd - diag_Y(w, t)) <= 1e-6 * std::abs(diag_Y(w, t)));
    REQUIRE(diag_Y(w, t) > 0.0);
  }
}

TEST_CASE("weights decrease in time toward the polynomial limit") {
  WeightSpec w;
  w.ell = 3.0;
  w.m = 2;
  const std::vector<double> ts = {0.0, 0.25, 1.0, 5.0, 50.0, 500.0};
  for (double av : {1.0, 1.3, 2.0, 4.5}) {
    for (int i = 0; i <= 2; ++i) {
      const double limit = std::pow(av, w.ell - i);
      double prev = std::numeric_limits<double>::infinity();
      for (double t : ts) {
        const double val = diag_wi(w, i, t, av);
        REQUIRE(val <= prev);
        REQUIRE(val > limit);  // approaches the limit from above
        prev = val;
      }
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double t : ts) {
      const double val = diag_wbar(w, t, av);
      REQUIRE(val <= prev);
      REQUIRE(val > 1.0);
      prev = val;
    }
  }
}

TEST_CASE("remainder frame conversion round-trips") {
  const SGrid s = sg1(4);
  const VGrid g = make_vgrid(2, 8, 5.0);
  const FluidState fs = harmonic_fluid(s, 2);
  const GlobalRef ref = select_Tc(g, fs, 2.0);
  HarmonicState hf = harmonic_state(s, g, Rep::remainder_f, 1e-2, 77);
  const KineticState h = remainder_f_to_h(s, g, fs, ref, hf.F);
  // pointwise relation against directly evaluated Maxwellians
  for (int c : {0, 3}) {
    const auto M = local_maxwellian(g, cell_fluid(fs, c));
    for (int a : {0, 17, 40}) {
      const double expect =
          hf.F.cell(c)[a] * std::sqrt(M[a] / std::max(ref.mu[a], 1e-300));
      REQUIRE(h.cell(c)[a] == Catch::Approx(expect).epsilon(1e-13));
    }
  }
  const KineticState back = remainder_h_to_f(s, g, fs, ref, h);
  double worst = 0.0;
  for (size_t i = 0; i < back.vals.size(); ++i) {
    const double denom = std::max(std::abs(hf.F.vals[i]), 1e-30);
    worst = std::max(worst, std::abs(back.vals[i] - hf.F.vals[i]) / denom);
  }
  REQUIRE(worst <= 1e-12);
  REQUIRE(h.rep == Rep::remainder_h);
  REQUIRE(back.rep == Rep::remainder_f);
}

TEST_CASE("energy functional matches a direct-summation oracle") {
  const SGrid s = sg1(4);
  const VGrid g = make_vgrid(2, 8, 5.0);
  const FluidState fs = harmonic_fluid(s, 2);
  const GlobalRef ref = select_Tc(g, fs, 2.0);
  const Axis4Stencil st = make_axis4(g.nv, g.h);

  DiagSpec spec;
  spec.family = CollisionSpec::Family::landau;
  spec.w.ell = 4.0;
  spec.w.m = 2;
  spec.w.Tc = ref.Tc;
  spec.eps = 0.1;
  const double t = 0.3;

  HarmonicState f = harmonic_state(s, g, Rep::remainder_f, 1e-2, 101);
  HarmonicState h = harmonic_state(s, g, Rep::remainder_h, 1e-2, 102);
  Rng rng(103);
  std::array<std::vector<double>, 3> ER, BR;
  std::vector<HarmonicField> ef_srcs, bf_srcs;
  for (int k = 0; k < 3; ++k) {
    if (k < g.dv) {
      ef_srcs.push_back(harmonic_field(s, 1e-2, rng));
      ER[k] = ef_srcs.back().u;
    } else {
      ER[k].assign(s.total, 0.0);
    }
    if (k < b_components(g.dv)) {
      bf_srcs.push_back(harmonic_field(s, 1e-2, rng));
      BR[k] = bf_srcs.back().u;
    } else {
      BR[k].assign(s.total, 0.0);
    }
  }

  const EnergyBreakdown E =
      energy_functional(s, g, fs, st, spec, t, f.F, h.F, ER, BR);

  // independent re-summation: analytic derivatives, closed-form weights,
  // explicit power bookkeeping
  const double vol = s.hx[0] * s.hx[1];
  const double lnet = std::log(std::exp(1.0) + t);
  double total_o = 0.0;
  for (int i = 0; i <= 2; ++i) {
    double ef_o = 0.0, eh_o = 0.0, eE_o = 0.0, eB_o = 0.0;
    for (int c = 0; c < s.total; ++c) {
      double sf = 0.0, sh = 0.0;
      for (int a = 0; a < g.total; ++a) {
        const double df = harmonic_deriv(f, s, c, a, i);
        const double dh = harmonic_deriv(h, s, c, a, i);
        double q = 1.0;
        for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
        const double av = std::sqrt(q);
        const double wi =
            std::pow(av, spec.w.ell - i) *
            std::exp(q / (8.0 * gas_constant * spec.w.Tc * lnet));
        sf += g.w[a] * df * df;
        sh += g.w[a] * sqr(wi * dh);
      }
      ef_o += vol * 4.0 * M_PI * gas_constant * fs.T[c] * sf;
      eh_o += vol * sh;
      for (size_t k = 0; k < ef_srcs.size(); ++k)
        eE_o += vol * sqr(field_deriv(ef_srcs[k], s, c, i));
      for (size_t k = 0; k < bf_srcs.size(); ++k)
        eB_o += vol * sqr(field_deriv(bf_srcs[k], s, c, i));
    }
    const double pe = std::pow(spec.eps, i);
    REQUIRE(E.ef[i] == Catch::Approx(pe * ef_o).epsilon(1e-12));
    REQUIRE(E.eE[i] == Catch::Approx(pe * eE_o).epsilon(1e-12));
    REQUIRE(E.eB[i] == Catch::Approx(pe * eB_o).epsilon(1e-12));
    REQUIRE(E.eh[i] ==
            Catch::Approx(pe * std::pow(spec.eps, 1.0 + spec.kappa) * eh_o)
                .epsilon(1e-12));
    total_o += pe * (ef_o + eE_o + eB_o) +
               pe * std::pow(spec.eps, 1.0 + spec.kappa) * eh_o;
  }
  REQUIRE(E.total == Catch::Approx(total_o).epsilon(1e-12));
  REQUIRE_FALSE(E.vmb_degraded);
}

TEST_CASE("binary-family energy matches an independent enumeration") {
  const SGrid s = sg1(4);
  const VGrid g = make_vgrid(2, 8, 4.0);
  const FluidState fs = harmonic_fluid(s, 2);
  const GlobalRef ref = select_Tc(g, fs, 2.0);
  const Axis4Stencil st = make_axis4(g.nv, g.h);

  DiagSpec spec;
  spec.family = CollisionSpec::Family::boltzmann;
  spec.w.ell = 6.0;
  spec.w.m = 4;
  spec.w.Tc = ref.Tc;
  spec.eps = 0.2;

  HarmonicState f = harmonic_state(s, g, Rep::remainder_f, 1e-2, 201);
  HarmonicState h = harmonic_state(s, g, Rep::remainder_h, 1e-2, 202);
  std::array<std::vector<double>, 3> ER, BR;
  for (int k = 0; k < 3; ++k) {
    ER[k].assign(s.total, 0.0);
    BR[k].assign(s.total, 0.0);
  }
  const double t = 0.7;
  const EnergyBreakdown E =
      energy_functional(s, g, fs, st, spec, t, f.F, h.F, ER, BR);
  REQUIRE(E.vmb_degraded);  // nv = 8 < 16 caps the velocity budget at 2

  // independent enumeration of the index set with the same building blocks
  const double vol = s.hx[0] * s.hx[1];
  const KineticState micro = micro_project(s, g, fs, f.F);
  std::vector<double> wbar(g.total);
  for (int a = 0; a < g.total; ++a)
    wbar[a] = diag_wbar(spec.w, t, vbracket(g, a));
  std::vector<double> emic_o(5, 0.0), eh_o(5, 0.0), ef_o(5, 0.0);
  for (int ao = 0; ao <= 4; ++ao) {
    const KineticState dmic = x_derivative(s, g, micro, {ao, 0});
    const KineticState df = x_derivative(s, g, f.F, {ao, 0});
    const KineticState dh = x_derivative(s, g, h.F, {ao, 0});
    for (int c = 0; c < s.total; ++c) {
      double sf = 0.0;
      for (int a = 0; a < g.total; ++a) sf += g.w[a] * sqr(df.cell(c)[a]);
      ef_o[ao] += std::pow(spec.eps, ao) * vol * 4.0 * M_PI * gas_constant *
                  fs.T[c] * sf;
    }
    for (int bo = 0; bo <= std::min(4 - ao, 2); ++bo) {
      for (const auto& be : v_multi_indices(g.dv, bo)) {
        for (int c = 0; c < s.total; ++c) {
          std::vector<double> mc(dmic.cell(c), dmic.cell(c) + g.total);
          std::vector<double> hc(dh.cell(c), dh.cell(c) + g.total);
          mc = v_derivative_cell(g, st, std::move(mc), be);
          hc = v_derivative_cell(g, st, std::move(hc), be);
          double sm = 0.0, sh = 0.0;
          for (int a = 0; a < g.total; ++a) {
            sm += g.w[a] * sqr(mc[a]);
            sh += g.w[a] * sqr(wbar[a] * hc[a]);
          }
          if (bo >= 1)
            emic_o[ao + bo] += std::pow(spec.eps, ao + bo) * vol * sm;
          eh_o[ao + bo] +=
              std::pow(spec.eps, ao + bo + 1.0 + spec.kappa) * vol * sh;
        }
      }
    }
  }
  for (int so = 0; so <= 4; ++so) {
    REQUIRE(E.ef[so] == Catch::Approx(ef_o[so]).margin(1e-300).epsilon(1e-12));
    REQUIRE(E.emic[so] ==
            Catch::Approx(emic_o[so]).margin(1e-300).epsilon(1e-12));
    REQUIRE(E.eh[so] == Catch::Approx(eh_o[so]).margin(1e-300).epsilon(1e-12));
  }
}

TEST_CASE("energy components scale quadratically") {
  const SGrid s = sg1(4);
  const VGrid g = make_vgrid(2, 8, 5.0);
  const FluidState fs = harmonic_fluid(s, 2);
  const GlobalRef ref = select_Tc(g, fs, 2.0);
  const Axis4Stencil st = make_axis4(g.nv, g.h);
  for (auto fam :
       {CollisionSpec::Family::landau, CollisionSpec::Family::boltzmann}) {
    DiagSpec spec;
    spec.family = fam;
    spec.w.ell = 6.0;
    spec.w.m = fam == CollisionSpec::Family::landau ? 2 : 4;
    spec.w.Tc = ref.Tc;
    spec.eps = 0.15;
    HarmonicState f = harmonic_state(s, g, Rep::remainder_f, 1e-2, 301);
    HarmonicState h = harmonic_state(s, g, Rep::remainder_h, 1e-2, 302);
    Rng rng(303);
    std::array<std::vector<double>, 3> ER, BR;
    for (int k = 0; k < 3; ++k) {
      ER[k] = harmonic_field(s, 1e-2, rng).u;
      BR[k] = harmonic_field(s, 1e-2, rng).u;
    }
    const EnergyBreakdown E1 =
        energy_functional(s, g, fs, st, spec, 0.4, f.F, h.F, ER, BR);
    KineticState f2 = f.F, h2 = h.F;
    for (double& x : f2.vals) x *= 2.0;
    for (double& x : h2.vals) x *= 2.0;
    auto E2in = ER, B2in = BR;
    for (int k = 0; k < 3; ++k) {
      for (double& x : E2in[k]) x *= 2.0;
      for (double& x : B2in[k]) x *= 2.0;
    }
    const EnergyBreakdown E2 =
        energy_functional(s, g, fs, st, spec, 0.4, f2, h2, E2in, B2in);
    for (size_t i = 0; i < E1.ef.size(); ++i) {
      REQUIRE(E2.ef[i] == 4.0 * E1.ef[i]);
      REQUIRE(E2.eE[i] == 4.0 * E1.eE[i]);
      REQUIRE(E2.eB[i] == 4.0 * E1.eB[i]);
      REQUIRE(E2.eh[i] == 4.0 * E1.eh[i]);
    }
    for (size_t i = 0; i < E1.emic.size(); ++i)
      REQUIRE(E2.emic[i] == 4.0 * E1.emic[i]);
    REQUIRE(E2.total == Catch::Approx(4.0 * E1.total).epsilon(1e-15));
  }
}

TEST_CASE("zero states give zero energy and dissipation") {
  const SGrid s = sg1(4);
  const VGrid g = make_vgrid(2, 8, 5.0);
  const FluidState fs = harmonic_fluid(s, 2);
  const GlobalRef ref = select_Tc(g, fs, 2.0);
  const Axis4Stencil st = make_axis4(g.nv, g.h);
  const KineticState zf = make_state(Rep::remainder_f, s.total, g.total);
  const KineticState zh = make_state(Rep::remainder_h, s.total, g.total);
  std::array<std::vector<double>, 3> Z;
  for (int k = 0; k < 3; ++k) Z[k].assign(s.total, 0.0);
  for (auto fam :
       {CollisionSpec::Family::landau, CollisionSpec::Family::boltzmann}) {
    DiagSpec spec;
    spec.family = fam;
    spec.w.ell = 6.0;
    spec.w.m = 4;
    spec.w.Tc = ref.Tc;
    CollisionSpec cs;
    cs.family = fam;
    cs.boltz.gamma = -1.0;
    const DnormCtx ctx = make_dnorm_ctx(g, ref, cs);
    const EnergyBreakdown E =
        energy_functional(s, g, fs, st, spec, 0.0, zf, zh, Z, Z);
    const DissipationBreakdown D =
        dissipation_rate(s, g, fs, ctx, spec, 0.0, zf, zh);
    REQUIRE(E.total == 0.0);
    REQUIRE(D.total == 0.0);
  }
}

TEST_CASE("dissipation components are nonnegative on random states") {
  const SGrid s = sg1(4);
  const FluidState fs2 = harmonic_fluid(s, 2);
  for (auto fam :
       {CollisionSpec::Family::landau, CollisionSpec::Family::boltzmann}) {
    const int nv = fam == CollisionSpec::Family::landau ? 12 : 8;
    const VGrid g = make_vgrid(2, nv, 5.0);
    const GlobalRef ref = select_Tc(g, fs2, 2.0);
    DiagSpec spec;
    spec.family = fam;
    spec.w.ell = 6.0;
    spec.w.m = 4;
    spec.w.Tc = ref.Tc;
    spec.eps = 0.1;
    CollisionSpec cs;
    cs.family = fam;
    cs.landau.gamma = 0.0;
    cs.boltz.gamma = -1.0;
    const DnormCtx ctx = make_dnorm_ctx(g, ref, cs);
    HarmonicState f = harmonic_state(s, g, Rep::remainder_f, 1e-2, 401);
    HarmonicState h = harmonic_state(s, g, Rep::remainder_h, 1e-2, 402);
    const DissipationBreakdown D =
        dissipation_rate(s, g, fs2, ctx, spec, 0.5, f.F, h.F);
    const double tol = 1e-12 * std::max(1.0, D.total);
    for (double x : D.dmic) REQUIRE(x >= -tol);
    for (double x : D.dhD) REQUIRE(x >= -tol);
    for (double x : D.dhY) REQUIRE(x >= -tol);
    REQUIRE(D.total >= -tol);
    REQUIRE(std::isfinite(D.total));
  }
}

TEST_CASE("dissipation seminorm dominates a weighted square") {
  // fitted lower-bound structure: |f|_D^2 >= c ||(1+|v|)^(-1/2) f||^2
  const VGrid g = make_vgrid(2, 12, 5.0);
  FluidState fs;
  fs.resize(2, 1);
  fs.rho[0] = 1.0;
  fs.T[0] = 1.0;
  const GlobalRef ref = select_Tc(g, fs, 2.0);
  CollisionSpec cs;
  cs.landau.gamma = -3.0;
  const DnormCtx ctx = make_dnorm_ctx(g, ref, cs);
  Rng rng(555);
  double cmin = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> f(g.total);
    for (int a = 0; a < g.total; ++a) {
      double q = 0.0;
      for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
      f[a] = rng.normal() * std::exp(-0.25 * q);
    }
    const double dn = dnorm_sq_cell(g, ctx, f);
    double wsq = 0.0;
    for (int a = 0; a < g.total; ++a) {
      double q = 0.0;
      for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
      wsq += g.w[a] * sqr(f[a]) / (1.0 + std::sqrt(q));
    }
    REQUIRE(wsq > 0.0);
    cmin = std::min(cmin, dn / wsq);
  }
  REQUIRE(cmin > 0.0);
}

TEST_CASE("velocity-derivative budget degrades on coarse grids with a flag") {
  const SGrid s = sg1(4);
  const FluidState fs = harmonic_fluid(s, 2);
  DiagSpec spec;
  spec.family = CollisionSpec::Family::boltzmann;
  spec.w.ell = 6.0;
  spec.w.m = 4;
  std::array<std::vector<double>, 3> Z;
  for (int k = 0; k < 3; ++k) Z[k].assign(s.total, 0.0);
  for (int nv : {8, 16}) {
    const VGrid g = make_vgrid(2, nv, 5.0);
    const GlobalRef ref = select_Tc(g, fs, 2.0);
    spec.w.Tc = ref.Tc;
    const Axis4Stencil st = make_axis4(g.nv, g.h);
    const KineticState zf = make_state(Rep::remainder_f, s.total, g.total);
    const KineticState zh = make_state(Rep::remainder_h, s.total, g.total);
    const EnergyBreakdown E =
        energy_functional(s, g, fs, st, spec, 0.0, zf, zh, Z, Z);
    REQUIRE(E.vmb_degraded == (nv < 16));
    REQUIRE(E.ef.size() == 5);
    REQUIRE(E.emic.size() == 5);
  }
}

TEST_CASE("energy tripwire trips on envelope violation") {
  REQUIRE_NOTHROW(energy_tripwire(1.0, 1.0, 1e-2));
  // limit at eps = 1e-2 is 10 * (1 + 1) / 0.1 = 200
  REQUIRE_NOTHROW(energy_tripwire(199.0, 1.0, 1e-2));
  REQUIRE_THROWS_AS(energy_tripwire(201.0, 1.0, 1e-2), HkinError);
}

TEST_CASE("csv schema is fixed and rows are deterministic") {
  const std::string hl = diag_csv_header(CollisionSpec::Family::landau);
  const std::string hb = diag_csv_header(CollisionSpec::Family::boltzmann);
  auto count = [](const std::string& str) {
    size_t n = 1;
    for (char ch : str)
      if (ch == ',') ++n;
    return n;
  };
  REQUIRE(hl.rfind("t,E_total,D_total,Y,ef0", 0) == 0);
  REQUIRE(count(hl) == 34);
  REQUIRE(count(hb) == 53);

  DiagnosticsRow r;
  r.t = 0.25;
  r.E_total = 1.5;
  r.D_total = 0.75;
  r.Y = 0.03;
  r.E.ef = {1.0, 0.3, 0.2};
  r.E.eE = {0.1, 0.0, 0.0};
  r.E.eB = {0.0, 0.0, 0.0};
  r.E.eh = {0.05, 0.0, 0.0};
  r.D.dmic = {0.5, 0.1, 0.05};
  r.D.dhD = {0.1, 0.0, 0.0};
  r.D.dhY = {0.0, 0.0, 0.0};
  const std::string row1 = diag_csv_row(r);
  const std::string row2 = diag_csv_row(r);
  REQUIRE(row1 == row2);
  REQUIRE(count(row1) == 34);
  REQUIRE(row1.rfind("0.25,1.5,0.75,", 0) == 0);
}
