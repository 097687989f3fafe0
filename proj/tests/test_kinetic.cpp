#include <catch2/catch_amalgamated.hpp>

#include "hkin/kinetic_solver.hpp"
#include "hkin/rng.hpp"

using namespace hkin;

namespace {

std::array<std::vector<double>, 3> zero_fields(const SGrid& s) {
  return {std::vector<double>(s.total, 0.0), std::vector<double>(s.total, 0.0),
          std::vector<double>(s.total, 0.0)};
}

double sup_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Smooth remainder seed: one spatial harmonic times a polynomial-Gaussian
// velocity profile.
KineticState seed_remainder(const SGrid& s, const VGrid& g, Rep rep,
                            double amp) {
  KineticState f = make_state(rep, s.total, g.total);
  for (int c = 0; c < s.total; ++c) {
    const double x = s.center(0, s.unpack(c)[0]);
    const double ph =
        std::sin(2.0 * M_PI * x) + 0.3 * std::cos(2.0 * M_PI * x);
    double* fc = f.cell(c);
    for (int a = 0; a < g.total; ++a) {
      const double v0 = g.v[a][0], v1 = g.v[a][1];
      double q = 0.0;
      for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d]);
      const double poly = v0 * v1 + 0.5 * v0 - 0.2 * sqr(v1);
      fc[a] = amp * ph * poly * std::exp(-q / 3.0);
    }
  }
  return f;
}

// Shared smooth expansion trajectory: 1-d x, dv = 2, nonzero level-1 data,
// four slices for cubic time interpolation.
struct KTraj {
  SGrid s;
  VGrid g;
  CollisionSpec spec;
  ExpansionTrack track;
};

const KTraj& ktraj() {
  static const KTraj kt = [] {
    KTraj t;
    t.s = make_sgrid(1, {16, 1}, {1.0, 1.0});
    t.g = make_vgrid(2, 16, hilbert_Lv(16, 1.01, 0.05));
    t.spec.landau.gamma = 0.0;
    FluidState fs = init_well_prepared(3, 1e-3, t.s, 2);
    std::vector<double> rho1(t.s.total), T1(t.s.total);
    std::array<std::vector<double>, 3> u1;
    for (int k = 0; k < 3; ++k) u1[k].assign(t.s.total, 0.0);
    for (int c = 0; c < t.s.total; ++c) {
      const double x = t.s.center(0, t.s.unpack(c)[0]);
      rho1[c] = 5e-4 * std::sin(2.0 * M_PI * x);
      u1[0][c] = 3e-4 * std::cos(2.0 * M_PI * x);
      u1[1][c] = 2e-4 * std::sin(2.0 * M_PI * x);
      T1[c] = 4e-4 * std::cos(2.0 * M_PI * x);
    }
    HilbertConfig cfg;
    HilbertState st = make_hilbert(t.s, t.g, t.spec, cfg, fs, nullptr);
    st.m1 = macro_init_from_coords(t.s, t.g, fs, rho1, u1, T1);
    t.track = make_track(hilbert_slices(st, {0.0, 0.0035, 0.007, 0.0105}));
    return t;
  }();
  return kt;
}

// Equilibrium trajectory: uniform fluid, every level zero.
const KTraj& eqtraj() {
  static const KTraj kt = [] {
    KTraj t;
    t.s = make_sgrid(1, {8, 1}, {1.0, 1.0});
    t.g = make_vgrid(2, 12, hilbert_Lv(12, 1.0, 0.0));
    t.spec.landau.gamma = 0.0;
    FluidState fs = init_well_prepared(1, 0.0, t.s, 2);
    HilbertConfig cfg;
    HilbertState st = make_hilbert(t.s, t.g, t.spec, cfg, fs, nullptr);
    t.track = make_track(hilbert_slices(st, {0.0, 0.004, 0.008, 0.012}));
    return t;
  }();
  return kt;
}

}  // namespace

TEST_CASE("free transport converges at second order and conserves mass") {
  const double t_end = 0.1;
  auto run_err = [&](int nx) {
    SGrid s = make_sgrid(1, {nx, 1}, {1.0, 1.0});
    VGrid g = make_vgrid(2, 12, hilbert_Lv(12, 1.0, 0.0));
    const auto mu = local_maxwellian(g, CellFluid{1.0, {0.0, 0.0, 0.0}, 1.0});
    KineticState F0 = make_state(Rep::full_F, s.total, g.total);
    for (int c = 0; c < s.total; ++c) {
      const double x = s.center(0, s.unpack(c)[0]);
      const double prof = 1.0 + 0.5 * std::sin(2.0 * M_PI * x);
      for (int a = 0; a < g.total; ++a) F0.cell(c)[a] = prof * mu[a];
    }
    double vmax = 0.0;
    for (int a = 0; a < g.total; ++a)
      vmax = std::max(vmax, std::abs(g.v[a][0]));
    RunConfig cfg;
    cfg.mode = RunMode::full_F;
    cfg.collisionless = true;
    cfg.eps = 1.0;
    cfg.t_end = t_end;
    const int nsteps = static_cast<int>(std::ceil(t_end * vmax * nx / 0.4));
    cfg.dt = t_end / nsteps;
    KineticRun run =
        make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s));
    run_all(run);
    const BudgetTotals b1 =
        kinetic_budget(s, g, run.F, run.E, run.B);
    REQUIRE(std::abs(b1.mass - run.mass0) <= 1e-10 * std::abs(run.mass0));
    double err = 0.0;
    for (int c = 0; c < s.total; ++c) {
      const double x = s.center(0, s.unpack(c)[0]);
      for (int a = 0; a < g.total; ++a) {
        const double prof =
            1.0 + 0.5 * std::sin(2.0 * M_PI * (x - g.v[a][0] * t_end));
        err = std::max(err, std::abs(run.F.cell(c)[a] - prof * mu[a]));
      }
    }
    return err;
  };
  const double e1 = run_err(32);
  const double e2 = run_err(64);
  const double order = std::log2(e1 / e2);
  INFO("e32 = " << e1 << "  e64 = " << e2 << "  order = " << order);
  REQUIRE(order >= 1.8);
}

TEST_CASE("uniform reference equilibrium is a fixed point of the step") {
  SGrid s = make_sgrid(1, {8, 1}, {1.0, 1.0});
  VGrid g = make_vgrid(2, 12, hilbert_Lv(12, 1.0, 0.0));
  const auto mu = local_maxwellian(g, CellFluid{1.0, {0.0, 0.0, 0.0}, 1.0});
  KineticState F0 = make_state(Rep::full_F, s.total, g.total);
  for (int c = 0; c < s.total; ++c)
    std::copy(mu.begin(), mu.end(), F0.cell(c));
  RunConfig cfg;
  cfg.eps = 0.1;
  cfg.dt = 1e-3;
  cfg.t_end = 0.05;
  cfg.collision.landau.gamma = 0.0;
  KineticRun run =
      make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s));
  const int nsteps = 50;
  run_to(run, nsteps * cfg.dt);
  const double ref = sup_abs(F0.vals);
  double drift = 0.0;
  for (size_t i = 0; i < F0.vals.size(); ++i)
    drift = std::max(drift, std::abs(run.F.vals[i] - F0.vals[i]));
  REQUIRE(drift / ref <= 1e-12 * nsteps);
  for (int d = 0; d < 3; ++d) {
    REQUIRE(sup_abs(run.E[d]) <= 1e-12);
    REQUIRE(sup_abs(run.B[d]) <= 1e-12);
  }
  const PositivityReport pr = positivity_monitor(run.F);
  REQUIRE(pr.neg_fraction == 0.0);
  REQUIRE(pr.most_negative == 0.0);
  REQUIRE(pr.min_value > 0.0);
}

TEST_CASE("perturbed run conserves mass exactly and energy to scheme order") {
  SGrid s = make_sgrid(1, {4, 1}, {1.0, 1.0});
  VGrid g = make_vgrid(3, 8, hilbert_Lv(8, 1.03, 0.02));
  KineticState F0 = make_state(Rep::full_F, s.total, g.total);
  FluidState fs;
  fs.resize(3, s.total);
  for (int c = 0; c < s.total; ++c) {
    const double x = s.center(0, s.unpack(c)[0]);
    fs.rho[c] = 1.0 + 0.05 * std::sin(2.0 * M_PI * x);
    fs.u[0][c] = 0.02 * std::cos(2.0 * M_PI * x);
    fs.u[1][c] = 0.01 * std::sin(2.0 * M_PI * x);
    fs.u[2][c] = -0.015 * std::cos(2.0 * M_PI * x);
    fs.T[c] = 1.0 + 0.03 * std::cos(2.0 * M_PI * x);
    const auto M = local_maxwellian(g, cell_fluid(fs, c));
    std::copy(M.begin(), M.end(), F0.cell(c));
  }
  auto E0 = zero_fields(s), B0 = zero_fields(s);
  for (int c = 0; c < s.total; ++c) {
    const double x = s.center(0, s.unpack(c)[0]);
    E0[0][c] = 0.005 * std::sin(2.0 * M_PI * x);
    B0[0][c] = 0.01;
    B0[1][c] = 0.02;
    B0[2][c] = 0.015;
  }
  RunConfig cfg;
  cfg.eps = 0.1;
  cfg.dt = 2e-3;
  cfg.t_end = 0.04;
  cfg.n_refresh = 25;  // one frame build over the whole short run
  cfg.collision.landau.gamma = 0.0;
  KineticRun run = make_run_fullF(cfg, s, g, F0, E0, B0);
  run_all(run);
  const BudgetTotals b1 = kinetic_budget(s, g, run.F, run.E, run.B);
  REQUIRE(std::abs(b1.mass - run.mass0) <= 1e-10 * std::abs(run.mass0));
  REQUIRE(std::abs(b1.energy - run.energy0) <= 1e-5 * std::abs(run.energy0));
}

TEST_CASE("implicit stage relaxes the microscopic part harder as eps drops") {
  SGrid s = make_sgrid(1, {4, 1}, {1.0, 1.0});
  VGrid g = make_vgrid(2, 12, hilbert_Lv(12, 1.0, 0.0));
  const CellFluid cf{1.0, {0.0, 0.0, 0.0}, 1.0};
  const auto mu = local_maxwellian(g, cf);
  const Projector proj = build_projector(g, cf);
  // microscopic perturbation, identical in every cell
  std::vector<double> raw(g.total), micro(g.total);
  for (int a = 0; a < g.total; ++a) {
    const double v0 = g.v[a][0], v1 = g.v[a][1];
    raw[a] = (v0 * v0 * v1 - 0.6 * v1) * std::sqrt(mu[a]);
  }
  apply_ImPM(g, proj, raw.data(), micro.data());
  const double amp = 1e-4 / wnorm(g, micro);
  std::vector<double> after;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    KineticState F0 = make_state(Rep::full_F, s.total, g.total);
    for (int c = 0; c < s.total; ++c)
      for (int a = 0; a < g.total; ++a)
        F0.cell(c)[a] = mu[a] + amp * std::sqrt(mu[a]) * micro[a];
    RunConfig cfg;
    cfg.eps = eps;
    cfg.dt = 1e-3;
    cfg.t_end = 1e-3;
    cfg.collision.landau.gamma = 0.0;
    KineticRun run =
        make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s));
    kinetic_step(run, cfg.dt);
    // microscopic remnant in the relaxation frame
    std::vector<double> fv(g.total), rem(g.total);
    const double* Fc = run.F.cell(0);
    for (int a = 0; a < g.total; ++a)
      fv[a] = (Fc[a] - mu[a]) / std::max(std::sqrt(mu[a]), 1e-300);
    apply_ImPM(g, proj, fv.data(), rem.data());
    after.push_back(wnorm(g, rem));
  }
  INFO("micro norms " << after[0] << " " << after[1] << " " << after[2]);
  REQUIRE(after[0] > after[1]);
  REQUIRE(after[1] > after[2]);
}

TEST_CASE("horizon, stability, and finiteness guards") {
  SGrid s = make_sgrid(1, {8, 1}, {1.0, 1.0});
  VGrid g = make_vgrid(2, 12, hilbert_Lv(12, 1.0, 0.0));
  KineticState F0 = make_state(Rep::full_F, s.total, g.total);
  const auto mu = local_maxwellian(g, CellFluid{1.0, {0.0, 0.0, 0.0}, 1.0});
  for (int c = 0; c < s.total; ++c)
    std::copy(mu.begin(), mu.end(), F0.cell(c));

  RunConfig cfg;
  cfg.eps = 1e-2;
  cfg.kappa = default_kappa;
  cfg.dt = 1e-3;
  cfg.t_end = 5.0;  // above eps^{-kappa} ~ 4.64
  REQUIRE_THROWS_AS(
      make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s)),
      HkinError);
  cfg.horizon_override = true;
  REQUIRE_NOTHROW(
      make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s)));
  cfg.horizon_override = false;
  cfg.t_end = 4.0;
  REQUIRE_NOTHROW(
      make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s)));

  // transport stability precondition
  cfg.t_end = 0.1;
  cfg.dt = 1.0;
  REQUIRE_THROWS_WITH(
      make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s)),
      Catch::Matchers::ContainsSubstring("transport stability"));

  // finiteness guard
  cfg.dt = 1e-3;
  KineticRun run =
      make_run_fullF(cfg, s, g, F0, zero_fields(s), zero_fields(s));
  run.F.vals[7] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_WITH(kinetic_step(run, cfg.dt),
                      Catch::Matchers::ContainsSubstring("finiteness"));
}

TEST_CASE("zero remainder with zero sources stays zero in both frames") {
  const KTraj& kt = eqtraj();
  for (RunMode mode : {RunMode::remainder_f, RunMode::remainder_h}) {
    RunConfig cfg;
    cfg.mode = mode;
    cfg.eps = 0.1;
    cfg.k = 1;
    cfg.dt = 1e-3;
    cfg.t_end = 0.01;
    cfg.collision = kt.spec;
    const Rep rep =
        mode == RunMode::remainder_f ? Rep::remainder_f : Rep::remainder_h;
    KineticState r0 = make_state(rep, kt.s.total, kt.g.total);
    KineticRun run = make_run_remainder(cfg, kt.track, r0, zero_fields(kt.s),
                                        zero_fields(kt.s));
    run_all(run);
    REQUIRE(sup_abs(run.F.vals) <= 1e-13);
    for (int d = 0; d < 3; ++d) {
      REQUIRE(sup_abs(run.E[d]) <= 1e-13);
      REQUIRE(sup_abs(run.B[d]) <= 1e-13);
    }
  }
}

TEST_CASE("local and global remainder frames advance the same physical state") {
  const KTraj& kt = ktraj();
  const ExpansionSet set0 = track_at(kt.track, 0.0);
  KineticState f0 = seed_remainder(kt.s, kt.g, Rep::remainder_f, 1e-3);
  KineticState h0 = remainder_f_to_h(kt.s, kt.g, set0.fluid, set0.ref, f0);
  auto ER0 = zero_fields(kt.s), BR0 = zero_fields(kt.s);
  for (int c = 0; c < kt.s.total; ++c) {
    const double x = kt.s.center(0, kt.s.unpack(c)[0]);
    ER0[0][c] = 0.01 * std::cos(2.0 * M_PI * x);
    ER0[1][c] = 0.005 * std::sin(2.0 * M_PI * x);
    BR0[0][c] = 0.02 * std::sin(2.0 * M_PI * x);
  }
  RunConfig cfg;
  cfg.eps = 0.5;
  cfg.k = 1;
  cfg.dt = 1e-4;
  cfg.t_end = 1e-3;
  cfg.collision = kt.spec;

  cfg.mode = RunMode::remainder_f;
  KineticRun rf = make_run_remainder(cfg, kt.track, f0, ER0, BR0);
  run_all(rf);
  cfg.mode = RunMode::remainder_h;
  KineticRun rh = make_run_remainder(cfg, kt.track, h0, ER0, BR0);
  run_all(rh);

  const ExpansionSet sett = track_at(kt.track, cfg.t_end);
  double ref = 0.0, gap = 0.0, gapE = 0.0;
  for (int c = 0; c < kt.s.total; ++c) {
    const auto M = local_maxwellian(kt.g, cell_fluid(sett.fluid, c));
    for (int a = 0; a < kt.g.total; ++a) {
      if (sett.ref.mu[a] < 1e-30) continue;
      const double FRf = std::sqrt(M[a]) * rf.F.cell(c)[a];
      const double FRh = std::sqrt(sett.ref.mu[a]) * rh.F.cell(c)[a];
      ref = std::max(ref, std::abs(FRf));
      gap = std::max(gap, std::abs(FRf - FRh));
    }
    for (int d = 0; d < 3; ++d) {
      gapE = std::max(gapE, std::abs(rf.E[d][c] - rh.E[d][c]));
      gapE = std::max(gapE, std::abs(rf.B[d][c] - rh.B[d][c]));
    }
  }
  INFO("remainder sup " << ref << "  frame gap " << gap << "  field gap "
                        << gapE);
  REQUIRE(ref > 0.0);
  REQUIRE(gap <= 1e-6 * ref);
  REQUIRE(gapE <= 1e-6);
}

TEST_CASE("full run minus assembled expansion tracks the remainder run") {
  const KTraj& kt = ktraj();
  const double eps = 0.3;
  const double t_end = 5e-3;
  const ExpansionSet set0 = track_at(kt.track, 0.0);
  KineticState f0 = seed_remainder(kt.s, kt.g, Rep::remainder_f, 3e-3);
  auto ER0 = zero_fields(kt.s), BR0 = zero_fields(kt.s);

  RunConfig cfg;
  cfg.eps = eps;
  cfg.k = 1;
  cfg.dt = 1e-4;
  cfg.t_end = t_end;
  cfg.collision = kt.spec;

  cfg.mode = RunMode::remainder_f;
  KineticRun rf = make_run_remainder(cfg, kt.track, f0, ER0, BR0);
  run_all(rf);

  // the same state assembled as a full distribution with its fields
  const AssembledFields A0 = assemble_expansion(set0, eps);
  KineticState F0 = A0.F;
  for (int c = 0; c < kt.s.total; ++c) {
    const auto M = local_maxwellian(kt.g, cell_fluid(set0.fluid, c));
    for (int a = 0; a < kt.g.total; ++a)
      F0.cell(c)[a] += eps * std::sqrt(M[a]) * f0.cell(c)[a];
  }
  cfg.mode = RunMode::full_F;
  KineticRun rF = make_run_fullF(cfg, kt.s, kt.g, F0, A0.E, A0.B);
  run_all(rF);

  const ExpansionSet sett = track_at(kt.track, t_end);
  const AssembledFields At = assemble_expansion(sett, eps);
  KineticState indirect = make_state(Rep::remainder_f, kt.s.total,
                                     kt.g.total);
  for (int c = 0; c < kt.s.total; ++c) {
    const auto M = local_maxwellian(kt.g, cell_fluid(sett.fluid, c));
    for (int a = 0; a < kt.g.total; ++a)
      indirect.cell(c)[a] = (rF.F.cell(c)[a] - At.F.cell(c)[a]) /
                            (eps * std::max(std::sqrt(M[a]), 1e-300));
  }
  double num = 0.0, den = 0.0;
  const double volw = kt.s.hx[0] * kt.s.hx[1];
  for (int c = 0; c < kt.s.total; ++c) {
    const double* fd = rf.F.cell(c);
    const double* fi = indirect.cell(c);
    for (int a = 0; a < kt.g.total; ++a) {
      num += volw * kt.g.w[a] * sqr(fi[a] - fd[a]);
      den += volw * kt.g.w[a] * sqr(fd[a]);
    }
  }
  const double rel = std::sqrt(num / den);
  INFO("dual-route relative gap " << rel);
  REQUIRE(den > 0.0);
  REQUIRE(rel <= 0.10);
}

TEST_CASE("cubic track interpolation reproduces polynomial trajectories") {
  const KTraj& kt = eqtraj();
  // synthetic slices: every fluid and coefficient field polynomial in time
  std::vector<ExpansionSet> sets;
  const std::array<double, 4> ts{0.0, 0.1, 0.25, 0.4};
  auto shape = [&](int c) {
    const double x = kt.s.center(0, kt.s.unpack(c)[0]);
    return std::sin(2.0 * M_PI * x);
  };
  for (double tv : ts) {
    ExpansionSet e = kt.track.sets[0];
    e.t = tv;
    const double p = 1.0 + 0.2 * tv - 0.3 * tv * tv + 0.05 * tv * tv * tv;
    for (int c = 0; c < kt.s.total; ++c) {
      e.fluid.rho[c] = 1.0 + 0.01 * p * shape(c);
      e.fluid.T[c] = 1.0 - 0.008 * p * shape(c);
      e.fluid.u[0][c] = 0.02 * p * shape(c);
      e.fluid.E[0][c] = 0.015 * p * shape(c);
      e.fluid.B[0][c] = -0.012 * p * shape(c);
      e.coeff[0].rho_n[c] = 0.3 * p * shape(c);
      e.coeff[0].E_n[1][c] = 0.7 * p * shape(c);
      for (int a = 0; a < kt.g.total; ++a)
        e.coeff[0].F.cell(c)[a] = p * shape(c) * kt.track.sets[0].ref.mu[a];
    }
    sets.push_back(e);
  }
  ExpansionTrack tr = make_track(sets);
  const double tq = 0.17;
  const double p =
      1.0 + 0.2 * tq - 0.3 * tq * tq + 0.05 * tq * tq * tq;
  const ExpansionSet out = track_at(tr, tq);
  for (int c : {0, 3, 5}) {
    REQUIRE(out.fluid.rho[c] ==
            Catch::Approx(1.0 + 0.01 * p * shape(c)).margin(1e-12));
    REQUIRE(out.fluid.u[0][c] ==
            Catch::Approx(0.02 * p * shape(c)).margin(1e-12));
    REQUIRE(out.coeff[0].rho_n[c] ==
            Catch::Approx(0.3 * p * shape(c)).margin(1e-12));
    REQUIRE(out.coeff[0].E_n[1][c] ==
            Catch::Approx(0.7 * p * shape(c)).margin(1e-12));
    REQUIRE(out.coeff[0].F.cell(c)[5] ==
            Catch::Approx(p * shape(c) * tr.sets[0].ref.mu[5]).margin(1e-12));
    // leading Maxwellian rebuilt from the blended fluid, not blended itself
    const auto M = local_maxwellian(kt.g, cell_fluid(out.fluid, c));
    REQUIRE(out.F0.cell(c)[7] == Catch::Approx(M[7]).margin(1e-14));
  }
  // guards
  REQUIRE_THROWS_AS(track_at(tr, 0.5), HkinError);
  REQUIRE_THROWS_AS(track_at(tr, -0.1), HkinError);
  std::vector<ExpansionSet> bad = {sets[1], sets[0]};
  REQUIRE_THROWS_AS(make_track(bad), HkinError);
}

TEST_CASE("constraint-consistent initial remainder fields satisfy the "
          "divergence monitor") {
  const KTraj& kt = ktraj();
  const ExpansionSet set0 = track_at(kt.track, 0.0);
  KineticState f0 = seed_remainder(kt.s, kt.g, Rep::remainder_f, 1e-3);
  // density of the frame-weighted remainder, mean-free by the single
  // harmonic, then the divergence constraint solved exactly in spectral form
  std::vector<double> dens(kt.s.total);
  for (int c = 0; c < kt.s.total; ++c) {
    const auto M = local_maxwellian(kt.g, cell_fluid(set0.fluid, c));
    double d = 0.0;
    for (int a = 0; a < kt.g.total; ++a)
      d += kt.g.w[a] * std::sqrt(M[a]) * f0.cell(c)[a];
    dens[c] = 4.0 * M_PI * d;
  }
  const auto phi = poisson_solve(kt.s, dens);
  auto ER0 = zero_fields(kt.s), BR0 = zero_fields(kt.s);
  const auto dphi = spectral_deriv(kt.s, phi, 0, 1);
  for (int c = 0; c < kt.s.total; ++c) ER0[0][c] = -dphi[c];
  RunConfig cfg;
  cfg.mode = RunMode::remainder_f;
  cfg.eps = 0.5;
  cfg.k = 1;
  cfg.dt = 1e-4;
  cfg.t_end = 5e-4;
  cfg.collision = kt.spec;
  KineticRun run = make_run_remainder(cfg, kt.track, f0, ER0, BR0);
  const double r0 = remainder_gauss_residual(run);
  REQUIRE(r0 <= 1e-10);
  run_all(run);
  REQUIRE(std::isfinite(remainder_gauss_residual(run)));
}

TEST_CASE("energy rows and the a priori envelope abort") {
  const KTraj& kt = eqtraj();
  RunConfig cfg;
  cfg.mode = RunMode::remainder_f;
  cfg.eps = 1e-2;
  cfg.k = 1;
  cfg.dt = 1e-3;
  cfg.t_end = 0.01;
  cfg.collision = kt.spec;
  cfg.diag_every = 1;
  KineticState r0 = seed_remainder(kt.s, kt.g, Rep::remainder_f, 1e-6);
  KineticRun run = make_run_remainder(cfg, kt.track, r0, zero_fields(kt.s),
                                      zero_fields(kt.s));
  REQUIRE(run.energy_rows.size() == 1);  // the initial row
  kinetic_step(run, cfg.dt);
  REQUIRE(run.energy_rows.size() == 2);
  REQUIRE(std::isfinite(run.energy_rows.back()[1]));
  // simulate a blow-up: the next row must trip the envelope
  for (double& v : run.F.vals) v = 1e6;
  REQUIRE_THROWS_WITH(kinetic_step(run, cfg.dt),
                      Catch::Matchers::ContainsSubstring("envelope"));
}
