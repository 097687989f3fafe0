#ifndef HKIN_MAXWELLIAN_HPP
#define HKIN_MAXWELLIAN_HPP

#include <Eigen/Dense>

#include "hkin/grid.hpp"
#include "hkin/stencil.hpp"

namespace hkin {

/// Fluid + field state on the spatial grid.  u and E carry dv components,
/// B carries b_components(dv).
struct FluidState {
  int dv = 3;
  std::vector<double> rho, T;
  std::array<std::vector<double>, 3> u;
  std::array<std::vector<double>, 3> E;
  std::array<std::vector<double>, 3> B;

  void resize(int dv_, int ncells) {
    dv = dv_;
    rho.assign(ncells, 0.0);
    T.assign(ncells, 0.0);
    for (int d = 0; d < 3; ++d) {
      u[d].assign(ncells, 0.0);
      E[d].assign(ncells, 0.0);
      B[d].assign(ncells, 0.0);
    }
  }
  int ncells() const { return static_cast<int>(rho.size()); }
};

struct CellFluid {
  double rho = 1.0;
  Vec3 u{0.0, 0.0, 0.0};
  double T = 1.0;
};

inline CellFluid cell_fluid(const FluidState& fs, int c) {
  CellFluid cf;
  cf.rho = fs.rho[c];
  cf.T = fs.T[c];
  for (int d = 0; d < 3; ++d) cf.u[d] = fs.u[d][c];
  return cf;
}

inline double maxwellian_at(const CellFluid& cf, int dv, const Vec3& v) {
  double q = 0.0;
  for (int d = 0; d < dv; ++d) q += sqr(v[d] - cf.u[d]);
  const double RT = gas_constant * cf.T;
  return cf.rho * std::pow(2.0 * M_PI * RT, -0.5 * dv) *
         std::exp(-q / (2.0 * RT));
}

/// Node values of the local Maxwellian with parameters (rho, u, T).
inline std::vector<double> local_maxwellian(const VGrid& g,
                                            const CellFluid& cf) {
  require(cf.rho > 0.0 && cf.T > 0.0,
          "maxwellian parameters need rho > 0 and T > 0");
  std::vector<double> M(g.total);
  for (int a = 0; a < g.total; ++a) M[a] = maxwellian_at(cf, g.dv, g.v[a]);
  return M;
}

/// Derivative weight for Gaussian-exact differentiation around a Maxwellian.
inline DerivWeight maxwellian_weight(const VGrid& g, const CellFluid& cf) {
  DerivWeight wt;
  wt.Wv = local_maxwellian(g, cf);
  const double RT = gas_constant * cf.T;
  for (int d = 0; d < g.dv; ++d) {
    wt.dlogW[d].resize(g.total);
    for (int a = 0; a < g.total; ++a)
      wt.dlogW[d][a] = -(g.v[a][d] - cf.u[d]) / RT;
  }
  return wt;
}

/// Discrete moments (mass, momentum, scalar energy) of a velocity-grid
/// function under the trapezoid weights.
struct Moments {
  double m0 = 0.0;
  Vec3 m1{0.0, 0.0, 0.0};
  double m2 = 0.0;
};

inline Moments moments(const VGrid& g, const double* F) {
  Moments m;
  for (int a = 0; a < g.total; ++a) {
    const double wF = g.w[a] * F[a];
    m.m0 += wF;
    double v2 = 0.0;
    for (int d = 0; d < g.dv; ++d) {
      m.m1[d] += wF * g.v[a][d];
      v2 += sqr(g.v[a][d]);
    }
    m.m2 += wF * v2;
  }
  return m;
}

inline Moments moments(const VGrid& g, const std::vector<double>& F) {
  return moments(g, F.data());
}

/// Maxwellian whose *discrete* moments match those of F: Newton on
/// (rho, u, T).  Makes the fitted Maxwellian an exact quadrature equilibrium,
/// not just an analytic one.  Throws if the naive moments are unusable.
inline CellFluid fit_maxwellian(const VGrid& g, const double* F) {
  const Moments tgt = moments(g, F);
  require(tgt.m0 > 0.0, "maxwellian fit: nonpositive mass");
  CellFluid cf;
  cf.rho = tgt.m0;
  double u2 = 0.0;
  for (int d = 0; d < g.dv; ++d) {
    cf.u[d] = tgt.m1[d] / tgt.m0;
    u2 += sqr(cf.u[d]);
  }
  double T0 = (tgt.m2 / tgt.m0 - u2) / (g.dv * gas_constant);
  require(T0 > 0.0, "maxwellian fit: nonpositive temperature");
  cf.T = T0;

  const int n = g.dv + 2;
  const double scale =
      std::max({std::abs(tgt.m0), std::abs(tgt.m2), 1e-300});
  for (int iter = 0; iter < 60; ++iter) {
    std::vector<double> M = local_maxwellian(g, cf);
    const Moments cur = moments(g, M);
    Eigen::VectorXd r(n);
    r(0) = cur.m0 - tgt.m0;
    for (int d = 0; d < g.dv; ++d) r(1 + d) = cur.m1[d] - tgt.m1[d];
    r(n - 1) = cur.m2 - tgt.m2;
    if (r.lpNorm<Eigen::Infinity>() <= 1e-13 * scale) return cf;

    // Columns: d/drho, d/du_d, d/dT of the discrete moments.
    Eigen::MatrixXd J(n, n);
    const double RT = gas_constant * cf.T;
    for (int col = 0; col < n; ++col) {
      Moments dm;
      for (int a = 0; a < g.total; ++a) {
        double dM;
        if (col == 0) {
          dM = M[a] / cf.rho;
        } else if (col < n - 1) {
          const int d = col - 1;
          dM = M[a] * (g.v[a][d] - cf.u[d]) / RT;
        } else {
          double q = 0.0;
          for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d] - cf.u[d]);
          dM = M[a] * (q / (2.0 * RT) - 0.5 * g.dv) / cf.T;
        }
        const double wdM = g.w[a] * dM;
        dm.m0 += wdM;
        double v2 = 0.0;
        for (int d = 0; d < g.dv; ++d) {
          dm.m1[d] += wdM * g.v[a][d];
          v2 += sqr(g.v[a][d]);
        }
        dm.m2 += wdM * v2;
      }
      J(0, col) = dm.m0;
      for (int d = 0; d < g.dv; ++d) J(1 + d, col) = dm.m1[d];
      J(n - 1, col) = dm.m2;
    }
    Eigen::VectorXd step = J.fullPivLu().solve(r);
    double damp = 1.0;
    // Keep rho and T positive.
    while (cf.rho - damp * step(0) <= 0.0 ||
           cf.T - damp * step(n - 1) <= 0.0)
      damp *= 0.5;
    cf.rho -= damp * step(0);
    for (int d = 0; d < g.dv; ++d) cf.u[d] -= damp * step(1 + d);
    cf.T -= damp * step(n - 1);
  }
  throw HkinError("maxwellian fit: Newton did not converge");
}

/// Global reference Maxwellian mu with uniform temperature Tc below the
/// fluid temperature everywhere, above half its supremum.
struct GlobalRef {
  double Tc = 1.0;
  double C0 = 2.0;
  double eps1 = 0.0;
  std::vector<double> mu;  // node values on the velocity grid
};

/// Feasibility: sup T / 2 < inf T.  Tc = inf T - margin with
/// margin = min((inf T - sup T / 2)/2, eps1_est).  eps1_est defaults to the
/// measured temperature oscillation sup T - inf T (floor 1e-2 when flat).
inline GlobalRef select_Tc(const VGrid& g, const FluidState& fs, double C0,
                           double eps1_est = -1.0) {
  require(C0 >= 1.0, "closeness constant C0 must be >= 1");
  double Tmin = fs.T[0], Tmax = fs.T[0];
  for (double t : fs.T) {
    Tmin = std::min(Tmin, t);
    Tmax = std::max(Tmax, t);
  }
  require(Tmin > 0.0, "temperature field must be positive");
  require(0.5 * Tmax < Tmin,
          "no admissible reference temperature: sup T / 2 >= inf T");
  double eps1 = eps1_est;
  if (eps1 <= 0.0) {
    eps1 = Tmax - Tmin;
    if (eps1 == 0.0) eps1 = 1e-2;
  }
  const double margin = std::min(0.5 * (Tmin - 0.5 * Tmax), eps1);
  GlobalRef ref;
  ref.Tc = Tmin - margin;
  ref.C0 = C0;
  ref.eps1 = eps1;
  CellFluid cf;
  cf.rho = 1.0;
  cf.u = {0.0, 0.0, 0.0};
  cf.T = ref.Tc;
  ref.mu = local_maxwellian(g, cf);
  return ref;
}

/// Check of the closeness band eps1/C0 <= T - Tc <= C0*eps1 by direct scan.
inline bool closeness_band_ok(const FluidState& fs, const GlobalRef& ref) {
  for (double t : fs.T) {
    const double d = t - ref.Tc;
    if (d < ref.eps1 / ref.C0 || d > ref.C0 * ref.eps1) return false;
  }
  return true;
}

inline DerivWeight global_weight(const VGrid& g, const GlobalRef& ref) {
  DerivWeight wt;
  wt.Wv = ref.mu;
  const double RTc = gas_constant * ref.Tc;
  for (int d = 0; d < g.dv; ++d) {
    wt.dlogW[d].resize(g.total);
    for (int a = 0; a < g.total; ++a) wt.dlogW[d][a] = -g.v[a][d] / RTc;
  }
  return wt;
}

}  // namespace hkin

#endif
