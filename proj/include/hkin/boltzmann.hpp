#ifndef HKIN_BOLTZMANN_HPP
#define HKIN_BOLTZMANN_HPP

#include <Eigen/Dense>

#include "hkin/conservation.hpp"
#include "hkin/landau_linear.hpp"
#include "hkin/maxwellian.hpp"

namespace hkin {

/// Scattering collision kernel Cv * |v - v*|^gamma * b(cos theta), deviation
/// angle restricted to [0, pi/2].  Two angular laws:
///   cutoff:            b(cos theta) = cos theta,
///   regularized non-cutoff: the angular density sin(theta) b(cos theta)
///     equals theta^(-1-2s) clamped below theta_min (for the planar circle
///     the density |theta|^(-1-2s) is clamped the same way).
struct BoltzmannParams {
  double gamma = -1.0;
  double s = 0.25;
  double Cv = 1.0;
  double Cb = 2.0;
  enum class Angular { cutoff, noncutoff_reg };
  Angular mode = Angular::cutoff;
  double theta_min = 0.2;
  int n_theta = 4;       // polar quadrature nodes (per panel when clamped)
  int n_phi = 8;         // azimuth nodes, dv = 3 only
  int interp_order = 3;  // 1 (tensor-linear) or 3 (tensor-cubic) gain lookup
  double support_cut = 0.0;  // relative pair-strength pruning threshold

  void validate(int dv) const {
    require(s > 0.0 && s < 1.0, "boltzmann: s must lie in (0,1)");
    const double glo = std::max(-3.0, -1.5 - 2.0 * s);
    require(gamma > glo && gamma <= 0.0,
            "boltzmann: gamma out of admissible range");
    require(Cv > 0.0, "boltzmann: Cv must be positive");
    require(Cb > 1.0, "boltzmann: Cb must exceed 1");
    if (mode == Angular::noncutoff_reg)
      require(theta_min > 0.0 && theta_min < 0.5 * M_PI,
              "boltzmann: theta_min must lie in (0, pi/2)");
    require(n_theta >= 2, "boltzmann: need at least 2 polar nodes");
    if (dv == 3) require(n_phi >= 2, "boltzmann: need at least 2 azimuth nodes");
    require(interp_order == 1 || interp_order == 3,
            "boltzmann: interpolation order must be 1 or 3");
    require(support_cut >= 0.0, "boltzmann: support_cut must be >= 0");
  }
};

namespace detail {

/// Gauss-Legendre rule on [a, b] by Golub-Welsch on the Jacobi matrix.
inline void gauss_legendre(int n, double a, double b, std::vector<double>& x,
                           std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(n);
  w.resize(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    x[i] = mid + half * es.eigenvalues()(i);
    w[i] = 2.0 * sqr(es.eigenvectors()(0, i)) * half;
  }
}

}  // namespace detail

/// Quadrature rule for the deviation-angle integral.  Node weights absorb the
/// angular law and the sphere measure, so for any pair geometry
///   integral of b(cos theta) dsigma  ~=  sum of node.w.
/// dv = 3: product rule (polar x uniform azimuth) on the forward half-sphere
/// about the relative-velocity axis; dv = 2: the signed planar circle with
/// cp = 1, sp = 0.
struct SphereRule {
  struct Node {
    double ct, st, cp, sp, w;
  };
  std::vector<Node> nodes;
  double total_b = 0.0;
};

inline SphereRule make_sphere_rule(int dv, const BoltzmannParams& p) {
  p.validate(dv);
  SphereRule R;
  std::vector<double> x, w;
  // Polar layer: (ct, st, weight including angular density and, for dv = 3,
  // the sin(theta) measure factor).
  std::vector<std::array<double, 3>> polar;
  const double sexp = -1.0 - 2.0 * p.s;
  if (p.mode == BoltzmannParams::Angular::cutoff) {
    if (dv == 3) {
      // t = cos theta on [0,1]; dsigma = dt dphi and b = t.
      detail::gauss_legendre(p.n_theta, 0.0, 1.0, x, w);
      for (int i = 0; i < p.n_theta; ++i)
        polar.push_back({x[i], std::sqrt(std::max(0.0, 1.0 - sqr(x[i]))),
                         w[i] * x[i]});
    } else {
      detail::gauss_legendre(p.n_theta, -0.5 * M_PI, 0.5 * M_PI, x, w);
      for (int i = 0; i < p.n_theta; ++i)
        polar.push_back({std::cos(x[i]), std::sin(x[i]),
                         w[i] * std::cos(x[i])});
    }
  } else {
    // Panels split at the clamp angle keep the density smooth per panel.
    auto add_panel = [&](double lo, double hi) {
      if (hi <= lo) return;
      detail::gauss_legendre(p.n_theta, lo, hi, x, w);
      for (int i = 0; i < p.n_theta; ++i) {
        const double th = std::abs(x[i]);
        const double dens = std::pow(std::max(th, p.theta_min), sexp);
        polar.push_back({std::cos(x[i]), std::sin(x[i]), w[i] * dens});
      }
    };
    if (dv == 3) {
      add_panel(0.0, p.theta_min);
      add_panel(p.theta_min, 0.5 * M_PI);
    } else {
      add_panel(-0.5 * M_PI, -p.theta_min);
      add_panel(-p.theta_min, p.theta_min);
      add_panel(p.theta_min, 0.5 * M_PI);
    }
  }
  if (dv == 3) {
    const double wphi = 2.0 * M_PI / p.n_phi;
    for (const auto& pl : polar)
      for (int m = 0; m < p.n_phi; ++m) {
        const double phi = wphi * (m + 0.5);
        R.nodes.push_back({pl[0], pl[1], std::cos(phi), std::sin(phi),
                           pl[2] * wphi});
      }
  } else {
    for (const auto& pl : polar) R.nodes.push_back({pl[0], pl[1], 1.0, 0.0, pl[2]});
  }
  for (const auto& nd : R.nodes) R.total_b += nd.w;
  return R;
}

/// Behavior of the tensor interpolation when the query point leaves the grid
/// hull: report zero, extrapolate the clamped boundary window (polynomial
/// exact, used where null-space exactness matters), or clamp the point.
enum class OutsideRule { zero, extrapolate, clamp };

namespace detail {

/// Lagrange window along one axis: writes order+1 weights, returns the first
/// node index of the clamped window.
inline int axis_window(const VGrid& g, int order, double x, double* wt) {
  const int span = order + 1;
  int i0 = static_cast<int>(std::floor((x + g.Lv) / g.h));
  i0 -= (order - 1) / 2;
  i0 = std::max(0, std::min(i0, g.nv - span));
  for (int k = 0; k < span; ++k) {
    double num = 1.0, den = 1.0;
    const double xk = g.axis[i0 + k];
    for (int j = 0; j < span; ++j) {
      if (j == k) continue;
      num *= x - g.axis[i0 + j];
      den *= xk - g.axis[i0 + j];
    }
    wt[k] = num / den;
  }
  return i0;
}

struct InterpPoint {
  int base = 0;          // flattened index of the window corner
  bool inside = true;    // query inside the hull
  double wt[3][4];       // per-axis weights
};

inline InterpPoint plan_interp(const VGrid& g, int order, OutsideRule mode,
                               Vec3 x) {
  InterpPoint ip;
  for (int d = 0; d < g.dv; ++d)
    if (std::abs(x[d]) > g.Lv) {
      ip.inside = false;
      if (mode == OutsideRule::clamp)
        x[d] = std::max(-g.Lv, std::min(g.Lv, x[d]));
    }
  if (!ip.inside && mode == OutsideRule::zero) return ip;
  ip.base = 0;
  for (int d = 0; d < g.dv; ++d)
    ip.base += axis_window(g, order, x[d], ip.wt[d]) * g.stride(d);
  // clamp and extrapolate both yield a usable window for any query point
  if (mode != OutsideRule::zero) ip.inside = true;
  return ip;
}

inline double interp_eval(const VGrid& g, int order, const InterpPoint& ip,
                          const double* fld) {
  if (!ip.inside) return 0.0;
  const int span = order + 1;
  const int s1 = g.stride(1);
  double acc = 0.0;
  if (g.dv == 2) {
    for (int k1 = 0; k1 < span; ++k1) {
      const double* row = fld + ip.base + k1 * s1;
      double line = 0.0;
      for (int k0 = 0; k0 < span; ++k0) line += ip.wt[0][k0] * row[k0];
      acc += ip.wt[1][k1] * line;
    }
  } else {
    const int s2 = g.stride(2);
    for (int k2 = 0; k2 < span; ++k2)
      for (int k1 = 0; k1 < span; ++k1) {
        const double* row = fld + ip.base + k1 * s1 + k2 * s2;
        double line = 0.0;
        for (int k0 = 0; k0 < span; ++k0) line += ip.wt[0][k0] * row[k0];
        acc += ip.wt[1][k1] * ip.wt[2][k2] * line;
      }
  }
  return acc;
}

}  // namespace detail

/// Value of a tabulated velocity-grid field at an off-grid point.
inline double interp_value(const VGrid& g, const double* fld, int order,
                           OutsideRule mode, const Vec3& x) {
  const detail::InterpPoint ip = detail::plan_interp(g, order, mode, x);
  return detail::interp_eval(g, order, ip, fld);
}

/// Tap list (index, weight) of the same interpolation, for assembling
/// operators that act through scattered evaluations.  Returns the tap count
/// (0 when outside under the zero rule).
inline int interp_taps(const VGrid& g, int order, OutsideRule mode,
                       const Vec3& x, int* idx, double* wt) {
  const detail::InterpPoint ip = detail::plan_interp(g, order, mode, x);
  if (!ip.inside) return 0;
  const int span = order + 1;
  int cnt = 0;
  const int s1 = g.stride(1);
  if (g.dv == 2) {
    for (int k1 = 0; k1 < span; ++k1)
      for (int k0 = 0; k0 < span; ++k0) {
        idx[cnt] = ip.base + k0 + k1 * s1;
        wt[cnt++] = ip.wt[0][k0] * ip.wt[1][k1];
      }
  } else {
    const int s2 = g.stride(2);
    for (int k2 = 0; k2 < span; ++k2)
      for (int k1 = 0; k1 < span; ++k1)
        for (int k0 = 0; k0 < span; ++k0) {
          idx[cnt] = ip.base + k0 + k1 * s1 + k2 * s2;
          wt[cnt++] = ip.wt[0][k0] * ip.wt[1][k1] * ip.wt[2][k2];
        }
  }
  return cnt;
}

namespace detail {

/// Shared pair geometry: relative speed, kernel prefactor, midpoint, and an
/// orthonormal frame about the relative-velocity direction.
struct PairGeom {
  double r = 0.0, K = 0.0;
  Vec3 mid{}, uhat{}, e1{}, e2{};
};

inline bool pair_geom(const VGrid& g, int a, int b, double Cv, double gamma,
                      PairGeom& pg) {
  double r2 = 0.0;
  for (int d = 0; d < g.dv; ++d) {
    const double dd = g.v[a][d] - g.v[b][d];
    pg.uhat[d] = dd;
    pg.mid[d] = 0.5 * (g.v[a][d] + g.v[b][d]);
    r2 += sqr(dd);
  }
  if (r2 == 0.0) return false;
  pg.r = std::sqrt(r2);
  pg.K = Cv * std::pow(pg.r, gamma);
  for (int d = 0; d < g.dv; ++d) pg.uhat[d] /= pg.r;
  if (g.dv == 2) {
    pg.e1 = {-pg.uhat[1], pg.uhat[0], 0.0};
  } else {
    int k = 0;
    for (int d = 1; d < 3; ++d)
      if (std::abs(pg.uhat[d]) < std::abs(pg.uhat[k])) k = d;
    Vec3 ek{0.0, 0.0, 0.0};
    ek[k] = 1.0;
    // e1 = normalize(uhat x ek), e2 = uhat x e1.
    pg.e1 = {pg.uhat[1] * ek[2] - pg.uhat[2] * ek[1],
             pg.uhat[2] * ek[0] - pg.uhat[0] * ek[2],
             pg.uhat[0] * ek[1] - pg.uhat[1] * ek[0]};
    double n1 = 0.0;
    for (int d = 0; d < 3; ++d) n1 += sqr(pg.e1[d]);
    n1 = std::sqrt(n1);
    for (int d = 0; d < 3; ++d) pg.e1[d] /= n1;
    pg.e2 = {pg.uhat[1] * pg.e1[2] - pg.uhat[2] * pg.e1[1],
             pg.uhat[2] * pg.e1[0] - pg.uhat[0] * pg.e1[2],
             pg.uhat[0] * pg.e1[1] - pg.uhat[1] * pg.e1[0]};
  }
  return true;
}

/// Post-collision points for one angular node: vp on the v side, vsp on the
/// v* side.  vp + vsp reproduces v + v* exactly in floating point.
inline void scatter_points(const VGrid& g, const PairGeom& pg,
                           const SphereRule::Node& nd, Vec3& vp, Vec3& vsp) {
  const double half = 0.5 * pg.r;
  for (int d = 0; d < g.dv; ++d) {
    const double sd =
        nd.ct * pg.uhat[d] + nd.st * (nd.cp * pg.e1[d] + nd.sp * pg.e2[d]);
    vp[d] = pg.mid[d] + half * sd;
    vsp[d] = pg.mid[d] - half * sd;
  }
  vp[2] = vsp[2] = 0.0;
  if (g.dv == 3) {
    const double sd = nd.ct * pg.uhat[2] + nd.st * (nd.cp * pg.e1[2] + nd.sp * pg.e2[2]);
    vp[2] = pg.mid[2] + half * sd;
    vsp[2] = pg.mid[2] - half * sd;
  }
}

}  // namespace detail

/// Collision bilinear C(G, H)(v) = integral of
/// B(v - v*, sigma) { G(v*') H(v') - G(v*) H(v) }  over (v*, sigma).
///
/// Gain evaluation is reference-Maxwellian weighted: the tabulated ratios
/// G/mu_ref and H/mu_ref are interpolated at the scattered points (zero
/// outside the hull) and multiplied back by the analytic pair strength
/// mu_ref(v) mu_ref(v*), which equals mu_ref(v') mu_ref(v*') identically.
/// This keeps Maxwellian-shaped states exact up to interpolation of smooth
/// ratios and removes every exponential from the inner loop.
inline std::vector<double> boltzmann_bilinear(const VGrid& g,
                                              const BoltzmannParams& p,
                                              const CellFluid& ref,
                                              const std::vector<double>& G,
                                              const std::vector<double>& H) {
  p.validate(g.dv);
  const SphereRule rule = make_sphere_rule(g.dv, p);
  const std::vector<double> mu = local_maxwellian(g, ref);
  const int n = g.total;
  std::vector<double> Gt(n), Ht(n);
  double RG = 0.0, RH = 0.0, ref0 = 0.0;
  for (int a = 0; a < n; ++a) {
    const double m = std::max(mu[a], 1e-300);
    Gt[a] = G[a] / m;
    Ht[a] = H[a] / m;
    RG = std::max(RG, std::abs(Gt[a]));
    RH = std::max(RH, std::abs(Ht[a]));
    ref0 = std::max(ref0, std::abs(G[a]));
  }
  double Hmax = 0.0;
  for (int a = 0; a < n; ++a) Hmax = std::max(Hmax, std::abs(H[a]));
  ref0 *= Hmax;
  const bool same = (&G == &H);
  const int ord = p.interp_order;
  std::vector<double> C(n, 0.0);
  detail::PairGeom pg;
  Vec3 vp, vsp;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double P = mu[a] * mu[b];
      if (P * RG * RH <= p.support_cut * ref0) continue;
      if (!detail::pair_geom(g, a, b, p.Cv, p.gamma, pg)) continue;
      double accA = 0.0, accB = 0.0;
      const double lossA = Gt[b] * Ht[a], lossB = Gt[a] * Ht[b];
      for (const auto& nd : rule.nodes) {
        detail::scatter_points(g, pg, nd, vp, vsp);
        const auto ipP = detail::plan_interp(g, ord, OutsideRule::zero, vp);
        const auto ipS = detail::plan_interp(g, ord, OutsideRule::zero, vsp);
        const double gp = detail::interp_eval(g, ord, ipP, Gt.data());
        const double gs = detail::interp_eval(g, ord, ipS, Gt.data());
        const double hp = same ? gp : detail::interp_eval(g, ord, ipP, Ht.data());
        const double hs = same ? gs : detail::interp_eval(g, ord, ipS, Ht.data());
        accA += nd.w * (gs * hp - lossA);
        accB += nd.w * (gp * hs - lossB);
      }
      C[a] += g.w[b] * pg.K * P * accA;
      C[b] += g.w[a] * pg.K * P * accB;
    }
  return C;
}

/// Nonlinear collision form about a Maxwellian reference:
/// Gamma(f, h) = mu^(-1/2) C(mu^(1/2) f, mu^(1/2) h).
inline std::vector<double> gamma_boltz(const VGrid& g,
                                       const BoltzmannParams& p,
                                       const CellFluid& ref,
                                       const std::vector<double>& f,
                                       const std::vector<double>& h) {
  const std::vector<double> mu = local_maxwellian(g, ref);
  std::vector<double> sf(g.total), sh(g.total);
  for (int a = 0; a < g.total; ++a) {
    const double sq = std::sqrt(mu[a]);
    sf[a] = sq * f[a];
    sh[a] = sq * h[a];
  }
  std::vector<double> C = boltzmann_bilinear(g, p, ref, sf, sh);
  for (int a = 0; a < g.total; ++a)
    C[a] /= std::sqrt(std::max(mu[a], 1e-300));
  return C;
}

/// Strong-route linearized operator
/// L f = -M^(-1/2) [ C(M, M^(1/2) f) + C(M^(1/2) f, M) ],
/// evaluated through the bilinear; the weak assembly below is the primary
/// discretization and this serves as its cross-check.
inline std::vector<double> boltz_linearized_strong(const VGrid& g,
                                                   const BoltzmannParams& p,
                                                   const CellFluid& cf,
                                                   const std::vector<double>& f) {
  const std::vector<double> M = local_maxwellian(g, cf);
  std::vector<double> sf(g.total);
  for (int a = 0; a < g.total; ++a) sf[a] = std::sqrt(M[a]) * f[a];
  const std::vector<double> c1 = boltzmann_bilinear(g, p, cf, M, sf);
  const std::vector<double> c2 = boltzmann_bilinear(g, p, cf, sf, M);
  std::vector<double> out(g.total);
  for (int a = 0; a < g.total; ++a)
    out[a] = -(c1[a] + c2[a]) / std::sqrt(std::max(M[a], 1e-300));
  return out;
}

/// Reference-difference operator
/// L_d f = -mu^(-1/2) [ C(M - mu, mu^(1/2) f) + C(mu^(1/2) f, M - mu) ].
inline std::vector<double> boltz_Ld(const VGrid& g, const BoltzmannParams& p,
                                    const CellFluid& cf, const GlobalRef& ref,
                                    const std::vector<double>& f) {
  CellFluid cref;
  cref.rho = 1.0;
  cref.u = {0.0, 0.0, 0.0};
  cref.T = ref.Tc;
  const std::vector<double> M = local_maxwellian(g, cf);
  std::vector<double> dM(g.total), sf(g.total);
  for (int a = 0; a < g.total; ++a) {
    dM[a] = M[a] - ref.mu[a];
    sf[a] = std::sqrt(ref.mu[a]) * f[a];
  }
  const std::vector<double> c1 = boltzmann_bilinear(g, p, cref, dM, sf);
  const std::vector<double> c2 = boltzmann_bilinear(g, p, cref, sf, dM);
  std::vector<double> out(g.total);
  for (int a = 0; a < g.total; ++a)
    out[a] = -(c1[a] + c2[a]) / std::sqrt(std::max(ref.mu[a], 1e-300));
  return out;
}

/// Weak-form linearized scattering operator about M: the quadratic form
///   <L f, g>_w = (1/2) sum over unordered pairs and angular nodes of
///     w_a w_b K_ab M_a M_b w_ang * Delta(f/sqrt(M)) * Delta(g/sqrt(M)),
///   Delta(t) = t(v') + t(v*') - t(v) - t(v*),
/// with extrapolating tap interpolation so polynomial invariants are
/// annihilated node-exactly.  Symmetric and positive semidefinite by
/// construction.
struct BoltzLin {
  const VGrid* g = nullptr;
  BoltzmannParams p;
  CellFluid cf;
  SphereRule rule;
  std::vector<double> M, sqM;
  double Mmax = 0.0;
};

inline BoltzLin make_boltz_lin(const VGrid& g, const BoltzmannParams& p,
                               const CellFluid& cf) {
  p.validate(g.dv);
  BoltzLin L;
  L.g = &g;
  L.p = p;
  L.cf = cf;
  L.rule = make_sphere_rule(g.dv, p);
  L.M = local_maxwellian(g, cf);
  L.sqM.resize(g.total);
  for (int a = 0; a < g.total; ++a) {
    L.sqM[a] = std::sqrt(L.M[a]);
    L.Mmax = std::max(L.Mmax, L.M[a]);
  }
  return L;
}

/// Matrix-free apply: out = L f.
inline void apply_boltz_lin(const BoltzLin& L, const double* f, double* out) {
  const VGrid& g = *L.g;
  const int n = g.total;
  const int ord = L.p.interp_order;
  std::vector<double> tq(n), acc(n, 0.0);
  for (int a = 0; a < n; ++a) tq[a] = f[a] / L.sqM[a];
  const double cut = L.p.support_cut * sqr(L.Mmax);
  int idxP[64], idxS[64];
  double wtP[64], wtS[64];
  detail::PairGeom pg;
  Vec3 vp, vsp;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double P = L.M[a] * L.M[b];
      if (P <= cut) continue;
      if (!detail::pair_geom(g, a, b, L.p.Cv, L.p.gamma, pg)) continue;
      const double coef0 = 0.5 * g.w[a] * g.w[b] * pg.K * P;
      for (const auto& nd : L.rule.nodes) {
        detail::scatter_points(g, pg, nd, vp, vsp);
        const int cP =
            interp_taps(g, ord, OutsideRule::extrapolate, vp, idxP, wtP);
        const int cS =
            interp_taps(g, ord, OutsideRule::extrapolate, vsp, idxS, wtS);
        double delta = -tq[a] - tq[b];
        for (int k = 0; k < cP; ++k) delta += wtP[k] * tq[idxP[k]];
        for (int k = 0; k < cS; ++k) delta += wtS[k] * tq[idxS[k]];
        const double c = coef0 * nd.w * delta;
        for (int k = 0; k < cP; ++k) acc[idxP[k]] += c * wtP[k];
        for (int k = 0; k < cS; ++k) acc[idxS[k]] += c * wtS[k];
        acc[a] -= c;
        acc[b] -= c;
      }
    }
  for (int a = 0; a < n; ++a) out[a] = acc[a] / (g.w[a] * L.sqM[a]);
}

inline std::vector<double> apply_boltz_lin(const BoltzLin& L,
                                           const std::vector<double>& f) {
  std::vector<double> out(L.g->total);
  apply_boltz_lin(L, f.data(), out.data());
  return out;
}

/// Dense assembly of the same quadratic form (small grids only: the matrix
/// is total^2).  Returns the family-agnostic container, so the implicit and
/// pseudo-inverse factorizations apply unchanged.
inline DenseCollision assemble_boltz_linearized(const VGrid& g,
                                                const BoltzmannParams& p,
                                                const CellFluid& cf) {
  const BoltzLin L = make_boltz_lin(g, p, cf);
  const int n = g.total;
  require(n <= 4096, "dense scattering assembly: grid too large");
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  const int ord = p.interp_order;
  const double cut = p.support_cut * sqr(L.Mmax);
  int idx[130];
  double wt[130];
  detail::PairGeom pg;
  Vec3 vp, vsp;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double P = L.M[a] * L.M[b];
      if (P <= cut) continue;
      if (!detail::pair_geom(g, a, b, p.Cv, p.gamma, pg)) continue;
      const double coef0 = 0.5 * g.w[a] * g.w[b] * pg.K * P;
      for (const auto& nd : L.rule.nodes) {
        detail::scatter_points(g, pg, nd, vp, vsp);
        int cnt = interp_taps(g, ord, OutsideRule::extrapolate, vp, idx, wt);
        cnt += interp_taps(g, ord, OutsideRule::extrapolate, vsp, idx + cnt,
                           wt + cnt);
        idx[cnt] = a;
        wt[cnt++] = -1.0;
        idx[cnt] = b;
        wt[cnt++] = -1.0;
        const double c = coef0 * nd.w;
        for (int i = 0; i < cnt; ++i) {
          const double cwi = c * wt[i];
          for (int j = 0; j < cnt; ++j) Q(idx[i], idx[j]) += cwi * wt[j];
        }
      }
    }
  DenseCollision op;
  op.n = n;
  op.Wd = Eigen::VectorXd(n);
  op.Mref = Eigen::VectorXd(n);
  Eigen::VectorXd isq(n);
  for (int a = 0; a < n; ++a) {
    op.Wd(a) = g.w[a];
    op.Mref(a) = L.M[a];
    isq(a) = 1.0 / L.sqM[a];
  }
  op.B = isq.asDiagonal() * Q * isq.asDiagonal();
  op.B = 0.5 * (op.B + op.B.transpose()).eval();
  return op;
}

/// Scattering dissipation norm squared, split into its two halves:
///   scatter = sum B(v - v*, sigma) Mw(v*) (f(v') - f(v))^2
///   weight  = sum B(v - v*, sigma) f(v*)^2 (sqrt(Mw)(v*') - sqrt(Mw)(v*))^2
/// over ordered pairs and angular nodes.  The scatter half vanishes on
/// constants; the full norm is their sum.  f is interpolated with hull
/// clamping (exact on constants); the weight Maxwellian is analytic.
struct DnormParts {
  double scatter = 0.0;
  double weight = 0.0;
  double total() const { return scatter + weight; }
};

inline DnormParts boltz_dnorm_parts(const VGrid& g, const BoltzmannParams& p,
                                    const CellFluid& wref,
                                    const std::vector<double>& f) {
  p.validate(g.dv);
  const SphereRule rule = make_sphere_rule(g.dv, p);
  const std::vector<double> Mw = local_maxwellian(g, wref);
  const int ord = p.interp_order;
  double term1 = 0.0, term2 = 0.0;
  detail::PairGeom pg;
  Vec3 vp, vsp;
  for (int a = 0; a < g.total; ++a)
    for (int b = 0; b < g.total; ++b) {
      if (!detail::pair_geom(g, a, b, p.Cv, p.gamma, pg)) continue;
      const double wab = g.w[a] * g.w[b] * pg.K;
      double s1 = 0.0, s2 = 0.0;
      for (const auto& nd : rule.nodes) {
        detail::scatter_points(g, pg, nd, vp, vsp);
        const double fp = interp_value(g, f.data(), ord, OutsideRule::clamp, vp);
        s1 += nd.w * sqr(fp - f[a]);
        const double qs = std::sqrt(maxwellian_at(wref, g.dv, vsp));
        s2 += nd.w * sqr(qs - std::sqrt(Mw[b]));
      }
      term1 += wab * Mw[b] * s1;
      term2 += wab * sqr(f[b]) * s2;
    }
  DnormParts parts;
  parts.scatter = term1;
  parts.weight = term2;
  return parts;
}

inline double boltz_dnorm_sq(const VGrid& g, const BoltzmannParams& p,
                             const CellFluid& wref,
                             const std::vector<double>& f) {
  return boltz_dnorm_parts(g, p, wref, f).total();
}

}  // namespace hkin

#endif
