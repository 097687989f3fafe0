#ifndef HKIN_PROJECTOR_HPP
#define HKIN_PROJECTOR_HPP

#include <Eigen/Dense>

#include "hkin/maxwellian.hpp"

namespace hkin {

/// Orthonormal basis of the dv+2 dimensional hydrodynamic subspace around a
/// local Maxwellian, discretely orthonormalized (Cholesky of the Gram matrix
/// under the trapezoid inner product) so that projection is exact on the grid.
struct Projector {
  int nmom = 0;  // dv + 2
  int nnodes = 0;
  CellFluid cf;
  std::vector<std::vector<double>> chi;  // orthonormal basis vectors
  Eigen::MatrixXd Linv_T;  // maps orthonormal coords -> raw-basis coords
};

/// Macroscopic coordinates of a hydrodynamic projection, in the physical
/// parameterization (density, velocity, temperature increments).
struct MacroCoords {
  double rho_n = 0.0;
  Vec3 u_n{0.0, 0.0, 0.0};
  double T_n = 0.0;
};

inline Projector build_projector(const VGrid& g, const CellFluid& cf) {
  Projector P;
  P.nmom = g.dv + 2;
  P.nnodes = g.total;
  P.cf = cf;
  const double RT = gas_constant * cf.T;
  std::vector<double> sqrtM(g.total);
  {
    auto M = local_maxwellian(g, cf);
    for (int a = 0; a < g.total; ++a) sqrtM[a] = std::sqrt(M[a]);
  }
  // Raw basis: sqrtM/sqrt(rho), (v_d-u_d) sqrtM/sqrt(R rho T),
  // (|v-u|^2/(RT) - dv) sqrtM/sqrt(2 dv rho).
  std::vector<std::vector<double>> raw(P.nmom,
                                       std::vector<double>(g.total));
  const double c0 = 1.0 / std::sqrt(cf.rho);
  const double c1 = 1.0 / std::sqrt(gas_constant * cf.rho * cf.T);
  const double c2 = 1.0 / std::sqrt(2.0 * g.dv * cf.rho);
  for (int a = 0; a < g.total; ++a) {
    double q = 0.0;
    for (int d = 0; d < g.dv; ++d) q += sqr(g.v[a][d] - cf.u[d]);
    raw[0][a] = c0 * sqrtM[a];
    for (int d = 0; d < g.dv; ++d)
      raw[1 + d][a] = c1 * (g.v[a][d] - cf.u[d]) * sqrtM[a];
    raw[P.nmom - 1][a] = c2 * (q / RT - g.dv) * sqrtM[a];
  }
  // Gram matrix under the quadrature weights; basis = raw * L^{-T}.
  Eigen::MatrixXd G(P.nmom, P.nmom);
  for (int i = 0; i < P.nmom; ++i)
    for (int j = i; j < P.nmom; ++j) {
      double s = 0.0;
      for (int a = 0; a < g.total; ++a) s += g.w[a] * raw[i][a] * raw[j][a];
      G(i, j) = G(j, i) = s;
    }
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  require(llt.info() == Eigen::Success,
          "projector basis: Gram matrix not positive definite");
  Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd LinvT =
      L.transpose().triangularView<Eigen::Upper>().solve(
          Eigen::MatrixXd::Identity(P.nmom, P.nmom));
  P.Linv_T = LinvT;
  P.chi.assign(P.nmom, std::vector<double>(g.total, 0.0));
  for (int j = 0; j < P.nmom; ++j)
    for (int i = 0; i < P.nmom; ++i) {
      const double cij = LinvT(i, j);
      if (cij == 0.0) continue;
      for (int a = 0; a < g.total; ++a) P.chi[j][a] += cij * raw[i][a];
    }
  return P;
}

/// Orthonormal-basis coefficients of f.
inline Eigen::VectorXd project_coeffs(const VGrid& g, const Projector& P,
                                      const double* f) {
  Eigen::VectorXd c(P.nmom);
  for (int j = 0; j < P.nmom; ++j) {
    double s = 0.0;
    const auto& chi = P.chi[j];
    for (int a = 0; a < g.total; ++a) s += g.w[a] * chi[a] * f[a];
    c(j) = s;
  }
  return c;
}

/// P_M f written into out (may alias f).
inline void apply_PM(const VGrid& g, const Projector& P, const double* f,
                     double* out) {
  Eigen::VectorXd c = project_coeffs(g, P, f);
  std::vector<double> acc(g.total, 0.0);
  for (int j = 0; j < P.nmom; ++j) {
    const double cj = c(j);
    const auto& chi = P.chi[j];
    for (int a = 0; a < g.total; ++a) acc[a] += cj * chi[a];
  }
  for (int a = 0; a < g.total; ++a) out[a] = acc[a];
}

inline void apply_ImPM(const VGrid& g, const Projector& P, const double* f,
                       double* out) {
  std::vector<double> pf(g.total);
  apply_PM(g, P, f, pf.data());
  for (int a = 0; a < g.total; ++a) out[a] = f[a] - pf[a];
}

/// Physical macro coordinates of the hydrodynamic part of f: converts the
/// orthonormal coefficients back to raw-basis coordinates, then scales.
inline MacroCoords macro_coords(const VGrid& g, const Projector& P,
                                const double* f) {
  Eigen::VectorXd c = project_coeffs(g, P, f);
  Eigen::VectorXd d = P.Linv_T * c;  // raw-basis coordinates
  MacroCoords mc;
  const auto& cf = P.cf;
  mc.rho_n = d(0) * std::sqrt(cf.rho);
  for (int k = 0; k < g.dv; ++k)
    mc.u_n[k] = d(1 + k) * std::sqrt(gas_constant * cf.rho * cf.T);
  mc.T_n = d(P.nmom - 1) * std::sqrt(2.0 * g.dv * cf.rho);
  return mc;
}

/// Hydrodynamic function with prescribed macro coordinates (the inverse of
/// macro_coords composed with the raw basis).
inline std::vector<double> macro_function(const VGrid& g, const Projector& P,
                                          const MacroCoords& mc) {
  const auto& cf = P.cf;
  Eigen::VectorXd d(P.nmom);
  d(0) = mc.rho_n / std::sqrt(cf.rho);
  for (int k = 0; k < g.dv; ++k)
    d(1 + k) = mc.u_n[k] / std::sqrt(gas_constant * cf.rho * cf.T);
  d(P.nmom - 1) = mc.T_n / std::sqrt(2.0 * g.dv * cf.rho);
  // raw = chi * L^T  =>  f = sum_j (L^{-T})^{-1}... invert the coordinate map:
  // coefficients in the orthonormal basis are c = L^T d.
  Eigen::VectorXd c = P.Linv_T.inverse() * d;
  std::vector<double> f(g.total, 0.0);
  for (int j = 0; j < P.nmom; ++j) {
    const double cj = c(j);
    for (int a = 0; a < g.total; ++a) f[a] += cj * P.chi[j][a];
  }
  return f;
}

}  // namespace hkin

#endif
