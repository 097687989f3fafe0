#ifndef HKIN_CONSERVATION_HPP
#define HKIN_CONSERVATION_HPP

#include <Eigen/Dense>

#include "hkin/grid.hpp"

namespace hkin {

/// Least-norm (in the quadrature metric) correction pushing the discrete
/// mass/momentum/energy moments of a collision output to zero.  The
/// correction lives in the span of the collision invariants, so it is the
/// smallest perturbation restoring exact conservation.
struct ConservationReport {
  double defect_before = 0.0;  // max |moment| before, scaled by ||C||
  double defect_after = 0.0;
  double correction_norm = 0.0;  // ||dC|| / ||C||
};

inline ConservationReport conserve_collision(const VGrid& g,
                                             std::vector<double>& C) {
  const int n = g.dv + 2;
  const int N = g.total;
  // Invariant table psi_k(a): 1, v_d, |v|^2.
  auto psi = [&](int k, int a) -> double {
    if (k == 0) return 1.0;
    if (k <= g.dv) return g.v[a][k - 1];
    double s = 0.0;
    for (int d = 0; d < g.dv; ++d) s += sqr(g.v[a][d]);
    return s;
  };
  Eigen::MatrixXd G(n, n);
  Eigen::VectorXd m(n);
  for (int j = 0; j < n; ++j) {
    double mj = 0.0;
    for (int a = 0; a < N; ++a) mj += g.w[a] * psi(j, a) * C[a];
    m(j) = mj;
    for (int k = j; k < n; ++k) {
      double s = 0.0;
      for (int a = 0; a < N; ++a) s += g.w[a] * psi(j, a) * psi(k, a);
      G(j, k) = G(k, j) = s;
    }
  }
  Eigen::VectorXd lam = G.ldlt().solve(m);

  double nrmC = 0.0;
  for (int a = 0; a < N; ++a) nrmC += g.w[a] * sqr(C[a]);
  nrmC = std::sqrt(nrmC);

  ConservationReport rep;
  rep.defect_before = m.lpNorm<Eigen::Infinity>() / std::max(nrmC, 1e-300);

  double nrmD = 0.0;
  for (int a = 0; a < N; ++a) {
    double d = 0.0;
    for (int j = 0; j < n; ++j) d += lam(j) * psi(j, a);
    C[a] -= d;
    nrmD += g.w[a] * sqr(d);
  }
  rep.correction_norm = std::sqrt(nrmD) / std::max(nrmC, 1e-300);

  double after = 0.0;
  for (int j = 0; j < n; ++j) {
    double mj = 0.0;
    for (int a = 0; a < N; ++a) mj += g.w[a] * psi(j, a) * C[a];
    after = std::max(after, std::abs(mj));
  }
  rep.defect_after = after / std::max(nrmC, 1e-300);
  return rep;
}

}  // namespace hkin

#endif
