#ifndef HKIN_LANDAU_LINEAR_HPP
#define HKIN_LANDAU_LINEAR_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hkin/landau.hpp"

namespace hkin {

/// Dense symmetric quadratic-form matrix of a linearized collision operator:
/// <A f, g>_w = f^T B g with A = W^{-1} B, W the quadrature weights.  B is
/// assembled in weak (Dirichlet) form, so it is symmetric positive
/// semidefinite with the hydrodynamic invariants exactly in its kernel.
/// The container is kernel-family agnostic; both the Landau and the
/// Boltzmann assemblies produce one.
struct DenseCollision {
  int n = 0;
  Eigen::MatrixXd B;
  Eigen::VectorXd Wd;    // quadrature weights
  Eigen::VectorXd Mref;  // reference Maxwellian values

  /// A f = W^{-1} B f.
  void apply(const double* f, double* out) const {
    Eigen::Map<const Eigen::VectorXd> x(f, n);
    Eigen::VectorXd y = B * x;
    for (int a = 0; a < n; ++a) out[a] = y(a) / Wd(a);
  }

  std::vector<double> apply(const std::vector<double>& f) const {
    std::vector<double> out(n);
    apply(f.data(), out.data());
    return out;
  }

  /// Eigenvalues of A in the weighted metric (eigenvalues of
  /// W^{-1/2} B W^{-1/2}), ascending.  Real and >= 0 up to roundoff.
  Eigen::VectorXd spectrum() const {
    Eigen::VectorXd s = Wd.array().rsqrt();
    Eigen::MatrixXd S = s.asDiagonal() * B * s.asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S,
                                                      Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }
};

namespace detail {

/// Sparse matrix of the plain stencil along dim d, scaled on the right by
/// diag(1/sqrt(Mref)):  G_d f = D_d (f / sqrt(M)).
inline Eigen::SparseMatrix<double> stencil_over_sqrtM(
    const VGrid& g, const Axis4Stencil& st, int d,
    const std::vector<double>& sqM) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(g.total) * 5);
  const int stride = g.stride(d);
  const int nv = g.nv;
  const int nlines = g.total / nv;
  for (int line = 0; line < nlines; ++line) {
    int base = 0, rem = line, mult = 1;
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
      const int row = base + i * stride;
      for (int k = 0; k < 5; ++k) {
        const int col = base + (st.offset[i] + k) * stride;
        trips.emplace_back(row, col, st.rows[i][k] / sqM[col]);
      }
    }
  }
  Eigen::SparseMatrix<double> S(g.total, g.total);
  S.setFromTriplets(trips.begin(), trips.end());
  return S;
}

/// Dimensionless 4th difference along dim d composed with division by
/// sqrt(Mref): annihilates p(v) sqrt(M) exactly for every cubic p, so the
/// collision invariants stay in the kernel of any quadratic form built on it.
inline Eigen::SparseMatrix<double> diff4_over_sqrtM(
    const VGrid& g, int d, const std::vector<double>& sqM) {
  static const double c4[5] = {1.0, -4.0, 6.0, -4.0, 1.0};
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(g.total) * 5);
  const int stride = g.stride(d);
  const int nv = g.nv;
  const int nlines = g.total / nv;
  for (int line = 0; line < nlines; ++line) {
    int base = 0, rem = line, mult = 1;
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
      const int row = base + i * stride;
      const int off = std::clamp(i - 2, 0, nv - 5);
      for (int k = 0; k < 5; ++k) {
        const int col = base + (off + k) * stride;
        trips.emplace_back(row, col, c4[k] / sqM[col]);
      }
    }
  }
  Eigen::SparseMatrix<double> S(g.total, g.total);
  S.setFromTriplets(trips.begin(), trips.end());
  return S;
}

}  // namespace detail

/// Weak-form assembly of the linearization around the Maxwellian Mref:
/// B[f,g] = 1/2 sum_{ab} w_a w_b M_a M_b Phi^{ij}_{ab}
///          [ (D_i f~)_a - (D_i f~)_b ] [ (D_j g~)_a - (D_j g~)_b ],
/// f~ = f / sqrt(M).  Expanded into a local part (sigma-weighted) minus a
/// cross convolution part, both exact re-groupings of the double sum.
inline DenseCollision assemble_linearized(const VGrid& g, const Axis4Stencil& st,
                                       const LandauKernel& k,
                                       const std::vector<double>& Mref,
                                       double stab_coef = 1.0) {
  const int n = g.total;
  const int dv = g.dv;
  DenseCollision op;
  op.n = n;
  op.Wd.resize(n);
  op.Mref.resize(n);
  for (int a = 0; a < n; ++a) {
    op.Wd(a) = g.w[a];
    op.Mref(a) = Mref[a];
  }
  std::vector<double> sqM(n);
  for (int a = 0; a < n; ++a) sqM[a] = std::sqrt(Mref[a]);

  SigmaField sM = sigma_field(g, k, Mref.data(), 0.0);

  std::vector<Eigen::SparseMatrix<double>> G(dv);
  for (int d = 0; d < dv; ++d)
    G[d] = detail::stencil_over_sqrtM(g, st, d, sqM);

  Eigen::VectorXd u(n);  // w * M
  for (int a = 0; a < n; ++a) u(a) = g.w[a] * Mref[a];

  op.B = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd P(n, n), Y(n, n), Z(n, n);
  for (int i = 0; i < dv; ++i)
    for (int j = i; j < dv; ++j) {
      const int c = comp_index(dv, i, j);
      // Local part: diag(w M sigma^{ij}_M).
      Eigen::VectorXd dloc(n);
      for (int a = 0; a < n; ++a) dloc(a) = u(a) * sM.at(a, c);
      // Cross part: diag(wM) Phi^{ij} diag(wM), from the difference table.
      for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a) {
          double phi;
          if (a == b) {
            phi = (i == j) ? k.diag[a] : 0.0;
          } else {
            phi = k.tab[static_cast<size_t>(detail::table_index(k, g, a, b)) *
                            k.ncomp +
                        c];
          }
          P(a, b) = u(a) * u(b) * phi;
        }
      Y.noalias() = P * G[j];
      Z = Eigen::MatrixXd(G[i].transpose() * Y);
      Eigen::SparseMatrix<double> Gdj = dloc.asDiagonal() * G[j];
      Eigen::SparseMatrix<double> GiT = G[i].transpose();
      Z = Eigen::MatrixXd(GiT * Gdj) - Z;
      op.B += Z;
      if (i != j) op.B += Z.transpose();
    }
  op.B = 0.5 * (op.B + op.B.transpose()).eval();

  // High-frequency stabilization: the central stencil's symbol vanishes at
  // the grid Nyquist mode and the Maxwellian damping dies on the box edge,
  // which leaves a handful of spurious near-null directions above the
  // physical kernel.  A 4th-difference Dirichlet term in the same
  // sqrt(M)-conjugated variable lifts them; it keeps the kernel exact
  // (cubics are annihilated) and is O(h^8) on resolved modes.
  if (stab_coef > 0.0) {
    double mean_eig = 0.0;
    for (int a = 0; a < n; ++a) mean_eig += op.B(a, a) / op.Wd(a);
    mean_eig /= n;
    const double c = stab_coef * mean_eig / 256.0;
    for (int d = 0; d < dv; ++d) {
      Eigen::SparseMatrix<double> Q = detail::diff4_over_sqrtM(g, d, sqM);
      Eigen::VectorXd dpen(n);
      for (int a = 0; a < n; ++a) dpen(a) = c * g.w[a] * Mref[a];
      Eigen::SparseMatrix<double> dQ = dpen.asDiagonal() * Q;
      Eigen::SparseMatrix<double> QT = Q.transpose();
      op.B += Eigen::MatrixXd(QT * dQ);
    }
    op.B = 0.5 * (op.B + op.B.transpose()).eval();
  }
  return op;
}

/// Factorization of (W + alpha B) for the implicit stage solve
/// (I + alpha A) x = rhs, symmetric positive definite for alpha >= 0.
struct ImplicitFactor {
  int n = 0;
  double alpha = 0.0;
  Eigen::VectorXd Wd;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;

  std::vector<double> solve(const std::vector<double>& rhs) const {
    Eigen::VectorXd b(n);
    for (int a = 0; a < n; ++a) b(a) = Wd(a) * rhs[a];
    Eigen::VectorXd x = ldlt.solve(b);
    return std::vector<double>(x.data(), x.data() + n);
  }
};

inline ImplicitFactor factor_implicit(const DenseCollision& op, double alpha) {
  ImplicitFactor f;
  f.n = op.n;
  f.alpha = alpha;
  f.Wd = op.Wd;
  Eigen::MatrixXd S = alpha * op.B;
  S.diagonal() += op.Wd;
  f.ldlt.compute(S);
  require(f.ldlt.info() == Eigen::Success, "implicit factorization failed");
  return f;
}

/// Regularized factorization for the microscopic pseudo-inverse: solves
/// A f = rhs on the orthogonal complement of the hydrodynamic kernel,
/// rejecting right-hand sides with a kernel component.
struct PinvFactor {
  int n = 0;
  Eigen::VectorXd Wd;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  const Projector* proj = nullptr;
  double reject_tol = 1e-6;

  std::vector<double> solve(const VGrid& g, const std::vector<double>& rhs,
                            double* kernel_frac = nullptr) const {
    Eigen::VectorXd coef = project_coeffs(g, *proj, rhs.data());
    const double nr = wnorm(g, rhs);
    const double frac = nr > 0.0 ? coef.norm() / nr : 0.0;
    if (kernel_frac) *kernel_frac = frac;
    require(frac <= reject_tol,
            "pseudo-inverse: right-hand side has a hydrodynamic component");
    Eigen::VectorXd b(n);
    for (int a = 0; a < n; ++a) b(a) = Wd(a) * rhs[a];
    Eigen::VectorXd x = ldlt.solve(b);
    std::vector<double> out(x.data(), x.data() + n);
    std::vector<double> tmp(n);
    apply_ImPM(g, *proj, out.data(), tmp.data());
    return tmp;
  }
};

inline PinvFactor factor_pinv(const VGrid& g, const DenseCollision& op,
                              const Projector& proj,
                              double reject_tol = 1e-6) {
  PinvFactor f;
  f.n = op.n;
  f.Wd = op.Wd;
  f.proj = &proj;
  f.reject_tol = reject_tol;
  // Shift by the kernel projector so the factorization is definite; the
  // shift acts only inside the kernel, which is projected away afterwards.
  Eigen::MatrixXd S = op.B;
  const double tau = std::max(S.trace() / op.n, 1e-300);
  for (int j = 0; j < proj.nmom; ++j) {
    Eigen::VectorXd wchi(op.n);
    for (int a = 0; a < op.n; ++a) wchi(a) = op.Wd(a) * proj.chi[j][a];
    S.noalias() += tau * wchi * wchi.transpose();
  }
  f.ldlt.compute(S);
  require(f.ldlt.info() == Eigen::Success, "pseudo-inverse factorization failed");
  return f;
}

/// Linearization around a local Maxwellian that differs from the global
/// reference: the operator h -> -mu^{-1/2} [ C(M - mu, mu^{1/2} h)
/// + C(mu^{1/2} h, M - mu) ], with two independently grouped evaluation
/// paths sharing the same kernel table and stencils.
struct LdOperator {
  const VGrid* g = nullptr;
  const Axis4Stencil* st = nullptr;
  const LandauKernel* kern = nullptr;
  double RT = 0.0, RTc = 0.0;
  std::vector<double> M, mu, dM;       // M, mu, M - mu
  std::vector<double> sqmu;            // sqrt(mu)
  std::array<std::vector<double>, 3> m_an;   // analytic grad of (M - mu)
  std::array<std::vector<double>, 3> ell;    // pointwise transport factor
  SigmaField sig_M, sig_d;             // sigma fields of M and M - mu
  std::array<std::vector<double>, 3> conv_m; // Phi^{ij} * m_j
  double support_cut = 1e-15;

  // P_j[h] = D_j h - v_j h / (2 R Tc): derivative conjugated by sqrt(mu).
  void conj_grad(const std::vector<double>& h,
                 std::array<std::vector<double>, 3>& out) const {
    const int dv = g->dv;
    for (int d = 0; d < dv; ++d) {
      out[d].resize(g->total);
      deriv_axis(*g, *st, d, h.data(), out[d].data());
      for (int a = 0; a < g->total; ++a)
        out[d][a] -= g->v[a][d] / (2.0 * RTc) * h[a];
    }
  }

  // O_i[K] = D_i K - v_i K / (2 R Tc): outer conjugated divergence term.
  void conj_div_accum(const std::vector<double>& K, int i,
                      std::vector<double>& acc) const {
    std::vector<double> dK(g->total);
    deriv_axis(*g, *st, i, K.data(), dK.data());
    for (int a = 0; a < g->total; ++a)
      acc[a] += dK[a] - g->v[a][i] / (2.0 * RTc) * K[a];
  }

  /// Path one: both halves evaluated from the bilinear form with the
  /// analytic gradient convolved directly.
  std::vector<double> apply_primary(const std::vector<double>& h) const;

  /// Path two: transport-grouped fluxes (sigma-weighted local part) plus the
  /// convolution-grouped half, an exact regrouping of path one up to the
  /// pointwise kernel identity phi^{ij}(r) r_j = 0.
  std::vector<double> apply_split(const std::vector<double>& h) const;
};

inline LdOperator build_ld(const VGrid& g, const Axis4Stencil& st,
                           const LandauKernel& k, const CellFluid& cf,
                           const GlobalRef& ref,
                           double support_cut = 1e-15) {
  LdOperator op;
  op.g = &g;
  op.st = &st;
  op.kern = &k;
  op.RT = gas_constant * cf.T;
  op.RTc = gas_constant * ref.Tc;
  op.support_cut = support_cut;
  op.M = local_maxwellian(g, cf);
  op.mu = ref.mu;
  const int n = g.total;
  op.dM.resize(n);
  op.sqmu.resize(n);
  for (int a = 0; a < n; ++a) {
    op.dM[a] = op.M[a] - op.mu[a];
    op.sqmu[a] = std::sqrt(op.mu[a]);
  }
  for (int d = 0; d < g.dv; ++d) {
    op.m_an[d].resize(n);
    op.ell[d].resize(n);
    for (int a = 0; a < n; ++a) {
      const double vd = g.v[a][d];
      op.m_an[d][a] =
          -(vd - cf.u[d]) / op.RT * op.M[a] + vd / op.RTc * op.mu[a];
      op.ell[d][a] = -cf.u[d] / op.RT +
                     vd * (ref.Tc - cf.T) / (gas_constant * cf.T * ref.Tc);
    }
  }
  op.sig_M = sigma_field(g, k, op.M.data(), 0.0);
  op.sig_d = sigma_field(g, k, op.dM.data(), 0.0);
  phi_conv(g, k, op.m_an, op.conv_m, 0.0);
  return op;
}

inline std::vector<double> LdOperator::apply_primary(
    const std::vector<double>& h) const {
  const int n = g->total, dv = g->dv;
  std::array<std::vector<double>, 3> Ph;
  conj_grad(h, Ph);
  // sigma field of mu^{1/2} h and convolution of mu^{1/2} P_j[h].
  std::vector<double> sh(n);
  for (int a = 0; a < n; ++a) sh[a] = sqmu[a] * h[a];
  SigmaField sig_h = sigma_field(*g, *kern, sh.data(), support_cut);
  std::array<std::vector<double>, 3> sPh, convPh;
  for (int d = 0; d < dv; ++d) {
    sPh[d].resize(n);
    for (int a = 0; a < n; ++a) sPh[d][a] = sqmu[a] * Ph[d][a];
  }
  phi_conv(*g, *kern, sPh, convPh, support_cut);

  std::vector<double> out(n, 0.0), K(n);
  for (int i = 0; i < dv; ++i) {
    for (int a = 0; a < n; ++a) {
      double k1 = 0.0;
      for (int j = 0; j < dv; ++j)
        k1 += sig_d.at(a, comp_index(dv, i, j)) * Ph[j][a];
      k1 -= h[a] * conv_m[i][a];
      double j2 = 0.0;
      for (int j = 0; j < dv; ++j)
        j2 += sig_h.at(a, comp_index(dv, i, j)) * m_an[j][a];
      j2 -= dM[a] * convPh[i][a];
      K[a] = k1 + j2 / sqmu[a];
    }
    conj_div_accum(K, i, out);
  }
  for (int a = 0; a < n; ++a) out[a] = -out[a];
  return out;
}

inline std::vector<double> LdOperator::apply_split(
    const std::vector<double>& h) const {
  const int n = g->total, dv = g->dv;
  std::vector<double> Dh(n);
  // Transport-grouped flux: X_i = sigma_d^{ij} (D_j h + v_j h / 2RTc)
  //                              + sigma_M^{ij} ell_j h.
  std::vector<double> out(n, 0.0), X(n);
  std::array<std::vector<double>, 3> gradh;
  for (int d = 0; d < dv; ++d) {
    gradh[d].resize(n);
    deriv_axis(*g, *st, d, h.data(), gradh[d].data());
  }
  for (int i = 0; i < dv; ++i) {
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int j = 0; j < dv; ++j) {
        const int c = comp_index(dv, i, j);
        s += sig_d.at(a, c) *
                 (gradh[j][a] + g->v[a][j] / (2.0 * RTc) * h[a]) +
             sig_M.at(a, c) * ell[j][a] * h[a];
      }
      X[a] = s;
    }
    conj_div_accum(X, i, out);
  }
  // Convolution-grouped half.
  std::array<std::vector<double>, 3> Ph, sPh, convPh;
  conj_grad(h, Ph);
  std::vector<double> sh(n);
  for (int a = 0; a < n; ++a) sh[a] = sqmu[a] * h[a];
  SigmaField sig_h = sigma_field(*g, *kern, sh.data(), support_cut);
  for (int d = 0; d < dv; ++d) {
    sPh[d].resize(n);
    for (int a = 0; a < n; ++a) sPh[d][a] = sqmu[a] * Ph[d][a];
  }
  phi_conv(*g, *kern, sPh, convPh, support_cut);
  std::vector<double> Psi(n);
  for (int i = 0; i < dv; ++i) {
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int j = 0; j < dv; ++j)
        s += sig_h.at(a, comp_index(dv, i, j)) * m_an[j][a];
      Psi[a] = (s - dM[a] * convPh[i][a]) / sqmu[a];
    }
    conj_div_accum(Psi, i, out);
  }
  for (int a = 0; a < n; ++a) out[a] = -out[a];
  return out;
}

/// Weighted dissipation seminorm around the global reference Maxwellian:
/// |h|_D^2 = sum_a w_a [ sigma^{ij}_mu D_i h D_j h
///                      + sigma^{ij}_mu v_i v_j h^2 / (4 R^2 Tc^2) ].
inline double landau_dnorm_sq(const VGrid& g, const Axis4Stencil& st,
                              const SigmaField& sig_mu, double RTc,
                              const std::vector<double>& h) {
  const int dv = g.dv;
  std::array<std::vector<double>, 3> Dh;
  for (int d = 0; d < dv; ++d) {
    Dh[d].resize(g.total);
    deriv_axis(g, st, d, h.data(), Dh[d].data());
  }
  double acc = 0.0;
  for (int a = 0; a < g.total; ++a) {
    double q = 0.0;
    for (int i = 0; i < dv; ++i)
      for (int j = 0; j < dv; ++j) {
        const double s = sig_mu.at(a, comp_index(dv, i, j));
        q += s * Dh[i][a] * Dh[j][a] +
             s * g.v[a][i] * g.v[a][j] / (4.0 * sqr(RTc)) * sqr(h[a]);
      }
    acc += g.w[a] * q;
  }
  return acc;
}

}  // namespace hkin

#endif
