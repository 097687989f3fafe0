#ifndef HKIN_LANDAU_HPP
#define HKIN_LANDAU_HPP

#include <Eigen/Dense>

#include "hkin/conservation.hpp"
#include "hkin/maxwellian.hpp"
#include "hkin/projector.hpp"
#include "hkin/stencil.hpp"

namespace hkin {

struct LandauParams {
  double gamma = -3.0;     // kernel exponent, >= -3 (Coulomb at -3)
  double support_cut = 1e-15;  // relative floor below which nodes are skipped
};

inline void validate(const LandauParams& p) {
  require(p.gamma >= -3.0, "landau: gamma must be >= -3");
  require(p.gamma <= 1.0, "landau: gamma must be <= 1");
}

/// Projection kernel phi^{ij}(r) = (delta_ij - r_i r_j / |r|^2) |r|^(gamma+2),
/// zero tensor at r = 0 (removable direction singularity).
inline void eval_phi(const Vec3& r, int dv, double gamma, double* phi_out) {
  // phi_out holds the packed upper triangle, dv=2: (00,01,11),
  // dv=3: (00,01,02,11,12,22).
  const int ncomp = dv == 2 ? 3 : 6;
  double r2 = 0.0;
  for (int d = 0; d < dv; ++d) r2 += sqr(r[d]);
  if (r2 == 0.0) {
    for (int c = 0; c < ncomp; ++c) phi_out[c] = 0.0;
    return;
  }
  const double mag = std::pow(r2, 0.5 * (gamma + 2.0));
  int c = 0;
  for (int i = 0; i < dv; ++i)
    for (int j = i; j < dv; ++j, ++c)
      phi_out[c] = ((i == j ? 1.0 : 0.0) - r[i] * r[j] / r2) * mag;
}

/// Packed-component index map for the symmetric kernel tensor.
inline int comp_index(int dv, int i, int j) {
  if (i > j) std::swap(i, j);
  if (dv == 2) return i == 0 ? (j == 0 ? 0 : 1) : 2;
  static const int m3[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  return m3[i][j];
}

/// Tabulated kernel over the difference lattice plus analytically integrated
/// self-cell diagonal (equal-volume ball average), which regularizes the
/// gamma < 0 singularity.  near_diag_ratio records the largest ratio of the
/// self-cell contribution against the full sigma integral observed when
/// sigma fields are built; quadrature_flag trips above 10%.
struct LandauKernel {
  int dv = 3, nv = 0, ncomp = 6, span = 0;
  double gamma = -3.0;
  std::vector<double> tab;       // span^dv * ncomp, difference-lattice kernel
  std::vector<double> diag;      // per-node self value  (cell integral)/w_a^2
  mutable double near_diag_ratio = 0.0;
  mutable bool quadrature_flag = false;
};

inline LandauKernel build_landau_kernel(const VGrid& g,
                                        const LandauParams& p) {
  validate(p);
  LandauKernel k;
  k.dv = g.dv;
  k.nv = g.nv;
  k.ncomp = g.dv == 2 ? 3 : 6;
  k.span = 2 * g.nv - 1;
  k.gamma = p.gamma;
  int ntab = 1;
  for (int d = 0; d < g.dv; ++d) ntab *= k.span;
  k.tab.assign(static_cast<size_t>(ntab) * k.ncomp, 0.0);
  for (int t = 0; t < ntab; ++t) {
    int rem = t;
    Vec3 r{0.0, 0.0, 0.0};
    for (int d = 0; d < g.dv; ++d) {
      r[d] = (rem % k.span - (g.nv - 1)) * g.h;
      rem /= k.span;
    }
    eval_phi(r, g.dv, p.gamma, &k.tab[static_cast<size_t>(t) * k.ncomp]);
  }
  // Self-cell: angular average of the projector is delta_ij (1 - 1/dv);
  // radial integral over the equal-volume ball of the cell weight.
  const double S = g.dv == 2 ? 2.0 * M_PI : 4.0 * M_PI;
  const double pw = p.gamma + 2.0 + g.dv;
  require(pw > 0.0, "landau: self-cell integral diverges for this gamma");
  k.diag.resize(g.total);
  for (int a = 0; a < g.total; ++a) {
    const double r0 = std::pow(g.dv * g.w[a] / S, 1.0 / g.dv);
    const double cell = (1.0 - 1.0 / g.dv) * S * std::pow(r0, pw) / pw;
    // Quadrature value of the self pair: w_a * diag[a] = cell integral.
    k.diag[a] = cell / g.w[a];
  }
  return k;
}

namespace detail {

/// Difference-lattice table offset of node pair (a, b).
inline int table_index(const LandauKernel& k, const VGrid& g, int a, int b) {
  auto ca = g.unpack(a), cb = g.unpack(b);
  int idx = 0, mult = 1;
  for (int d = 0; d < g.dv; ++d) {
    idx += (ca[d] - cb[d] + g.nv - 1) * mult;
    mult *= k.span;
  }
  return idx;
}

}  // namespace detail

/// sigma^{ij}_G(a) = sum_b w_b G(b) Phi^{ij}(v_a - v_b), packed components.
struct SigmaField {
  int ncomp = 0;
  std::vector<double> s;  // total * ncomp
  double at(int a, int c) const { return s[static_cast<size_t>(a) * ncomp + c]; }
};

inline SigmaField sigma_field(const VGrid& g, const LandauKernel& k,
                              const double* G, double support_cut = 0.0) {
  SigmaField sf;
  sf.ncomp = k.ncomp;
  sf.s.assign(static_cast<size_t>(g.total) * k.ncomp, 0.0);
  std::vector<double> wG(g.total);
  double gmax = 0.0;
  for (int b = 0; b < g.total; ++b) gmax = std::max(gmax, std::abs(G[b]));
  const double cut = support_cut * gmax;
  for (int b = 0; b < g.total; ++b) {
    const double v = g.w[b] * G[b];
    wG[b] = (std::abs(G[b]) <= cut) ? 0.0 : v;
  }
  double max_self = 0.0;
  for (int a = 0; a < g.total; ++a) {
    double acc[6] = {0, 0, 0, 0, 0, 0};
    auto ca = g.unpack(a);
    // Walk b with the fastest dimension contiguous in the table.
    const int nv = g.nv;
    if (g.dv == 2) {
      for (int b1 = 0; b1 < nv; ++b1) {
        const int brow = nv * b1;
        const size_t trow =
            static_cast<size_t>((ca[1] - b1 + nv - 1)) * k.span + ca[0] + nv - 1;
        for (int b0 = 0; b0 < nv; ++b0) {
          const double wg = wG[brow + b0];
          if (wg == 0.0) continue;
          const double* t = &k.tab[(trow - b0) * k.ncomp];
          acc[0] += wg * t[0];
          acc[1] += wg * t[1];
          acc[2] += wg * t[2];
        }
      }
    } else {
      for (int b2 = 0; b2 < nv; ++b2)
        for (int b1 = 0; b1 < nv; ++b1) {
          const int brow = nv * (b1 + nv * b2);
          const size_t trow =
              (static_cast<size_t>(ca[2] - b2 + nv - 1) * k.span +
               (ca[1] - b1 + nv - 1)) * k.span + ca[0] + nv - 1;
          for (int b0 = 0; b0 < nv; ++b0) {
            const double wg = wG[brow + b0];
            if (wg == 0.0) continue;
            const double* t = &k.tab[(trow - b0) * k.ncomp];
            acc[0] += wg * t[0];
            acc[1] += wg * t[1];
            acc[2] += wg * t[2];
            acc[3] += wg * t[3];
            acc[4] += wg * t[4];
            acc[5] += wg * t[5];
          }
        }
    }
    // Self-cell shell average contributes to the diagonal components only.
    const double self = wG[a] * k.diag[a];
    for (int i = 0; i < g.dv; ++i) acc[comp_index(g.dv, i, i)] += self;
    for (int c = 0; c < k.ncomp; ++c)
      sf.s[static_cast<size_t>(a) * k.ncomp + c] = acc[c];
    if (self != 0.0) {
      double dmax = 0.0;
      for (int i = 0; i < g.dv; ++i)
        dmax = std::max(dmax,
                        std::abs(sf.at(a, comp_index(g.dv, i, i))));
      if (dmax > 0.0)
        max_self = std::max(max_self, std::abs(self) / dmax);
    }
  }
  k.near_diag_ratio = std::max(k.near_diag_ratio, max_self);
  if (max_self > 0.10) k.quadrature_flag = true;
  return sf;
}

/// out_i(a) = sum_j sum_b w_b Phi^{ij}(v_a - v_b) q_j(b)  for a dv-component
/// field q (the convolution leg of the bilinear form).
inline void phi_conv(const VGrid& g, const LandauKernel& k,
                     const std::array<std::vector<double>, 3>& q,
                     std::array<std::vector<double>, 3>& out,
                     double support_cut = 0.0) {
  const int dv = g.dv;
  std::array<std::vector<double>, 3> wq;
  double qmax = 0.0;
  for (int d = 0; d < dv; ++d)
    for (int b = 0; b < g.total; ++b)
      qmax = std::max(qmax, std::abs(q[d][b]));
  const double cut = support_cut * qmax;
  for (int d = 0; d < dv; ++d) {
    wq[d].resize(g.total);
    for (int b = 0; b < g.total; ++b) {
      double z = std::abs(q[d][b]) <= cut ? 0.0 : g.w[b] * q[d][b];
      wq[d][b] = z;
    }
  }
  for (int d = 0; d < dv; ++d) out[d].assign(g.total, 0.0);
  const int nv = g.nv;
  for (int a = 0; a < g.total; ++a) {
    auto ca = g.unpack(a);
    double acc[3] = {0, 0, 0};
    if (dv == 2) {
      for (int b1 = 0; b1 < nv; ++b1) {
        const int brow = nv * b1;
        const size_t trow =
            static_cast<size_t>((ca[1] - b1 + nv - 1)) * k.span + ca[0] + nv - 1;
        for (int b0 = 0; b0 < nv; ++b0) {
          const int b = brow + b0;
          const double q0 = wq[0][b], q1 = wq[1][b];
          if (q0 == 0.0 && q1 == 0.0) continue;
          const double* t = &k.tab[(trow - b0) * k.ncomp];
          acc[0] += t[0] * q0 + t[1] * q1;
          acc[1] += t[1] * q0 + t[2] * q1;
        }
      }
    } else {
      for (int b2 = 0; b2 < nv; ++b2)
        for (int b1 = 0; b1 < nv; ++b1) {
          const int brow = nv * (b1 + nv * b2);
          const size_t trow =
              (static_cast<size_t>(ca[2] - b2 + nv - 1) * k.span +
               (ca[1] - b1 + nv - 1)) * k.span + ca[0] + nv - 1;
          for (int b0 = 0; b0 < nv; ++b0) {
            const int b = brow + b0;
            const double q0 = wq[0][b], q1 = wq[1][b], q2 = wq[2][b];
            if (q0 == 0.0 && q1 == 0.0 && q2 == 0.0) continue;
            const double* t = &k.tab[(trow - b0) * k.ncomp];
            acc[0] += t[0] * q0 + t[1] * q1 + t[2] * q2;
            acc[1] += t[1] * q0 + t[3] * q1 + t[4] * q2;
            acc[2] += t[2] * q0 + t[4] * q1 + t[5] * q2;
          }
        }
    }
    // Self-cell diagonal.
    for (int i = 0; i < dv; ++i) acc[i] += k.diag[a] * wq[i][a];
    for (int i = 0; i < dv; ++i) out[i][a] = acc[i];
  }
}

/// Bilinear Landau operator C(G, H) in divergence form.  Inner velocity
/// derivatives are taken with the reference-weighted stencil (exact on the
/// reference Gaussian family), the outer divergence with the plain stencil.
/// Strictly bilinear in (G, H).
inline std::vector<double> landau_bilinear(
    const VGrid& g, const Axis4Stencil& st, const LandauKernel& k,
    const DerivWeight& ref, const std::vector<double>& G,
    const std::vector<double>& H, const LandauParams& p) {
  const int dv = g.dv;
  std::vector<double> scratch;
  std::array<std::vector<double>, 3> DG, DH;
  for (int d = 0; d < dv; ++d) {
    DG[d].resize(g.total);
    DH[d].resize(g.total);
    deriv_weighted(g, st, d, ref, G.data(), DG[d].data(), scratch);
    deriv_weighted(g, st, d, ref, H.data(), DH[d].data(), scratch);
  }
  SigmaField sG = sigma_field(g, k, G.data(), p.support_cut);
  std::array<std::vector<double>, 3> TG;
  phi_conv(g, k, DG, TG, p.support_cut);

  std::vector<double> C(g.total, 0.0);
  std::vector<double> J(g.total);
  for (int i = 0; i < dv; ++i) {
    for (int a = 0; a < g.total; ++a) {
      double s = 0.0;
      for (int j = 0; j < dv; ++j)
        s += sG.at(a, comp_index(dv, i, j)) * DH[j][a];
      J[a] = s - H[a] * TG[i][a];
    }
    std::vector<double> dJ(g.total);
    deriv_axis(g, st, i, J.data(), dJ.data());
    for (int a = 0; a < g.total; ++a) C[a] += dJ[a];
  }
  return C;
}

/// Gamma_M(f, g) = M^{-1/2} C(M^{1/2} f, M^{1/2} g) around the reference
/// Maxwellian carried by ref (values ref.Wv, assumed >= 1e-300 where used).
inline std::vector<double> gamma_bilinear(
    const VGrid& g, const Axis4Stencil& st, const LandauKernel& k,
    const DerivWeight& ref, const std::vector<double>& f,
    const std::vector<double>& gg, const LandauParams& p) {
  std::vector<double> sqM(g.total), Gf(g.total), Hg(g.total);
  for (int a = 0; a < g.total; ++a) {
    const double M = ref.Wv[a];
    if (M < 1e-300) {
      sqM[a] = 0.0;
      Gf[a] = 0.0;
      Hg[a] = 0.0;
    } else {
      sqM[a] = std::sqrt(M);
      Gf[a] = sqM[a] * f[a];
      Hg[a] = sqM[a] * gg[a];
    }
  }
  std::vector<double> C = landau_bilinear(g, st, k, ref, Gf, Hg, p);
  for (int a = 0; a < g.total; ++a)
    C[a] = (sqM[a] == 0.0) ? 0.0 : C[a] / sqM[a];
  return C;
}

}  // namespace hkin

#endif
