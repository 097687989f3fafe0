#ifndef HKIN_GRID_HPP
#define HKIN_GRID_HPP

#include "hkin/core.hpp"

namespace hkin {

/// Uniform tensor velocity grid on [-Lv, Lv]^dv with endpoint (trapezoid)
/// quadrature weights.  Node 0 of each axis sits at -Lv, node nv-1 at +Lv.
struct VGrid {
  int dv = 3;          // velocity dimension, 2 or 3
  int nv = 16;         // nodes per axis
  double Lv = 6.0;     // half-width of the truncated box
  double h = 0.0;      // axis spacing

  std::vector<double> axis;    // nv axis coordinates
  std::vector<double> axis_w;  // nv axis trapezoid weights
  std::vector<Vec3> v;         // flattened node coordinates (size total)
  std::vector<double> w;       // flattened quadrature weights (size total)

  int total = 0;

  int stride(int d) const {
    int s = 1;
    for (int k = 0; k < d; ++k) s *= nv;
    return s;
  }
  std::array<int, 3> unpack(int idx) const {
    std::array<int, 3> c{0, 0, 0};
    for (int d = 0; d < dv; ++d) {
      c[d] = idx % nv;
      idx /= nv;
    }
    return c;
  }
};

inline VGrid make_vgrid(int dv, int nv, double Lv) {
  require(dv == 2 || dv == 3, "velocity dimension must be 2 or 3");
  // five nodes is the smallest grid carrying a centered fourth difference
  require(nv >= 5, "velocity grid needs at least 5 nodes per axis");
  require(Lv > 0.0, "velocity box half-width must be positive");
  VGrid g;
  g.dv = dv;
  g.nv = nv;
  g.Lv = Lv;
  g.h = 2.0 * Lv / (nv - 1);
  g.axis.resize(nv);
  g.axis_w.resize(nv);
  for (int i = 0; i < nv; ++i) {
    g.axis[i] = -Lv + i * g.h;
    g.axis_w[i] = (i == 0 || i == nv - 1) ? 0.5 * g.h : g.h;
  }
  g.total = 1;
  for (int d = 0; d < dv; ++d) g.total *= nv;
  g.v.resize(g.total);
  g.w.resize(g.total);
  for (int idx = 0; idx < g.total; ++idx) {
    auto c = g.unpack(idx);
    Vec3 vv{0.0, 0.0, 0.0};
    double ww = 1.0;
    for (int d = 0; d < dv; ++d) {
      vv[d] = g.axis[c[d]];
      ww *= g.axis_w[c[d]];
    }
    g.v[idx] = vv;
    g.w[idx] = ww;
  }
  return g;
}

/// Default box half-width for a fluid state: 6 thermal widths plus bulk drift.
inline double default_Lv(double maxT, double max_speed) {
  return 6.0 * std::sqrt(gas_constant * maxT) + max_speed;
}

/// Periodic uniform spatial grid on [0, L0) x [0, L1), cell-centered.
struct SGrid {
  int dx = 1;  // 1 or 2
  std::array<int, 2> nx{1, 1};
  std::array<double, 2> L{1.0, 1.0};
  std::array<double, 2> hx{1.0, 1.0};
  int total = 1;

  int index(int i0, int i1 = 0) const { return i0 + nx[0] * i1; }
  std::array<int, 2> unpack(int c) const { return {c % nx[0], c / nx[0]}; }
  double center(int d, int i) const { return (i + 0.5) * hx[d]; }
};

inline SGrid make_sgrid(int dx, std::array<int, 2> nx, std::array<double, 2> L) {
  require(dx == 1 || dx == 2, "spatial dimension must be 1 or 2");
  SGrid g;
  g.dx = dx;
  g.nx = nx;
  g.L = L;
  if (dx == 1) {
    g.nx[1] = 1;
    g.L[1] = 1.0;
  }
  for (int d = 0; d < 2; ++d) {
    require(g.nx[d] >= 1, "spatial cell count must be positive");
    g.hx[d] = g.L[d] / g.nx[d];
  }
  require(g.nx[0] >= 4, "need at least 4 cells along axis 0");
  if (dx == 2) require(g.nx[1] >= 4, "need at least 4 cells along axis 1");
  g.total = g.nx[0] * g.nx[1];
  return g;
}

/// Number of magnetic components carried for a given velocity dimension:
/// scalar out-of-plane field for dv=2, full vector for dv=3.
inline int b_components(int dv) { return dv == 3 ? 3 : 1; }

/// State of a distribution function on (spatial cells) x (velocity nodes).
/// representation tags which normalization the values carry.
enum class Rep { full_F, remainder_f, remainder_h };

struct KineticState {
  Rep rep = Rep::full_F;
  int ncells = 0;
  int nnodes = 0;
  std::vector<double> vals;  // ncells * nnodes, velocity index fastest
  double t = 0.0;

  double* cell(int c) { return vals.data() + static_cast<size_t>(c) * nnodes; }
  const double* cell(int c) const {
    return vals.data() + static_cast<size_t>(c) * nnodes;
  }
};

inline KineticState make_state(Rep rep, int ncells, int nnodes) {
  KineticState s;
  s.rep = rep;
  s.ncells = ncells;
  s.nnodes = nnodes;
  s.vals.assign(static_cast<size_t>(ncells) * nnodes, 0.0);
  return s;
}

/// Quadrature-weighted L2 norm of a velocity-grid function.
inline double wnorm(const VGrid& g, const double* f) {
  double s = 0.0;
  for (int a = 0; a < g.total; ++a) s += g.w[a] * sqr(f[a]);
  return std::sqrt(s);
}

inline double wnorm(const VGrid& g, const std::vector<double>& f) {
  return wnorm(g, f.data());
}

/// Weighted inner product <f, g> = sum_a w_a f_a g_a.
inline double wdot(const VGrid& g, const double* f, const double* h) {
  double s = 0.0;
  for (int a = 0; a < g.total; ++a) s += g.w[a] * f[a] * h[a];
  return s;
}

}  // namespace hkin

#endif
