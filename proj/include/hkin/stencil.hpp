#ifndef HKIN_STENCIL_HPP
#define HKIN_STENCIL_HPP

#include "hkin/grid.hpp"

namespace hkin {

/// 4th-order first-derivative stencils on a uniform axis: central 5-point in
/// the interior, one-sided 5-point closures at the two boundary layers.
/// All rows are exact on polynomials of degree <= 4.
struct Axis4Stencil {
  int n = 0;
  double h = 1.0;
  // Row i holds 5 coefficients applying to nodes offset[i]..offset[i]+4.
  std::vector<std::array<double, 5>> rows;
  std::vector<int> offset;
};

inline Axis4Stencil make_axis4(int n, double h) {
  require(n >= 5, "4th-order stencil needs >= 5 nodes");
  Axis4Stencil s;
  s.n = n;
  s.h = h;
  s.rows.resize(n);
  s.offset.resize(n);
  const double c = 1.0 / (12.0 * h);
  for (int i = 0; i < n; ++i) {
    if (i == 0) {
      s.rows[i] = {-25 * c, 48 * c, -36 * c, 16 * c, -3 * c};
      s.offset[i] = 0;
    } else if (i == 1) {
      s.rows[i] = {-3 * c, -10 * c, 18 * c, -6 * c, 1 * c};
      s.offset[i] = 0;
    } else if (i == n - 2) {
      s.rows[i] = {-1 * c, 6 * c, -18 * c, 10 * c, 3 * c};
      s.offset[i] = n - 5;
    } else if (i == n - 1) {
      s.rows[i] = {3 * c, -16 * c, 36 * c, -48 * c, 25 * c};
      s.offset[i] = n - 5;
    } else {
      s.rows[i] = {1 * c, -8 * c, 0.0, 8 * c, -1 * c};
      s.offset[i] = i - 2;
    }
  }
  return s;
}

/// Apply the axis stencil along dimension d of a flattened velocity-grid
/// array.  out must not alias in.
inline void deriv_axis(const VGrid& g, const Axis4Stencil& st, int d,
                       const double* in, double* out) {
  const int stride = g.stride(d);
  const int nv = g.nv;
  const int nlines = g.total / nv;
  // Walk every 1D line along dimension d; base = flattened index with the
  // d-digit set to zero.
  for (int line = 0; line < nlines; ++line) {
    int base = 0;
    int rem = line;
    int mult = 1;
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
      const auto& row = st.rows[i];
      const int off = st.offset[i];
      double acc = 0.0;
      for (int k = 0; k < 5; ++k)
        acc += row[k] * in[base + (off + k) * stride];
      out[base + i * stride] = acc;
    }
  }
}

/// Plain 4th-order derivative of a velocity-grid function along dim d.
inline std::vector<double> deriv_v(const VGrid& g, const Axis4Stencil& st,
                                   int d, const std::vector<double>& in) {
  std::vector<double> out(g.total);
  deriv_axis(g, st, d, in.data(), out.data());
  return out;
}

/// Reference weight for Gaussian-exact differentiation: carries the node
/// values of a positive reference function W and the analytic gradient of
/// log W, so that D_W[g] = W * D(g/W) + g * dlogW is exact whenever g/W is a
/// polynomial of degree <= 4.
struct DerivWeight {
  std::vector<double> Wv;                     // reference values, size total
  std::array<std::vector<double>, 3> dlogW;   // analytic d/dv_d log W
};

/// Weighted derivative along dim d: W * D(g/W) + g * dlogW_d.
inline void deriv_weighted(const VGrid& g, const Axis4Stencil& st, int d,
                           const DerivWeight& wt, const double* in,
                           double* out, std::vector<double>& scratch) {
  scratch.resize(g.total);
  for (int a = 0; a < g.total; ++a) scratch[a] = in[a] / wt.Wv[a];
  deriv_axis(g, st, d, scratch.data(), out);
  const auto& dl = wt.dlogW[d];
  for (int a = 0; a < g.total; ++a)
    out[a] = wt.Wv[a] * out[a] + in[a] * dl[a];
}

}  // namespace hkin

#endif
