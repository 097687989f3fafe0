#ifndef HKIN_CORE_HPP
#define HKIN_CORE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hkin {

/// Fixed gas constant R (mono-atomic normalization used throughout).
inline constexpr double gas_constant = 2.0 / 3.0;

/// Exponent kappa steering the epsilon-weighted functionals and the
/// admissible time horizon t <= eps^(-kappa).
inline constexpr double default_kappa = 1.0 / 3.0;

using Vec3 = std::array<double, 3>;

inline double sqr(double x) { return x * x; }

inline double dot3(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

struct HkinError : std::runtime_error {
  explicit HkinError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw HkinError(msg);
}

}  // namespace hkin

#endif
