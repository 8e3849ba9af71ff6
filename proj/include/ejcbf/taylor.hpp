#pragma once

#include <cmath>

namespace ejcbf {

/// Truncated Taylor scalar carrying a value and its first two total time
/// derivatives. Propagating these through the closed-form inertia and
/// Coriolis expressions yields Mdot, Mddot, Cdot, Cddot without hand-derived
/// formulas.
struct Jet2 {
  double v = 0.0;   // value
  double d1 = 0.0;  // first time derivative
  double d2 = 0.0;  // second time derivative

  Jet2() = default;
  Jet2(double value) : v(value) {}
  Jet2(double value, double first, double second) : v(value), d1(first), d2(second) {}
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
inline Jet2 operator-(const Jet2& a, const Jet2& b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.d1, -a.d2}; }

inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  return {a.v * b.v,
          a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}

inline Jet2 operator*(double s, const Jet2& a) { return {s * a.v, s * a.d1, s * a.d2}; }
inline Jet2 operator*(const Jet2& a, double s) { return s * a; }
inline Jet2 operator+(const Jet2& a, double s) { return {a.v + s, a.d1, a.d2}; }
inline Jet2 operator+(double s, const Jet2& a) { return a + s; }
inline Jet2 operator-(const Jet2& a, double s) { return {a.v - s, a.d1, a.d2}; }

inline Jet2 sin(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return {s, c * a.d1, c * a.d2 - s * a.d1 * a.d1};
}

inline Jet2 cos(const Jet2& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return {c, -s * a.d1, -s * a.d2 - c * a.d1 * a.d1};
}

}  // namespace ejcbf
