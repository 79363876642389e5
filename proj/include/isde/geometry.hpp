#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <variant>

namespace isde {

/// A point of R^1 or R^2. One-dimensional points keep y == 0.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return a -= b; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double norm2(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline bool is_finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

/// Rotation of the plane by `angle` radians about the origin.
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Closed disk of the given radius centred at the origin (dim 2).
struct Disk {
  double radius = 0.0;
};

/// Closed interval [lo, hi] (dim 1).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

using Window = std::variant<Disk, Interval>;

inline int window_dim(const Window& w) { return std::holds_alternative<Disk>(w) ? 2 : 1; }

/// Lebesgue measure of the window (area or length).
inline double measure(const Window& w) {
  if (const auto* d = std::get_if<Disk>(&w)) return std::numbers::pi * d->radius * d->radius;
  const auto& iv = std::get<Interval>(w);
  return iv.hi > iv.lo ? iv.hi - iv.lo : 0.0;
}

inline bool contains(const Window& w, Vec2 p) {
  if (const auto* d = std::get_if<Disk>(&w)) return norm2(p) <= d->radius * d->radius;
  const auto& iv = std::get<Interval>(w);
  return p.x >= iv.lo && p.x <= iv.hi;
}

/// Distance from p to the complement of the window; negative outside.
inline double depth(const Window& w, Vec2 p) {
  if (const auto* d = std::get_if<Disk>(&w)) return d->radius - norm(p);
  const auto& iv = std::get<Interval>(w);
  return std::min(p.x - iv.lo, iv.hi - p.x);
}

/// True when `inner` lies inside `outer` with at least `margin` to spare.
inline bool interior_with_margin(const Window& inner, const Window& outer, double margin) {
  if (inner.index() != outer.index()) return false;
  if (const auto* d = std::get_if<Disk>(&inner)) {
    return d->radius + margin <= std::get<Disk>(outer).radius;
  }
  const auto& a = std::get<Interval>(inner);
  const auto& b = std::get<Interval>(outer);
  return a.lo - margin >= b.lo && a.hi + margin <= b.hi;
}

}  // namespace isde
