// SPDX-License-Identifier: Apache-2.0
//
// Rotated-rectangle geometry in image coordinates (origin upper-left, y grows
// downward). A box's angle is the rotation of its width axis from +x toward +y.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "rotstream/error.hpp"

namespace rotstream {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;

/// Clipping and on-edge tolerance (pixels).
inline constexpr double kGeomEps = 1e-9;
/// Intersections smaller than this (pixels^2) count as empty.
inline constexpr double kMinArea = 1e-12;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }

/// Center, extents and angle (radians) of a rotated rectangle. `conf` is set
/// for detections and absent for ground truth.
struct RotatedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double angle = 0.0;
  std::optional<double> conf;

  friend bool operator==(const RotatedBox&, const RotatedBox&) = default;
};

inline std::string describe(const RotatedBox& b) {
  std::ostringstream os;
  os << "(" << b.cx << ", " << b.cy << ", " << b.w << ", " << b.h << ", " << b.angle << ")";
  return os.str();
}

/// Throws unless the box has finite fields and positive extents.
inline void validate(const RotatedBox& b) {
  if (!(std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
        std::isfinite(b.h) && std::isfinite(b.angle))) {
    throw Error(ErrorCode::InvalidArgument, "non-finite box field in " + describe(b));
  }
  if (b.conf && !(*b.conf >= 0.0 && *b.conf <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence outside [0,1] in " + describe(b));
  }
  if (!(b.w > 0.0) || !(b.h > 0.0)) {
    throw Error(ErrorCode::NonPositiveExtent, describe(b));
  }
}

/// Reduces an angle modulo pi into [-pi/2, pi/2). Values already in range are
/// returned unchanged, so the reduction is idempotent bit for bit.
inline double wrap_half_turn(double angle) {
  if (angle >= -kHalfPi && angle < kHalfPi) return angle;
  double a = angle - kPi * std::floor((angle + kHalfPi) / kPi);
  if (a >= kHalfPi) a -= kPi;
  if (a < -kHalfPi) a += kPi;
  return a;
}

inline bool is_canonical(const RotatedBox& b) {
  return b.w <= b.h && b.angle >= -kHalfPi && b.angle < kHalfPi;
}

/// Same rectangle with w <= h and angle in [-pi/2, pi/2). A square keeps its
/// (wrapped) input angle.
inline RotatedBox canonicalize(const RotatedBox& box) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw Error(ErrorCode::NonPositiveExtent, describe(box));
  if (!std::isfinite(box.angle)) throw Error(ErrorCode::InvalidArgument, "non-finite angle");
  RotatedBox out = box;
  if (out.w > out.h) {
    std::swap(out.w, out.h);
    out.angle += kHalfPi;
  }
  out.angle = wrap_half_turn(out.angle);
  return out;
}

/// Corners in positive (counterclockwise in x-right/y-up terms) order,
/// starting from the corner at -w/2, -h/2 in box coordinates.
inline std::array<Point2, 4> corners(const RotatedBox& b) {
  const double c = std::cos(b.angle);
  const double s = std::sin(b.angle);
  const Point2 u{0.5 * b.w * c, 0.5 * b.w * s};
  const Point2 v{-0.5 * b.h * s, 0.5 * b.h * c};
  const Point2 o{b.cx, b.cy};
  return {o - u - v, o + u - v, o + u + v, o - u + v};
}

namespace detail {

inline double signed_area(std::span<const Point2> pts) {
  double acc = 0.0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& p = pts[i];
    const Point2& q = pts[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

// Sine of the turn at b, relative to the two adjacent edge lengths.
inline double turn_sine(Point2 a, Point2 b, Point2 c) {
  const Point2 u = b - a;
  const Point2 v = c - b;
  const double scale = norm(u) * norm(v);
  if (scale == 0.0) return 0.0;
  return cross(u, v) / scale;
}

// Drops repeated and collinear vertices from a closed ring.
inline std::vector<Point2> clean_ring(std::vector<Point2> pts) {
  bool changed = true;
  while (changed && pts.size() >= 3) {
    changed = false;
    for (std::size_t i = 0; i < pts.size() && pts.size() >= 3; ++i) {
      const std::size_t n = pts.size();
      const Point2 prev = pts[(i + n - 1) % n];
      const Point2 cur = pts[i];
      const Point2 next = pts[(i + 1) % n];
      if (norm(cur - prev) <= kGeomEps || std::abs(turn_sine(prev, cur, next)) <= kGeomEps) {
        pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        --i;
      }
    }
  }
  if (pts.size() < 3) pts.clear();
  return pts;
}

}  // namespace detail

/// A convex polygon with at least three vertices in positive orientation.
class ConvexPolygon {
 public:
  /// Validates and normalizes orientation. Throws InvalidPolygon.
  explicit ConvexPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) {
      throw Error(ErrorCode::InvalidPolygon, "fewer than 3 vertices");
    }
    for (const Point2& p : vertices_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw Error(ErrorCode::InvalidPolygon, "non-finite vertex");
      }
    }
    if (detail::signed_area(vertices_) < 0.0) std::reverse(vertices_.begin(), vertices_.end());
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 a = vertices_[i];
      const Point2 b = vertices_[(i + 1) % n];
      const Point2 c = vertices_[(i + 2) % n];
      if (norm(b - a) <= kGeomEps) throw Error(ErrorCode::InvalidPolygon, "repeated vertex");
      if (detail::turn_sine(a, b, c) <= kGeomEps) {
        throw Error(ErrorCode::InvalidPolygon, "not strictly convex");
      }
    }
  }

  std::span<const Point2> vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  static ConvexPolygon from_box(const RotatedBox& b) {
    const auto c = corners(b);
    return ConvexPolygon(Unchecked{}, {c.begin(), c.end()});
  }

 private:
  struct Unchecked {};
  ConvexPolygon(Unchecked, std::vector<Point2> v) : vertices_(std::move(v)) {}

  friend std::optional<ConvexPolygon> convex_intersection(const ConvexPolygon&,
                                                          const ConvexPolygon&);
  friend ConvexPolygon convex_hull(std::span<const Point2>);

  std::vector<Point2> vertices_;
};

inline double polygon_area(const ConvexPolygon& p) {
  return std::abs(detail::signed_area(p.vertices()));
}

/// Sutherland-Hodgman clip of `a` against every edge of `b`. Returns nullopt
/// when the overlap is empty or thinner than kMinArea.
inline std::optional<ConvexPolygon> convex_intersection(const ConvexPolygon& a,
                                                       const ConvexPolygon& b) {
  std::vector<Point2> poly(a.vertices().begin(), a.vertices().end());
  std::vector<Point2> next;
  const auto clip = b.vertices();
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !poly.empty(); ++e) {
    const Point2 c0 = clip[e];
    const Point2 dir = clip[(e + 1) % m] - c0;
    const double len = norm(dir);
    auto dist = [&](Point2 p) { return cross(dir, p - c0) / len; };
    next.clear();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 s = poly[(i + n - 1) % n];
      const Point2 t = poly[i];
      const double ds = dist(s);
      const double dt = dist(t);
      const bool s_in = ds >= -kGeomEps;
      const bool t_in = dt >= -kGeomEps;
      if (t_in) {
        if (!s_in) next.push_back(s + (ds / (ds - dt)) * (t - s));
        next.push_back(t);
      } else if (s_in) {
        next.push_back(s + (ds / (ds - dt)) * (t - s));
      }
    }
    poly.swap(next);
  }
  poly = detail::clean_ring(std::move(poly));
  if (poly.empty() || std::abs(detail::signed_area(poly)) < kMinArea) return std::nullopt;
  return ConvexPolygon(ConvexPolygon::Unchecked{}, std::move(poly));
}

/// Intersection over union of two rotated rectangles, in [0, 1].
inline double rotated_iou(const RotatedBox& a, const RotatedBox& b) {
  const double area_a = a.w * a.h;
  const double area_b = b.w * b.h;
  const double reach = 0.5 * (std::hypot(a.w, a.h) + std::hypot(b.w, b.h));
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > reach) return 0.0;
  const auto inter = convex_intersection(ConvexPolygon::from_box(a), ConvexPolygon::from_box(b));
  if (!inter) return 0.0;
  const double overlap = polygon_area(*inter);
  const double uni = area_a + area_b - overlap;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(overlap / uni, 0.0, 1.0);
}

/// Convex hull by monotone-chain Graham scan. Duplicates are merged and
/// collinear boundary points dropped. Throws DegenerateContour when fewer
/// than three non-collinear distinct points remain.
inline ConvexPolygon convex_hull(std::span<const Point2> points) {
  std::vector<Point2> pts(points.begin(), points.end());
  for (const Point2& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorCode::DegenerateContour, "non-finite contour point");
    }
  }
  std::sort(pts.begin(), pts.end(),
            [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) {
    throw Error(ErrorCode::DegenerateContour, "fewer than 3 distinct points");
  }

  auto turns_left = [](Point2 o, Point2 a, Point2 b) {
    return detail::turn_sine(o, a, b) > kGeomEps;
  };
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && !turns_left(hull[k - 2], hull[k - 1], pts[i])) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && !turns_left(hull[k - 2], hull[k - 1], pts[i])) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  hull = detail::clean_ring(std::move(hull));
  if (hull.size() < 3 || detail::signed_area(hull) < kMinArea) {
    throw Error(ErrorCode::DegenerateContour, "points are collinear");
  }
  return ConvexPolygon(ConvexPolygon::Unchecked{}, std::move(hull));
}

/// Minimum-area enclosing rectangle by rotating calipers over the hull edges.
/// The result is canonical.
inline RotatedBox min_area_rect(std::span<const Point2> points) {
  const ConvexPolygon hull = convex_hull(points);
  const auto p = hull.vertices();
  const std::size_t n = p.size();
  auto at = [&](std::size_t i) { return p[i % n]; };

  // Calipers: `hi` maximizes the projection on the edge direction, `lo`
  // minimizes it, `far` maximizes the distance from the edge line. All three
  // only move forward as the edge index grows.
  std::size_t hi = 0, lo = 0, far = 0;
  double best_area = std::numeric_limits<double>::infinity();
  RotatedBox best;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 origin = p[i];
    const Point2 edge = at(i + 1) - origin;
    const Point2 e = (1.0 / norm(edge)) * edge;
    const Point2 nrm{-e.y, e.x};
    auto along = [&](std::size_t k) { return dot(at(k) - origin, e); };
    auto across = [&](std::size_t k) { return dot(at(k) - origin, nrm); };
    if (i == 0) {
      for (std::size_t k = 0; k < n; ++k) {
        if (along(k) > along(hi)) hi = k;
        if (along(k) < along(lo)) lo = k;
        if (across(k) > across(far)) far = k;
      }
    } else {
      for (std::size_t s = 0; s < n && along(hi + 1) >= along(hi); ++s) ++hi;
      for (std::size_t s = 0; s < n && across(far + 1) >= across(far); ++s) ++far;
      for (std::size_t s = 0; s < n && along(lo + 1) <= along(lo); ++s) ++lo;
    }
    const double a_max = along(hi);
    const double a_min = along(lo);
    const double depth = across(far);
    const double area = (a_max - a_min) * depth;
    if (area < best_area) {
      best_area = area;
      const Point2 center = origin + (0.5 * (a_max + a_min)) * e + (0.5 * depth) * nrm;
      best = RotatedBox{center.x, center.y, a_max - a_min, depth, std::atan2(e.y, e.x), {}};
    }
    hi %= n;
    lo %= n;
    far %= n;
  }
  return canonicalize(best);
}

inline RotatedBox min_area_rect(const ConvexPolygon& hull) { return min_area_rect(hull.vertices()); }

}  // namespace rotstream
