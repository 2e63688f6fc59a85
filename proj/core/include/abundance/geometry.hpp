#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace abundance {

/// Planar point in kilometres.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
inline double distance(Point a, Point b) { return norm(a - b); }

/// Axis-aligned rectangle [xmin, xmax] x [ymin, ymax].
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  Point center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  double diagonal() const { return std::hypot(width(), height()); }

  bool contains(Point p, double slack = 0.0) const {
    return p.x >= xmin - slack && p.x <= xmax + slack && p.y >= ymin - slack &&
           p.y <= ymax + slack;
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Intersection of two rectangles; empty results have zero area.
Rect intersect(const Rect& a, const Rect& b);

/// Area of the union of rectangles (overlaps counted once).
double union_area(std::span<const Rect> rects);

/// Smallest rectangle containing all points. Requires a non-empty input.
Rect bounding_box(std::span<const Point> points);

/// Twice the signed area of triangle (a, b, c); positive when counter-clockwise.
inline double orient2d(Point a, Point b, Point c) { return cross(b - a, c - a); }

/// Signed area of a simple polygon (counter-clockwise positive).
double polygon_area(std::span<const Point> polygon);

}  // namespace abundance
