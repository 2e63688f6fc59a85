#include "abundance/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace abundance {

Rect intersect(const Rect& a, const Rect& b) {
  Rect r{std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin), std::min(a.xmax, b.xmax),
         std::min(a.ymax, b.ymax)};
  if (r.xmax < r.xmin) r.xmax = r.xmin;
  if (r.ymax < r.ymin) r.ymax = r.ymin;
  return r;
}

double union_area(std::span<const Rect> rects) {
  // Coordinate compression over x; the covered y-length of each slab is the
  // union of the y-intervals of rectangles spanning it.
  std::vector<double> xs;
  xs.reserve(2 * rects.size());
  for (const auto& r : rects) {
    if (r.area() <= 0.0) continue;
    xs.push_back(r.xmin);
    xs.push_back(r.xmax);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double total = 0.0;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
    const double x0 = xs[s];
    const double x1 = xs[s + 1];
    spans.clear();
    for (const auto& r : rects) {
      if (r.area() <= 0.0) continue;
      if (r.xmin <= x0 && r.xmax >= x1) spans.emplace_back(r.ymin, r.ymax);
    }
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    double lo = spans.front().first;
    double hi = spans.front().second;
    for (const auto& [a, b] : spans) {
      if (a > hi) {
        covered += hi - lo;
        lo = a;
        hi = b;
      } else {
        hi = std::max(hi, b);
      }
    }
    covered += hi - lo;
    total += covered * (x1 - x0);
  }
  return total;
}

Rect bounding_box(std::span<const Point> points) {
  if (points.empty()) throw std::invalid_argument("bounding_box of an empty point set");
  Rect box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : points) {
    box.xmin = std::min(box.xmin, p.x);
    box.ymin = std::min(box.ymin, p.y);
    box.xmax = std::max(box.xmax, p.x);
    box.ymax = std::max(box.ymax, p.y);
  }
  return box;
}

double polygon_area(std::span<const Point> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) twice += cross(polygon[i], polygon[(i + 1) % n]);
  return 0.5 * twice;
}

}  // namespace abundance
