#pragma once

// Incremental Delaunay triangulation of a rectangle (Lawson flips), used by
// the mesh module. Internal header.

#include <array>
#include <cstdint>
#include <functional>
#include <unordered_set>
#include <vector>

#include "abundance/geometry.hpp"

namespace abundance::detail {

class Delaunay {
 public:
  /// Starts from the two triangles of the rectangle; its corners are vertices 0..3.
  explicit Delaunay(const Rect& hull);

  /// Inserts p and restores the Delaunay property. Returns the vertex index;
  /// a point within the merge tolerance of an existing vertex returns that
  /// vertex. Throws InputError when p is outside the hull.
  std::size_t insert(Point p);

  /// Splits every edge longer than max_len(a, b) at its midpoint, longest
  /// first, until none remain. Midpoints rejected by `allow` are skipped.
  void refine(const std::function<double(Point, Point)>& max_len,
              const std::function<bool(Point)>& allow, std::size_t max_vertices);

  const std::vector<Point>& points() const { return points_; }
  std::vector<std::array<std::size_t, 3>> triangles() const;
  double merge_tolerance() const { return merge_tol_; }

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nb;  // nb[i] is across the edge opposite v[i]
  };

  enum class Where { Inside, OnEdge, OnVertex };
  struct Location {
    int tri;
    Where where;
    int index;  // edge (opposite vertex index) or vertex slot
  };

  Location locate(Point p, int hint) const;
  int insert_in_triangle(int t, int p);
  int split_edge(int t, int e, int p);
  void legalize(int t, int p);
  void set_neighbor(int tri, int old_nb, int new_nb);
  void touch(int t);
  double orient_tolerance(Point a, Point b) const;
  static std::uint64_t edge_key(int a, int b);

  std::vector<Point> points_;
  std::vector<Tri> tris_;
  std::vector<int> vertex_tri_;
  std::unordered_set<std::uint64_t> edges_;
  std::vector<std::pair<int, int>> flip_stack_;
  double merge_tol_ = 1e-9;
  double line_tol_ = 0.0;
  int last_tri_ = 0;
};

}  // namespace abundance::detail
