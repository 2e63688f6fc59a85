#include "delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "abundance/error.hpp"

namespace abundance::detail {

namespace {

// Positive when d lies inside the circumcircle of the counter-clockwise
// triangle (a, b, c).
double incircle(Point a, Point b, Point c, Point d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return ad * (bdx * cdy - cdx * bdy) + bd * (cdx * ady - adx * cdy) +
         cd * (adx * bdy - bdx * ady);
}

double incircle_tolerance(Point a, Point b, Point c, Point d) {
  const double l = std::max({distance(a, d), distance(b, d), distance(c, d)});
  const double l2 = l * l;
  return 1e-12 * l2 * l2;
}

}  // namespace

Delaunay::Delaunay(const Rect& hull) {
  if (!(hull.width() > 0.0) || !(hull.height() > 0.0)) {
    throw InputError("triangulation hull is degenerate (collinear seed set?)");
  }
  line_tol_ = 1e-12 * std::max(1.0, hull.diagonal() + std::abs(hull.xmin) + std::abs(hull.ymin));
  points_ = {{hull.xmin, hull.ymin}, {hull.xmax, hull.ymin}, {hull.xmax, hull.ymax},
             {hull.xmin, hull.ymax}};
  vertex_tri_ = {0, 0, 0, 1};
  // (0,1,2) and (0,2,3); tri 0 edge opposite vertex 1 is (2,0), shared with tri 1.
  tris_.push_back({{0, 1, 2}, {-1, 1, -1}});
  tris_.push_back({{0, 2, 3}, {-1, -1, 0}});
  for (auto [a, b] : {std::pair{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}}) edges_.insert(edge_key(a, b));
}

std::uint64_t Delaunay::edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

double Delaunay::orient_tolerance(Point a, Point b) const { return line_tol_ * distance(a, b); }

void Delaunay::touch(int t) {
  for (int v : tris_[t].v) vertex_tri_[v] = t;
  last_tri_ = t;
}

void Delaunay::set_neighbor(int tri, int old_nb, int new_nb) {
  if (tri < 0) return;
  for (int& n : tris_[tri].nb) {
    if (n == old_nb) {
      n = new_nb;
      return;
    }
  }
}

Delaunay::Location Delaunay::locate(Point p, int hint) const {
  const int ntri = static_cast<int>(tris_.size());
  int t = (hint >= 0 && hint < ntri) ? hint : 0;
  const int max_steps = 4 * ntri + 16;

  auto classify = [&](int tri) -> Location {
    const Tri& T = tris_[tri];
    for (int j = 0; j < 3; ++j) {
      if (distance(points_[T.v[j]], p) <= merge_tol_) return {tri, Where::OnVertex, j};
    }
    int on_edge = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
      const Point a = points_[T.v[(i + 1) % 3]];
      const Point b = points_[T.v[(i + 2) % 3]];
      const double o = orient2d(a, b, p);
      if (std::abs(o) <= orient_tolerance(a, b)) {
        const double rel = std::abs(o) / distance(a, b);
        if (rel < best) {
          best = rel;
          on_edge = i;
        }
      }
    }
    if (on_edge >= 0) return {tri, Where::OnEdge, on_edge};
    return {tri, Where::Inside, -1};
  };

  for (int step = 0; step < max_steps; ++step) {
    const Tri& T = tris_[t];
    int exit_edge = -1;
    for (int k = 0; k < 3; ++k) {
      const int i = (k + step) % 3;
      const Point a = points_[T.v[(i + 1) % 3]];
      const Point b = points_[T.v[(i + 2) % 3]];
      if (orient2d(a, b, p) < -orient_tolerance(a, b)) {
        exit_edge = i;
        break;
      }
    }
    if (exit_edge < 0) return classify(t);
    if (T.nb[exit_edge] < 0) {
      std::ostringstream msg;
      msg << "point (" << p.x << ", " << p.y << ") lies outside the triangulation hull";
      throw InputError(msg.str());
    }
    t = T.nb[exit_edge];
  }
  // Walk did not settle (should not happen); fall back to a scan.
  for (int tri = 0; tri < ntri; ++tri) {
    const Tri& T = tris_[tri];
    bool inside = true;
    for (int i = 0; i < 3 && inside; ++i) {
      const Point a = points_[T.v[(i + 1) % 3]];
      const Point b = points_[T.v[(i + 2) % 3]];
      inside = orient2d(a, b, p) >= -orient_tolerance(a, b);
    }
    if (inside) return classify(tri);
  }
  throw NumericalError("point location failed in triangulation");
}

std::size_t Delaunay::insert(Point p) {
  const Rect hull{points_[0].x, points_[0].y, points_[2].x, points_[2].y};
  if (!hull.contains(p, line_tol_)) {
    std::ostringstream msg;
    msg << "point (" << p.x << ", " << p.y << ") lies outside the triangulation hull";
    throw InputError(msg.str());
  }
  const Location loc = locate(p, last_tri_);
  if (loc.where == Where::OnVertex) {
    return static_cast<std::size_t>(tris_[loc.tri].v[loc.index]);
  }
  const int idx = static_cast<int>(points_.size());
  points_.push_back(p);
  vertex_tri_.push_back(loc.tri);
  if (loc.where == Where::Inside) {
    insert_in_triangle(loc.tri, idx);
  } else {
    split_edge(loc.tri, loc.index, idx);
  }
  while (!flip_stack_.empty()) {
    auto [t, v] = flip_stack_.back();
    flip_stack_.pop_back();
    legalize(t, v);
  }
  return static_cast<std::size_t>(idx);
}

int Delaunay::insert_in_triangle(int t, int p) {
  const Tri old = tris_[t];
  const int a = old.v[0], b = old.v[1], c = old.v[2];
  const int na = old.nb[0], nbb = old.nb[1], nc = old.nb[2];
  const int t1 = static_cast<int>(tris_.size());
  const int t2 = t1 + 1;
  tris_[t] = {{p, b, c}, {na, t1, t2}};
  tris_.push_back({{p, c, a}, {nbb, t2, t}});
  tris_.push_back({{p, a, b}, {nc, t, t1}});
  set_neighbor(nbb, t, t1);
  set_neighbor(nc, t, t2);
  for (int v : {a, b, c}) edges_.insert(edge_key(p, v));
  touch(t);
  touch(t1);
  touch(t2);
  flip_stack_.push_back({t, p});
  flip_stack_.push_back({t1, p});
  flip_stack_.push_back({t2, p});
  return t;
}

int Delaunay::split_edge(int t, int e, int p) {
  // Rotate so that the split edge (b, c) is opposite a.
  const Tri T = tris_[t];
  const int a = T.v[e], b = T.v[(e + 1) % 3], c = T.v[(e + 2) % 3];
  const int t_nb_b = T.nb[(e + 1) % 3];  // across (c, a)
  const int t_nb_c = T.nb[(e + 2) % 3];  // across (a, b)
  const int n = T.nb[e];

  edges_.erase(edge_key(b, c));
  edges_.insert(edge_key(b, p));
  edges_.insert(edge_key(p, c));
  edges_.insert(edge_key(a, p));

  const int t_new = static_cast<int>(tris_.size());
  if (n < 0) {
    tris_[t] = {{a, b, p}, {-1, t_new, t_nb_c}};
    tris_.push_back({{a, p, c}, {-1, t_nb_b, t}});
    set_neighbor(t_nb_b, t, t_new);
    touch(t);
    touch(t_new);
    flip_stack_.push_back({t, p});
    flip_stack_.push_back({t_new, p});
    return t;
  }

  const Tri N = tris_[n];
  int j = 0;
  while (N.nb[j] != t) ++j;
  const int d = N.v[j];
  // N is (d, c, b) after rotation.
  const int n_nb_c = N.nb[(j + 1) % 3];  // opposite c: across (b, d)
  const int n_nb_b = N.nb[(j + 2) % 3];  // opposite b: across (d, c)
  edges_.insert(edge_key(d, p));

  const int n_new = t_new + 1;
  tris_[t] = {{a, b, p}, {n_new, t_new, t_nb_c}};
  tris_.push_back({{a, p, c}, {n, t_nb_b, t}});
  tris_[n] = {{d, c, p}, {t_new, n_new, n_nb_b}};
  tris_.push_back({{d, p, b}, {t, n_nb_c, n}});
  set_neighbor(t_nb_b, t, t_new);
  set_neighbor(n_nb_c, n, n_new);
  touch(t);
  touch(t_new);
  touch(n);
  touch(n_new);
  for (int tri : {t, t_new, n, n_new}) flip_stack_.push_back({tri, p});
  return t;
}

void Delaunay::legalize(int t, int p) {
  Tri& T = tris_[t];
  int i = 0;
  while (i < 3 && T.v[i] != p) ++i;
  if (i == 3) return;  // triangle was re-used by a later flip
  const int n = T.nb[i];
  if (n < 0) return;
  const int b = T.v[(i + 1) % 3];
  const int c = T.v[(i + 2) % 3];
  const Tri& N = tris_[n];
  int j = 0;
  while (j < 3 && N.nb[j] != t) ++j;
  if (j == 3) throw NumericalError("triangulation adjacency is inconsistent");
  const int d = N.v[j];

  const Point pp = points_[p], pb = points_[b], pc = points_[c], pd = points_[d];
  if (incircle(pp, pb, pc, pd) <= incircle_tolerance(pp, pb, pc, pd)) return;
  // The flipped pair must be strictly convex.
  if (orient2d(pp, pb, pd) <= 0.0 || orient2d(pp, pd, pc) <= 0.0) return;

  const int t_nb1 = T.nb[(i + 1) % 3];  // opposite b: across (c, p)
  const int t_nb2 = T.nb[(i + 2) % 3];  // opposite c: across (p, b)
  const int n_nb1 = N.nb[(j + 1) % 3];  // N = (d, c, b): opposite c, across (b, d)
  const int n_nb2 = N.nb[(j + 2) % 3];  // opposite b, across (d, c)

  tris_[t] = {{p, b, d}, {n_nb1, n, t_nb2}};
  tris_[n] = {{p, d, c}, {n_nb2, t_nb1, t}};
  set_neighbor(n_nb1, n, t);
  set_neighbor(t_nb1, t, n);
  edges_.erase(edge_key(b, c));
  edges_.insert(edge_key(p, d));
  touch(t);
  touch(n);
  flip_stack_.push_back({t, p});
  flip_stack_.push_back({n, p});
}

void Delaunay::refine(const std::function<double(Point, Point)>& max_len,
                      const std::function<bool(Point)>& allow, std::size_t max_vertices) {
  std::unordered_set<std::uint64_t> exempt;
  struct Candidate {
    double length;
    std::uint64_t key;
  };
  std::vector<Candidate> candidates;
  while (true) {
    candidates.clear();
    for (std::uint64_t key : edges_) {
      if (exempt.count(key)) continue;
      const auto a = static_cast<int>(key >> 32);
      const auto b = static_cast<int>(key & 0xffffffffULL);
      const double len = distance(points_[a], points_[b]);
      if (len > max_len(points_[a], points_[b])) candidates.push_back({len, key});
    }
    if (candidates.empty()) break;
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      return x.length != y.length ? x.length > y.length : x.key < y.key;
    });
    for (const auto& cand : candidates) {
      if (!edges_.count(cand.key)) continue;
      const auto a = static_cast<int>(cand.key >> 32);
      const auto b = static_cast<int>(cand.key & 0xffffffffULL);
      const Point m = 0.5 * (points_[a] + points_[b]);
      if (allow && !allow(m)) {
        exempt.insert(cand.key);
        continue;
      }
      const std::size_t before = points_.size();
      last_tri_ = vertex_tri_[a];
      insert(m);
      if (points_.size() == before) exempt.insert(cand.key);
      if (points_.size() > max_vertices) {
        throw NumericalError("mesh refinement exceeded the vertex limit");
      }
    }
  }
}

std::vector<std::array<std::size_t, 3>> Delaunay::triangles() const {
  std::vector<std::array<std::size_t, 3>> out;
  out.reserve(tris_.size());
  for (const auto& t : tris_) {
    out.push_back({static_cast<std::size_t>(t.v[0]), static_cast<std::size_t>(t.v[1]),
                   static_cast<std::size_t>(t.v[2])});
  }
  return out;
}

}  // namespace abundance::detail
