#include "abundance/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "abundance/error.hpp"
#include "delaunay.hpp"

namespace abundance {

namespace {

constexpr double kMergeTol = 1e-9;

/// Hash grid used to merge coincident points and to answer proximity queries.
class PointGrid {
 public:
  explicit PointGrid(double cell) : cell_(cell) {}

  void add(Point p, std::size_t id) { cells_[key(cell_of(p.x), cell_of(p.y))].push_back({p, id}); }

  /// Calls fn(point, id) for stored points in the 3x3 block of cells around p.
  template <class Fn>
  void visit_near(Point p, Fn&& fn) const {
    const long long cx = cell_of(p.x), cy = cell_of(p.y);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (const auto& [q, id] : it->second) {
          if (fn(q, id)) return;
        }
      }
    }
  }

 private:
  long long cell_of(double v) const { return static_cast<long long>(std::floor(v / cell_)); }
  static std::uint64_t key(long long x, long long y) {
    return (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ULL) ^ static_cast<std::uint64_t>(y);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<Point, std::size_t>>> cells_;
};

class NodeSet {
 public:
  NodeSet() : grid_(1e-6) {}

  std::size_t add(Point p) {
    std::size_t found = nodes_.size();
    grid_.visit_near(p, [&](Point q, std::size_t id) {
      if (distance(p, q) <= kMergeTol) {
        found = id;
        return true;
      }
      return false;
    });
    if (found != nodes_.size()) return found;
    grid_.add(p, nodes_.size());
    nodes_.push_back(p);
    return nodes_.size() - 1;
  }

  std::vector<Point> release() { return std::move(nodes_); }

 private:
  PointGrid grid_;
  std::vector<Point> nodes_;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

// Clips a convex polygon to the half-plane {x : dot(x, n) <= c}.
void clip(std::vector<Point>& poly, Point n, double c, std::vector<Point>& scratch) {
  scratch.clear();
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Point a = poly[i];
    const Point b = poly[(i + 1) % m];
    const double da = dot(a, n) - c;
    const double db = dot(b, n) - c;
    if (da <= 0.0) scratch.push_back(a);
    if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
      const double t = da / (da - db);
      scratch.push_back(a + t * (b - a));
    }
  }
  poly.swap(scratch);
}

}  // namespace

double Mesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles.at(t);
  return 0.5 * orient2d(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
}

PhotoNodes build_photo_nodes(const Survey& survey) {
  NodeSet set;
  PhotoNodes out;
  out.photo_node.assign(survey.size(), 0);
  // Photo centres first so their node indices are stable.
  for (std::size_t i = 0; i < survey.size(); ++i) out.photo_node[i] = set.add(survey.photo(i).center);
  for (std::size_t i = 0; i < survey.size(); ++i) {
    const Photo& p = survey.photo(i);
    set.add({p.center.x, p.center.y + p.height});
    set.add({p.center.x, p.center.y - p.height});
  }
  for (const auto& t : survey.transects()) {
    const auto& m = t.members;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const Photo& p = survey.photo(m[k]);
      const Rect f = p.footprint();
      const bool run_start =
          k == 0 || f.xmin - survey.photo(m[k - 1]).footprint().xmax >= p.width - kMergeTol;
      const bool run_end =
          k + 1 == m.size() || survey.photo(m[k + 1]).footprint().xmin - f.xmax >= p.width - kMergeTol;
      if (run_start) set.add({p.center.x - p.width, p.center.y});
      if (run_end) set.add({p.center.x + p.width, p.center.y});
    }
  }
  out.nodes = set.release();
  return out;
}

Mesh triangulate(std::span<const Point> seeds, const Rect& hull, const TriangulateOptions& options) {
  if (options.max_edge_inner > 0.0 && options.max_edge_outer > 0.0 &&
      options.max_edge_inner > options.max_edge_outer) {
    throw InputError("max_edge_inner must not exceed max_edge_outer");
  }
  detail::Delaunay dt(hull);
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> to_mesh(4, kUnset);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (!hull.contains(seeds[s], 1e-12 * (1.0 + hull.diagonal()))) {
      std::ostringstream msg;
      msg << "seed " << s << " (" << seeds[s].x << ", " << seeds[s].y << ") lies outside the hull";
      throw InputError(msg.str());
    }
    const std::size_t v = dt.insert(seeds[s]);
    if (v >= to_mesh.size()) to_mesh.resize(v + 1, kUnset);
    if (to_mesh[v] != kUnset) {
      std::ostringstream msg;
      msg << "seed " << s << " coincides with seed " << to_mesh[v];
      throw InputError(msg.str());
    }
    to_mesh[v] = s;
  }

  const double inner = options.max_edge_inner > 0.0 ? options.max_edge_inner
                                                    : std::numeric_limits<double>::infinity();
  const double outer = options.max_edge_outer > 0.0 ? options.max_edge_outer
                                                    : std::numeric_limits<double>::infinity();
  if (std::isfinite(inner) || std::isfinite(outer)) {
    auto max_len = [&](Point a, Point b) {
      const Point m = 0.5 * (a + b);
      return options.inner && options.inner(m) ? inner : outer;
    };
    std::function<bool(Point)> allow = options.allow_steiner;
    dt.refine(max_len, allow, options.max_nodes);
  }

  const auto& pts = dt.points();
  to_mesh.resize(pts.size(), kUnset);
  std::size_t next = seeds.size();
  Mesh mesh;
  mesh.hull = hull;
  mesh.nodes.resize(pts.size());
  for (std::size_t v = 0; v < pts.size(); ++v) {
    if (to_mesh[v] == kUnset) to_mesh[v] = next++;
    mesh.nodes[to_mesh[v]] = pts[v];
  }
  // Seeds keep their exact coordinates.
  for (std::size_t s = 0; s < seeds.size(); ++s) mesh.nodes[s] = seeds[s];

  for (const auto& t : dt.triangles()) {
    Triangle tri{to_mesh[t[0]], to_mesh[t[1]], to_mesh[t[2]]};
    if (orient2d(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]) <= 0.0) {
      throw NumericalError("triangulation produced a degenerate triangle");
    }
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

DualWeights dual_cells(const Mesh& mesh) {
  const std::size_t n = mesh.num_nodes();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      adj[t[i]].push_back(t[(i + 1) % 3]);
      adj[t[i]].push_back(t[(i + 2) % 3]);
    }
  }
  DualWeights out;
  out.weights.assign(n, 0.0);
  std::vector<Point> poly, scratch;
  for (std::size_t v = 0; v < n; ++v) {
    auto& nb = adj[v];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    const Point o = mesh.nodes[v];
    // Work in coordinates relative to the node for accuracy.
    const Rect& h = mesh.hull;
    poly = {{h.xmin - o.x, h.ymin - o.y},
            {h.xmax - o.x, h.ymin - o.y},
            {h.xmax - o.x, h.ymax - o.y},
            {h.xmin - o.x, h.ymax - o.y}};
    for (std::size_t u : nb) {
      const Point q = mesh.nodes[u] - o;
      clip(poly, q, 0.5 * dot(q, q), scratch);
      if (poly.empty()) break;
    }
    out.weights[v] = poly.size() >= 3 ? polygon_area(poly) : 0.0;
  }
  return out;
}

Mesh regular_mesh(const Rect& box, std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) throw InputError("regular mesh needs at least one cell per axis");
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) throw InputError("regular mesh box is empty");
  Mesh mesh;
  mesh.hull = box;
  const double hx = box.width() / static_cast<double>(nx);
  const double hy = box.height() / static_cast<double>(ny);
  mesh.nodes.reserve((nx + 1) * (ny + 1));
  for (std::size_t j = 0; j <= ny; ++j)
    for (std::size_t i = 0; i <= nx; ++i)
      mesh.nodes.push_back({i == nx ? box.xmax : box.xmin + static_cast<double>(i) * hx,
                            j == ny ? box.ymax : box.ymin + static_cast<double>(j) * hy});
  const auto id = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  mesh.triangles.reserve(2 * nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return mesh;
}

FemMatrices fem_matrices(const Mesh& mesh) {
  const std::size_t n = mesh.num_nodes();
  FemMatrices fem;
  fem.c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(9 * mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    if (!(area > 0.0)) {
      throw InputError("degenerate triangle " + std::to_string(t) + " in FEM assembly");
    }
    Point e[3];
    for (int i = 0; i < 3; ++i) {
      e[i] = mesh.nodes[tri[(i + 2) % 3]] - mesh.nodes[tri[(i + 1) % 3]];
    }
    for (int i = 0; i < 3; ++i) {
      fem.c[static_cast<Eigen::Index>(tri[i])] += area / 3.0;
      for (int j = 0; j < 3; ++j) {
        triplets.emplace_back(static_cast<int>(tri[i]), static_cast<int>(tri[j]),
                              dot(e[i], e[j]) / (4.0 * area));
      }
    }
  }
  fem.g.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  fem.g.setFromTriplets(triplets.begin(), triplets.end());
  fem.g.makeCompressed();
  return fem;
}

TriangleLocator::TriangleLocator(const Mesh& mesh) : mesh_(&mesh) {
  box_ = bounding_box(mesh.nodes);
  const double ntri = std::max<double>(1.0, static_cast<double>(mesh.triangles.size()));
  const double cell = std::sqrt(std::max(box_.area(), 1e-30) / ntri) * 1.5;
  nx_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(box_.width() / cell)));
  ny_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(box_.height() / cell)));
  nx_ = std::min<std::size_t>(nx_, 4096);
  ny_ = std::min<std::size_t>(ny_, 4096);
  buckets_.resize(nx_ * ny_);
  auto ix = [&](double x) {
    const double u = (x - box_.xmin) / std::max(box_.width(), 1e-300) * static_cast<double>(nx_);
    return std::min(nx_ - 1, static_cast<std::size_t>(std::max(0.0, std::floor(u))));
  };
  auto iy = [&](double y) {
    const double u = (y - box_.ymin) / std::max(box_.height(), 1e-300) * static_cast<double>(ny_);
    return std::min(ny_ - 1, static_cast<std::size_t>(std::max(0.0, std::floor(u))));
  };
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point pts[3] = {mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]};
    const Rect b = bounding_box(pts);
    for (std::size_t j = iy(b.ymin); j <= iy(b.ymax); ++j) {
      for (std::size_t i = ix(b.xmin); i <= ix(b.xmax); ++i) buckets_[j * nx_ + i].push_back(t);
    }
  }
}

TriangleLocator::Hit TriangleLocator::locate(Point p) const {
  const double slack = 1e-12 * (1.0 + box_.diagonal() + std::abs(box_.xmin) + std::abs(box_.ymin));
  if (!box_.contains(p, slack)) {
    std::ostringstream msg;
    msg << "point (" << p.x << ", " << p.y << ") lies outside the mesh";
    throw DomainError(msg.str());
  }
  const double u = (p.x - box_.xmin) / std::max(box_.width(), 1e-300) * static_cast<double>(nx_);
  const double v = (p.y - box_.ymin) / std::max(box_.height(), 1e-300) * static_cast<double>(ny_);
  const auto i = std::min(nx_ - 1, static_cast<std::size_t>(std::max(0.0, std::floor(u))));
  const auto j = std::min(ny_ - 1, static_cast<std::size_t>(std::max(0.0, std::floor(v))));

  std::optional<Hit> best;
  double best_min = -std::numeric_limits<double>::infinity();
  for (std::size_t t : buckets_[j * nx_ + i]) {
    const auto& tri = mesh_->triangles[t];
    const Point a = mesh_->nodes[tri[0]], b = mesh_->nodes[tri[1]], c = mesh_->nodes[tri[2]];
    const double area2 = orient2d(a, b, c);
    const std::array<double, 3> bary = {orient2d(p, b, c) / area2, orient2d(a, p, c) / area2,
                                        orient2d(a, b, p) / area2};
    const double lo = std::min({bary[0], bary[1], bary[2]});
    if (lo > best_min) {
      best_min = lo;
      best = Hit{t, bary};
      if (lo >= 0.0) break;
    }
  }
  if (!best || best_min < -1e-9) {
    std::ostringstream msg;
    msg << "point (" << p.x << ", " << p.y << ") lies outside the mesh";
    throw DomainError(msg.str());
  }
  auto& w = best->barycentric;
  double sum = 0.0;
  for (double& x : w) {
    x = std::max(0.0, x);
    sum += x;
  }
  for (double& x : w) x /= sum;
  return *best;
}

SparseMatrix projector(const Mesh& mesh, std::span<const Point> points) {
  TriangleLocator locator(mesh);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(3 * points.size());
  for (std::size_t r = 0; r < points.size(); ++r) {
    const auto hit = locator.locate(points[r]);
    const auto& tri = mesh.triangles[hit.triangle];
    for (int k = 0; k < 3; ++k) {
      if (hit.barycentric[k] != 0.0) {
        triplets.emplace_back(static_cast<int>(r), static_cast<int>(tri[k]), hit.barycentric[k]);
      }
    }
  }
  SparseMatrix a(static_cast<Eigen::Index>(points.size()),
                 static_cast<Eigen::Index>(mesh.num_nodes()));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

SurveyMesh build_survey_mesh(const Survey& survey, const MeshOptions& options) {
  if (survey.size() == 0) throw InputError("cannot build a mesh for an empty survey");
  PhotoNodes seeds = build_photo_nodes(survey);
  SurveyMesh out;
  out.region = build_region(survey, options.half_width);

  Rect box = bounding_box(seeds.nodes);
  const Rect rbox = out.region.bounding_box();
  box = {std::min(box.xmin, rbox.xmin), std::min(box.ymin, rbox.ymin),
         std::max(box.xmax, rbox.xmax), std::max(box.ymax, rbox.ymax)};
  const double margin = options.margin_fraction * box.diagonal();
  const Rect hull{box.xmin - margin, box.ymin - margin, box.xmax + margin, box.ymax + margin};

  std::vector<double> heights;
  double max_diag = 0.0;
  for (const auto& p : survey.photos()) {
    heights.push_back(p.height);
    max_diag = std::max(max_diag, std::hypot(p.width, p.height));
  }
  const double h = median(heights);
  TriangulateOptions topt;
  topt.max_edge_inner = options.max_edge_inner > 0.0 ? options.max_edge_inner : 2.0 * h;
  topt.max_edge_outer = options.max_edge_outer > 0.0 ? options.max_edge_outer : 10.0 * h;
  if (topt.max_edge_outer < topt.max_edge_inner) topt.max_edge_outer = topt.max_edge_inner;
  const Region& region = out.region;
  topt.inner = [&region](Point p) { return region.contains(p); };

  // A Steiner point farther than a photo's full diagonal from its centre
  // cannot cut into that photo's Voronoi cell.
  PointGrid centres(std::max(max_diag, 1e-6));
  for (std::size_t i = 0; i < survey.size(); ++i) centres.add(survey.photo(i).center, i);
  topt.allow_steiner = [&](Point m) {
    bool blocked = false;
    centres.visit_near(m, [&](Point c, std::size_t i) {
      const Photo& p = survey.photo(i);
      if (distance(m, c) < std::hypot(p.width, p.height)) blocked = true;
      return blocked;
    });
    return !blocked;
  };

  out.mesh = triangulate(seeds.nodes, hull, topt);
  out.photo_nodes = seeds.photo_node;
  for (std::size_t i = 0; i < survey.size(); ++i) {
    out.mesh.photo_node[survey.photo(i).id] = seeds.photo_node[i];
  }
  out.dual = dual_cells(out.mesh);
  out.fem = fem_matrices(out.mesh);
  return out;
}

void write_mesh_dump(std::ostream& out, const Mesh& mesh, const DualWeights& dual) {
  out << std::setprecision(17);
  out << "NODES " << mesh.nodes.size() << '\n';
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    out << i << ' ' << mesh.nodes[i].x << ' ' << mesh.nodes[i].y << '\n';
  }
  out << "TRIANGLES " << mesh.triangles.size() << '\n';
  for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "WEIGHTS " << dual.weights.size() << '\n';
  for (std::size_t i = 0; i < dual.weights.size(); ++i) out << i << ' ' << dual.weights[i] << '\n';
}

}  // namespace abundance
