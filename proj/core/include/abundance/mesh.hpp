#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "abundance/geometry.hpp"
#include "abundance/survey.hpp"

namespace abundance {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triangle = std::array<std::size_t, 3>;

/// Triangulation of the modelling domain. Triangles are counter-clockwise.
struct Mesh {
  std::vector<Point> nodes;
  std::vector<Triangle> triangles;
  /// Photo id -> node at the photo centre.
  std::map<std::string, std::size_t> photo_node;
  Rect hull;

  std::size_t num_nodes() const { return nodes.size(); }
  double triangle_area(std::size_t t) const;
};

/// Voronoi cell areas of the mesh nodes, clipped to the hull.
struct DualWeights {
  std::vector<double> weights;
};

/// Lumped mass (diagonal, stored as a vector) and stiffness matrices of the
/// piecewise-linear finite-element space on a mesh.
struct FemMatrices {
  Eigen::VectorXd c;
  SparseMatrix g;
};

/// Seed nodes derived from the photo layout.
struct PhotoNodes {
  std::vector<Point> nodes;
  /// Index into `nodes` of each photo centre, in survey photo order.
  std::vector<std::size_t> photo_node;
};

/// Node at every photo centre and at centre +/- (0, height). The first and
/// last photo of each contiguous run along a transect also gets a node at
/// centre -/+ (width, 0) on its outer side. Positions closer than 1e-9 km are
/// merged.
PhotoNodes build_photo_nodes(const Survey& survey);

/// Returns true where the finer edge bound applies.
using InnerPredicate = std::function<bool(Point)>;
/// Returns false where Steiner points must not be inserted.
using SteinerFilter = std::function<bool(Point)>;

struct TriangulateOptions {
  double max_edge_inner = 0.0;  ///< <= 0 disables refinement inside
  double max_edge_outer = 0.0;  ///< <= 0 disables refinement outside
  InnerPredicate inner;         ///< empty: everything is "outer"
  SteinerFilter allow_steiner;  ///< empty: every Steiner point is allowed
  std::size_t max_nodes = 2'000'000;
};

/// Delaunay triangulation of the hull rectangle containing all seeds as
/// vertices (node i is seed i), refined by longest-edge bisection with
/// Delaunay restoration until edge-length bounds hold. Seeds must be distinct.
Mesh triangulate(std::span<const Point> seeds, const Rect& hull,
                 const TriangulateOptions& options = {});

/// Voronoi cell area of every node, clipped to the mesh hull.
DualWeights dual_cells(const Mesh& mesh);

/// Structured mesh of nx x ny cells over `box`, each split into two
/// triangles. Node (i, j) has index j * (nx + 1) + i.
Mesh regular_mesh(const Rect& box, std::size_t nx, std::size_t ny);

FemMatrices fem_matrices(const Mesh& mesh);

/// Finds the triangle containing a point using a bucket grid over the hull.
class TriangleLocator {
 public:
  explicit TriangleLocator(const Mesh& mesh);

  struct Hit {
    std::size_t triangle;
    std::array<double, 3> barycentric;
  };
  /// Throws DomainError if p lies outside the mesh.
  Hit locate(Point p) const;

 private:
  const Mesh* mesh_;
  Rect box_;
  std::size_t nx_ = 1;
  std::size_t ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

/// Interpolation matrix: row r holds the barycentric weights of points[r] on
/// the vertices of its containing triangle.
SparseMatrix projector(const Mesh& mesh, std::span<const Point> points);

struct MeshOptions {
  double margin_fraction = 0.3;  ///< hull margin per side, fraction of the node bbox diagonal
  double max_edge_inner = 0.0;   ///< <= 0: 2 x median photo height
  double max_edge_outer = 0.0;   ///< <= 0: 10 x median photo height
  double half_width = kDefaultHalfWidthKm;
};

/// Mesh built from a survey, with its dual weights and FEM matrices.
struct SurveyMesh {
  Mesh mesh;
  DualWeights dual;
  FemMatrices fem;
  Region region;
  /// Node of each photo centre, in survey photo order.
  std::vector<std::size_t> photo_nodes;
};

/// Photo nodes, hull with margin, refinement (finer inside the survey region)
/// with Steiner points kept out of the photo cells, then dual weights and FEM.
SurveyMesh build_survey_mesh(const Survey& survey, const MeshOptions& options = {});

/// Text dump with NODES, TRIANGLES and WEIGHTS sections.
void write_mesh_dump(std::ostream& out, const Mesh& mesh, const DualWeights& dual);

}  // namespace abundance
