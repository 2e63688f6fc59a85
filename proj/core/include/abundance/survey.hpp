#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abundance/geometry.hpp"

namespace abundance {

/// One aerial photo: a rectangle with per-species counts. Transects run
/// parallel to the x axis, so `width` is the along-transect extent and
/// `height` the cross-transect extent.
struct Photo {
  std::string id;
  std::string transect_id;
  Point center;
  double width = 0.0;
  double height = 0.0;
  std::map<std::string, std::int64_t> counts;

  double area() const { return width * height; }
  Rect footprint() const {
    return {center.x - 0.5 * width, center.y - 0.5 * height, center.x + 0.5 * width,
            center.y + 0.5 * height};
  }
  /// Count for `species`; throws InputError if the photo has no such column.
  std::int64_t count(const std::string& species) const;
};

struct Transect {
  std::string id;
  /// Indices into Survey::photos(), sorted along the transect (increasing x).
  std::vector<std::size_t> members;
};

/// Photos grouped into transects. Immutable after construction.
class Survey {
 public:
  Survey() = default;
  /// Validates the photo set and derives transects in order of first appearance.
  explicit Survey(std::vector<Photo> photos);

  std::span<const Photo> photos() const { return photos_; }
  std::span<const Transect> transects() const { return transects_; }
  std::size_t size() const { return photos_.size(); }
  const Photo& photo(std::size_t i) const { return photos_.at(i); }
  std::vector<std::string> species() const;

  /// Counts for one species in photo order.
  std::vector<std::int64_t> counts(const std::string& species) const;

  /// Survey restricted to the given photo indices (kept in original order).
  Survey subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<Photo> photos_;
  std::vector<Transect> transects_;
};

/// `species` itself if nonempty; otherwise the only species of the survey.
/// Throws InputError when the choice is ambiguous.
std::string resolve_species(const Survey& survey, const std::string& species);

/// Reads a delimited photo table. Columns: id, transect_id, center_x_km,
/// center_y_km, width_km, height_km, then one integer column per species.
/// Comma, semicolon or tab delimiters are accepted.
Survey load_survey(const std::filesystem::path& path);
Survey parse_survey(std::istream& in, const std::string& source = "<stream>");
void write_survey(std::ostream& out, const Survey& survey);

/// Node-based covariate grid; node (i, j) sits at (x0 + i*dx, y0 + j*dy), row
/// j = 0 being the southernmost.
class CovariateRaster {
 public:
  CovariateRaster() = default;
  CovariateRaster(Point origin, double dx, double dy, std::size_t nx, std::size_t ny,
                  std::vector<double> values);

  Point origin() const { return origin_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  double value(std::size_t i, std::size_t j) const { return values_[j * nx_ + i]; }
  Rect bounds() const;

 private:
  Point origin_;
  double dx_ = 1.0;
  double dy_ = 1.0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<double> values_;
};

CovariateRaster load_raster(const std::filesystem::path& path);
CovariateRaster parse_raster(std::istream& in, const std::string& source = "<stream>");
void write_raster(std::ostream& out, const CovariateRaster& raster);

/// Bilinear interpolation; throws DomainError outside the raster bounds.
double covariate_at(const CovariateRaster& raster, Point p);
/// As covariate_at, but points outside the bounds take the value at the
/// nearest point of the raster.
double covariate_at_clamped(const CovariateRaster& raster, Point p);

/// Union of per-transect bands.
struct Region {
  std::vector<Rect> bands;
  double area = 0.0;

  bool contains(Point p) const;
  Rect bounding_box() const;
};

/// 1.5 nautical miles, the band half-width used around each transect.
inline constexpr double kDefaultHalfWidthKm = 2.778;

Region build_region(const Survey& survey, double half_width = kDefaultHalfWidthKm);
void write_region(std::ostream& out, const Region& region);

}  // namespace abundance
