#include "abundance/survey.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "abundance/error.hpp"

namespace abundance {

namespace {

constexpr const char* kRequiredColumns[] = {"id",          "transect_id", "center_x_km",
                                            "center_y_km", "width_km",    "height_km"};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

char detect_delimiter(const std::string& header) {
  for (char c : {',', ';', '\t'}) {
    if (header.find(c) != std::string::npos) return c;
  }
  return ',';
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string where(const std::string& source, std::size_t line) {
  return source + ": row " + std::to_string(line);
}

double parse_real(const std::string& text, const std::string& column, const std::string& at) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError(at + ": column '" + column + "' is not a number: '" + text + "'");
  }
  if (!std::isfinite(value)) {
    throw InputError(at + ": column '" + column + "' is not finite");
  }
  return value;
}

std::int64_t parse_count(const std::string& text, const std::string& column,
                         const std::string& at) {
  std::int64_t value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError(at + ": count column '" + column + "' is not an integer: '" + text + "'");
  }
  if (value < 0) {
    throw InputError(at + ": negative count " + std::to_string(value) + " in column '" +
                     column + "'");
  }
  return value;
}

}  // namespace

std::int64_t Photo::count(const std::string& species) const {
  auto it = counts.find(species);
  if (it == counts.end()) {
    throw InputError("photo '" + id + "' has no count column for species '" + species + "'");
  }
  return it->second;
}

Survey::Survey(std::vector<Photo> photos) : photos_(std::move(photos)) {
  std::unordered_set<std::string> seen;
  std::unordered_map<std::string, std::size_t> transect_index;
  for (std::size_t i = 0; i < photos_.size(); ++i) {
    const Photo& p = photos_[i];
    if (!seen.insert(p.id).second) throw InputError("duplicate photo id '" + p.id + "'");
    if (!(p.width > 0.0) || !(p.height > 0.0)) {
      throw InputError("photo '" + p.id + "' has non-positive dimension");
    }
    for (const auto& [species, n] : p.counts) {
      if (n < 0) throw InputError("photo '" + p.id + "' has negative count for " + species);
    }
    auto [it, inserted] = transect_index.try_emplace(p.transect_id, transects_.size());
    if (inserted) transects_.push_back({p.transect_id, {}});
    transects_[it->second].members.push_back(i);
  }
  for (auto& t : transects_) {
    std::stable_sort(t.members.begin(), t.members.end(), [&](std::size_t a, std::size_t b) {
      return photos_[a].center.x < photos_[b].center.x;
    });
    for (std::size_t k = 1; k < t.members.size(); ++k) {
      const Rect overlap = intersect(photos_[t.members[k - 1]].footprint(),
                                     photos_[t.members[k]].footprint());
      const double tol = 1e-9 * photos_[t.members[k]].area();
      if (overlap.area() > tol) {
        throw InputError("photos '" + photos_[t.members[k - 1]].id + "' and '" +
                         photos_[t.members[k]].id + "' overlap in transect '" + t.id + "'");
      }
    }
  }
}

std::vector<std::string> Survey::species() const {
  std::set<std::string> names;
  for (const auto& p : photos_) {
    for (const auto& [s, n] : p.counts) names.insert(s);
  }
  return {names.begin(), names.end()};
}

std::vector<std::int64_t> Survey::counts(const std::string& species) const {
  std::vector<std::int64_t> out;
  out.reserve(photos_.size());
  for (const auto& p : photos_) out.push_back(p.count(species));
  return out;
}

Survey Survey::subset(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Photo> kept;
  kept.reserve(sorted.size());
  for (std::size_t i : sorted) kept.push_back(photos_.at(i));
  return Survey(std::move(kept));
}

Survey parse_survey(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw InputError(source + ": empty survey file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);

  const char delim = detect_delimiter(line);
  const std::vector<std::string> header = split(line, delim);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!column.emplace(header[c], c).second) {
      throw InputError(source + ": duplicate column '" + header[c] + "'");
    }
  }
  for (const char* name : kRequiredColumns) {
    if (!column.count(name)) throw InputError(source + ": missing column '" + name + "'");
  }
  std::vector<std::pair<std::string, std::size_t>> species_columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (std::find(std::begin(kRequiredColumns), std::end(kRequiredColumns), header[c]) ==
        std::end(kRequiredColumns)) {
      species_columns.emplace_back(header[c], c);
    }
  }

  std::vector<Photo> photos;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string at = where(source, line_no);
    const auto fields = split(line, delim);
    if (fields.size() != header.size()) {
      throw InputError(at + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    Photo p;
    p.id = fields[column["id"]];
    p.transect_id = fields[column["transect_id"]];
    if (p.id.empty()) throw InputError(at + ": empty id");
    if (!ids.insert(p.id).second) throw InputError(at + ": duplicate id '" + p.id + "'");
    p.center.x = parse_real(fields[column["center_x_km"]], "center_x_km", at);
    p.center.y = parse_real(fields[column["center_y_km"]], "center_y_km", at);
    p.width = parse_real(fields[column["width_km"]], "width_km", at);
    p.height = parse_real(fields[column["height_km"]], "height_km", at);
    if (p.width <= 0.0 || p.height <= 0.0) {
      throw InputError(at + ": non-positive photo dimension");
    }
    for (const auto& [name, c] : species_columns) p.counts[name] = parse_count(fields[c], name, at);
    photos.push_back(std::move(p));
  }
  try {
    return Survey(std::move(photos));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

Survey load_survey(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open survey file '" + path.string() + "'");
  return parse_survey(in, path.string());
}

void write_survey(std::ostream& out, const Survey& survey) {
  const auto species = survey.species();
  out << "id,transect_id,center_x_km,center_y_km,width_km,height_km";
  for (const auto& s : species) out << ',' << s;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& p : survey.photos()) {
    out << p.id << ',' << p.transect_id << ',' << p.center.x << ',' << p.center.y << ','
        << p.width << ',' << p.height;
    for (const auto& s : species) out << ',' << p.count(s);
    out << '\n';
  }
}

CovariateRaster::CovariateRaster(Point origin, double dx, double dy, std::size_t nx,
                                 std::size_t ny, std::vector<double> values)
    : origin_(origin), dx_(dx), dy_(dy), nx_(nx), ny_(ny), values_(std::move(values)) {
  if (!(dx_ > 0.0) || !(dy_ > 0.0)) throw InputError("raster spacing must be positive");
  if (nx_ == 0 || ny_ == 0) throw InputError("raster must have at least one node");
  if (values_.size() != nx_ * ny_) throw InputError("raster value count does not match nx*ny");
  for (double v : values_) {
    if (!std::isfinite(v)) throw InputError("raster contains a non-finite value");
  }
}

Rect CovariateRaster::bounds() const {
  return {origin_.x, origin_.y, origin_.x + static_cast<double>(nx_ - 1) * dx_,
          origin_.y + static_cast<double>(ny_ - 1) * dy_};
}

CovariateRaster parse_raster(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw InputError(source + ": empty raster file");

  std::istringstream head(line);
  long long nx = 0, ny = 0;
  double x0 = 0, y0 = 0, dx = 0, dy = 0;
  if (!(head >> nx >> ny >> x0 >> y0 >> dx >> dy)) {
    throw InputError(source + ": header must be 'nx ny x0 y0 dx dy'");
  }
  if (nx <= 0 || ny <= 0) throw InputError(source + ": nx and ny must be positive");
  if (!(dx > 0.0) || !(dy > 0.0)) throw InputError(source + ": dx and dy must be positive");

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(nx * ny));
  for (long long j = 0; j < ny; ++j) {
    if (!next_line()) {
      throw InputError(source + ": expected " + std::to_string(ny) + " rows, got " +
                       std::to_string(j));
    }
    std::istringstream row(line);
    std::string token;
    long long count = 0;
    while (row >> token) {
      double v = 0.0;
      // std::from_chars accepts "nan"/"inf"; reject them explicitly.
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw InputError(where(source, line_no) + ": not a number: '" + token + "'");
      }
      if (!std::isfinite(v)) {
        throw InputError(where(source, line_no) + ": non-finite value '" + token + "'");
      }
      values.push_back(v);
      ++count;
    }
    if (count != nx) {
      throw InputError(where(source, line_no) + ": expected " + std::to_string(nx) +
                       " values, got " + std::to_string(count));
    }
  }
  if (next_line()) throw InputError(where(source, line_no) + ": unexpected extra row");
  return CovariateRaster({x0, y0}, dx, dy, static_cast<std::size_t>(nx),
                         static_cast<std::size_t>(ny), std::move(values));
}

CovariateRaster load_raster(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open raster file '" + path.string() + "'");
  return parse_raster(in, path.string());
}

void write_raster(std::ostream& out, const CovariateRaster& raster) {
  out << std::setprecision(17);
  out << raster.nx() << ' ' << raster.ny() << ' ' << raster.origin().x << ' '
      << raster.origin().y << ' ' << raster.dx() << ' ' << raster.dy() << '\n';
  for (std::size_t j = 0; j < raster.ny(); ++j) {
    for (std::size_t i = 0; i < raster.nx(); ++i) {
      if (i) out << ' ';
      out << raster.value(i, j);
    }
    out << '\n';
  }
}

namespace {

double bilinear(const CovariateRaster& r, Point p) {
  const double u = (p.x - r.origin().x) / r.dx();
  const double v = (p.y - r.origin().y) / r.dy();
  const auto max_i = static_cast<double>(r.nx() - 1);
  const auto max_j = static_cast<double>(r.ny() - 1);
  // Cell index; the last row/column uses the cell below so that nodes on the
  // upper boundary still interpolate.
  const double fi = std::min(std::floor(u), std::max(0.0, max_i - 1.0));
  const double fj = std::min(std::floor(v), std::max(0.0, max_j - 1.0));
  const auto i = static_cast<std::size_t>(std::max(0.0, fi));
  const auto j = static_cast<std::size_t>(std::max(0.0, fj));
  const std::size_t i1 = std::min(i + 1, r.nx() - 1);
  const std::size_t j1 = std::min(j + 1, r.ny() - 1);
  const double tx = r.nx() > 1 ? u - static_cast<double>(i) : 0.0;
  const double ty = r.ny() > 1 ? v - static_cast<double>(j) : 0.0;
  return (1 - tx) * (1 - ty) * r.value(i, j) + tx * (1 - ty) * r.value(i1, j) +
         (1 - tx) * ty * r.value(i, j1) + tx * ty * r.value(i1, j1);
}

}  // namespace

double covariate_at(const CovariateRaster& raster, Point p) {
  const Rect b = raster.bounds();
  const double slack = 1e-12 * (1.0 + std::abs(b.xmax) + std::abs(b.ymax));
  if (!b.contains(p, slack)) {
    std::ostringstream msg;
    msg << "point (" << p.x << ", " << p.y << ") lies outside the covariate raster";
    throw DomainError(msg.str());
  }
  return bilinear(raster, {std::clamp(p.x, b.xmin, b.xmax), std::clamp(p.y, b.ymin, b.ymax)});
}

double covariate_at_clamped(const CovariateRaster& raster, Point p) {
  const Rect b = raster.bounds();
  return bilinear(raster, {std::clamp(p.x, b.xmin, b.xmax), std::clamp(p.y, b.ymin, b.ymax)});
}

bool Region::contains(Point p) const {
  return std::any_of(bands.begin(), bands.end(), [&](const Rect& r) { return r.contains(p); });
}

Rect Region::bounding_box() const {
  if (bands.empty()) return {};
  Rect box = bands.front();
  for (const auto& r : bands) {
    box.xmin = std::min(box.xmin, r.xmin);
    box.ymin = std::min(box.ymin, r.ymin);
    box.xmax = std::max(box.xmax, r.xmax);
    box.ymax = std::max(box.ymax, r.ymax);
  }
  return box;
}

Region build_region(const Survey& survey, double half_width) {
  if (!(half_width > 0.0)) throw InputError("region half-width must be positive");
  Region region;
  for (const auto& t : survey.transects()) {
    if (t.members.empty()) throw InputError("transect '" + t.id + "' has no photos");
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -std::numeric_limits<double>::infinity();
    double ysum = 0.0;
    for (std::size_t i : t.members) {
      const Rect f = survey.photo(i).footprint();
      xmin = std::min(xmin, f.xmin);
      xmax = std::max(xmax, f.xmax);
      ysum += survey.photo(i).center.y;
    }
    const double yc = ysum / static_cast<double>(t.members.size());
    region.bands.push_back({xmin, yc - half_width, xmax, yc + half_width});
  }
  if (region.bands.empty()) throw InputError("survey has no transects");
  region.area = union_area(region.bands);
  return region;
}

void write_region(std::ostream& out, const Region& region) {
  out << std::setprecision(17);
  for (const auto& b : region.bands) {
    out << b.xmin << ' ' << b.ymin << ' ' << b.xmax << ' ' << b.ymax << '\n';
  }
}

std::string resolve_species(const Survey& survey, const std::string& species) {
  if (!species.empty()) return species;
  const auto all = survey.species();
  if (all.size() != 1) throw InputError("--species is required when the survey does not have exactly one species");
  return all.front();
}

}  // namespace abundance
