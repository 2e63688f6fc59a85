#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "abundance/survey.hpp"

namespace abundance::testing {

inline Photo make_photo(std::string id, std::string transect, Point c, double w, double h,
                        std::int64_t count, const std::string& species = "seal") {
  Photo p;
  p.id = std::move(id);
  p.transect_id = std::move(transect);
  p.center = c;
  p.width = w;
  p.height = h;
  p.counts[species] = count;
  return p;
}

/// `transects` rows of `per_transect` photos of w x h, separated by `gap`
/// along x, rows `spacing` apart. Counts come from `count(t, m)`.
template <class CountFn>
Survey grid_survey(std::size_t transects, std::size_t per_transect, double w, double h, double gap,
                   double spacing, CountFn&& count) {
  std::vector<Photo> photos;
  for (std::size_t t = 0; t < transects; ++t)
    for (std::size_t m = 0; m < per_transect; ++m)
      photos.push_back(make_photo("t" + std::to_string(t) + "p" + std::to_string(m), "T" + std::to_string(t),
                                  {0.5 * w + static_cast<double>(m) * (w + gap), static_cast<double>(t) * spacing},
                                  w, h, count(t, m)));
  return Survey(std::move(photos));
}

inline Survey toy_survey(std::size_t transects = 3, std::size_t per_transect = 4) {
  return grid_survey(transects, per_transect, 0.226, 0.346, 0.5, 5.6,
                     [](std::size_t t, std::size_t m) { return static_cast<std::int64_t>((3 * t + 5 * m) % 7); });
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("abundance_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace abundance::testing
