#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "softnet/losses.hpp"

namespace softnet {

/// Examples plus the label strings; class index i names class_names[i].
struct LabeledData {
  std::vector<std::string> class_names;
  LabeledSet set;
};

/// `label,<f0>,<f1>,...` with a header row. Labels map to dense indices in
/// first-seen order.
LabeledData parse_csv(std::istream& in);
LabeledData read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const LabeledData& data);
/// Written to a temporary sibling, then renamed into place.
void write_csv_file(const std::filesystem::path& path, const LabeledData& data);

/// Isotropic Gaussian blobs.
struct BlobSpec {
  std::size_t classes = 10;
  std::size_t dim = 8;
  std::size_t per_class = 140;
  double radius = 6.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
};

void validate(const BlobSpec& spec);

/// Class centers at distance `radius` from the origin. Half of each
/// center's energy sits on a ring in the first two coordinates, so any two
/// centers are at least √2 · radius · sin(π / classes) apart.
std::vector<std::vector<double>> blob_centers(const BlobSpec& spec);

/// Rows grouped by class, class k named "class<k>".
LabeledData generate_blobs(const BlobSpec& spec);

/// Empirical per-class feature means.
std::vector<std::vector<double>> class_means(const LabeledData& data);
double min_pairwise_distance(const std::vector<std::vector<double>>& points);

}  // namespace softnet
