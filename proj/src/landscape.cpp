#include "softnet/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "softnet/error.hpp"
#include "softnet/io.hpp"
#include "softnet/rng.hpp"

namespace softnet {

std::vector<double> radius_grid(double radius, std::size_t steps) {
  if (!(radius >= 0.0)) fail(ErrorKind::config, "probe radius must be non-negative");
  if (steps < 1) fail(ErrorKind::config, "probe grid needs at least one step");
  if (steps == 1) return {0.0};
  std::vector<double> grid(steps);
  const double half = static_cast<double>(steps - 1) / 2.0;
  for (std::size_t i = 0; i < steps; ++i) {
    // computed from the offset to the center so the grid is exactly symmetric
    const double offset = static_cast<double>(i) - half;
    grid[i] = radius * offset / half;
  }
  return grid;
}

std::vector<Direction> probe_directions(const MaskedMlp& net, std::size_t count, std::uint64_t seed) {
  if (count < 1) fail(ErrorKind::config, "at least one probe direction is required");
  Rng rng = make_rng(seed, RngStream::directions);
  std::vector<Matrix> live;
  std::vector<double> target_norm;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Matrix mask = net.effective_mask(l);
    const Matrix& w = net.layer(l).weight;
    double norm = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = mask[i] != 0.0 ? 1.0 : 0.0;
      norm += mask[i] * w[i] * w[i];
    }
    live.push_back(std::move(mask));
    target_norm.push_back(std::sqrt(norm));
  }
  std::vector<Direction> out;
  for (std::size_t d = 0; d < count; ++d) {
    Direction dir;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      Matrix m(live[l].rows(), live[l].cols());
      double norm = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = rng.normal();
        if (live[l][i] != 0.0) {
          m[i] = g;
          norm += g * g;
        }
      }
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (double& v : m.data()) v *= target_norm[l] / norm;
      }
      dir.layers.push_back(std::move(m));
    }
    out.push_back(std::move(dir));
  }
  return out;
}

std::vector<double> slice_along(std::vector<Matrix>& params, const Direction& direction,
                                std::span<const double> radii,
                                const std::function<double(const std::vector<Matrix>&)>& loss) {
  if (direction.layers.size() != params.size()) {
    fail(ErrorKind::shape, "direction has " + std::to_string(direction.layers.size()) + " layers, parameters " +
                               std::to_string(params.size()));
  }
  for (std::size_t l = 0; l < params.size(); ++l) {
    require_same_shape(params[l], direction.layers[l], "probe direction");
  }
  const std::vector<Matrix> original = params;
  std::vector<double> out;
  out.reserve(radii.size());
  for (double rho : radii) {
    for (std::size_t l = 0; l < params.size(); ++l) {
      for (std::size_t i = 0; i < params[l].size(); ++i) {
        params[l][i] = original[l][i] + rho * direction.layers[l][i];
      }
    }
    out.push_back(loss(params));
    params = original;
  }
  return out;
}

double classification_loss(const MaskedMlp& net, const LabeledSet& data) {
  Tape tape;
  ForwardPass pass = net.forward(tape, data.features);
  return tape.value(tape.softmax_cross_entropy(pass.logits, data.labels))[0];
}

std::vector<double> slice_loss(MaskedMlp& net, const Direction& direction,
                               std::span<const double> radii, const LabeledSet& data) {
  std::vector<Matrix> params;
  for (const auto& l : net.layers()) params.push_back(l.weight);
  auto loss = [&](const std::vector<Matrix>& weights) {
    for (std::size_t l = 0; l < weights.size(); ++l) net.layer(l).weight = weights[l];
    return classification_loss(net, data);
  };
  std::vector<double> out = slice_along(params, direction, radii, loss);
  for (std::size_t l = 0; l < params.size(); ++l) net.layer(l).weight = params[l];
  return out;
}

LandscapeSlice probe_landscape(MaskedMlp& net, std::span<const Direction> directions,
                               std::span<const double> radii, const LabeledSet& data) {
  LandscapeSlice slice;
  slice.mode = to_string(net.mode());
  slice.radii.assign(radii.begin(), radii.end());
  slice.center_loss = classification_loss(net, data);
  for (const auto& d : directions) slice.losses.push_back(slice_loss(net, d, radii, data));
  return slice;
}

double flatness_score(const LandscapeSlice& slice) {
  if (slice.losses.empty()) return 0.0;
  double total = 0.0;
  for (const auto& row : slice.losses) {
    if (row.empty()) fail(ErrorKind::shape, "empty slice row");
    total += *std::max_element(row.begin(), row.end()) - slice.center_loss;
  }
  return total / static_cast<double>(slice.losses.size());
}

std::string slice_csv(std::span<const LandscapeSlice> slices) {
  std::ostringstream out;
  out << "mode,direction,radius,loss\n";
  for (const auto& s : slices) {
    for (std::size_t d = 0; d < s.losses.size(); ++d) {
      for (std::size_t r = 0; r < s.radii.size(); ++r) {
        out << s.mode << ',' << d << ',' << format_double(s.radii[r]) << ','
            << format_double(s.losses[d][r]) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace softnet
