#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "softnet/losses.hpp"
#include "softnet/masked_network.hpp"

namespace softnet {

/// One perturbation per layer weight matrix. Biases are not perturbed.
struct Direction {
  std::vector<Matrix> layers;
};

struct LandscapeSlice {
  std::string mode;
  std::vector<double> radii;
  std::vector<std::vector<double>> losses;  // [direction][radius]
  double center_loss = 0.0;
};

/// `steps` radii evenly spaced over [-radius, radius]; symmetric, and
/// always containing 0 exactly when steps is odd.
std::vector<double> radius_grid(double radius, std::size_t steps);

/// Random Gaussian directions restricted to live weights (effective mask
/// nonzero), each layer rescaled to the norm of that layer's live weights.
std::vector<Direction> probe_directions(const MaskedMlp& net, std::size_t count, std::uint64_t seed);

/// Loss of `params + ρ·direction` for each ρ. `params` is restored
/// before returning.
std::vector<double> slice_along(std::vector<Matrix>& params, const Direction& direction,
                                std::span<const double> radii,
                                const std::function<double(const std::vector<Matrix>&)>& loss);

/// Mean cross-entropy of the network's logits on `data`, labels indexed as
/// the classifier's columns.
double classification_loss(const MaskedMlp& net, const LabeledSet& data);

/// One slice row: classification loss along `direction`. The network is
/// left bit-identical.
std::vector<double> slice_loss(MaskedMlp& net, const Direction& direction,
                               std::span<const double> radii, const LabeledSet& data);

LandscapeSlice probe_landscape(MaskedMlp& net, std::span<const Direction> directions,
                               std::span<const double> radii, const LabeledSet& data);

/// Mean over directions of (max loss on the grid − center loss).
double flatness_score(const LandscapeSlice& slice);

/// `mode,direction,radius,loss`
std::string slice_csv(std::span<const LandscapeSlice> slices);

}  // namespace softnet
