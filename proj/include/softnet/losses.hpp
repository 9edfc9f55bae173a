#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "softnet/autodiff.hpp"
#include "softnet/masked_network.hpp"
#include "softnet/matrix.hpp"

namespace softnet {

/// Feature rows with one class label per row.
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  friend bool operator==(const LabeledSet&, const LabeledSet&) = default;
};

/// Row-wise concatenation; feature widths must agree.
LabeledSet concat(const LabeledSet& a, const LabeledSet& b);

/// Mean embedding of one class.
struct Prototype {
  int class_id = 0;
  std::vector<double> vector;
  std::size_t sample_count = 0;
};

/// 1 − cos(u, v), in [0, 2].
double cosine_distance(std::span<const double> u, std::span<const double> v);
double euclidean_distance(std::span<const double> u, std::span<const double> v);

/// Prototype rows in the given order, as a constant matrix.
Matrix stack_prototypes(std::span<const Prototype> prototypes);

/// Records the cosine prototype loss on the tape: mean over rows of
/// −log softmax(−d(p_o, e))[label]. Prototypes are constants.
Var prototype_metric_loss(Tape& tape, Var embeddings, std::span<const int> labels,
                          std::span<const Prototype> prototypes);

/// Value of the prototype loss for `batch` under `net`.
double prototype_metric_loss(const LabeledSet& batch, const MaskedMlp& net,
                             std::span<const Prototype> prototypes);

/// Embedding mean of `examples` (all rows belong to `class_id`).
Prototype compute_prototype(const Matrix& examples, int class_id, const MaskedMlp& net);

}  // namespace softnet
