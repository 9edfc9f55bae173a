#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "softnet/matrix.hpp"

namespace softnet {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// Adjoints produced by one backward pass, indexed by tape node.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix> adjoints) : adjoints_(std::move(adjoints)) {}

  const Matrix& of(Var v) const;
  std::size_t size() const noexcept { return adjoints_.size(); }

 private:
  std::vector<Matrix> adjoints_;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order; backward replays them in exact reverse order. Not thread-safe.
class Tape {
 public:
  Var constant(Matrix value);
  Var parameter(Matrix value);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool is_parameter(Var v) const { return nodes_.at(v.id).parameter; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// input · weight + bias, bias broadcast over rows.
  Var affine(Var input, Var weight, Var bias);
  Var mul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var sum(Var a);
  Var sum_squares(Var a);

  /// Mean over rows of -log softmax(logits)[label].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  /// d[b][k] = 1 - cos(row b of embeddings, row k of references). The
  /// references are constants; only embeddings receive gradient.
  Var cosine_distances(Var embeddings, const Matrix& references);

  /// Backward pass from a 1x1 root. Adjoints are zeroed first.
  Gradients backward(Var root);

 private:
  using Backprop =
      std::function<void(const Tape& tape, std::vector<Matrix>& adjoints, std::size_t self)>;

  struct Node {
    Matrix value;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    bool parameter = false;
  };

  Var push(Matrix value, std::vector<std::size_t> inputs, Backprop backprop);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

/// params − lr·(grads ⊙ mask). Entries where mask is exactly 0 are copied
/// through untouched.
Matrix sgd_step(const Matrix& params, const Matrix& grads, double lr,
                const std::optional<Matrix>& mask = std::nullopt);

/// In-place variant of sgd_step.
void sgd_update(Matrix& params, const Matrix& grads, double lr,
                const std::optional<Matrix>& mask = std::nullopt);

}  // namespace softnet
