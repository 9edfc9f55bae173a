#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softnet/autodiff.hpp"
#include "softnet/matrix.hpp"
#include "softnet/rng.hpp"

namespace softnet {

enum class MaskMode { dense, hard, soft };

std::string to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view text);

/// One affine layer with a learnable score per weight entry.
struct MaskedLayer {
  Matrix weight;  // fan_in x fan_out
  Matrix bias;    // 1 x fan_out, never masked
  Matrix score;   // same shape as weight
  double capacity = 1.0;
};

/// Binary major part plus uniform minor part on the complement.
struct LayerMask {
  Matrix major;
  Matrix minor;

  /// major ⊕ minor; validates support disjointness.
  Matrix composed() const;
};

/// floor(capacity · entries), tolerant to the representation error of
/// decimal capacities such as 0.29.
std::size_t major_count(std::size_t entries, double capacity);

/// Ones at the floor(c·n) largest scores; ties at the threshold go to the
/// lowest flat index.
Matrix select_major_mask(const Matrix& scores, double capacity);

/// Zero on the major support, independent U[0,1) draws elsewhere.
Matrix sample_minor_mask(const Matrix& major, Rng& rng);

Matrix compose_soft_mask(const Matrix& major, const Matrix& minor);

/// Tape handles for one recorded forward pass.
struct ForwardPass {
  Var logits;
  Var embedding;
  std::vector<Var> weights;
  std::vector<Var> biases;
  /// θ ⊙ m per layer; aliases `weights` in dense mode.
  std::vector<Var> masked_weights;
};

/// Fully connected ReLU network whose weights are gated by per-layer masks
/// selected from learnable scores.
class MaskedMlp {
 public:
  MaskedMlp() = default;
  MaskedMlp(std::vector<MaskedLayer> layers, MaskMode mode);

  /// Kaiming-normal weights, zero biases, U[0,1) scores. `widths` lists
  /// input, hidden..., output.
  static MaskedMlp initialize(std::span<const std::size_t> widths, double capacity, MaskMode mode,
                              std::uint64_t seed);

  std::size_t layer_count() const noexcept { return layers_.size(); }
  const std::vector<MaskedLayer>& layers() const noexcept { return layers_; }
  MaskedLayer& layer(std::size_t i) { return layers_.at(i); }
  const MaskedLayer& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t input_width() const;
  std::size_t output_width() const;
  /// Width of the penultimate activations.
  std::size_t embedding_width() const;

  MaskMode mode() const noexcept { return mode_; }
  void set_mode(MaskMode mode) noexcept { mode_ = mode; }

  const std::vector<LayerMask>& masks() const noexcept { return masks_; }
  bool frozen() const noexcept { return freeze_seed_.has_value(); }
  std::optional<std::uint64_t> freeze_seed() const noexcept { return freeze_seed_; }

  /// Re-rank the major masks from the current scores and, in soft mode,
  /// draw fresh minor values. Refused once frozen.
  void refresh_masks(Rng& minor_rng);

  /// Final major/minor masks from the current scores and one minor draw
  /// seeded by `seed`. Hard mode keeps an all-zero minor part.
  const std::vector<LayerMask>& freeze_mask(std::uint64_t seed);

  /// Install frozen masks verbatim (checkpoint restore).
  void restore_frozen_masks(std::vector<LayerMask> masks, std::uint64_t seed);

  /// Zero every minor value of the frozen masks.
  void clear_minor();

  /// Mask applied to layer i's weights in the current mode.
  Matrix effective_mask(std::size_t i) const;

  ForwardPass forward(Tape& tape, const Matrix& input) const;
  Matrix logits(const Matrix& input) const;
  Matrix embed(const Matrix& input) const;

 private:
  void check_layer_shapes() const;

  std::vector<MaskedLayer> layers_;
  std::vector<LayerMask> masks_;
  MaskMode mode_ = MaskMode::soft;
  std::optional<std::uint64_t> freeze_seed_;
};

}  // namespace softnet
