#include "softnet/masked_network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "softnet/error.hpp"

namespace softnet {

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::dense: return "dense";
    case MaskMode::hard: return "hard";
    case MaskMode::soft: return "soft";
  }
  return "soft";
}

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "dense") return MaskMode::dense;
  if (text == "hard") return MaskMode::hard;
  if (text == "soft") return MaskMode::soft;
  fail(ErrorKind::config, "unknown mask mode '" + std::string(text) + "'");
}

Matrix LayerMask::composed() const { return compose_soft_mask(major, minor); }

std::size_t major_count(std::size_t entries, double capacity) {
  if (!(capacity > 0.0 && capacity <= 1.0)) {
    fail(ErrorKind::config, "capacity must lie in (0, 1], got " + std::to_string(capacity));
  }
  const double exact = capacity * static_cast<double>(entries);
  auto k = static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
  return std::min(k, entries);
}

Matrix select_major_mask(const Matrix& scores, double capacity) {
  const std::size_t n = scores.size();
  const std::size_t k = major_count(n, capacity);
  if (k == 0) {
    fail(ErrorKind::config, "capacity too small for layer: floor(" + std::to_string(capacity) +
                                " x " + std::to_string(n) + ") = 0");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Matrix mask(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1.0;
  return mask;
}

Matrix sample_minor_mask(const Matrix& major, Rng& rng) {
  Matrix minor(major.rows(), major.cols());
  for (std::size_t i = 0; i < major.size(); ++i) {
    if (major[i] != 0.0 && major[i] != 1.0) {
      fail(ErrorKind::invariant, "major mask must be binary");
    }
    if (major[i] == 0.0) minor[i] = rng.uniform();
  }
  return minor;
}

Matrix compose_soft_mask(const Matrix& major, const Matrix& minor) {
  require_same_shape(major, minor, "compose_soft_mask");
  Matrix out(major.rows(), major.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (major[i] != 0.0 && minor[i] != 0.0) {
      fail(ErrorKind::invariant, "major and minor supports overlap at flat index " +
                                     std::to_string(i));
    }
    out[i] = major[i] + minor[i];
  }
  return out;
}

MaskedMlp::MaskedMlp(std::vector<MaskedLayer> layers, MaskMode mode)
    : layers_(std::move(layers)), mode_(mode) {
  check_layer_shapes();
  masks_.reserve(layers_.size());
  for (const auto& l : layers_) {
    Matrix major = select_major_mask(l.score, l.capacity);
    Matrix minor(major.rows(), major.cols());
    masks_.push_back(LayerMask{std::move(major), std::move(minor)});
  }
}

MaskedMlp MaskedMlp::initialize(std::span<const std::size_t> widths, double capacity,
                                MaskMode mode, std::uint64_t seed) {
  if (widths.size() < 2) fail(ErrorKind::config, "network needs at least input and output widths");
  Rng weight_rng = make_rng(seed, RngStream::weights);
  Rng score_rng = make_rng(seed, RngStream::scores);
  std::vector<MaskedLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i], fan_out = widths[i + 1];
    if (fan_in == 0 || fan_out == 0) fail(ErrorKind::config, "layer widths must be positive");
    MaskedLayer layer{Matrix(fan_in, fan_out), Matrix(1, fan_out), Matrix(fan_in, fan_out), capacity};
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& w : layer.weight.data()) w = stddev * weight_rng.normal();
    for (double& s : layer.score.data()) s = score_rng.uniform();
    layers.push_back(std::move(layer));
  }
  return MaskedMlp(std::move(layers), mode);
}

void MaskedMlp::check_layer_shapes() const {
  if (layers_.empty()) fail(ErrorKind::config, "network has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    require_same_shape(l.weight, l.score, "layer score");
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      fail(ErrorKind::shape, "layer " + std::to_string(i) + " bias " + l.bias.shape_string() +
                                 " does not match weight " + l.weight.shape_string());
    }
    if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
      fail(ErrorKind::shape, "layer " + std::to_string(i) + " input width does not match layer " +
                                 std::to_string(i - 1));
    }
    if (!(l.capacity > 0.0 && l.capacity <= 1.0)) {
      fail(ErrorKind::config, "capacity must lie in (0, 1]");
    }
  }
}

std::size_t MaskedMlp::input_width() const { return layers_.front().weight.rows(); }
std::size_t MaskedMlp::output_width() const { return layers_.back().weight.cols(); }
std::size_t MaskedMlp::embedding_width() const { return layers_.back().weight.rows(); }

void MaskedMlp::refresh_masks(Rng& minor_rng) {
  if (frozen()) fail(ErrorKind::contract, "masks are frozen");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix major = select_major_mask(layers_[i].score, layers_[i].capacity);
    Matrix minor = mode_ == MaskMode::soft ? sample_minor_mask(major, minor_rng)
                                           : Matrix(major.rows(), major.cols());
    masks_[i] = LayerMask{std::move(major), std::move(minor)};
  }
}

const std::vector<LayerMask>& MaskedMlp::freeze_mask(std::uint64_t seed) {
  if (frozen()) fail(ErrorKind::contract, "masks are already frozen");
  Rng rng = make_rng(seed, RngStream::freeze);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix major = select_major_mask(layers_[i].score, layers_[i].capacity);
    Matrix minor = mode_ == MaskMode::soft ? sample_minor_mask(major, rng)
                                           : Matrix(major.rows(), major.cols());
    masks_[i] = LayerMask{std::move(major), std::move(minor)};
  }
  freeze_seed_ = seed;
  return masks_;
}

void MaskedMlp::restore_frozen_masks(std::vector<LayerMask> masks, std::uint64_t seed) {
  if (masks.size() != layers_.size()) fail(ErrorKind::shape, "mask count does not match layers");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    require_same_shape(masks[i].major, layers_[i].weight, "restored major mask");
    require_same_shape(masks[i].minor, layers_[i].weight, "restored minor mask");
    (void)masks[i].composed();
  }
  masks_ = std::move(masks);
  freeze_seed_ = seed;
}

void MaskedMlp::clear_minor() {
  for (auto& m : masks_) m.minor = Matrix(m.minor.rows(), m.minor.cols());
}

Matrix MaskedMlp::effective_mask(std::size_t i) const {
  const auto& m = masks_.at(i);
  switch (mode_) {
    case MaskMode::dense: return Matrix::ones(m.major.rows(), m.major.cols());
    case MaskMode::hard: return m.major;
    case MaskMode::soft: return m.composed();
  }
  return m.major;
}

ForwardPass MaskedMlp::forward(Tape& tape, const Matrix& input) const {
  if (input.cols() != input_width()) {
    fail(ErrorKind::shape, "input " + input.shape_string() + " does not match network input width " +
                               std::to_string(input_width()));
  }
  ForwardPass pass;
  Var h = tape.constant(input);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Var w = tape.parameter(layers_[i].weight);
    Var b = tape.parameter(layers_[i].bias);
    Var masked = mode_ == MaskMode::dense ? w : tape.mul(w, tape.constant(effective_mask(i)));
    pass.weights.push_back(w);
    pass.biases.push_back(b);
    pass.masked_weights.push_back(masked);
    h = tape.affine(h, masked, b);
    if (i + 1 < layers_.size()) {
      h = tape.relu(h);
      pass.embedding = h;
    }
  }
  if (layers_.size() == 1) pass.embedding = tape.constant(input);
  pass.logits = h;
  return pass;
}

Matrix MaskedMlp::logits(const Matrix& input) const {
  Tape tape;
  return tape.value(forward(tape, input).logits);
}

Matrix MaskedMlp::embed(const Matrix& input) const {
  Tape tape;
  return tape.value(forward(tape, input).embedding);
}

}  // namespace softnet
