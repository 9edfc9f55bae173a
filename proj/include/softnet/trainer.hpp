#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "softnet/eval.hpp"
#include "softnet/masked_network.hpp"
#include "softnet/protocol.hpp"
#include "softnet/state.hpp"

namespace softnet {

struct TrainConfig {
  std::vector<std::size_t> hidden_widths{32, 32};
  std::size_t base_epochs = 30;
  double base_lr = 0.05;
  std::size_t incr_epochs = 6;
  double incr_lr = 0.02;
  double capacity = 0.8;
  std::size_t batch_size = 32;
  /// Layers whose minor weights are fine-tuned in incremental sessions;
  /// nullopt selects the last hidden layer.
  std::optional<std::vector<std::size_t>> trainable_layers;
  MaskMode mode = MaskMode::soft;
  std::uint64_t seed = 0;
  /// Force every minor value to 0, in base epochs and in the frozen mask.
  bool zero_minor = false;

  void validate() const;
  std::vector<std::size_t> incremental_layers(std::size_t layer_count) const;
};

/// Row order used for mini-batches in a given base epoch.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Seed of the single minor draw taken when the mask is frozen.
std::uint64_t freeze_seed(const TrainConfig& cfg);

/// Network sized for `input_width` features and `classes` base classes.
MaskedMlp make_network(std::size_t input_width, std::size_t classes, const TrainConfig& cfg);

/// Straight-through score gradient: g_s = ∂L/∂(θ⊙m) ⊙ θ per layer.
std::vector<Matrix> score_surrogate_gradient(const MaskedMlp& net,
                                             std::span<const Matrix> masked_weight_grads);

/// The base-session epoch loop on its own: per epoch re-rank and resample
/// the masks, then per batch take one weight step (scaled by the effective
/// mask) and one score step.
void run_base_epochs(MaskedMlp& net, const SessionDataset& data, const TrainConfig& cfg,
                     std::vector<LossRecord>& trace);

/// Freeze the mask and store base prototypes for an already trained net.
TrainedState finish_base(MaskedMlp net, const SessionDataset& data, const TrainConfig& cfg,
                         std::vector<LossRecord> trace = {});

TrainedState train_base(MaskedMlp net, const SessionDataset& data, const TrainConfig& cfg);

/// Fine-tune minor weights of the configured layers against the cosine
/// prototype loss over D^t ∪ exemplars, then add the session's prototypes
/// and exemplars.
void train_incremental(TrainedState& state, const SessionDataset& data, const TrainConfig& cfg);

/// Base session plus every few-shot session, evaluated after each one.
std::vector<SessionReport> run_protocol(const DatasetSplit& split, const TrainConfig& cfg,
                                        std::span<const SessionPlan> plans,
                                        TrainedState* final_state = nullptr);

}  // namespace softnet
