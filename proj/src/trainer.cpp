#include "softnet/trainer.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "softnet/error.hpp"
#include "softnet/io.hpp"
#include "softnet/losses.hpp"
#include "softnet/rng.hpp"

namespace softnet {

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream out;
  out << "phase,session,epoch,loss\n";
  for (const auto& r : trace) {
    out << r.phase << ',' << r.session << ',' << r.epoch << ',' << format_double(r.loss) << '\n';
  }
  return out.str();
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !(incr_lr > 0.0)) fail(ErrorKind::config, "learning rates must be positive");
  if (base_epochs < 1 || incr_epochs < 1) fail(ErrorKind::config, "epoch counts must be at least 1");
  if (!(capacity > 0.0 && capacity <= 1.0)) fail(ErrorKind::config, "capacity must lie in (0, 1]");
  if (batch_size < 1) fail(ErrorKind::config, "batch size must be at least 1");
  if (hidden_widths.empty()) fail(ErrorKind::config, "at least one hidden layer is required");
  for (std::size_t w : hidden_widths) {
    if (w == 0) fail(ErrorKind::config, "hidden widths must be positive");
  }
  if (trainable_layers) {
    const std::size_t layers = hidden_widths.size() + 1;
    for (std::size_t l : *trainable_layers) {
      if (l >= layers) {
        fail(ErrorKind::config, "trainable layer " + std::to_string(l) + " does not exist (network has " +
                                    std::to_string(layers) + " layers)");
      }
    }
  }
}

std::vector<std::size_t> TrainConfig::incremental_layers(std::size_t layer_count) const {
  if (!trainable_layers) {
    if (layer_count < 2) return {};
    return {layer_count - 2};
  }
  std::vector<std::size_t> out = *trainable_layers;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (std::size_t l : out) {
    if (l >= layer_count) fail(ErrorKind::config, "trainable layer " + std::to_string(l) + " does not exist");
  }
  return out;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, 0x5eed0000ULL + epoch);
  rng.shuffle(order);
  return order;
}

std::uint64_t freeze_seed(const TrainConfig& cfg) { return cfg.seed ^ 0xf00dULL; }

MaskedMlp make_network(std::size_t input_width, std::size_t classes, const TrainConfig& cfg) {
  std::vector<std::size_t> widths{input_width};
  widths.insert(widths.end(), cfg.hidden_widths.begin(), cfg.hidden_widths.end());
  widths.push_back(classes);
  return MaskedMlp::initialize(widths, cfg.capacity, cfg.mode, cfg.seed);
}

std::vector<Matrix> score_surrogate_gradient(const MaskedMlp& net,
                                             std::span<const Matrix> masked_weight_grads) {
  if (masked_weight_grads.size() != net.layer_count()) {
    fail(ErrorKind::shape, "one masked-weight gradient per layer is required");
  }
  std::vector<Matrix> out;
  out.reserve(net.layer_count());
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const Matrix& theta = net.layer(i).weight;
    const Matrix& g = masked_weight_grads[i];
    require_same_shape(theta, g, "score surrogate gradient");
    Matrix gs(theta.rows(), theta.cols());
    for (std::size_t j = 0; j < gs.size(); ++j) gs[j] = g[j] * theta[j];
    out.push_back(std::move(gs));
  }
  return out;
}

namespace {

/// Base labels are class ids; the classifier head indexes them densely.
std::vector<int> local_labels(const std::vector<int>& labels, const std::vector<int>& classes) {
  std::map<int, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index.emplace(classes[i], static_cast<int>(i));
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto it = index.find(l);
    if (it == index.end()) fail(ErrorKind::data, "label " + std::to_string(l) + " outside the session");
    out.push_back(it->second);
  }
  return out;
}

std::vector<Prototype> class_prototypes(const LabeledSet& data, const std::vector<int>& classes,
                                        const MaskedMlp& net) {
  std::vector<Prototype> out;
  for (int c : classes) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < data.size(); ++r) {
      if (data.labels[r] == c) rows.push_back(r);
    }
    out.push_back(compute_prototype(gather_rows(data.features, rows), c, net));
  }
  return out;
}

}  // namespace

void run_base_epochs(MaskedMlp& net, const SessionDataset& data, const TrainConfig& cfg,
                     std::vector<LossRecord>& trace) {
  cfg.validate();
  if (!data.plan.is_base()) fail(ErrorKind::protocol, "base training needs the base session");
  if (data.data.empty()) fail(ErrorKind::data, "base session has no examples");
  if (net.output_width() != data.plan.classes.size()) {
    fail(ErrorKind::shape, "classifier width " + std::to_string(net.output_width()) + " does not match " +
                               std::to_string(data.plan.classes.size()) + " base classes");
  }
  const std::vector<int> targets = local_labels(data.data.labels, data.plan.classes);
  const std::size_t n = data.data.size();
  Rng minor_rng = make_rng(cfg.seed, RngStream::minor);

  for (std::size_t epoch = 0; epoch < cfg.base_epochs; ++epoch) {
    net.refresh_masks(minor_rng);
    if (cfg.zero_minor) net.clear_minor();
    std::vector<Matrix> masks;
    for (std::size_t i = 0; i < net.layer_count(); ++i) masks.push_back(net.effective_mask(i));

    const auto order = epoch_permutation(n, cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      Matrix x = gather_rows(data.data.features, rows);
      std::vector<int> y;
      y.reserve(rows.size());
      for (std::size_t r : rows) y.push_back(targets[r]);

      Tape tape;
      ForwardPass pass = net.forward(tape, x);
      Var loss = tape.softmax_cross_entropy(pass.logits, y);
      Gradients grads = tape.backward(loss);
      loss_sum += tape.value(loss)[0];
      ++batches;

      std::vector<Matrix> masked_grads;
      masked_grads.reserve(net.layer_count());
      for (Var v : pass.masked_weights) masked_grads.push_back(grads.of(v));
      std::vector<Matrix> score_grads = score_surrogate_gradient(net, masked_grads);

      for (std::size_t i = 0; i < net.layer_count(); ++i) {
        MaskedLayer& layer = net.layer(i);
        sgd_update(layer.weight, grads.of(pass.weights[i]), cfg.base_lr,
                   net.mode() == MaskMode::dense ? std::nullopt : std::optional<Matrix>(masks[i]));
        sgd_update(layer.bias, grads.of(pass.biases[i]), cfg.base_lr);
        sgd_update(layer.score, score_grads[i], cfg.base_lr);
      }
    }
    trace.push_back({"base", 1, epoch + 1, loss_sum / static_cast<double>(batches)});
  }
}

TrainedState finish_base(MaskedMlp net, const SessionDataset& data, const TrainConfig& cfg,
                         std::vector<LossRecord> trace) {
  if (!data.plan.is_base()) fail(ErrorKind::protocol, "base prototypes need the base session");
  if (data.data.empty()) fail(ErrorKind::data, "base session has no examples");
  net.freeze_mask(freeze_seed(cfg));
  if (cfg.zero_minor) net.clear_minor();
  TrainedState state;
  state.network = std::move(net);
  state.trace = std::move(trace);
  state.base_classes = data.plan.classes;
  for (auto& p : class_prototypes(data.data, data.plan.classes, state.network)) {
    state.prototypes.insert(std::move(p));
  }
  state.sessions_completed = 1;
  return state;
}

TrainedState train_base(MaskedMlp net, const SessionDataset& data, const TrainConfig& cfg) {
  std::vector<LossRecord> trace;
  run_base_epochs(net, data, cfg, trace);
  return finish_base(std::move(net), data, cfg, std::move(trace));
}

void train_incremental(TrainedState& state, const SessionDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  MaskedMlp& net = state.network;
  if (!net.frozen()) fail(ErrorKind::protocol, "incremental session before base training");
  if (data.plan.is_base()) fail(ErrorKind::protocol, "incremental training needs a few-shot session");
  if (data.data.empty()) fail(ErrorKind::data, "session " + std::to_string(data.plan.index) + " is empty");
  for (int c : state.base_classes) {
    if (!state.prototypes.contains(c)) {
      fail(ErrorKind::protocol, "missing prototype for previously seen class " + std::to_string(c));
    }
  }
  for (int c : state.exemplars.examples().labels) {
    if (!state.prototypes.contains(c)) {
      fail(ErrorKind::protocol, "missing prototype for previously seen class " + std::to_string(c));
    }
  }
  for (int c : data.plan.classes) {
    if (state.prototypes.contains(c)) {
      fail(ErrorKind::protocol, "class " + std::to_string(c) + " was already learned");
    }
  }

  // Stored prototypes plus provisional ones for the new classes, taken with
  // the network as it enters the session.
  std::vector<Prototype> prototypes = state.prototypes.all();
  for (auto& p : class_prototypes(data.data, data.plan.classes, net)) prototypes.push_back(std::move(p));

  const LabeledSet train = concat(data.data, state.exemplars.examples());
  const auto layers = cfg.incremental_layers(net.layer_count());
  std::vector<std::optional<Matrix>> update_masks(net.layer_count());
  for (std::size_t l : layers) {
    if (net.mode() != MaskMode::dense) update_masks[l] = net.masks()[l].minor;
  }

  for (std::size_t epoch = 0; epoch < cfg.incr_epochs; ++epoch) {
    Tape tape;
    ForwardPass pass = net.forward(tape, train.features);
    Var loss = prototype_metric_loss(tape, pass.embedding, train.labels, prototypes);
    state.trace.push_back({"incremental", data.plan.index, epoch + 1, tape.value(loss)[0]});
    if (layers.empty()) continue;
    Gradients grads = tape.backward(loss);
    for (std::size_t l : layers) {
      sgd_update(net.layer(l).weight, grads.of(pass.weights[l]), cfg.incr_lr, update_masks[l]);
    }
  }

  for (auto& p : class_prototypes(data.data, data.plan.classes, net)) state.prototypes.insert(std::move(p));
  state.exemplars.append(data);
  state.sessions_completed = std::max(state.sessions_completed, data.plan.index);
}

std::vector<SessionReport> run_protocol(const DatasetSplit& split, const TrainConfig& cfg,
                                        std::span<const SessionPlan> plans, TrainedState* final_state) {
  cfg.validate();
  if (plans.empty() || !plans.front().is_base()) fail(ErrorKind::config, "plan must start with the base session");
  SessionDataset base = materialize_session(plans.front(), split, cfg.seed);
  TrainedState state =
      train_base(make_network(split.feature_dim(), plans.front().classes.size(), cfg), base, cfg);

  std::vector<SessionReport> reports;
  reports.push_back(evaluate_session(state, eval_pool(plans.subspan(0, 1), split), 1));
  for (std::size_t t = 1; t < plans.size(); ++t) {
    SessionDataset session = materialize_session(plans[t], split, cfg.seed);
    train_incremental(state, session, cfg);
    reports.push_back(evaluate_session(state, eval_pool(plans.subspan(0, t + 1), split), plans[t].index));
  }
  if (final_state) *final_state = std::move(state);
  return reports;
}

}  // namespace softnet
