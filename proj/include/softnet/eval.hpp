#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softnet/losses.hpp"
#include "softnet/protocol.hpp"
#include "softnet/state.hpp"

namespace softnet {

/// Class of the Euclidean-nearest prototype; ties go to the smallest id.
/// Embeddings are compared as-is, without normalization.
int ncm_classify(std::span<const double> embedding, const PrototypeStore& prototypes);

struct SessionReport {
  std::size_t session = 1;
  double overall = 0.0;
  std::optional<double> base;   // absent when the pool holds no base class
  std::optional<double> novel;  // absent when the pool holds no novel class
  std::map<int, double> per_class;
  std::map<int, std::size_t> class_counts;
  std::size_t base_count = 0;
  std::size_t novel_count = 0;

  friend bool operator==(const SessionReport&, const SessionReport&) = default;
};

/// Embeds `pool` with the masked network and scores NCM predictions.
/// Base classes are those of the base session; all others are novel.
SessionReport evaluate_session(const TrainedState& state, const LabeledSet& pool,
                               std::size_t session_index);

/// Reports of one protocol run, tagged with its configuration.
struct RunResult {
  std::string mode;  // row label, e.g. "soft" or "soft@L1"
  double capacity = 1.0;
  std::uint64_t seed = 0;
  std::vector<SessionReport> reports;
};

struct SweepRow {
  std::string mode;
  double capacity = 1.0;
  std::size_t runs = 0;
  std::vector<double> overall;  // mean over runs, per session
  std::vector<std::optional<double>> base;
  std::vector<std::optional<double>> novel;
  double gap = 0.0;  // final-session overall minus the reference row's
};

struct SweepTable {
  std::vector<SweepRow> rows;  // ordered by (mode, capacity)
  std::size_t sessions = 0;
  std::size_t reference = 0;  // index of the reference row
};

/// Groups runs by (mode, capacity), averages over seeds, and computes each
/// row's gap against the dense row (or the first row when none is dense).
SweepTable capacity_sweep_table(std::span<const RunResult> runs);

/// `mode,c,session,overall,base,novel`, one line per row and session.
std::string aggregate_csv(const SweepTable& table);
/// `mode,c,s1,...,sT,gap`
std::string table_csv(const SweepTable& table);

}  // namespace softnet
