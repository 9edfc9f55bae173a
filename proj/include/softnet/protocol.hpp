#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softnet/dataset.hpp"
#include "softnet/losses.hpp"

namespace softnet {

/// Examples with a per-class train/test partition.
struct DatasetSplit {
  std::vector<std::string> class_names;
  LabeledSet examples;
  std::vector<std::vector<std::size_t>> train;  // row indices per class
  std::vector<std::vector<std::size_t>> test;

  std::size_t class_count() const noexcept { return class_names.size(); }
  std::size_t feature_dim() const noexcept { return examples.features.cols(); }
};

struct SplitOptions {
  /// Held-out examples per class when nonzero; otherwise test_fraction.
  std::size_t test_per_class = 0;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

DatasetSplit make_split(const LabeledData& data, const SplitOptions& options);

struct SessionPlan {
  std::size_t index = 1;  // 1-based; 1 is the base session
  std::vector<int> classes;
  std::optional<std::size_t> shots;  // nullopt: every training example
  std::size_t n_way = 0;

  bool is_base() const noexcept { return index == 1; }

  friend bool operator==(const SessionPlan&, const SessionPlan&) = default;
};

/// One base session followed by ⌊(total − base) / n_way⌋ N-way K-shot
/// sessions over a seeded class permutation. Left-over classes are unused.
std::vector<SessionPlan> plan_sessions(const DatasetSplit& split, std::size_t base_class_count,
                                       std::size_t n_way, std::size_t k_shot, std::uint64_t seed);

struct SessionDataset {
  SessionPlan plan;
  LabeledSet data;
};

SessionDataset materialize_session(const SessionPlan& plan, const DatasetSplit& split,
                                   std::uint64_t seed);

/// Test partitions of every class in `plans`.
LabeledSet eval_pool(std::span<const SessionPlan> plans, const DatasetSplit& split);

/// Training examples of completed few-shot sessions.
class ExemplarStore {
 public:
  void append(const SessionDataset& session);
  const LabeledSet& examples() const noexcept { return examples_; }
  const std::vector<std::size_t>& sessions() const noexcept { return sessions_; }
  std::size_t size() const noexcept { return examples_.size(); }

  friend bool operator==(const ExemplarStore&, const ExemplarStore&) = default;

 private:
  LabeledSet examples_;
  std::vector<std::size_t> sessions_;
};

/// One immutable prototype per seen class.
class PrototypeStore {
 public:
  void insert(Prototype p);
  const Prototype* find(int class_id) const;
  bool contains(int class_id) const { return find(class_id) != nullptr; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  /// Ascending class id.
  std::vector<Prototype> all() const;
  const std::map<int, Prototype>& items() const noexcept { return items_; }

 private:
  std::map<int, Prototype> items_;
};

}  // namespace softnet
