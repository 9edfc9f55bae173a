#include "softnet/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "softnet/error.hpp"
#include "softnet/rng.hpp"

namespace softnet {

DatasetSplit make_split(const LabeledData& data, const SplitOptions& options) {
  if (data.set.empty()) fail(ErrorKind::data, "dataset has no examples");
  if (options.test_per_class == 0 && !(options.test_fraction >= 0.0 && options.test_fraction < 1.0)) {
    fail(ErrorKind::config, "test_fraction must lie in [0, 1)");
  }
  DatasetSplit split;
  split.class_names = data.class_names;
  split.examples = data.set;
  const std::size_t classes = data.class_names.size();
  std::vector<std::vector<std::size_t>> rows(classes);
  for (std::size_t r = 0; r < data.set.size(); ++r) {
    const int label = data.set.labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      fail(ErrorKind::data, "label " + std::to_string(label) + " has no class name");
    }
    rows[static_cast<std::size_t>(label)].push_back(r);
  }
  split.train.resize(classes);
  split.test.resize(classes);
  Rng rng = make_rng(options.seed, RngStream::split);
  for (std::size_t k = 0; k < classes; ++k) {
    auto& members = rows[k];
    rng.shuffle(members);
    std::size_t n_test = options.test_per_class > 0
                             ? options.test_per_class
                             : static_cast<std::size_t>(std::floor(options.test_fraction *
                                                                   static_cast<double>(members.size())));
    if (n_test >= members.size()) {
      fail(ErrorKind::data, "class '" + data.class_names[k] + "' has " +
                                std::to_string(members.size()) + " examples, too few for " +
                                std::to_string(n_test) + " test examples plus training");
    }
    split.test[k].assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train[k].assign(members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    std::sort(split.test[k].begin(), split.test[k].end());
    std::sort(split.train[k].begin(), split.train[k].end());
  }
  return split;
}

std::vector<SessionPlan> plan_sessions(const DatasetSplit& split, std::size_t base_class_count,
                                       std::size_t n_way, std::size_t k_shot, std::uint64_t seed) {
  const std::size_t total = split.class_count();
  if (base_class_count == 0) fail(ErrorKind::config, "base session needs at least one class");
  if (base_class_count > total) {
    fail(ErrorKind::config, "base session wants " + std::to_string(base_class_count) +
                                " classes but the dataset has " + std::to_string(total));
  }
  if (n_way == 0 || k_shot == 0) fail(ErrorKind::config, "n_way and k_shot must be positive");

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, RngStream::plan);
  rng.shuffle(order);

  std::vector<SessionPlan> plans;
  SessionPlan base;
  base.index = 1;
  base.classes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(base_class_count));
  std::sort(base.classes.begin(), base.classes.end());
  base.n_way = base_class_count;
  plans.push_back(std::move(base));

  const std::size_t sessions = (total - base_class_count) / n_way;
  for (std::size_t s = 0; s < sessions; ++s) {
    SessionPlan p;
    p.index = s + 2;
    auto first = order.begin() + static_cast<std::ptrdiff_t>(base_class_count + s * n_way);
    p.classes.assign(first, first + static_cast<std::ptrdiff_t>(n_way));
    std::sort(p.classes.begin(), p.classes.end());
    p.shots = k_shot;
    p.n_way = n_way;
    plans.push_back(std::move(p));
  }
  return plans;
}

SessionDataset materialize_session(const SessionPlan& plan, const DatasetSplit& split,
                                   std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 1000 + plan.index);
  std::vector<std::size_t> rows;
  for (int c : plan.classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= split.class_count()) {
      fail(ErrorKind::data, "session " + std::to_string(plan.index) + " names unknown class " +
                                std::to_string(c));
    }
    const auto& train = split.train[static_cast<std::size_t>(c)];
    if (!plan.shots) {
      rows.insert(rows.end(), train.begin(), train.end());
      continue;
    }
    if (train.size() < *plan.shots) {
      fail(ErrorKind::data, "class '" + split.class_names[static_cast<std::size_t>(c)] + "' has " +
                                std::to_string(train.size()) + " training examples, fewer than " +
                                std::to_string(*plan.shots) + " shots");
    }
    std::vector<std::size_t> pool = train;
    rng.shuffle(pool);
    pool.resize(*plan.shots);
    std::sort(pool.begin(), pool.end());
    rows.insert(rows.end(), pool.begin(), pool.end());
  }
  SessionDataset out{plan, {gather_rows(split.examples.features, rows), {}}};
  out.data.labels.reserve(rows.size());
  for (std::size_t r : rows) out.data.labels.push_back(split.examples.labels[r]);
  return out;
}

LabeledSet eval_pool(std::span<const SessionPlan> plans, const DatasetSplit& split) {
  std::vector<std::size_t> rows;
  for (const auto& p : plans) {
    for (int c : p.classes) {
      const auto& test = split.test.at(static_cast<std::size_t>(c));
      rows.insert(rows.end(), test.begin(), test.end());
    }
  }
  LabeledSet out{gather_rows(split.examples.features, rows), {}};
  if (rows.empty()) out.features = Matrix(0, split.feature_dim());
  for (std::size_t r : rows) out.labels.push_back(split.examples.labels[r]);
  return out;
}

void ExemplarStore::append(const SessionDataset& session) {
  if (session.plan.is_base()) fail(ErrorKind::protocol, "base-session examples are never exemplars");
  if (std::find(sessions_.begin(), sessions_.end(), session.plan.index) != sessions_.end()) {
    fail(ErrorKind::protocol, "session " + std::to_string(session.plan.index) + " already stored");
  }
  examples_ = concat(examples_, session.data);
  sessions_.push_back(session.plan.index);
}

void PrototypeStore::insert(Prototype p) {
  if (p.sample_count == 0) fail(ErrorKind::degenerate, "prototype without samples");
  if (!items_.empty() && items_.begin()->second.vector.size() != p.vector.size()) {
    fail(ErrorKind::shape, "prototype dimension differs from the store");
  }
  const int id = p.class_id;
  if (!items_.emplace(id, std::move(p)).second) {
    fail(ErrorKind::protocol, "prototype for class " + std::to_string(id) + " already stored");
  }
}

const Prototype* PrototypeStore::find(int class_id) const {
  auto it = items_.find(class_id);
  return it == items_.end() ? nullptr : &it->second;
}

std::vector<Prototype> PrototypeStore::all() const {
  std::vector<Prototype> out;
  out.reserve(items_.size());
  for (const auto& [id, p] : items_) out.push_back(p);
  return out;
}

}  // namespace softnet
