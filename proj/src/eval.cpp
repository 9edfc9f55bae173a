#include "softnet/eval.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "softnet/error.hpp"
#include "softnet/io.hpp"

namespace softnet {

int ncm_classify(std::span<const double> embedding, const PrototypeStore& prototypes) {
  if (prototypes.empty()) fail(ErrorKind::protocol, "NCM over an empty prototype store");
  int best = 0;
  double best_distance = 0.0;
  bool first = true;
  for (const auto& [id, p] : prototypes.items()) {
    const double d = euclidean_distance(embedding, p.vector);
    if (first || d < best_distance) {
      best = p.class_id;
      best_distance = d;
      first = false;
    }
  }
  return best;
}

SessionReport evaluate_session(const TrainedState& state, const LabeledSet& pool,
                               std::size_t session_index) {
  SessionReport report;
  report.session = session_index;
  for (int label : pool.labels) {
    if (!state.prototypes.contains(label)) {
      fail(ErrorKind::protocol, "no prototype for evaluated class " + std::to_string(label));
    }
  }
  if (pool.empty()) return report;

  const std::set<int> base(state.base_classes.begin(), state.base_classes.end());
  const Matrix embeddings = state.network.embed(pool.features);
  std::map<int, std::size_t> correct;
  std::size_t hits = 0, base_hits = 0, novel_hits = 0;
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const int label = pool.labels[r];
    const bool ok = ncm_classify(embeddings.row_span(r), state.prototypes) == label;
    ++report.class_counts[label];
    correct[label] += ok ? 1 : 0;
    hits += ok ? 1 : 0;
    if (base.contains(label)) {
      ++report.base_count;
      base_hits += ok ? 1 : 0;
    } else {
      ++report.novel_count;
      novel_hits += ok ? 1 : 0;
    }
  }
  for (const auto& [label, count] : report.class_counts) {
    report.per_class[label] = static_cast<double>(correct[label]) / static_cast<double>(count);
  }
  report.overall = static_cast<double>(hits) / static_cast<double>(pool.size());
  if (report.base_count > 0) {
    report.base = static_cast<double>(base_hits) / static_cast<double>(report.base_count);
  }
  if (report.novel_count > 0) {
    report.novel = static_cast<double>(novel_hits) / static_cast<double>(report.novel_count);
  }
  return report;
}

SweepTable capacity_sweep_table(std::span<const RunResult> runs) {
  if (runs.empty()) fail(ErrorKind::report, "sweep table needs at least one run");
  SweepTable table;
  table.sessions = runs.front().reports.size();
  using Key = std::tuple<std::string, double>;
  std::map<Key, std::vector<const RunResult*>> groups;
  for (const auto& run : runs) {
    if (run.reports.size() != table.sessions) {
      fail(ErrorKind::report, "ragged session counts: " + std::to_string(run.reports.size()) + " vs " +
                                  std::to_string(table.sessions));
    }
    groups[{run.mode, run.capacity}].push_back(&run);
  }
  for (const auto& [key, members] : groups) {
    SweepRow row;
    row.mode = std::get<0>(key);
    row.capacity = std::get<1>(key);
    row.runs = members.size();
    for (std::size_t s = 0; s < table.sessions; ++s) {
      double overall = 0.0, base = 0.0, novel = 0.0;
      std::size_t base_n = 0, novel_n = 0;
      for (const RunResult* r : members) {
        const auto& rep = r->reports[s];
        overall += rep.overall;
        if (rep.base) base += *rep.base, ++base_n;
        if (rep.novel) novel += *rep.novel, ++novel_n;
      }
      row.overall.push_back(overall / static_cast<double>(members.size()));
      row.base.push_back(base_n ? std::optional<double>(base / static_cast<double>(base_n)) : std::nullopt);
      row.novel.push_back(novel_n ? std::optional<double>(novel / static_cast<double>(novel_n))
                                  : std::nullopt);
    }
    table.rows.push_back(std::move(row));
  }
  auto dense = std::find_if(table.rows.begin(), table.rows.end(),
                            [](const SweepRow& r) { return r.mode == "dense"; });
  table.reference = dense == table.rows.end() ? 0 : static_cast<std::size_t>(dense - table.rows.begin());
  if (table.sessions > 0) {
    const double ref = table.rows[table.reference].overall.back();
    for (auto& row : table.rows) row.gap = row.overall.back() - ref;
  }
  return table;
}

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

std::string aggregate_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "mode,c,session,overall,base,novel\n";
  for (const auto& row : table.rows) {
    for (std::size_t s = 0; s < table.sessions; ++s) {
      out << row.mode << ',' << format_double(row.capacity) << ',' << (s + 1) << ','
          << format_double(row.overall[s]) << ',' << optional_field(row.base[s]) << ','
          << optional_field(row.novel[s]) << '\n';
    }
  }
  return out.str();
}

std::string table_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "mode,c";
  for (std::size_t s = 0; s < table.sessions; ++s) out << ",s" << (s + 1);
  out << ",gap\n";
  for (const auto& row : table.rows) {
    out << row.mode << ',' << format_double(row.capacity);
    for (double v : row.overall) out << ',' << format_double(v);
    out << ',' << format_double(row.gap) << '\n';
  }
  return out.str();
}

}  // namespace softnet
