#include "softnet/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "softnet/checkpoint.hpp"
#include "softnet/error.hpp"
#include "softnet/io.hpp"

namespace softnet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  if (!obj.is_object()) fail(ErrorKind::config, std::string(where) + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
      fail(ErrorKind::config, std::string("unknown key '") + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& into) {
  if (obj.contains(key) && !obj.at(key).is_null()) into = obj.at(key).get<T>();
}

DatasetSource parse_dataset(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"csv", "blobs"}, "dataset");
  DatasetSource src;
  if (j.contains("csv")) {
    fs::path p = j.at("csv").get<std::string>();
    src.csv = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (j.contains("blobs")) {
    const json& b = j.at("blobs");
    reject_unknown(b, {"classes", "dim", "per_class", "radius", "scale", "seed"}, "dataset.blobs");
    BlobSpec spec;
    read_opt(b, "classes", spec.classes);
    read_opt(b, "dim", spec.dim);
    read_opt(b, "per_class", spec.per_class);
    read_opt(b, "radius", spec.radius);
    read_opt(b, "scale", spec.scale);
    read_opt(b, "seed", spec.seed);
    src.blobs = spec;
  }
  if (src.csv.has_value() == src.blobs.has_value()) {
    fail(ErrorKind::config, "dataset needs exactly one of 'csv' or 'blobs'");
  }
  return src;
}

json dataset_json(const DatasetSource& src) {
  if (src.csv) return json{{"csv", src.csv->string()}};
  const BlobSpec& b = *src.blobs;
  return json{{"blobs",
               {{"classes", b.classes}, {"dim", b.dim}, {"per_class", b.per_class},
                {"radius", b.radius}, {"scale", b.scale}, {"seed", b.seed}}}};
}

SplitOptions parse_split(const json& j) {
  reject_unknown(j, {"test_per_class", "test_fraction", "seed"}, "split");
  SplitOptions s;
  read_opt(j, "test_per_class", s.test_per_class);
  read_opt(j, "test_fraction", s.test_fraction);
  read_opt(j, "seed", s.seed);
  return s;
}

json split_json(const SplitOptions& s) {
  return json{{"test_per_class", s.test_per_class}, {"test_fraction", s.test_fraction}, {"seed", s.seed}};
}

std::string format_layers(const std::optional<std::vector<std::size_t>>& layers) {
  if (!layers) return "default";
  if (layers->empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < layers->size(); ++i) out += (i ? "-" : "") + std::to_string((*layers)[i]);
  return out;
}

std::string timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json session_json(const SessionReport& r) {
  json per_class = json::object();
  json counts = json::object();
  for (const auto& [k, v] : r.per_class) per_class[std::to_string(k)] = v;
  for (const auto& [k, v] : r.class_counts) counts[std::to_string(k)] = v;
  return json{{"session", r.session},
              {"overall", r.overall},
              {"base", r.base ? json(*r.base) : json(nullptr)},
              {"novel", r.novel ? json(*r.novel) : json(nullptr)},
              {"base_count", r.base_count},
              {"novel_count", r.novel_count},
              {"per_class", per_class},
              {"class_counts", counts}};
}

SessionReport session_from_json(const json& j) {
  SessionReport r;
  r.session = j.at("session").get<std::size_t>();
  r.overall = j.at("overall").get<double>();
  if (!j.at("base").is_null()) r.base = j.at("base").get<double>();
  if (!j.at("novel").is_null()) r.novel = j.at("novel").get<double>();
  r.base_count = j.at("base_count").get<std::size_t>();
  r.novel_count = j.at("novel_count").get<std::size_t>();
  for (auto it = j.at("per_class").begin(); it != j.at("per_class").end(); ++it) {
    r.per_class[std::stoi(it.key())] = it.value().get<double>();
  }
  for (auto it = j.at("class_counts").begin(); it != j.at("class_counts").end(); ++it) {
    r.class_counts[std::stoi(it.key())] = it.value().get<std::size_t>();
  }
  return r;
}

void write_tables(const fs::path& out_dir, const SweepTable& table) {
  write_file_atomic(out_dir / "aggregate.csv", aggregate_csv(table));
  write_file_atomic(out_dir / "table.csv", table_csv(table));
}

}  // namespace

LabeledData load_dataset(const DatasetSource& source) {
  if (source.csv) return read_csv(*source.csv);
  if (source.blobs) return generate_blobs(*source.blobs);
  fail(ErrorKind::config, "no dataset source configured");
}

void ExperimentConfig::validate() const {
  if (modes.empty() || capacities.empty() || layer_sets.empty() || seeds.empty()) {
    fail(ErrorKind::config, "sweep axes must be non-empty");
  }
  if (jobs < 1) fail(ErrorKind::config, "jobs must be at least 1");
  if (dataset.blobs) softnet::validate(*dataset.blobs);
  for (const auto& spec : expand_sweep(*this)) run_train_config(*this, spec).validate();
}

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir) {
  try {
    reject_unknown(doc, {"dataset", "split", "protocol", "train", "sweep", "out", "jobs", "save_checkpoints"},
                   "config");
    ExperimentConfig cfg;
    if (!doc.contains("dataset")) fail(ErrorKind::config, "config needs a 'dataset' section");
    cfg.dataset = parse_dataset(doc.at("dataset"), base_dir);
    if (doc.contains("split")) cfg.split = parse_split(doc.at("split"));
    if (doc.contains("protocol")) {
      const json& p = doc.at("protocol");
      reject_unknown(p, {"base_classes", "n_way", "k_shot"}, "protocol");
      read_opt(p, "base_classes", cfg.base_classes);
      read_opt(p, "n_way", cfg.n_way);
      read_opt(p, "k_shot", cfg.k_shot);
    }
    if (doc.contains("train")) {
      const json& t = doc.at("train");
      reject_unknown(t, {"hidden", "base_epochs", "base_lr", "incr_epochs", "incr_lr", "batch_size",
                         "trainable_layers", "zero_minor"},
                     "train");
      read_opt(t, "hidden", cfg.train.hidden_widths);
      read_opt(t, "base_epochs", cfg.train.base_epochs);
      read_opt(t, "base_lr", cfg.train.base_lr);
      read_opt(t, "incr_epochs", cfg.train.incr_epochs);
      read_opt(t, "incr_lr", cfg.train.incr_lr);
      read_opt(t, "batch_size", cfg.train.batch_size);
      read_opt(t, "zero_minor", cfg.train.zero_minor);
      if (t.contains("trainable_layers") && !t.at("trainable_layers").is_null()) {
        cfg.layer_sets = {t.at("trainable_layers").get<std::vector<std::size_t>>()};
      }
    }
    if (doc.contains("sweep")) {
      const json& s = doc.at("sweep");
      reject_unknown(s, {"modes", "capacities", "layers", "seeds"}, "sweep");
      if (s.contains("modes")) {
        cfg.modes.clear();
        for (const auto& m : s.at("modes")) cfg.modes.push_back(parse_mask_mode(m.get<std::string>()));
      }
      read_opt(s, "capacities", cfg.capacities);
      read_opt(s, "seeds", cfg.seeds);
      if (s.contains("layers")) {
        cfg.layer_sets.clear();
        for (const auto& l : s.at("layers")) {
          if (l.is_null() || (l.is_string() && l.get<std::string>() == "default")) cfg.layer_sets.emplace_back(std::nullopt);
          else cfg.layer_sets.emplace_back(l.get<std::vector<std::size_t>>());
        }
      }
    }
    if (doc.contains("out")) cfg.out_dir = doc.at("out").get<std::string>();
    read_opt(doc, "jobs", cfg.jobs);
    read_opt(doc, "save_checkpoints", cfg.save_checkpoints);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::config, "config " + path.string() + " is not valid JSON");
  return parse_experiment_config(doc, path.parent_path());
}

json to_json(const TrainConfig& t) {
  json j{{"hidden", t.hidden_widths},       {"base_epochs", t.base_epochs},
         {"base_lr", t.base_lr},            {"incr_epochs", t.incr_epochs},
         {"incr_lr", t.incr_lr},            {"batch_size", t.batch_size},
         {"capacity", t.capacity},          {"mode", to_string(t.mode)},
         {"seed", t.seed},                  {"zero_minor", t.zero_minor}};
  j["trainable_layers"] = t.trainable_layers ? json(*t.trainable_layers) : json(nullptr);
  return j;
}

json to_json(const ExperimentConfig& cfg) {
  json modes = json::array();
  for (MaskMode m : cfg.modes) modes.push_back(to_string(m));
  json layers = json::array();
  for (const auto& l : cfg.layer_sets) layers.push_back(l ? json(*l) : json(nullptr));
  return json{{"dataset", dataset_json(cfg.dataset)},
              {"split", split_json(cfg.split)},
              {"protocol", {{"base_classes", cfg.base_classes}, {"n_way", cfg.n_way}, {"k_shot", cfg.k_shot}}},
              {"train",
               {{"hidden", cfg.train.hidden_widths},
                {"base_epochs", cfg.train.base_epochs},
                {"base_lr", cfg.train.base_lr},
                {"incr_epochs", cfg.train.incr_epochs},
                {"incr_lr", cfg.train.incr_lr},
                {"batch_size", cfg.train.batch_size},
                {"zero_minor", cfg.train.zero_minor}}},
              {"sweep", {{"modes", modes}, {"capacities", cfg.capacities}, {"layers", layers}, {"seeds", cfg.seeds}}},
              {"save_checkpoints", cfg.save_checkpoints}};
}

std::string hash_json(const json& doc) {
  // json objects keep keys sorted, so dump() is canonical.
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& cfg) { return hash_json(to_json(cfg)); }

std::vector<RunSpec> expand_sweep(const ExperimentConfig& cfg) {
  std::vector<RunSpec> out;
  const bool tag_layers = cfg.layer_sets.size() > 1;
  for (MaskMode mode : cfg.modes) {
    for (double c : cfg.capacities) {
      for (const auto& layers : cfg.layer_sets) {
        for (std::uint64_t seed : cfg.seeds) {
          RunSpec spec{mode, c, layers, seed, to_string(mode), {}};
          if (tag_layers) spec.label += "@L" + format_layers(layers);
          spec.name = spec.label + "_c" + format_double(c) + "_s" + std::to_string(seed);
          std::replace(spec.name.begin(), spec.name.end(), '@', '_');
          out.push_back(std::move(spec));
        }
      }
    }
  }
  return out;
}

TrainConfig run_train_config(const ExperimentConfig& cfg, const RunSpec& spec) {
  TrainConfig t = cfg.train;
  t.mode = spec.mode;
  t.capacity = spec.capacity;
  t.seed = spec.seed;
  t.trainable_layers = spec.layers;
  return t;
}

std::string run_hash(const ExperimentConfig& cfg, const RunSpec& spec) {
  json j{{"dataset", dataset_json(cfg.dataset)},
         {"split", split_json(cfg.split)},
         {"protocol", {{"base_classes", cfg.base_classes}, {"n_way", cfg.n_way}, {"k_shot", cfg.k_shot}}},
         {"train", to_json(run_train_config(cfg, spec))},
         {"label", spec.label}};
  return hash_json(j);
}

RunOutput execute_run(const ExperimentConfig& cfg, const DatasetSplit& split, const RunSpec& spec) {
  const TrainConfig train = run_train_config(cfg, spec);
  const auto plans = plan_sessions(split, cfg.base_classes, cfg.n_way, cfg.k_shot, spec.seed);
  RunOutput out;
  out.result.mode = spec.label;
  out.result.capacity = spec.capacity;
  out.result.seed = spec.seed;
  out.result.reports = run_protocol(split, train, plans, &out.state);
  return out;
}

json report_to_json(const RunResult& run, const std::string& hash) {
  json sessions = json::array();
  for (const auto& r : run.reports) sessions.push_back(session_json(r));
  return json{{"mode", run.mode}, {"capacity", run.capacity}, {"seed", run.seed},
              {"run_hash", hash}, {"sessions", sessions}};
}

RunResult report_from_json(const json& doc) {
  try {
    RunResult run;
    run.mode = doc.at("mode").get<std::string>();
    run.capacity = doc.at("capacity").get<double>();
    run.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& s : doc.at("sessions")) run.reports.push_back(session_from_json(s));
    return run;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed report: ") + e.what());
  }
}

SweepSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string started = timestamp_now();
  const fs::path out_dir = cfg.out_dir.empty() ? fs::path("softnet-out") : cfg.out_dir;
  const DatasetSplit split = make_split(load_dataset(cfg.dataset), cfg.split);
  const std::vector<RunSpec> specs = expand_sweep(cfg);

  std::vector<std::optional<RunResult>> results(specs.size());
  std::vector<bool> reused(specs.size(), false);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const fs::path report = out_dir / "runs" / specs[i].name / "report.json";
    if (!fs::exists(report)) continue;
    json doc = json::parse(read_file(report), nullptr, false);
    if (doc.is_discarded() || doc.value("run_hash", std::string{}) != run_hash(cfg, specs[i])) continue;
    results[i] = report_from_json(doc);
    reused[i] = true;
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::string error_context;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      if (results[i]) continue;
      {
        std::lock_guard lock(error_mutex);
        if (first_error) return;
      }
      try {
        const RunSpec& spec = specs[i];
        RunOutput run = execute_run(cfg, split, spec);
        const fs::path dir = out_dir / "runs" / spec.name;
        write_file_atomic(dir / "trace.csv", loss_trace_csv(run.state.trace));
        if (cfg.save_checkpoints) save_checkpoint(dir / "checkpoint.json", run.state);
        // the report is written last: its presence marks the run complete
        write_file_atomic(dir / "report.json", report_to_json(run.result, run_hash(cfg, spec)).dump(2) + "\n");
        results[i] = std::move(run.result);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
          error_context = specs[i].name;
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(cfg.jobs, std::max<std::size_t>(1, specs.size()));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const Error& e) {
      fail(e.kind(), "run " + error_context + ": " + e.what());
    }
  }

  std::vector<RunResult> finished;
  SweepSummary summary;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    finished.push_back(*results[i]);
    (reused[i] ? summary.reused : summary.executed) += 1;
  }
  summary.table = capacity_sweep_table(finished);
  write_tables(out_dir, summary.table);

  json inventory = json::array({"aggregate.csv", "table.csv"});
  for (const auto& spec : specs) {
    const std::string dir = "runs/" + spec.name + "/";
    inventory.push_back(dir + "report.json");
    inventory.push_back(dir + "trace.csv");
    if (cfg.save_checkpoints && fs::exists(out_dir / (dir + "checkpoint.json"))) {
      inventory.push_back(dir + "checkpoint.json");
    }
  }
  json manifest{{"config_hash", config_hash(cfg)},
                {"config", to_json(cfg)},
                {"seeds", cfg.seeds},
                {"version", kArtifactVersion},
                {"started", started},
                {"finished", timestamp_now()},
                {"runs_executed", summary.executed},
                {"runs_reused", summary.reused},
                {"outputs", inventory}};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

SweepTable reaggregate(const fs::path& out_dir) {
  const fs::path runs = out_dir / "runs";
  if (!fs::is_directory(runs)) fail(ErrorKind::io, "no runs directory under " + out_dir.string());
  std::vector<fs::path> reports;
  for (const auto& entry : fs::directory_iterator(runs)) {
    const fs::path p = entry.path() / "report.json";
    if (fs::exists(p)) reports.push_back(p);
  }
  std::sort(reports.begin(), reports.end());
  std::vector<RunResult> results;
  for (const auto& p : reports) {
    json doc = json::parse(read_file(p), nullptr, false);
    if (doc.is_discarded()) fail(ErrorKind::format, p.string() + " is not valid JSON");
    results.push_back(report_from_json(doc));
  }
  if (results.empty()) fail(ErrorKind::report, "no completed runs under " + runs.string());
  SweepTable table = capacity_sweep_table(results);
  write_tables(out_dir, table);
  return table;
}

ProbeConfig parse_probe_config(const json& doc, const fs::path& base_dir) {
  try {
    reject_unknown(doc, {"checkpoints", "dataset", "split", "radius", "steps", "directions", "seed"}, "probe config");
    ProbeConfig cfg;
    if (doc.contains("checkpoints")) {
      for (const auto& c : doc.at("checkpoints")) {
        fs::path p = c.get<std::string>();
        cfg.checkpoints.push_back(p.is_relative() && !base_dir.empty() ? base_dir / p : p);
      }
    }
    if (!doc.contains("dataset")) fail(ErrorKind::config, "probe config needs a 'dataset' section");
    cfg.dataset = parse_dataset(doc.at("dataset"), base_dir);
    if (doc.contains("split")) cfg.split = parse_split(doc.at("split"));
    read_opt(doc, "radius", cfg.radius);
    read_opt(doc, "steps", cfg.steps);
    read_opt(doc, "directions", cfg.directions);
    read_opt(doc, "seed", cfg.seed);
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("malformed probe config: ") + e.what());
  }
}

LabeledSet classifier_view(const TrainedState& state, const LabeledSet& data) {
  std::vector<std::size_t> rows;
  LabeledSet out;
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto it = std::find(state.base_classes.begin(), state.base_classes.end(), data.labels[r]);
    if (it == state.base_classes.end()) continue;
    rows.push_back(r);
    out.labels.push_back(static_cast<int>(it - state.base_classes.begin()));
  }
  out.features = gather_rows(data.features, rows);
  return out;
}

ProbeResult run_probe(const ProbeConfig& cfg, const fs::path& out_dir) {
  if (cfg.checkpoints.empty()) fail(ErrorKind::config, "probe needs at least one checkpoint");
  const auto grid = radius_grid(cfg.radius, cfg.steps);
  LabeledData data = load_dataset(cfg.dataset);
  LabeledSet pool = data.set;
  if (cfg.split) {
    DatasetSplit split = make_split(data, *cfg.split);
    std::vector<std::size_t> rows;
    for (const auto& t : split.train) rows.insert(rows.end(), t.begin(), t.end());
    std::sort(rows.begin(), rows.end());
    pool.features = gather_rows(split.examples.features, rows);
    pool.labels.clear();
    for (std::size_t r : rows) pool.labels.push_back(split.examples.labels[r]);
  }

  ProbeResult result;
  json entries = json::array();
  std::map<std::string, std::vector<double>> by_mode;
  for (const auto& path : cfg.checkpoints) {
    TrainedState state = load_checkpoint(path);
    if (state.network.input_width() != pool.features.cols()) {
      fail(ErrorKind::data, "checkpoint " + path.string() + " expects " +
                                std::to_string(state.network.input_width()) + " features");
    }
    LabeledSet view = classifier_view(state, pool);
    if (view.empty()) fail(ErrorKind::data, "no probe examples belong to the checkpoint's classes");
    const auto dirs = probe_directions(state.network, cfg.directions, cfg.seed);
    LandscapeSlice slice = probe_landscape(state.network, dirs, grid, view);
    const double score = flatness_score(slice);
    entries.push_back({{"checkpoint", path.string()}, {"mode", slice.mode}, {"flatness", score},
                       {"center_loss", slice.center_loss}});
    by_mode[slice.mode].push_back(score);
    result.scores.push_back(score);
    result.slices.push_back(std::move(slice));
  }
  json modes = json::object();
  for (const auto& [mode, scores] : by_mode) {
    modes[mode] = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  }
  result.summary = json{{"radius", cfg.radius},
                        {"steps", cfg.steps},
                        {"directions", cfg.directions},
                        {"seed", cfg.seed},
                        {"direction_scheme", "gaussian directions on live weights, each layer scaled to "
                                             "the norm of its live weights (biases fixed)"},
                        {"flatness", modes},
                        {"checkpoints", entries}};
  write_file_atomic(out_dir / "slices.csv", slice_csv(result.slices));
  write_file_atomic(out_dir / "flatness.json", result.summary.dump(2) + "\n");
  return result;
}

FlatnessComparison compare_flatness(const LabeledData& data, const FlatnessOptions& options) {
  if (data.set.empty()) fail(ErrorKind::data, "flatness comparison needs data");
  const auto grid = radius_grid(options.radius, options.steps);
  SessionPlan plan;
  plan.index = 1;
  plan.classes.resize(data.class_names.size());
  std::iota(plan.classes.begin(), plan.classes.end(), 0);
  plan.n_way = plan.classes.size();
  const SessionDataset session{plan, data.set};

  FlatnessComparison out;
  out.modes = options.modes;
  out.mean_scores.assign(options.modes.size(), 0.0);
  for (std::uint64_t seed : options.seeds) {
    for (std::size_t m = 0; m < options.modes.size(); ++m) {
      TrainConfig cfg;
      cfg.hidden_widths = options.hidden_widths;
      cfg.base_epochs = options.epochs;
      cfg.base_lr = options.lr;
      cfg.batch_size = options.batch_size;
      cfg.capacity = options.capacity;
      cfg.mode = options.modes[m];
      cfg.seed = seed;
      TrainedState state =
          train_base(make_network(data.set.features.cols(), plan.classes.size(), cfg), session, cfg);
      const auto dirs = probe_directions(state.network, options.directions, seed);
      LandscapeSlice slice = probe_landscape(state.network, dirs, grid, data.set);
      out.mean_scores[m] += flatness_score(slice) / static_cast<double>(options.seeds.size());
      out.slices.push_back(std::move(slice));
    }
  }
  return out;
}

}  // namespace softnet
