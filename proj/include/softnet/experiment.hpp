#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "softnet/dataset.hpp"
#include "softnet/eval.hpp"
#include "softnet/landscape.hpp"
#include "softnet/protocol.hpp"
#include "softnet/trainer.hpp"

namespace softnet {

inline constexpr const char* kArtifactVersion = "softnet 0.1.0";
inline constexpr const char* kOutputEnvVar = "SOFTNET_OUT";

struct DatasetSource {
  std::optional<std::filesystem::path> csv;
  std::optional<BlobSpec> blobs;
};

LabeledData load_dataset(const DatasetSource& source);

struct ExperimentConfig {
  DatasetSource dataset;
  SplitOptions split;
  std::size_t base_classes = 6;
  std::size_t n_way = 2;
  std::size_t k_shot = 5;
  TrainConfig train;
  std::vector<MaskMode> modes{MaskMode::soft};
  std::vector<double> capacities{0.8};
  /// Each entry is one choice of incremental trainable layers; nullopt is
  /// the default (last hidden layer).
  std::vector<std::optional<std::vector<std::size_t>>> layer_sets{std::nullopt};
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
  bool save_checkpoints = true;

  void validate() const;
};

/// Relative CSV paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Every result-affecting field; `out` and `jobs` are excluded.
nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical JSON dump. Key order in the
/// source document does not matter.
std::string hash_json(const nlohmann::json& doc);
std::string config_hash(const ExperimentConfig& cfg);

struct RunSpec {
  MaskMode mode = MaskMode::soft;
  double capacity = 1.0;
  std::optional<std::vector<std::size_t>> layers;
  std::uint64_t seed = 0;
  std::string label;  // row label in tables
  std::string name;   // run directory name
};

std::vector<RunSpec> expand_sweep(const ExperimentConfig& cfg);
TrainConfig run_train_config(const ExperimentConfig& cfg, const RunSpec& spec);
std::string run_hash(const ExperimentConfig& cfg, const RunSpec& spec);

struct RunOutput {
  RunResult result;
  TrainedState state;
};

RunOutput execute_run(const ExperimentConfig& cfg, const DatasetSplit& split, const RunSpec& spec);

nlohmann::json report_to_json(const RunResult& run, const std::string& hash);
RunResult report_from_json(const nlohmann::json& doc);

struct SweepSummary {
  std::size_t executed = 0;
  std::size_t reused = 0;
  SweepTable table;
};

/// Runs every sweep combination (reusing completed runs whose report hash
/// matches), then aggregates. Writes runs/<name>/{report.json,trace.csv,
/// checkpoint.json}, aggregate.csv, table.csv and manifest.json.
SweepSummary run_experiment(const ExperimentConfig& cfg);

/// Rebuilds aggregate.csv and table.csv from runs/*/report.json.
SweepTable reaggregate(const std::filesystem::path& out_dir);

struct ProbeConfig {
  std::vector<std::filesystem::path> checkpoints;
  DatasetSource dataset;
  std::optional<SplitOptions> split;  // probe on the train partition when set
  double radius = 0.5;
  std::size_t steps = 11;
  std::size_t directions = 10;
  std::uint64_t seed = 0;
};

ProbeConfig parse_probe_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Rows of `data` whose class is a base class of `state`, relabelled to the
/// classifier's column indices.
LabeledSet classifier_view(const TrainedState& state, const LabeledSet& data);

struct ProbeResult {
  std::vector<LandscapeSlice> slices;
  std::vector<double> scores;  // one per checkpoint
  nlohmann::json summary;
};

/// Probes each checkpoint with identically seeded directions; writes
/// slices.csv and flatness.json into `out_dir`.
ProbeResult run_probe(const ProbeConfig& cfg, const std::filesystem::path& out_dir);

/// Train → probe comparison of several modes on one classification task,
/// every class in the base session.
struct FlatnessOptions {
  std::vector<std::size_t> hidden_widths{25, 30};
  std::size_t epochs = 100;
  double lr = 0.05;
  std::size_t batch_size = 16;
  double capacity = 0.8;
  double radius = 0.5;
  std::size_t steps = 11;
  std::size_t directions = 10;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<MaskMode> modes{MaskMode::dense, MaskMode::hard, MaskMode::soft};
};

struct FlatnessComparison {
  std::vector<MaskMode> modes;
  std::vector<double> mean_scores;   // per mode, averaged over seeds
  std::vector<LandscapeSlice> slices;  // per (seed, mode)
};

FlatnessComparison compare_flatness(const LabeledData& data, const FlatnessOptions& options);

}  // namespace softnet
