#include <cmath>
#include <cstdlib>
#include <iostream>
#include <numbers>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "softnet/checkpoint.hpp"
#include "softnet/dataset.hpp"
#include "softnet/error.hpp"
#include "softnet/experiment.hpp"
#include "softnet/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_out(const std::string& flag, const fs::path& from_config) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv(softnet::kOutputEnvVar); env && *env) return env;
  return "softnet-out";
}

int cmd_generate(const softnet::BlobSpec& spec, const fs::path& out) {
  softnet::LabeledData data = softnet::generate_blobs(spec);
  softnet::write_csv_file(out, data);
  softnet::LabeledData back = softnet::read_csv(out);
  const double min_dist = softnet::min_pairwise_distance(softnet::class_means(back));
  const double bound = spec.radius * std::sin(std::numbers::pi / static_cast<double>(spec.classes));
  std::cout << "wrote " << out.string() << ": " << back.class_names.size() << " classes, "
            << back.set.features.cols() << " features, " << back.set.size() << " rows\n";
  if (spec.classes > 1) {
    std::cout << "min pairwise class-mean distance " << min_dist << " (radius*sin(pi/classes) = " << bound
              << "): " << (min_dist >= bound ? "ok" : "BELOW BOUND") << "\n";
  }
  return 0;
}

int cmd_run(const fs::path& config, const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> jobs) {
  softnet::ExperimentConfig cfg = softnet::load_experiment_config(config);
  cfg.out_dir = resolve_out(out, cfg.out_dir);
  if (seed) cfg.seeds = {*seed};
  if (jobs) cfg.jobs = *jobs;
  cfg.validate();
  softnet::SweepSummary summary = softnet::run_experiment(cfg);
  std::cout << "runs: " << summary.executed << " executed, " << summary.reused << " reused; results in "
            << cfg.out_dir.string() << "\n"
            << softnet::table_csv(summary.table);
  return 0;
}

int cmd_probe(const std::string& config, const std::vector<std::string>& checkpoints, const std::string& out,
              std::optional<std::uint64_t> seed) {
  softnet::ProbeConfig cfg;
  if (!config.empty()) {
    json doc = json::parse(softnet::read_file(config), nullptr, false);
    if (doc.is_discarded()) softnet::fail(softnet::ErrorKind::config, "probe config is not valid JSON");
    cfg = softnet::parse_probe_config(doc, fs::path(config).parent_path());
  } else {
    softnet::fail(softnet::ErrorKind::config, "probe needs --config naming the dataset and grid");
  }
  for (const auto& c : checkpoints) cfg.checkpoints.emplace_back(c);
  if (seed) cfg.seed = *seed;
  const fs::path out_dir = resolve_out(out, {});
  softnet::ProbeResult result = softnet::run_probe(cfg, out_dir);
  std::cout << result.summary["flatness"].dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& out) {
  const fs::path dir = resolve_out(out, {});
  softnet::SweepTable table = softnet::reaggregate(dir);
  std::cout << softnet::table_csv(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-subnetwork few-shot class-incremental learning on small MLPs"};
  app.require_subcommand(1);

  softnet::BlobSpec blob;
  std::string gen_out = "blobs.csv";
  std::string gen_config;
  auto* gen = app.add_subcommand("generate", "write a seeded Gaussian-blob CSV dataset");
  gen->add_option("--classes", blob.classes, "number of classes")->capture_default_str();
  gen->add_option("--dim", blob.dim, "feature dimension")->capture_default_str();
  gen->add_option("--per-class", blob.per_class, "examples per class")->capture_default_str();
  gen->add_option("--radius", blob.radius, "distance of class centers from the origin")->capture_default_str();
  gen->add_option("--scale", blob.scale, "per-feature standard deviation")->capture_default_str();
  gen->add_option("--seed", blob.seed, "generator seed")->capture_default_str();
  gen->add_option("--config", gen_config, "JSON blob spec (same keys as dataset.blobs)");
  gen->add_option("--out", gen_out, "output CSV path")->capture_default_str();

  std::string run_config, run_out;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> run_jobs;
  auto* run = app.add_subcommand("run", "train and evaluate every sweep combination");
  run->add_option("--config", run_config, "experiment config (JSON)")->required();
  run->add_option("--out", run_out, "output directory (default: config 'out', then $SOFTNET_OUT)");
  run->add_option("--seed", run_seed, "run only this seed");
  run->add_option("--jobs", run_jobs, "parallel runs");

  std::string probe_config, probe_out;
  std::vector<std::string> probe_checkpoints;
  std::optional<std::uint64_t> probe_seed;
  auto* probe = app.add_subcommand("probe", "loss-landscape flatness of trained checkpoints");
  probe->add_option("--config", probe_config, "probe config (JSON)");
  probe->add_option("--checkpoint", probe_checkpoints, "checkpoint to probe (repeatable)");
  probe->add_option("--out", probe_out, "output directory (default: $SOFTNET_OUT)");
  probe->add_option("--seed", probe_seed, "direction seed");

  std::string report_out;
  auto* report = app.add_subcommand("report", "re-aggregate completed run reports");
  report->add_option("--out", report_out, "output directory holding runs/ (default: $SOFTNET_OUT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : softnet::exit_code(softnet::ErrorKind::config);
  }

  try {
    if (*gen) {
      if (!gen_config.empty()) {
        json doc = json::parse(softnet::read_file(gen_config), nullptr, false);
        if (doc.is_discarded()) softnet::fail(softnet::ErrorKind::config, "blob spec is not valid JSON");
        blob.classes = doc.value("classes", blob.classes);
        blob.dim = doc.value("dim", blob.dim);
        blob.per_class = doc.value("per_class", blob.per_class);
        blob.radius = doc.value("radius", blob.radius);
        blob.scale = doc.value("scale", blob.scale);
        blob.seed = doc.value("seed", blob.seed);
      }
      return cmd_generate(blob, gen_out);
    }
    if (*run) return cmd_run(run_config, run_out, run_seed, run_jobs);
    if (*probe) return cmd_probe(probe_config, probe_checkpoints, probe_out, probe_seed);
    if (*report) return cmd_report(report_out);
  } catch (const softnet::Error& e) {
    std::cerr << "softnet: " << softnet::to_string(e.kind()) << ": " << e.what() << "\n";
    return softnet::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "softnet: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
