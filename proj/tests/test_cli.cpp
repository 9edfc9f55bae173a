#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "softnet/error.hpp"
#include "softnet/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kCli = SOFTNET_CLI_PATH;

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("softnet-cli-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Exit status of the CLI; stdout and stderr go to `log`.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli.string() + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_config(const fs::path& path, const json& doc) { softnet::write_file_atomic(path, doc.dump(2)); }

}  // namespace

TEST_CASE("generate") {
  const fs::path dir = scratch_dir("generate");
  REQUIRE(cli("generate --classes 10 --per-class 120 --seed 4 --out " + (dir / "a.csv").string(), dir / "log") == 0);
  REQUIRE(cli("generate --classes 10 --per-class 120 --seed 4 --out " + (dir / "b.csv").string(), dir / "log2") == 0);
  const std::string a = softnet::read_file(dir / "a.csv");
  CHECK(a == softnet::read_file(dir / "b.csv"));
  CHECK(std::count(a.begin(), a.end(), '\n') == 1201);
  const std::string log = softnet::read_file(dir / "log");
  CHECK(log.find("10 classes, 8 features, 1200 rows") != std::string::npos);
  CHECK(log.find(": ok") != std::string::npos);
  CHECK(cli("generate --dim 1 --out " + (dir / "c.csv").string(), dir / "log3") ==
        softnet::exit_code(softnet::ErrorKind::config));
}

TEST_CASE("run, report and probe") {
  const fs::path dir = scratch_dir("run");
  REQUIRE(cli("generate --classes 8 --dim 4 --per-class 40 --out " + (dir / "data.csv").string(), dir / "log") == 0);
  json cfg = {{"dataset", {{"csv", "data.csv"}}},
              {"split", {{"test_per_class", 10}}},
              {"protocol", {{"base_classes", 4}, {"n_way", 2}, {"k_shot", 3}}},
              {"train", {{"hidden", {8, 8}}, {"base_epochs", 3}, {"incr_epochs", 2}}},
              {"sweep", {{"modes", {"soft"}}, {"capacities", {0.8}}, {"seeds", {0}}}}};
  write_config(dir / "one.json", cfg);

  SUBCASE("one combination, one report") {
    REQUIRE(cli("run --config " + (dir / "one.json").string() + " --out " + (dir / "out1").string(), dir / "log") == 0);
    std::size_t reports = 0;
    for (const auto& e : fs::directory_iterator(dir / "out1" / "runs")) reports += fs::exists(e.path() / "report.json");
    CHECK(reports == 1);
    CHECK(fs::exists(dir / "out1" / "aggregate.csv"));
    CHECK(fs::exists(dir / "out1" / "manifest.json"));
  }
  SUBCASE("capacities times seeds, reproducible aggregate") {
    cfg["sweep"]["capacities"] = {0.5, 0.8, 0.9};
    cfg["sweep"]["seeds"] = {0, 1};
    write_config(dir / "six.json", cfg);
    REQUIRE(cli("run --jobs 4 --config " + (dir / "six.json").string() + " --out " + (dir / "a").string(), dir / "log") == 0);
    REQUIRE(cli("run --jobs 1 --config " + (dir / "six.json").string() + " --out " + (dir / "b").string(), dir / "log") == 0);
    std::size_t reports = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "runs")) reports += fs::exists(e.path() / "report.json");
    CHECK(reports == 6);
    CHECK(softnet::read_file(dir / "a" / "aggregate.csv") == softnet::read_file(dir / "b" / "aggregate.csv"));

    fs::remove(dir / "a" / "aggregate.csv");
    CHECK(cli("report --out " + (dir / "a").string(), dir / "log") == 0);
    CHECK(softnet::read_file(dir / "a" / "aggregate.csv") == softnet::read_file(dir / "b" / "aggregate.csv"));
  }
  SUBCASE("output directory from the environment") {
    const std::string env = "SOFTNET_OUT=" + (dir / "from-env").string() + " ";
    const std::string cmd = env + kCli.string() + " run --config " + (dir / "one.json").string() + " >/dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(dir / "from-env" / "aggregate.csv"));
  }
  SUBCASE("probe") {
    cfg["sweep"]["modes"] = {"dense", "soft"};
    write_config(dir / "two.json", cfg);
    REQUIRE(cli("run --config " + (dir / "two.json").string() + " --out " + (dir / "out").string(), dir / "log") == 0);
    write_config(dir / "probe.json", {{"dataset", {{"csv", "data.csv"}}}, {"steps", 5}, {"directions", 2}});
    const std::string ckpts = " --checkpoint " + (dir / "out/runs/dense_c0.8_s0/checkpoint.json").string() +
                              " --checkpoint " + (dir / "out/runs/soft_c0.8_s0/checkpoint.json").string();
    REQUIRE(cli("probe --config " + (dir / "probe.json").string() + ckpts + " --out " + (dir / "p1").string(), dir / "log") == 0);
    REQUIRE(cli("probe --config " + (dir / "probe.json").string() + ckpts + " --out " + (dir / "p2").string(), dir / "log") == 0);
    CHECK(softnet::read_file(dir / "p1" / "slices.csv") == softnet::read_file(dir / "p2" / "slices.csv"));
    json summary = json::parse(softnet::read_file(dir / "p1" / "flatness.json"));
    CHECK(summary["flatness"].size() == 2);

    const int rc = cli("probe --config " + (dir / "probe.json").string() + " --checkpoint " +
                           (dir / "missing.json").string() + " --out " + (dir / "p3").string(),
                       dir / "log");
    CHECK(rc == softnet::exit_code(softnet::ErrorKind::io));

    softnet::write_file_atomic(dir / "old.json", R"({"format": "softnet-checkpoint", "version": 0})");
    CHECK(cli("probe --config " + (dir / "probe.json").string() + " --checkpoint " + (dir / "old.json").string() +
                  " --out " + (dir / "p4").string(),
              dir / "log") == softnet::exit_code(softnet::ErrorKind::format));
  }
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch_dir("codes");
  CHECK(cli("", dir / "log") == softnet::exit_code(softnet::ErrorKind::config));
  CHECK(cli("run", dir / "log") == softnet::exit_code(softnet::ErrorKind::config));
  CHECK(cli("run --config " + (dir / "absent.json").string(), dir / "log") ==
        softnet::exit_code(softnet::ErrorKind::io));
  softnet::write_file_atomic(dir / "bad.json", R"({"dataset": {"blobs": {}}, "sweep": {"capacities": [2]}})");
  CHECK(cli("run --config " + (dir / "bad.json").string(), dir / "log") ==
        softnet::exit_code(softnet::ErrorKind::config));
  softnet::write_file_atomic(dir / "data.json",
                             R"({"dataset": {"csv": "nothing.csv"}, "train": {"base_epochs": 1}})");
  CHECK(cli("run --config " + (dir / "data.json").string() + " --out " + (dir / "o").string(), dir / "log") ==
        softnet::exit_code(softnet::ErrorKind::io));
  softnet::write_file_atomic(dir / "few.csv", "label,a,b\nx,1,2\nx,2,3\ny,3,1\ny,0,0\n");
  softnet::write_file_atomic(dir / "few.json",
                             R"({"dataset": {"csv": "few.csv"}, "protocol": {"base_classes": 1, "n_way": 1, "k_shot": 5}})");
  CHECK(cli("run --config " + (dir / "few.json").string() + " --out " + (dir / "o2").string(), dir / "log") ==
        softnet::exit_code(softnet::ErrorKind::data));
  CHECK(cli("report --out " + (dir / "empty").string(), dir / "log") == softnet::exit_code(softnet::ErrorKind::io));
}
