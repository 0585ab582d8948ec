#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "p2cws/classifiers.hpp"
#include "p2cws/features.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "p2cws_cli_test";

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  const fs::path out = kWork / "stdout.txt";
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = "cd " + kWork.string() + " && " + P2CWS_CLI + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write(const std::string& name, const std::string& text) {
  std::ofstream(kWork / name) << text;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
    ++n;
  }
  return n == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{}));
}

struct Fixture {
  Fixture() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "usage errors exit 1") {
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("synth --bogus").code == 1);
  CHECK(run("stream").code == 1);  // --checkpoint is required
  CHECK(run("synth").code == 1);   // --out is required
  CHECK(run("--help").code == 0);
}

TEST_CASE_FIXTURE(Fixture, "synth is deterministic and rejects short durations") {
  write("ds.json", R"({"split": {"train": 3, "val": 1, "test": 1}, "n_vehicles": 1, "duration": 8})");
  REQUIRE(run("synth ds.json --seed 5 --out a").code == 0);
  REQUIRE(run("synth ds.json --seed 5 --out b").code == 0);
  REQUIRE(run("synth ds.json --seed 6 --out c").code == 0);
  CHECK(same_tree(kWork / "a", kWork / "b"));
  CHECK_FALSE(same_tree(kWork / "a", kWork / "c"));
  const auto manifest = nlohmann::json::parse(slurp(kWork / "a" / "manifest.json"));
  CHECK(manifest.at("scenes").size() == 5);

  write("short.json", R"({"duration": 3})");
  const Run r = run("synth short.json --out s");
  CHECK(r.code == 2);
  CHECK(r.err.find("context_max + horizon_max") != std::string::npos);
  CHECK(run("synth missing.json --out s").code == 2);
  write("typo.json", R"({"durration": 8})");
  CHECK(run("synth typo.json --out s").code == 2);
}

TEST_CASE_FIXTURE(Fixture, "extract row length and horizon truncation") {
  write("ds.json", R"({"split": {"train": 2, "val": 1, "test": 1}, "duration": 10})");
  REQUIRE(run("synth ds.json --out d").code == 0);
  REQUIRE(run("extract d --out w50.jsonl").code == 0);
  const Run r = run("extract d --with-state --out w51.jsonl");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("windows ") == 0);
  CHECK(r.out.find("not_crossing") != std::string::npos);
  const auto w50 = p2cws::load_dataset(kWork / "w50.jsonl");
  const auto w51 = p2cws::load_dataset(kWork / "w51.jsonl");
  REQUIRE_FALSE(w50.empty());
  CHECK(w50.size() == w51.size());
  for (const auto& w : w50) CHECK(w.window.dim() == 50);
  for (const auto& w : w51) CHECK(w.window.dim() == 51);

  // A longer horizon drops exactly the ticks whose label falls past the end.
  REQUIRE(run("extract d/scene_0000.jsonl --horizon 0.5 --out h05.jsonl").code == 0);
  REQUIRE(run("extract d/scene_0000.jsonl --horizon 1.5 --out h15.jsonl").code == 0);
  const auto h05 = p2cws::load_dataset(kWork / "h05.jsonl");
  const auto h15 = p2cws::load_dataset(kWork / "h15.jsonl");
  CHECK(h05.size() - h15.size() == 15);
  CHECK(h05.front().window.t_end == h15.front().window.t_end);
  CHECK(h05.back().window.t_end - h15.back().window.t_end == doctest::Approx(1.0));

  CHECK(run("extract d --context 20 --out x.jsonl").code == 2);
}

TEST_CASE_FIXTURE(Fixture, "train, eval and stream round trip") {
  write("ds.json",
        R"({"scripts": ["walk_through", "cross_immediately"], "split": {"train": 6, "val": 2, "test": 2},
            "n_vehicles": 1, "duration": 6, "seed": 4})");
  write("cfg.json", R"({"model": {"architecture": "ffnn", "n_layers": 2, "n_hidden": 16},
                        "train": {"max_epochs": 40, "learning_rate": 0.01, "patience": 40}})");
  REQUIRE(run("synth ds.json --out d").code == 0);
  REQUIRE(run("extract d --with-state --out w.jsonl").code == 0);
  const Run t = run("train w.jsonl --config cfg.json --seed 3 --out m.json");
  REQUIRE(t.code == 0);
  REQUIRE(run("train w.jsonl --config cfg.json --seed 3 --out m2.json").code == 0);
  CHECK(slurp(kWork / "m.json") == slurp(kWork / "m2.json"));
  CHECK(fs::exists(kWork / "m.json.log.json"));
  const double val_acc = std::stod(t.out.substr(t.out.find("val_accuracy ") + 13));
  CHECK(val_acc >= 0.99);

  REQUIRE(run("eval --checkpoint m.json w.jsonl --split test --out report.json").code == 0);
  const auto report = nlohmann::json::parse(slurp(kWork / "report.json"));
  CHECK(report.at("accuracy").get<double>() >= 0.99);
  CHECK(report.at("tp").get<int>() + report.at("fn").get<int>() > 0);

  // No validation split.
  REQUIRE(run("extract d/scene_0000.jsonl d/scene_0001.jsonl --out trainonly.jsonl").code == 0);
  CHECK(run("train trainonly.jsonl --config cfg.json --out m3.json").code == 2);

  // The stream horizon must be one of the checkpoint's heads.
  write("s.json", R"({"stream": {"horizon": 1.5, "threshold": 0.5}})");
  write("s10.json", R"({"stream": {"horizon": 1.0}})");
  const Run s = run("stream d/scene_0001.jsonl --checkpoint m.json --config s.json");
  CHECK(s.code == 0);
  CHECK(s.err.find("frames 181") != std::string::npos);
  std::istringstream lines(s.out);
  std::string line;
  while (std::getline(lines, line)) CHECK(nlohmann::json::parse(line).at("type") == "warning");
  const Run never = run("stream d/scene_0001.jsonl --checkpoint m.json --config s.json --threshold 1.01");
  CHECK(never.code == 0);
  CHECK(never.out.empty());
  CHECK(run("stream d/scene_0001.jsonl --checkpoint m.json --config s10.json").code == 2);
  write("garbage.jsonl", "{not json}\n");
  CHECK(run("stream garbage.jsonl --checkpoint m.json --config s.json").code == 2);
}

TEST_CASE_FIXTURE(Fixture, "eval orientation and bench") {
  const Run r = run("eval --orientation --n 360");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("mae").get<double>() <= 1e-6);
  CHECK(j.at("acc_45").get<double>() == 100.0);
  CHECK(run("eval --orientation --ablation").code == 1);

  const Run b = run("bench --stage orientation --reps 2");
  REQUIRE(b.code == 0);
  CHECK(nlohmann::json::parse(b.out).at("median_fps").get<double>() > 0.0);
  CHECK(run("bench --stage nonsense").code == 2);
}
