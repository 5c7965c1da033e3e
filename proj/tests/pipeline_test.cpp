#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* kBinary = BUNDLEFORGE_BIN;

int run(const std::string& args) {
  const std::string cmd = std::string(kBinary) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path test_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("bundleforge_pipe_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_config(const fs::path& path, const std::string& extra) {
  std::ofstream out(path);
  out << "seed=19\n"
      << "n_items=120\nn_users=400\nn_bundles=160\n"
      << "d=24\nd_t=16\nd_m=12\nfb_dim=16\nfb_epochs=6\n"
      << "epochs=8\npatience=8\nbatch_size=64\nn_themes=8\n"
      << extra;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("pipeline: synth -> feedback -> teacher -> train -> eval end to end") {
  auto dir = test_dir("smoke");
  const auto cfg = dir / "cfg";
  write_config(cfg, "out_dir=" + (dir / "out").string() + "\n");
  const std::string c = " --config " + cfg.string();

  REQUIRE(run("synth" + c) == 0);
  CHECK(fs::exists(dir / "out/dataset/interactions.tsv"));
  CHECK(fs::exists(dir / "out/dataset/idmap.tsv"));
  REQUIRE(run("feedback" + c) == 0);
  CHECK(fs::exists(dir / "out/feedback.bndf"));
  REQUIRE(run("train-teacher" + c) == 0);
  CHECK(fs::exists(dir / "out/teacher.bndc"));
  CHECK(fs::exists(dir / "out/metrics_teacher.tsv"));
  REQUIRE(run("train" + c) == 0);
  CHECK(fs::exists(dir / "out/student.bndc"));
  REQUIRE(run("eval" + c) == 0);

  const auto json = read_bytes(dir / "out/reports.json");
  for (const char* scenario : {"overall", "pop2lt", "lt2pop", "pop2pop", "lt2lt"})
    CHECK(json.find("\"scenario\": \"" + std::string(scenario) + "\"") !=
          std::string::npos);

  // metrics log carries the documented columns
  std::ifstream log(dir / "out/metrics_student.tsv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "epoch\tL_b\tL_d\tval_recall@20");

  REQUIRE(run("report" + c) == 0);
  CHECK(fs::exists(dir / "out/score_distribution.csv"));
}

TEST_CASE("pipeline: eval twice produces byte-identical JSON") {
  auto dir = test_dir("determinism");
  const auto cfg = dir / "cfg";
  write_config(cfg, "out_dir=" + (dir / "out").string() + "\n");
  const std::string c = " --config " + cfg.string();
  REQUIRE(run("synth" + c) == 0);
  REQUIRE(run("feedback" + c) == 0);
  REQUIRE(run("train-teacher" + c) == 0);
  REQUIRE(run("train" + c) == 0);
  REQUIRE(run("eval" + c) == 0);
  const auto first = read_bytes(dir / "out/reports.json");
  REQUIRE(run("eval" + c) == 0);
  CHECK(first == read_bytes(dir / "out/reports.json"));
}

TEST_CASE("pipeline: distill none is reproducible and teacher-free") {
  auto dir = test_dir("backbone");
  const auto cfg = dir / "cfg";
  write_config(cfg, "out_dir=" + (dir / "out").string() + "\ndistill=none\n");
  const std::string c = " --config " + cfg.string();
  REQUIRE(run("synth" + c) == 0);
  REQUIRE(run("feedback" + c) == 0);
  // No teacher checkpoint needed for the backbone configuration.
  REQUIRE(run("train" + c) == 0);
  REQUIRE(run("eval" + c) == 0);
  const auto first = read_bytes(dir / "out/reports.json");
  const auto ckpt = read_bytes(dir / "out/student.bndc");

  fs::remove(dir / "out/student.bndc");
  fs::remove(dir / "out/reports.json");
  REQUIRE(run("train" + c) == 0);
  REQUIRE(run("eval" + c) == 0);
  CHECK(first == read_bytes(dir / "out/reports.json"));
  CHECK(ckpt == read_bytes(dir / "out/student.bndc"));
}

TEST_CASE("pipeline: categorized exit codes") {
  auto dir = test_dir("errors");
  const auto cfg = dir / "cfg";
  write_config(cfg, "out_dir=" + (dir / "out").string() + "\n");
  const std::string c = " --config " + cfg.string();
  // prerequisite missing: eval before anything exists
  CHECK(run("eval" + c) == 4);
  // config error: bad key
  std::ofstream(dir / "bad.cfg") << "bogus_key=1\n";
  CHECK(run("synth --config " + (dir / "bad.cfg").string()) == 2);
  // train with distillation but no teacher
  REQUIRE(run("synth" + c) == 0);
  REQUIRE(run("feedback" + c) == 0);
  CHECK(run("train" + c) == 4);
  // ablate needs a variant
  CHECK(run("ablate" + c) == 2);
}

TEST_CASE("pipeline: ablate trains a variant checkpoint") {
  auto dir = test_dir("ablate");
  const auto cfg = dir / "cfg";
  write_config(cfg, "out_dir=" + (dir / "out").string() + "\nepochs=3\n");
  const std::string c = " --config " + cfg.string();
  REQUIRE(run("synth" + c) == 0);
  REQUIRE(run("feedback" + c) == 0);
  REQUIRE(run("ablate --variant wo_ui" + c) == 0);
  CHECK(fs::exists(dir / "out/student_wo_ui.bndc"));
  CHECK(fs::exists(dir / "out/metrics_wo_ui.tsv"));
}

TEST_CASE("pipeline: sweep compares backbone and distilled checkpoints") {
  auto dir = test_dir("sweep");
  const auto cfg = dir / "cfg";
  write_config(cfg, "out_dir=" + (dir / "out").string() + "\nepochs=3\n");
  const std::string c = " --config " + cfg.string();
  REQUIRE(run("synth" + c) == 0);
  REQUIRE(run("feedback" + c) == 0);
  REQUIRE(run("train-teacher" + c) == 0);
  REQUIRE(run("train" + c) == 0);

  const auto backbone_cfg = dir / "cfg_backbone";
  write_config(backbone_cfg,
               "out_dir=" + (dir / "out").string() + "\ndistill=none\n" +
                   "student_checkpoint=" + (dir / "out/backbone.bndc").string() + "\n");
  REQUIRE(run("train --config " + backbone_cfg.string()) == 0);

  const auto sweep_cfg = dir / "cfg_sweep";
  write_config(sweep_cfg,
               "out_dir=" + (dir / "out").string() + "\n" +
                   "backbone_checkpoint=" + (dir / "out/backbone.bndc").string() + "\n");
  REQUIRE(run("sweep --config " + sweep_cfg.string()) == 0);
  const auto json = read_bytes(dir / "out/sweep.json");
  CHECK(json.find("\"ratio\": 0.5") != std::string::npos);
  CHECK(json.find("\"ratio\": 0.1") != std::string::npos);
  CHECK(json.find("improvement_pct") != std::string::npos);
}
