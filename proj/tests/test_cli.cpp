#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path r = [] {
    fs::path p = fs::temp_directory_path() / "adiva_test_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string err;
};

Result run(const std::string& args) {
  const fs::path err = root() / "stderr.txt";
  const std::string cmd = std::string(ADIVA_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string p(const std::string& rel) { return (root() / rel).string(); }

// synth-data -> train -> synthesize -> eval under `dir`.
void pipeline(const std::string& dir, const std::string& extra = "") {
  ASSERT_EQ(run("synth-data --preset tiny --seed 4 --out " + p(dir + "/d") + extra).code, 0);
  ASSERT_EQ(run("train --preset tiny --seed 4 --data " + p(dir + "/d/data.zfc") + " --out " + p(dir + "/t") + extra).code, 0);
  ASSERT_EQ(run("synthesize --data " + p(dir + "/d/data.zfc") + " --checkpoint " + p(dir + "/t/checkpoint.zfc") +
                " --out " + p(dir + "/s"))
                .code,
            0);
  ASSERT_EQ(run("eval --data " + p(dir + "/d/data.zfc") + " --checkpoint " + p(dir + "/t/checkpoint.zfc") + " --synth " +
                p(dir + "/s/synthesis.zfc") + " --out " + p(dir + "/e"))
                .code,
            0);
}

}  // namespace

TEST(Cli, TinyPipelineProducesFullReport) {
  pipeline("run1");
  const auto j = nlohmann::json::parse(slurp(root() / "run1/e/metrics.json"));
  for (const char* key : {"acc_czsl", "U", "S", "H", "fid", "incorrectness", "histograms", "seed", "config_hash", "build_id", "config"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["seed"], 4);
  for (const char* key : {"acc_czsl", "U", "S", "H"}) {
    EXPECT_GE(j[key].get<double>(), 0.0);
    EXPECT_LE(j[key].get<double>(), 100.0);
  }
  EXPECT_EQ(j["histograms"].size(), 4u);
  EXPECT_TRUE(fs::exists(root() / "run1/e/histograms.csv"));
  EXPECT_TRUE(fs::exists(root() / "run1/d/gt.zfc"));
  EXPECT_TRUE(fs::exists(root() / "run1/s/class_stats.json"));
  const std::string log = slurp(root() / "run1/t/train_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
}

TEST(Cli, SameSeedGivesIdenticalReport) {
  pipeline("run2");
  pipeline("run3");
  EXPECT_EQ(slurp(root() / "run2/e/metrics.json"), slurp(root() / "run3/e/metrics.json"));
  EXPECT_EQ(slurp(root() / "run2/t/checkpoint.zfc"), slurp(root() / "run3/t/checkpoint.zfc"));
}

TEST(Cli, ResumeMatchesUninterruptedTraining) {
  const std::string d = p("resume/d");
  ASSERT_EQ(run("synth-data --preset tiny --seed 6 --out " + d).code, 0);
  ASSERT_EQ(run("train --preset tiny --seed 6 --data " + d + "/data.zfc --out " + p("resume/full")).code, 0);
  ASSERT_EQ(run("train --preset tiny --seed 6 --epochs 1 --data " + d + "/data.zfc --out " + p("resume/half")).code, 0);
  ASSERT_EQ(run("train --data " + d + "/data.zfc --checkpoint " + p("resume/half/checkpoint.zfc") + " --out " +
                p("resume/rest"))
                .code,
            0);
  EXPECT_EQ(slurp(root() / "resume/full/checkpoint.zfc"), slurp(root() / "resume/rest/checkpoint.zfc"));
  const std::string full = slurp(root() / "resume/full/train_log.jsonl");
  const std::string trace = slurp(root() / "resume/half/train_log.jsonl") + slurp(root() / "resume/rest/train_log.jsonl");
  EXPECT_EQ(trace, full);
}

TEST(Cli, VisualDimMismatchIsShapeError) {
  pipeline("mm");
  {
    std::ofstream f(root() / "wide.json");
    f << R"({"preset": "tiny", "synth": {"visual_dim": 9}})";
  }
  ASSERT_EQ(run("synth-data --config " + p("wide.json") + " --seed 4 --out " + p("mm/wide")).code, 0);
  const Result r =
      run("eval --data " + p("mm/wide/data.zfc") + " --checkpoint " + p("mm/t/checkpoint.zfc") + " --out " + p("mm/e2"));
  EXPECT_EQ(r.code, 3);
  const auto e = nlohmann::json::parse(r.err);
  EXPECT_EQ(e["error"]["kind"], "ShapeMismatch");
  EXPECT_EQ(e["error"]["exit_code"], 3);
}

TEST(Cli, ErrorFamiliesMapToExitCodes) {
  {
    std::ofstream f(root() / "bad.json");
    f << R"({"hyper": {"nope": 1}})";
  }
  Result r = run("synth-data --config " + p("bad.json") + " --out " + p("err"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["kind"], "UnknownKey");
  r = run("train --preset tiny --data " + p("missing.zfc") + " --out " + p("err"));
  EXPECT_EQ(r.code, 5);
  {
    std::ofstream f(root() / "garbage.zfc");
    f << "not a container";
  }
  r = run("train --preset tiny --data " + p("garbage.zfc") + " --out " + p("err"));
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, GradcheckReportsSmallError) {
  ASSERT_EQ(run("gradcheck --out " + p("gc")).code, 0);
  const auto j = nlohmann::json::parse(slurp(root() / "gc/gradcheck.json"));
  EXPECT_LT(j["max_rel_error"].get<double>(), 1e-4);
  EXPECT_GT(j["tensors"].size(), 10u);
  EXPECT_TRUE(j["audit"].contains("config_hash"));
}

TEST(Cli, InspectionCommandsWriteOnlyBelowOut) {
  const std::string d = p("inspect/d");
  ASSERT_EQ(run("synth-data --preset tiny --seed 2 --out " + d).code, 0);
  ASSERT_EQ(run("train --preset tiny --seed 2 --data " + d + "/data.zfc --out " + p("inspect/t")).code, 0);
  const auto before = std::distance(fs::directory_iterator(root() / "inspect"), fs::directory_iterator());
  const std::string common = " --data " + d + "/data.zfc --checkpoint " + p("inspect/t/checkpoint.zfc");
  ASSERT_EQ(run("export-attn" + common + " --samples 3 --out " + p("inspect/o/x")).code, 0);
  ASSERT_EQ(run("report" + common + " --gt " + d + "/gt.zfc --out " + p("inspect/o/r")).code, 0);
  EXPECT_EQ(std::distance(fs::directory_iterator(root() / "inspect"), fs::directory_iterator()), before + 1);

  const std::string attn = slurp(root() / "inspect/o/x/attention.csv");
  EXPECT_EQ(attn.rfind("# config_hash=", 0), 0u);
  EXPECT_EQ(std::count(attn.begin(), attn.end(), '\n'), 2 + 3 * 4);
  const auto rep = nlohmann::json::parse(slurp(root() / "inspect/o/r/report.json"));
  EXPECT_TRUE(rep.contains("variance_spearman"));
  EXPECT_TRUE(rep.contains("localization"));
  for (const char* f : {"corr_attributes.csv", "corr_priors.csv", "corr_real.csv", "histograms.csv"}) {
    EXPECT_TRUE(fs::exists(root() / "inspect/o/r" / f)) << f;
  }
}
