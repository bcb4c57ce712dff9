#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("difflog_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + DIFFLOG_CLI_PATH + "\" " + args + " >\"" +
                            out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string data(const std::string& name) const {
    return std::string(DIFFLOG_DATA_DIR) + "/" + name;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("gen-data --train 10x2").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("gen-data --out " + (dir_ / "g").string() + " --train 10x1").code, 2);
}

TEST_F(Cli, GenDataIsReproducible) {
  const std::string args = " --seed 7 --train 20x2,20x3 --test 5x2..10";
  ASSERT_EQ(run("gen-data --out " + (dir_ / "a").string() + args).code, 0);
  ASSERT_EQ(run("gen-data --out " + (dir_ / "b").string() + args).code, 0);
  for (const char* f : {"train.jsonl", "test.jsonl"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const auto ma = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(dir_ / "b" / "manifest.json"));
  EXPECT_EQ(ma["outputs"], mb["outputs"]);
  EXPECT_EQ(ma["outputs"]["train"]["records"], 40);
  EXPECT_EQ(ma["outputs"]["test"]["records"], 45);
  EXPECT_EQ(ma["outputs"]["train"]["sha256"].get<std::string>().size(), 64u);
}

TEST_F(Cli, InferNiece) {
  spit(dir_ / "kb.txt", "0.9::brother(D, R)\n0.8::daughter(R, K)\n");
  spit(dir_ / "rules.priors", "compose brother daughter niece\n");
  const CliRun r = run("infer --program " + data("kinship.dsr") + " --rules " +
                    (dir_ / "rules.priors").string() + " --kb " + (dir_ / "kb.txt").string() +
                    " --query D,K");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("niece 0.72\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("prediction niece 0.72"), std::string::npos);
  EXPECT_NE(r.out.find("proofs 1\n"), std::string::npos);
  EXPECT_NE(r.out.find("brother(D, R)::0.9"), std::string::npos);
  EXPECT_NE(r.out.find("daughter(R, K)::0.8"), std::string::npos);
}

TEST_F(Cli, InferUnknownEntities) {
  spit(dir_ / "kb.txt", "brother(D, R)\n");
  const CliRun r = run("infer --rules " + data("kinship_oracle.priors") + " --kb " +
                       (dir_ / "kb.txt").string() + " --query X,Y");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("no answer"), std::string::npos);
}

TEST_F(Cli, InferTopK) {
  // Four proofs of niece(A, C); keeping one of them changes the probability.
  spit(dir_ / "kb.txt",
       "0.5::brother(A, B1)\ndaughter(B1, C)\n0.5::brother(A, B2)\ndaughter(B2, C)\n"
       "0.5::sister(A, B3)\ndaughter(B3, C)\n0.5::sister(A, B4)\ndaughter(B4, C)\n");
  spit(dir_ / "rules.priors", "compose brother daughter niece\ncompose sister daughter niece\n");
  const std::string base = "infer --rules " + (dir_ / "rules.priors").string() + " --kb " +
                           (dir_ / "kb.txt").string() + " --query A,C";
  const CliRun one = run(base + " --topk 1");
  const CliRun three = run(base + " --topk 3");
  ASSERT_EQ(one.code, 0);
  ASSERT_EQ(three.code, 0);
  EXPECT_NE(one.out.find("top-k 1"), std::string::npos);
  EXPECT_NE(three.out.find("top-k 3"), std::string::npos);
  EXPECT_NE(one.out.find("niece 0.5\n"), std::string::npos) << one.out;
  EXPECT_NE(three.out.find("niece 0.875\n"), std::string::npos) << three.out;
}

TEST_F(Cli, InferBadKb) {
  spit(dir_ / "kb.txt", "cousin(A, B)\n");
  EXPECT_EQ(run("infer --kb " + (dir_ / "kb.txt").string() + " --query A,B").code, 2);
}

TEST_F(Cli, TrainEvalExport) {
  ASSERT_EQ(run("gen-data --out " + dir_.string() + " --seed 3 --train 16x2,16x3 --test 4x2..4")
                .code,
            0);
  const std::string out = (dir_ / "run").string();
  const CliRun t = run("train --program " + data("kinship.dsr") + " --train " +
                    (dir_ / "train.jsonl").string() + " --out " + out +
                    " --epochs 2 --sample-rules 40 --threads 1");
  ASSERT_EQ(t.code, 0) << t.err;
  const auto manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  EXPECT_EQ(manifest["config"]["sample_rules"], 40);
  EXPECT_EQ(manifest["inputs"]["train"]["sha256"].get<std::string>().size(), 64u);
  std::istringstream metrics(slurp(fs::path(out) / "metrics.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec["epoch"], ++lines);
    EXPECT_EQ(rec["split"], "train");
  }
  EXPECT_EQ(lines, 2);

  const std::string ckpt = (fs::path(out) / "checkpoint.json").string();
  const CliRun e = run("eval --checkpoint " + ckpt + " --test " + (dir_ / "test.jsonl").string() +
                    " --report " + (dir_ / "report.jsonl").string());
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("  all  "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "report.jsonl"));

  const CliRun x = run("export-rules --checkpoint " + ckpt + " --top 10");
  ASSERT_EQ(x.code, 0) << x.err;
  EXPECT_EQ(std::count(x.out.begin(), x.out.end(), '\n'), 10);
  const CliRun zero = run("export-rules --checkpoint " + ckpt + " --top 0");
  EXPECT_EQ(zero.code, 0);
  EXPECT_EQ(zero.out, "");
  const CliRun m = run("export-rules --checkpoint " + ckpt + " --top 92 --match " +
                    data("kinship_oracle.priors"));
  EXPECT_EQ(m.code, 0);
  EXPECT_NE(m.out.find("# matches "), std::string::npos);
}

TEST_F(Cli, EvalOracleRules) {
  ASSERT_EQ(run("gen-data --out " + dir_.string() + " --seed 5 --train 1x2 --test 5x2..10").code,
            0);
  const CliRun e = run("eval --rules " + data("kinship_oracle.priors") + " --test " +
                    (dir_ / "test.jsonl").string());
  ASSERT_EQ(e.code, 0) << e.err;
  std::size_t perfect = 0;
  for (auto p = e.out.find("1.0000\n"); p != std::string::npos; p = e.out.find("1.0000\n", p + 1)) {
    ++perfect;
  }
  EXPECT_EQ(perfect, 10u) << e.out;
}

TEST_F(Cli, EvalEmptyTestFile) {
  spit(dir_ / "empty.jsonl", "");
  const CliRun e = run("eval --rules " + data("kinship_oracle.priors") + " --test " +
                    (dir_ / "empty.jsonl").string());
  EXPECT_EQ(e.code, 0) << e.err;
}

TEST_F(Cli, EvalMissingCheckpoint) {
  spit(dir_ / "empty.jsonl", "");
  EXPECT_EQ(run("eval --checkpoint " + (dir_ / "nope.json").string() + " --test " +
                (dir_ / "empty.jsonl").string())
                .code,
            2);
}

TEST_F(Cli, CheckWmc) {
  const CliRun r = run("check-wmc --formulas 200 --gradient-formulas 50");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}
