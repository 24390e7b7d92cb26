#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Outcome run(const std::string& args) {
  const std::string cmd = std::string(HOMWARP_CLI) + " " + args + " 2>&1";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int data_lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("homwarp_cli_" + std::string(
                                                           ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  [[nodiscard]] std::string at(const std::string& name) const { return (dir_ / name).string(); }

  // 10 synthetic images x 3 samples, desk geometry
  Outcome gen(const std::string& name, int seed = 7, const std::string& extra = "") {
    return run("gen-data --synthetic 10 --per-image 3 --seed " + std::to_string(seed) + " --out " + at(name) + " " +
               extra);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataIsReproducible) {
  const Outcome a = gen("a.hstn");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(a.out.find("records 30"), std::string::npos);
  EXPECT_NE(a.out.find("# command = gen-data"), std::string::npos);
  ASSERT_EQ(gen("b.hstn").code, 0);
  EXPECT_EQ(slurp(at("a.hstn")), slurp(at("b.hstn")));
  ASSERT_EQ(gen("c.hstn", 8).code, 0);
  EXPECT_NE(slurp(at("a.hstn")), slurp(at("c.hstn")));
  ASSERT_EQ(gen("d.hstn", 7, "--threads 4").code, 0);
  EXPECT_EQ(slurp(at("a.hstn")), slurp(at("d.hstn")));
}

TEST_F(Cli, GenDataPerImageOne) {
  const Outcome r = run("gen-data --synthetic 5 --per-image 1 --out " + at("one.hstn"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("records 5"), std::string::npos);
}

TEST_F(Cli, InputErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("gen-data --synthetic 5 --per-image 0 --out " + at("x.hstn")).code, 2);
  EXPECT_EQ(run("gen-data --out " + at("x.hstn")).code, 2);
  EXPECT_EQ(run("gen-data --images " + at("missing") + " --out " + at("x.hstn")).code, 2);
  EXPECT_EQ(run("gen-data --synthetic 5 --preset huge --out " + at("x.hstn")).code, 2);
}

TEST_F(Cli, CorruptInputsExitWithFour) {
  { std::ofstream(at("bad.hstn")) << "not a dataset"; }
  const Outcome r = run("stats --data " + at("bad.hstn"));
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(r.out.rfind("error: ", 0), 0u) << r.out;
  ASSERT_EQ(gen("a.hstn").code, 0);
  fs::create_directories(at("ck"));
  { std::ofstream(at("ck/manifest.txt")) << "mode = single\nstages = 1\n"; }
  { std::ofstream(at("ck/stage0.stnh")) << "garbage"; }
  EXPECT_EQ(run("eval --data " + at("a.hstn") + " --ckpt " + at("ck")).code, 4);
}

TEST_F(Cli, StatsWritesHistograms) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  const Outcome r = run("stats --data " + at("a.hstn") + " --out-csv " + at("s.csv") + " --out-svg " + at("s.svg"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("h31"), std::string::npos);
  const std::string csv = slurp(at("s.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "element,bin_lo,bin_hi,count");
  EXPECT_EQ(data_lines(at("s.csv")), 1 + 8 * 64);
  EXPECT_EQ(slurp(at("s.svg")).rfind("<svg", 0), 0u);
}

TEST_F(Cli, OracleFixtureScoresZero) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  ASSERT_EQ(run("make-fixture --kind oracle --stages 2 --out " + at("oracle")).code, 0);
  const Outcome single = run("eval --data " + at("a.hstn") + " --ckpt " + at("oracle") + " --mode single");
  ASSERT_EQ(single.code, 0) << single.out;
  EXPECT_NE(single.out.find("mean corner error 0.0000 px"), std::string::npos) << single.out;
  const Outcome hier = run("eval --data " + at("a.hstn") + " --ckpt " + at("oracle") +
                       " --synthetic 10 --corpus-seed 7 --report " + at("r.csv"));
  ASSERT_EQ(hier.code, 0) << hier.out;
  EXPECT_NE(hier.out.find("mode hierarchical stages 2"), std::string::npos) << hier.out;
  EXPECT_NE(hier.out.find("mean corner error 0.0000 px"), std::string::npos) << hier.out;
  EXPECT_EQ(data_lines(at("r.csv")), 31);
}

TEST_F(Cli, IdentityFixtureScoresTheBaseline) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  ASSERT_EQ(run("make-fixture --kind identity --out " + at("id")).code, 0);
  const Outcome r = run("eval --data " + at("a.hstn") + " --ckpt " + at("id"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto mean_at = r.out.find("mean corner error ");
  const auto base_at = r.out.find("identity baseline ");
  ASSERT_NE(mean_at, std::string::npos);
  ASSERT_NE(base_at, std::string::npos);
  const double mean = std::stod(r.out.substr(mean_at + 18));
  const double base = std::stod(r.out.substr(base_at + 18));
  EXPECT_GT(base, 0.0);
  EXPECT_EQ(mean, base);
}

TEST_F(Cli, TrainEvalAndBench) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  const std::string budget = " --batch 4 --warmup 1 --decay-steps 2 --log-every 0";
  const Outcome t = run("train --data " + at("a.hstn") + " --mode sequence --stages 2 --out " + at("m") + budget);
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"manifest.txt", "stage0.stnh", "stage1.stnh", "curve.csv", "curve.svg"})
    EXPECT_TRUE(fs::exists(dir_ / "m" / f)) << f;
  EXPECT_EQ(data_lines(dir_ / "m" / "curve.csv"), 1 + 3);  // one curve for the jointly trained chain
  const Outcome e = run("eval --data " + at("a.hstn") + " --ckpt " + at("m"));
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("mode sequence stages 2"), std::string::npos);

  const Outcome b = run("bench --ckpt " + at("m") + " --stages 2 --reps 10 --csv " + at("t.csv"));
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(b.out.find("n=2"), std::string::npos);
  EXPECT_EQ(data_lines(at("t.csv")), 3);
  EXPECT_EQ(run("bench --ckpt " + at("m") + " --stages 2 --reps 3").code, 2);
}

TEST_F(Cli, HierarchicalTrainingNeedsSourceImages) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  const std::string budget = " --batch 4 --warmup 1 --decay-steps 1 --log-every 0";
  EXPECT_EQ(run("train --data " + at("a.hstn") + " --mode hierarchical --stages 2 --out " + at("h") + budget).code, 2);
  const Outcome ok = run("train --data " + at("a.hstn") + " --mode hierarchical --stages 2 --synthetic 10 --corpus-seed 7 --out " +
                     at("h") + budget);
  ASSERT_EQ(ok.code, 0) << ok.out;
  EXPECT_TRUE(fs::exists(dir_ / "h" / "stage1.stnh"));
  EXPECT_TRUE(fs::exists(dir_ / "h" / "stage1_data.hstn"));
}

TEST_F(Cli, DivergenceExitsWithThree) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  const Outcome r = run("train --data " + at("a.hstn") + " --out " + at("m") +
                    " --batch 4 --warmup 0 --decay-steps 20 --lr 1e30 --log-every 0");
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST_F(Cli, ModelInputMustMatchTheData) {
  ASSERT_EQ(run("gen-data --synthetic 3 --per-image 1 --side 48 --out " + at("s48.hstn")).code, 0);
  EXPECT_EQ(run("train --data " + at("s48.hstn") + " --out " + at("m") + " --decay-steps 1 --warmup 0").code, 4);
}

TEST_F(Cli, SweepWritesOneRowPerPair) {
  ASSERT_EQ(gen("a.hstn").code, 0);
  ASSERT_EQ(gen("b.hstn", 9).code, 0);
  const Outcome r = run("sweep --data " + at("a.hstn") + " --test " + at("b.hstn") +
                    " --pairs 1,1,1,0 --decay-steps 1 --out " + at("w.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(data_lines(at("w.csv")), 3);
  EXPECT_EQ(run("sweep --data " + at("a.hstn") + " --test " + at("b.hstn") + " --pairs 1,1,1").code, 2);
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
  { std::ofstream(at("cfg.toml")) << "[gen-data]\nsynthetic = 4\nper-image = 2\n"; }
  const Outcome r = run("--config " + at("cfg.toml") + " gen-data --out " + at("a.hstn"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("records 8"), std::string::npos) << r.out;
}
