//
// Copyright 2026 The privar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//


// Runs the privar binary end to end.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "privar/ingest.hpp"

namespace privar {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("privar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  int Run(const std::string& args) const {
    const std::string cmd = std::string(PRIVAR_CLI) + " " + args + " >" + Path("stdout") +
                            " 2>" + Path("stderr");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string Read(const std::string& name) const {
    std::ifstream in(Path(name));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Metric value from an eval table.
  double Metric(const std::string& table, const std::string& metric) const {
    std::istringstream in(table);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind(metric + ",", 0) == 0) {
        const auto a = line.find(',', metric.size() + 1);
        return std::stod(line.substr(a + 1));
      }
    }
    return -1.0;
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(Run("--help"), 0);
  for (const char* flag : {"--mechanism", "--epsilon", "--epsilon-total", "--delta", "--grid-cells",
                           "--region-side", "--window-len", "--density", "--seed", "--jobs"}) {
    EXPECT_NE(Read("stdout").find(flag), std::string::npos) << flag;
  }
  EXPECT_EQ(Run(""), 1);
  EXPECT_EQ(Run("synth --bogus"), 1);
  EXPECT_EQ(Run("synth --length 10 --epsilon -1"), 1);
  EXPECT_EQ(Run("perturb -i " + Path("missing.csv")), 1);
  EXPECT_EQ(Run("bench -n 999"), 1);
}

TEST_F(CliTest, PerturbIsDeterministic) {
  ASSERT_EQ(Run("synth --length 500 --users 2 --seed 4 -o " + Path("walk.csv")), 0);
  const std::string args = "perturb --mechanism psm --epsilon 0.1 --seed 9 -i " + Path("walk.csv");
  ASSERT_EQ(Run(args + " -o " + Path("a.csv")), 0);
  ASSERT_EQ(Run(args + " -o " + Path("b.csv")), 0);
  EXPECT_EQ(Read("a.csv"), Read("b.csv"));
  ASSERT_EQ(Run("eval -i " + Path("a.csv")), 0);
  EXPECT_GT(Metric(Read("stdout"), "mne"), 0.0);
}

TEST_F(CliTest, StationaryTrPsmReleasesOnce) {
  ASSERT_EQ(Run("synth --kind stationary --length 200 -o " + Path("still.csv")), 0);
  ASSERT_EQ(Run("perturb --mechanism trpsm --epsilon 1 --epsilon-total 5 -i " + Path("still.csv") +
                " -o " + Path("out.csv")),
            0);
  const LoadReport r = LoadTraces(Path("out.csv"));
  ASSERT_EQ(r.traces.size(), 1u);
  const auto& fixes = r.traces[0].fixes;
  ASSERT_EQ(fixes.size(), 200u);
  for (std::size_t i = 2; i < fixes.size(); ++i) {
    EXPECT_EQ(fixes[i].released->lat, fixes[1].released->lat);
    EXPECT_EQ(fixes[i].released->lon, fixes[1].released->lon);
  }
}

TEST_F(CliTest, ExhaustedBudgetTruncatesWithDistinctCode) {
  ASSERT_EQ(Run("synth --kind line --step 50 --length 100 -o " + Path("line.csv")), 0);
  EXPECT_EQ(Run("perturb --mechanism trpsm --epsilon 0.1 --epsilon-total 0.5 -i " +
                Path("line.csv") + " -o " + Path("out.csv")),
            3);
  EXPECT_NE(Read("stderr").find("budget exhausted"), std::string::npos);
  const LoadReport r = LoadTraces(Path("out.csv"));
  EXPECT_LT(r.traces[0].fixes.size(), 100u);
}

TEST_F(CliTest, LaplaceDisplacementAboutTwiceStaircase) {
  ASSERT_EQ(Run("synth --length 20000 -o " + Path("walk.csv")), 0);
  ASSERT_EQ(Run("perturb --mechanism plm --epsilon 0.1 -i " + Path("walk.csv") + " -o " +
                Path("plm.csv")),
            0);
  ASSERT_EQ(Run("perturb --mechanism psm --epsilon 0.1 -i " + Path("walk.csv") + " -o " +
                Path("psm.csv")),
            0);
  ASSERT_EQ(Run("eval -i " + Path("plm.csv")), 0);
  const double plm = Metric(Read("stdout"), "mne");
  ASSERT_EQ(Run("eval -i " + Path("psm.csv")), 0);
  const double psm = Metric(Read("stdout"), "mne");
  // 2/eps against 1/(1 - e^-eps) - 1/2.
  EXPECT_NEAR(plm / psm, 20.0 / 10.008, 0.1);
}

TEST_F(CliTest, EvalIdentityAndMisaligned) {
  ASSERT_EQ(Run("synth --length 50 -o " + Path("walk.csv")), 0);
  EXPECT_EQ(Run("eval -i " + Path("walk.csv")), 1);
  LoadReport r = LoadTraces(Path("walk.csv"));
  for (auto& f : r.traces[0].fixes) f.released = f.point;
  {
    std::ofstream out(Path("id.csv"));
    WriteTracesCsv(out, r.traces);
  }
  ASSERT_EQ(Run("eval --metrics mne catchable -i " + Path("id.csv")), 0);
  EXPECT_NEAR(Metric(Read("stdout"), "mne"), 0.0, 1e-6);
  EXPECT_NEAR(Metric(Read("stdout"), "catchable_pct"), 100.0, 1e-6);
}

TEST_F(CliTest, ConfigFileOverridesDefaults) {
  ASSERT_EQ(Run("synth --length 300 -o " + Path("walk.csv")), 0);
  {
    std::ofstream cfg(Path("run.cfg"));
    cfg << "mechanism=plm\nepsilon=0.5\nseed=3\n";
  }
  ASSERT_EQ(Run("--config " + Path("run.cfg") + " perturb -i " + Path("walk.csv") + " -o " +
                Path("a.csv")),
            0);
  ASSERT_EQ(Run("perturb --mechanism plm --epsilon 0.5 --seed 3 -i " + Path("walk.csv") + " -o " +
                Path("b.csv")),
            0);
  EXPECT_EQ(Read("a.csv"), Read("b.csv"));
}

TEST_F(CliTest, BenchAndSweepEmitCsv) {
  ASSERT_EQ(Run("bench -n 1000 --warmup 10"), 0);
  EXPECT_EQ(Read("stdout").rfind("mechanism,mean_ms,p50_ms,p95_ms,p99_ms,n\n", 0), 0u);
  ASSERT_EQ(Run("synth --length 400 -o " + Path("walk.csv")), 0);
  ASSERT_EQ(Run("sweep --epsilon 0.5 --epsilon 1 --window-len 1 -i " + Path("walk.csv")), 0);
  std::istringstream rows(Read("stdout"));
  std::string line;
  int n = 0;
  while (std::getline(rows, line)) ++n;
  EXPECT_EQ(n, 1 + 3 * 2);
}

}  // namespace
}  // namespace privar
