// Copyright 2026 The hospeq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HOSPEQ_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hospeq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    baseline_ = hospeq::fixtures::data_file("baseline.json");
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  std::string baseline_;
};

}  // namespace

TEST_F(Cli, SolveBaseline) {
  const auto r = run("solve " + baseline_);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("primary           0.43"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("secondary         1.53"), std::string::npos);
  EXPECT_NE(r.out.find("0.7757"), std::string::npos);
}

TEST_F(Cli, StartPointsAgree) {
  const auto a = run("solve " + baseline_ + " --start reference --format csv");
  const auto b = run("solve " + baseline_ + " --start zero --format csv");
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  auto waits = [](const std::string& csv) {
    std::vector<double> w;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("wait,", 0) == 0) w.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    return w;
  };
  const auto wa = waits(a.out), wb = waits(b.out);
  ASSERT_EQ(wa.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(wa[i], wb[i], 1e-6);
}

TEST_F(Cli, InvalidScenarioIsValidationExit) {
  auto s = hospeq::fixtures::calibrated_baseline();
  s.levels[0].capacity = -5.0;
  hospeq::write_json_file(dir_ / "bad.json", hospeq::to_json(s));
  const auto r = run("solve " + (dir_ / "bad.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("levels[0].capacity"), std::string::npos) << r.out;
  std::ofstream(dir_ / "garbage.json") << "{ not json";
  EXPECT_EQ(run("solve " + (dir_ / "garbage.json").string()).code, 2);
  EXPECT_EQ(run("solve " + (dir_ / "missing.json").string()).code, 2);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("solve " + baseline_ + " --start nowhere").code, 1);
  EXPECT_EQ(run("study " + baseline_ + " upskill 0 42 " + (dir_ / "o").string()).code, 1);
  EXPECT_EQ(run("study " + baseline_ + " no_such_thing 10").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, NumericalFailureExit) {
  const auto r = run("solve " + baseline_ + " --grad-tol 1e-300");
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST_F(Cli, StudyWritesReportsAndIsReproducible) {
  const auto out1 = dir_ / "a", out2 = dir_ / "b";
  ASSERT_EQ(run("study " + baseline_ + " upskill 200 42 " + out1.string()).code, 0);
  ASSERT_EQ(run("study " + baseline_ + " upskill --instances 200 --seed 42 --threads 3 --out " + out2.string()).code,
            0);
  for (const char* f : {"upskill.csv", "upskill.txt", "upskill.json", "manifest.json"}) {
    ASSERT_TRUE(fs::exists(out1 / f)) << f;
    EXPECT_EQ(slurp(out1 / f), slurp(out2 / f)) << f;
  }
  const auto manifest = hospeq::read_json_file(out1 / "manifest.json");
  EXPECT_EQ(manifest.at("seed").get<int>(), 42);
  EXPECT_EQ(manifest.at("instances").get<int>(), 200);
  EXPECT_EQ(manifest.at("intervention").at("name"), "upskill");
  const auto rendered = run("report " + (out1 / "upskill.json").string() + " --format csv");
  EXPECT_EQ(rendered.out, slurp(out1 / "upskill.csv"));
}

TEST_F(Cli, StudyUnwritableOutput) {
  std::ofstream(dir_ / "file") << "x";
  EXPECT_EQ(run("study " + baseline_ + " upskill 5 1 " + (dir_ / "file" / "sub").string()).code, 2);
}

TEST_F(Cli, CalibrateRoundTrip) {
  const auto path = dir_ / "cal.json";
  const auto r = run("calibrate " + baseline_ + " --out " + path.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("mild_share 0.479"), std::string::npos);
  const auto cal = hospeq::case_study::calibration_from_json(hospeq::read_json_file(path));
  EXPECT_LE(cal.residual, 1e-9);
  const auto again = hospeq::case_study::calibrate(hospeq::load_scenario(baseline_));
  EXPECT_EQ(cal.capacity_factors, again.capacity_factors);
}

TEST_F(Cli, CalibrateImpossibleReferenceWait) {
  auto s = hospeq::load_scenario(baseline_);
  s.levels[2].reference_wait = 0.01;
  hospeq::write_json_file(dir_ / "s.json", hospeq::to_json(s));
  const auto r = run("calibrate " + (dir_ / "s.json").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("tertiary"), std::string::npos) << r.out;
}

TEST_F(Cli, BuildMatchesBundledBaseline) {
  const auto path = dir_ / "built.json";
  ASSERT_EQ(run("build --out " + path.string()).code, 0);
  EXPECT_EQ(hospeq::load_scenario(path), hospeq::load_scenario(baseline_));
}

TEST_F(Cli, IntervenePicksFromFile) {
  const std::string file = hospeq::fixtures::data_file("interventions.json");
  EXPECT_EQ(run("intervene " + baseline_ + " " + file).code, 1);
  const auto r = run("intervene " + baseline_ + " " + file + "#tertiary_deterrent --format csv");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.rfind("variable,baseline,mnl,eq,change\n", 0), 0u);
  const auto h = run("intervene " + baseline_ + " health_promotion");
  EXPECT_NE(h.out.find("0.4979"), std::string::npos) << h.out;
}
