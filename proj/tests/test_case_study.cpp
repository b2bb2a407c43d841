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

#include <filesystem>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace hospeq;
using namespace hospeq::case_study;

namespace {

const InterventionSpec& find(const std::vector<InterventionSpec>& all, const std::string& name) {
  for (const auto& iv : all)
    if (iv.name == name) return iv;
  throw std::runtime_error("missing " + name);
}

}  // namespace

TEST(Data, BundledTablesMatchBuiltin) {
  const auto file = load_case_data(fixtures::data_file("table1.json"), fixtures::data_file("table2.json"));
  const auto builtin = builtin_case_data();
  EXPECT_EQ(build_baseline(file), build_baseline(builtin));
}

TEST(Data, EffectsCodingChecked) {
  auto d = builtin_case_data();
  d.attributes.classes[0].skill[0] += 0.01;
  EXPECT_THROW(build_baseline(d), ValidationError);
  EXPECT_THROW(equipment_from_string("broken"), ParseError);
  EXPECT_EQ(equipment_from_string("outdated"), Equipment::obsolete);
}

TEST(Baseline, ReferenceWaitsFromVisitTimes) {
  const auto s = build_baseline(builtin_case_data());
  const auto w = *s.reference_waits();
  EXPECT_NEAR(w(0), 26.0 / 60.0, 1e-12);
  EXPECT_NEAR(w(1), 92.0 / 60.0, 1e-12);
  EXPECT_NEAR(w(2), 213.0 / 60.0, 1e-12);
}

TEST(Baseline, UtilitiesAtReferenceEqualTable) {
  const auto s = build_baseline(builtin_case_data());
  const auto w = *s.reference_waits();
  const auto u = class_utilities(s, 0, w);
  EXPECT_NEAR(u.values(0), 2.499, 1e-12);
  EXPECT_NEAR(u.values(1), 0.207, 1e-12);
  EXPECT_NEAR(u.values(2), 0.417, 1e-12);
  EXPECT_NEAR(u.values(3), -0.259, 1e-12);
  const auto p = mnl_probabilities(u);
  EXPECT_NEAR(std::log(p(2) / p(3)), 0.676, 1e-12);
  // published MNL row for mild patients
  EXPECT_NEAR(p(0), 0.7757, 5e-5);
  EXPECT_NEAR(p(1), 0.0784, 5e-5);
  EXPECT_NEAR(p(2), 0.0967, 5e-5);
  EXPECT_NEAR(p(3), 0.0492, 5e-5);
}

TEST(Baseline, DemandAndCapacity) {
  const auto s = build_baseline(builtin_case_data());
  EXPECT_NEAR(s.classes[0].arrival_rate, 0.479 * 160432700.0, 1e-6);
  EXPECT_NEAR(s.classes[1].arrival_rate, 0.521 * 160432700.0, 1e-6);
  EXPECT_NEAR(s.levels[0].capacity, 1009 * 6.76 * 0.5 * 2088, 1e-6);
  EXPECT_NEAR(s.levels[2].capacity, 47 * 98.9 * 0.5 * 2088, 1e-6);
}

TEST(Calibration, ExactFitAndResidual) {
  const auto r = calibrate(build_baseline(builtin_case_data()));
  EXPECT_DOUBLE_EQ(r.mild_share, 0.479);
  EXPECT_LE(r.residual, 1e-9);
  for (double c : r.capacity_factors) EXPECT_GT(c, 0.0);
  const auto e = solve(r.scenario);
  EXPECT_LE((e.waits - *r.scenario.reference_waits()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Calibration, QueueMetricRequiredRates) {
  // with queueing delay as the wait, the required per-queue rates invert
  // m x / (mu (mu - x)) = w_ref
  auto s = build_baseline(builtin_case_data());
  for (auto& l : s.levels) l.metric = WaitMetric::queue;
  const auto r = calibrate(s);
  const Eigen::VectorXd x = level_flows(s, choice_matrix(s, *s.reference_waits()));
  const double x3 = 144.0 * 3.55 / (7.0 + 12.0 * 3.55);
  EXPECT_NEAR(x3, 10.306, 1e-3);
  EXPECT_NEAR(r.capacity_factors[2], x(2) / (x3 * s.levels[2].capacity), 1e-12);
  const double x1 = 100.0 * (1.3 / 9.0) / (1.0 + 10.0 * 1.3 / 9.0);
  EXPECT_NEAR(x1, 5.909, 1e-3);
  EXPECT_NEAR(r.capacity_factors[0], x(0) / (x1 * s.levels[0].capacity), 1e-12);
  EXPECT_LE(r.residual, 1e-9);
}

TEST(Calibration, Idempotent) {
  const auto once = calibrate(build_baseline(builtin_case_data()));
  const auto twice = calibrate(once.scenario);
  for (double c : twice.capacity_factors) EXPECT_NEAR(c, 1.0, 1e-9);
}

TEST(Calibration, UnreachableReferenceWaitNamesLevel) {
  auto s = build_baseline(builtin_case_data());
  s.levels[1].reference_wait = 0.1;  // below one service time per queue
  try {
    calibrate(s);
    FAIL() << "expected CalibrationError";
  } catch (const CalibrationError& e) {
    EXPECT_NE(std::string(e.what()).find("secondary"), std::string::npos);
  }
  s.levels[1].reference_wait.reset();
  EXPECT_THROW(calibrate(s), CalibrationError);
}

TEST(Calibration, JsonRoundTrip) {
  const auto r = calibrate(build_baseline(builtin_case_data()));
  const auto back = calibration_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.capacity_factors, r.capacity_factors);
  EXPECT_EQ(back.scenario, r.scenario);
  EXPECT_EQ(back.mild_share, r.mild_share);
}

TEST(Interventions, BuiltinList) {
  const auto all = builtin_interventions();
  ASSERT_EQ(all.size(), 10u);
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b) EXPECT_NE(all[a].name, all[b].name);
}

TEST(Interventions, DeltasFromAttributeDifferences) {
  const auto all = builtin_interventions();
  const auto& up = find(all, "upskill");
  EXPECT_NEAR(up.utility_deltas.at("mild").at("primary"), 0.078 + 0.277, 1e-12);
  EXPECT_NEAR(up.utility_deltas.at("mild").at("secondary"), 0.078 - 0.199, 1e-12);
  EXPECT_NEAR(up.utility_deltas.at("severe").at("primary"), 0.139 + 0.05, 1e-12);
  EXPECT_FALSE(up.utility_deltas.at("mild").count("tertiary"));
  const auto& both = find(all, "upskill_upgrade");
  EXPECT_NEAR(both.utility_deltas.at("mild").at("primary"), 0.905, 1e-12);
  const auto& upg = find(all, "upgrade");
  EXPECT_NEAR(upg.utility_deltas.at("severe").at("primary"), 0.86, 1e-12);
  EXPECT_NEAR(upg.utility_deltas.at("mild").at("secondary"), 0.275, 1e-12);
  EXPECT_NEAR(find(all, "health_promotion").opt_out_overrides.at("mild"), 1.250, 1e-12);
  const auto& uni = find(all, "uniform_wait_sensitivity");
  EXPECT_TRUE(uni.utility_deltas.empty());
  EXPECT_EQ(uni.alpha_overrides.at("severe"), 0.232);
  const auto& senior = find(all, "upskill_to_senior");
  EXPECT_NEAR(senior.utility_deltas.at("mild").at("primary"), 0.476, 1e-12);
  EXPECT_EQ(senior.utility_deltas.at("mild").size(), 1u);
  const auto& combo = find(all, "upgrade_health_promotion");
  EXPECT_EQ(combo.opt_out_overrides.at("mild"), 1.25);
  EXPECT_NEAR(combo.utility_deltas.at("mild").at("primary"), 0.55, 1e-12);
}

TEST(Interventions, ApplyThenRevert) {
  const auto s = fixtures::calibrated_baseline();
  for (const auto& iv : builtin_interventions()) {
    const auto edited = apply_intervention(s, iv);
    InterventionSpec undo{"undo", {}, {}, {}};
    for (const auto& [k, row] : iv.utility_deltas)
      for (const auto& [i, v] : row) undo.utility_deltas[k][i] = -v;
    for (const auto& [k, v] : iv.opt_out_overrides)
      undo.opt_out_overrides[k] = s.classes[*s.class_index(k)].opt_out_utility;
    for (const auto& [k, v] : iv.alpha_overrides) undo.alpha_overrides[k] = s.classes[*s.class_index(k)].alpha;
    const auto back = apply_intervention(edited, undo);
    EXPECT_EQ(back.levels, s.levels);
    EXPECT_EQ(back.classes, s.classes);
    // (u + d) - d can differ from u by one rounding step
    EXPECT_LE((back.ref_utility - s.ref_utility).cwiseAbs().maxCoeff(), 1e-15) << iv.name;
  }
}

TEST(Interventions, AlphaChangeKeepsReferenceUtilities) {
  const auto s = fixtures::calibrated_baseline();
  const auto edited = apply_intervention(s, find(builtin_interventions(), "uniform_wait_sensitivity"));
  EXPECT_EQ(edited.ref_utility, s.ref_utility);
  EXPECT_EQ(edited.classes[1].alpha, 0.232);
}

TEST(Interventions, UnknownIdsAndBadValuesRejected) {
  const auto s = fixtures::calibrated_baseline();
  EXPECT_THROW(apply_intervention(s, {"x", {{"child", {{"primary", 1.0}}}}, {}, {}}), std::invalid_argument);
  EXPECT_THROW(apply_intervention(s, {"x", {{"mild", {{"clinic", 1.0}}}}, {}, {}}), std::invalid_argument);
  EXPECT_THROW(apply_intervention(s, {"x", {}, {}, {{"mild", -1.0}}}), ValidationError);
  EXPECT_THROW(apply_intervention(s, {"", {}, {}, {}}), ValidationError);
}

TEST(Interventions, JsonAndFile) {
  for (const auto& iv : builtin_interventions())
    EXPECT_EQ(intervention_from_json(nlohmann::json::parse(to_json(iv).dump())), iv);
  const auto user = load_interventions(fixtures::data_file("interventions.json"));
  EXPECT_EQ(user.size(), 3u);
  const auto path = std::filesystem::temp_directory_path() / "hospeq_dup_interventions.json";
  write_json_file(path, {{"interventions", {to_json(user[0]), to_json(user[0])}}});
  EXPECT_THROW(load_interventions(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(MnlOnly, PositiveDeltaRaisesOwnProbability) {
  const auto s = fixtures::calibrated_baseline();
  const auto base = mnl_only_evaluate(s, no_intervention());
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < 3; ++i) {
      InterventionSpec iv{"bump", {{s.classes[k].id, {{s.levels[i].id, 0.05}}}}, {}, {}};
      const auto o = mnl_only_evaluate(s, iv);
      EXPECT_GT(o.choice(k, i + 1), base.choice(k, i + 1));
    }
}

TEST(MnlOnly, IgnoresSensitivityOverrides) {
  const auto s = fixtures::calibrated_baseline();
  const auto a = mnl_only_evaluate(s, no_intervention());
  const auto b = mnl_only_evaluate(s, find(builtin_interventions(), "uniform_wait_sensitivity"));
  EXPECT_EQ(a.choice, b.choice);
  EXPECT_EQ(a.waits, b.waits);
}

TEST(MnlOnly, CoincidesWithEquilibriumAtBaseline) {
  const auto s = fixtures::calibrated_baseline();
  const auto m = mnl_only_evaluate(s, no_intervention());
  const auto e = solve(s);
  EXPECT_LE((m.choice - e.choice).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((m.waits - e.waits).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MnlOnly, SaturationIsInfiniteAndInfeasible) {
  auto s = fixtures::calibrated_baseline();
  s.levels[2].capacity *= 0.5;
  const auto o = mnl_only_evaluate(s, no_intervention());
  EXPECT_TRUE(std::isinf(o.waits(2)));
  EXPECT_FALSE(o.feasible);
  // upgrade with health promotion is infeasible even unperturbed
  const auto combo = mnl_only_evaluate(fixtures::calibrated_baseline(),
                                       find(builtin_interventions(), "upgrade_health_promotion"));
  EXPECT_FALSE(combo.feasible);
}
