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

#ifndef HOSPEQ_CASE_STUDY_HPP
#define HOSPEQ_CASE_STUDY_HPP

// The urban-China hospital choice case: facility and attribute-utility
// tables, construction and calibration of the baseline scenario, the policy
// interventions, and the fixed-wait MNL comparison model.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hospeq/equilibrium.hpp"
#include "hospeq/model.hpp"
#include "hospeq/queueing.hpp"

namespace hospeq::case_study {

enum class Skill { junior = 0, senior = 1, expert = 2 };
enum class Equipment { obsolete = 0, standard = 1, advanced = 2 };

inline Skill skill_from_string(const std::string& s) {
  if (s == "junior") return Skill::junior;
  if (s == "senior") return Skill::senior;
  if (s == "expert") return Skill::expert;
  throw ParseError("unknown skill level '" + s + "'");
}

inline Equipment equipment_from_string(const std::string& s) {
  if (s == "obsolete" || s == "outdated") return Equipment::obsolete;
  if (s == "standard") return Equipment::standard;
  if (s == "advanced") return Equipment::advanced;
  throw ParseError("unknown equipment status '" + s + "'");
}

/// One column of the facility table.
struct LevelData {
  std::string id;
  Skill skill = Skill::junior;
  Equipment equipment = Equipment::obsolete;
  double total_visit_time_h = 0.0;
  double service_rate = 0.0;  // patients/hour
  double other_visit_time_min = 0.0;
  std::map<std::string, double> zero_wait_utility;  // by class id
  double multiplier = 1.0;
  double facilities = 0.0;
  double doctors_per_facility = 0.0;
  double first_visit_fraction = 0.0;

  /// Total visit time minus the part that is not waiting, in hours.
  double reference_wait() const { return total_visit_time_h - other_visit_time_min / 60.0; }
};

struct FacilityTable {
  std::vector<LevelData> levels;
};

/// One column of the attribute-utility table (effects coded).
struct ClassAttributes {
  std::string id;
  double opt_out_utility = 0.0;
  double alpha = 0.0;
  std::array<double, 3> skill{};  // junior, senior, expert
  double obsolete = 0.0;
  double advanced = 0.0;

  double standard() const { return -(obsolete + advanced); }
  double skill_utility(Skill s) const { return skill[static_cast<std::size_t>(s)]; }
  double equipment_utility(Equipment e) const {
    switch (e) {
      case Equipment::obsolete: return obsolete;
      case Equipment::standard: return standard();
      case Equipment::advanced: return advanced;
    }
    return 0.0;
  }
};

struct AttributeUtilities {
  std::vector<ClassAttributes> classes;
};

struct CaseData {
  FacilityTable facilities;
  AttributeUtilities attributes;
  double total_demand = 160'432'700.0;  // patients/year
  double mild_share = 0.479;            // share of the first class
  double hours_per_year = kDefaultHoursPerYear;
};

/// Effects-coding check: each class's skill utilities sum to zero.
inline std::vector<Violation> validate_attributes(const AttributeUtilities& a) {
  std::vector<Violation> out;
  for (const auto& c : a.classes) {
    const double sum = c.skill[0] + c.skill[1] + c.skill[2];
    if (std::abs(sum) > 1e-9)
      out.push_back({"classes." + c.id + ".skill_utility", "effects-coded utilities must sum to 0"});
    if (!(c.alpha > 0.0)) out.push_back({"classes." + c.id + ".alpha", "must be > 0"});
  }
  return out;
}

inline CaseData builtin_case_data() {
  CaseData d;
  d.facilities.levels = {
      {"primary", Skill::junior, Equipment::obsolete, 1.0, 10.0, 34.0,
       {{"mild", 0.207}, {"severe", -0.257}}, 3.0, 1009.0, 6.76, 0.5},
      {"secondary", Skill::senior, Equipment::standard, 3.0, 10.0, 88.0,
       {{"mild", 0.417}, {"severe", 0.089}}, 5.0, 105.0, 40.8, 0.5},
      {"tertiary", Skill::expert, Equipment::advanced, 5.0, 12.0, 87.0,
       {{"mild", -0.259}, {"severe", 0.773}}, 7.0, 47.0, 98.9, 0.5},
  };
  d.attributes.classes = {
      {"mild", 2.499, 0.232, {-0.277, 0.199, 0.078}, -0.275, 0.275},
      {"severe", -6.024, 0.0995, {-0.05, -0.089, 0.139}, -0.43, 0.43},
  };
  return d;
}

// ---------------------------------------------------------------------------
// Table files

inline FacilityTable facility_table_from_json(const nlohmann::json& j) {
  try {
    FacilityTable t;
    for (const auto& jl : j.at("levels")) {
      LevelData l;
      l.id = jl.at("id").get<std::string>();
      l.skill = skill_from_string(jl.at("typical_skills_level").get<std::string>());
      l.equipment = equipment_from_string(jl.at("status_of_equipment").get<std::string>());
      l.total_visit_time_h = jl.at("total_visit_time_h").get<double>();
      l.service_rate = jl.at("service_rate").get<double>();
      l.other_visit_time_min = jl.at("visit_time_other_than_waiting_min").get<double>();
      l.zero_wait_utility = jl.at("zero_wait_utility").get<std::map<std::string, double>>();
      l.multiplier = jl.at("waiting_time_multiplier").get<double>();
      l.facilities = jl.at("number_of_facilities").get<double>();
      l.doctors_per_facility = jl.at("doctors_per_facility").get<double>();
      l.first_visit_fraction = jl.contains("doctor_time_first_visits_pct")
                                   ? jl.at("doctor_time_first_visits_pct").get<double>() / 100.0
                                   : jl.at("first_visit_fraction").get<double>();
      t.levels.push_back(std::move(l));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("facility table: ") + e.what());
  }
}

inline AttributeUtilities attribute_utilities_from_json(const nlohmann::json& j) {
  try {
    AttributeUtilities a;
    for (const auto& jc : j.at("classes")) {
      ClassAttributes c;
      c.id = jc.at("id").get<std::string>();
      c.opt_out_utility = jc.at("opt_out_utility").get<double>();
      c.alpha = jc.at("waiting_time_sensitivity").get<double>();
      const auto& sk = jc.at("skill_utility");
      c.skill = {sk.at("junior").get<double>(), sk.at("senior").get<double>(),
                 sk.at("expert").get<double>()};
      const auto& eq = jc.at("equipment_utility");
      c.obsolete = eq.at("obsolete").get<double>();
      c.advanced = eq.at("advanced").get<double>();
      if (eq.contains("standard") &&
          std::abs(eq.at("standard").get<double>() - c.standard()) > 1e-9)
        throw ParseError("equipment utility of class " + c.id +
                         ": standard must equal -(obsolete + advanced)");
      a.classes.push_back(std::move(c));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("attribute table: ") + e.what());
  }
}

inline CaseData load_case_data(const std::filesystem::path& facility_table,
                               const std::filesystem::path& attribute_table) {
  CaseData d;
  d.facilities = facility_table_from_json(read_json_file(facility_table));
  d.attributes = attribute_utilities_from_json(read_json_file(attribute_table));
  return d;
}

// ---------------------------------------------------------------------------
// Baseline scenario

/// Reference utilities embed the reference waits, ubar = u(w_ref) + alpha w_ref,
/// so that utilities at the reference waits equal the zero-wait table values.
/// Capacities are the nominal doctor-hours; queues report time in system.
inline Scenario build_baseline(const CaseData& data) {
  if (auto v = validate_attributes(data.attributes); !v.empty()) throw ValidationError(std::move(v));
  if (data.attributes.classes.size() != 2)
    throw std::invalid_argument("the case study has exactly two patient classes");
  if (!(data.mild_share > 0.0 && data.mild_share < 1.0))
    throw std::invalid_argument("mild share must lie in (0, 1)");

  Scenario s;
  s.hours_per_year = data.hours_per_year;
  s.opt_out_enabled = true;
  for (const auto& l : data.facilities.levels) {
    FacilityLevel f;
    f.id = l.id;
    f.queue = QueueKind::mm1;
    f.metric = WaitMetric::system;
    f.service_rate = l.service_rate;
    f.servers = 1;
    f.multiplier = l.multiplier;
    f.capacity = l.facilities * l.doctors_per_facility * l.first_visit_fraction * data.hours_per_year;
    f.reference_wait = l.reference_wait();
    s.levels.push_back(std::move(f));
  }
  const std::array<double, 2> shares{data.mild_share, 1.0 - data.mild_share};
  s.ref_utility.resize(2, static_cast<Eigen::Index>(s.levels.size()));
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& a = data.attributes.classes[k];
    s.classes.push_back({a.id, shares[k] * data.total_demand, a.alpha, 1.0, a.opt_out_utility});
    for (std::size_t i = 0; i < s.levels.size(); ++i) {
      const auto& l = data.facilities.levels[i];
      const auto it = l.zero_wait_utility.find(a.id);
      if (it == l.zero_wait_utility.end())
        throw ParseError("no zero-wait utility for class " + a.id + " at level " + l.id);
      s.ref_utility(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          it->second + a.alpha * *s.levels[i].reference_wait;
    }
  }
  return s;
}

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CalibrationResult {
  double mild_share = 0.0;
  std::vector<double> capacity_factors;
  double residual = 0.0;  // max |equilibrium wait - reference wait|, hours
  Scenario scenario;      // calibrated
};

/// Scales each level's capacity so that the flows implied by the choice
/// probabilities at the reference waits produce exactly those waits. The
/// reference waits are then the equilibrium of the calibrated scenario.
inline CalibrationResult calibrate(const Scenario& s) {
  const auto ref = s.reference_waits();
  if (!ref) throw CalibrationError("every level needs a reference wait to calibrate");
  const Eigen::VectorXd x = level_flows(s, choice_matrix(s, *ref));

  CalibrationResult r;
  r.scenario = s;
  for (std::size_t i = 0; i < s.num_levels(); ++i) {
    const auto& level = s.levels[i];
    DelayModel unit = delay_model(level);
    unit.capacity = 1.0;
    const double wi = (*ref)(static_cast<Eigen::Index>(i));
    const double required = inverse_wait(unit, wi);  // per-queue patients/hour
    if (!(required > 0.0) || !(required < unit.queue_saturation()))
      throw CalibrationError("reference wait " + std::to_string(wi) + " h at level " + level.id +
                             " is not achievable (zero-flow wait " +
                             std::to_string(unit.zero_flow_wait()) + " h)");
    const double factor = x(static_cast<Eigen::Index>(i)) / (required * level.capacity);
    r.capacity_factors.push_back(factor);
    r.scenario.levels[i].capacity = level.capacity * factor;
  }
  r.mild_share = s.classes.front().arrival_rate / s.total_demand();

  SolverSettings cfg;
  cfg.grad_tol = 1e-13;
  const auto eq = solve(r.scenario, cfg);
  r.residual = (eq.waits - *ref).lpNorm<Eigen::Infinity>();
  return r;
}

inline nlohmann::json to_json(const CalibrationResult& r) {
  return {{"mild_share", r.mild_share},
          {"capacity_factors", r.capacity_factors},
          {"residual_hours", r.residual},
          {"scenario", to_json(r.scenario)}};
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
  try {
    CalibrationResult r;
    r.mild_share = j.at("mild_share").get<double>();
    r.capacity_factors = j.at("capacity_factors").get<std::vector<double>>();
    r.residual = j.at("residual_hours").get<double>();
    r.scenario = scenario_from_json(j.at("scenario"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("calibration result: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Interventions

/// Declarative edits: additive utility deltas by class and level id, and
/// replacement opt-out utilities and waiting sensitivities by class id.
struct InterventionSpec {
  std::string name;
  std::map<std::string, std::map<std::string, double>> utility_deltas;
  std::map<std::string, double> opt_out_overrides;
  std::map<std::string, double> alpha_overrides;

  bool empty() const {
    return utility_deltas.empty() && opt_out_overrides.empty() && alpha_overrides.empty();
  }

  friend bool operator==(const InterventionSpec&, const InterventionSpec&) = default;
};

inline InterventionSpec no_intervention() { return {"baseline", {}, {}, {}}; }

inline std::vector<Violation> validate_intervention(const InterventionSpec& iv) {
  std::vector<Violation> out;
  if (iv.name.empty()) out.push_back({"name", "must not be empty"});
  for (const auto& [k, row] : iv.utility_deltas)
    for (const auto& [i, v] : row)
      if (!std::isfinite(v)) out.push_back({"utility_deltas." + k + "." + i, "must be finite"});
  for (const auto& [k, v] : iv.opt_out_overrides)
    if (!std::isfinite(v)) out.push_back({"opt_out_overrides." + k, "must be finite"});
  for (const auto& [k, v] : iv.alpha_overrides)
    if (!(std::isfinite(v) && v > 0.0)) out.push_back({"alpha_overrides." + k, "must be finite and > 0"});
  return out;
}

/// Sum of deltas; `b` wins where both override the same value.
inline InterventionSpec combine(const InterventionSpec& a, const InterventionSpec& b, std::string name) {
  InterventionSpec c = a;
  c.name = std::move(name);
  for (const auto& [k, row] : b.utility_deltas)
    for (const auto& [i, v] : row) c.utility_deltas[k][i] += v;
  for (const auto& [k, v] : b.opt_out_overrides) c.opt_out_overrides[k] = v;
  for (const auto& [k, v] : b.alpha_overrides) c.alpha_overrides[k] = v;
  return c;
}

inline Scenario apply_intervention(const Scenario& s, const InterventionSpec& iv) {
  if (auto v = validate_intervention(iv); !v.empty()) throw ValidationError(std::move(v));
  auto class_of = [&](const std::string& id) {
    if (auto k = s.class_index(id)) return *k;
    throw std::invalid_argument("intervention " + iv.name + ": unknown class '" + id + "'");
  };
  Scenario out = s;
  for (const auto& [cid, row] : iv.utility_deltas) {
    const auto k = static_cast<Eigen::Index>(class_of(cid));
    for (const auto& [lid, delta] : row) {
      const auto i = s.level_index(lid);
      if (!i) throw std::invalid_argument("intervention " + iv.name + ": unknown level '" + lid + "'");
      out.ref_utility(k, static_cast<Eigen::Index>(*i)) += delta;
    }
  }
  for (const auto& [cid, v] : iv.opt_out_overrides) out.classes[class_of(cid)].opt_out_utility = v;
  for (const auto& [cid, v] : iv.alpha_overrides) out.classes[class_of(cid)].alpha = v;
  return out;
}

namespace detail {

inline InterventionSpec raise_skill(const CaseData& d, std::string name,
                                    const std::map<std::string, Skill>& targets) {
  InterventionSpec iv{std::move(name), {}, {}, {}};
  for (const auto& l : d.facilities.levels) {
    const auto t = targets.find(l.id);
    if (t == targets.end()) continue;
    for (const auto& c : d.attributes.classes)
      iv.utility_deltas[c.id][l.id] = c.skill_utility(t->second) - c.skill_utility(l.skill);
  }
  return iv;
}

inline InterventionSpec raise_equipment(const CaseData& d, std::string name,
                                        const std::map<std::string, Equipment>& targets) {
  InterventionSpec iv{std::move(name), {}, {}, {}};
  for (const auto& l : d.facilities.levels) {
    const auto t = targets.find(l.id);
    if (t == targets.end()) continue;
    for (const auto& c : d.attributes.classes)
      iv.utility_deltas[c.id][l.id] = c.equipment_utility(t->second) - c.equipment_utility(l.equipment);
  }
  return iv;
}

}  // namespace detail

/// The five policy interventions, primary-only upskilling to senior, and the
/// upskill/upgrade combinations with health promotion and uniform waiting
/// time sensitivity. Level ids are taken from the table in order
/// (primary, secondary, tertiary); class ids in order (mild, severe).
inline std::vector<InterventionSpec> builtin_interventions(const CaseData& d = builtin_case_data()) {
  const auto& levels = d.facilities.levels;
  const auto& classes = d.attributes.classes;
  if (levels.size() < 2 || classes.size() != 2)
    throw std::invalid_argument("builtin interventions need >= 2 levels and 2 classes");
  const std::string& primary = levels[0].id;
  const std::string& secondary = levels[1].id;
  const auto& mild = classes[0];
  const auto& severe = classes[1];

  auto upskill = detail::raise_skill(d, "upskill", {{primary, Skill::expert}, {secondary, Skill::expert}});
  auto upgrade = detail::raise_equipment(d, "upgrade",
                                         {{primary, Equipment::advanced}, {secondary, Equipment::advanced}});
  auto both = combine(upskill, upgrade, "upskill_upgrade");
  // half the opt-out utility, at the table's three-decimal precision
  InterventionSpec promotion{
      "health_promotion", {}, {{mild.id, std::round(mild.opt_out_utility / 2.0 * 1000.0) / 1000.0}}, {}};
  InterventionSpec uniform{"uniform_wait_sensitivity", {}, {}, {{severe.id, mild.alpha}}};
  auto to_senior = detail::raise_skill(d, "upskill_to_senior", {{primary, Skill::senior}});

  return {upskill,
          upgrade,
          both,
          promotion,
          uniform,
          to_senior,
          combine(upskill, promotion, "upskill_health_promotion"),
          combine(upgrade, promotion, "upgrade_health_promotion"),
          combine(upskill, uniform, "upskill_uniform_wait_sensitivity"),
          combine(upgrade, uniform, "upgrade_uniform_wait_sensitivity")};
}

inline nlohmann::json to_json(const InterventionSpec& iv) {
  return {{"name", iv.name},
          {"utility_deltas", iv.utility_deltas},
          {"opt_out_overrides", iv.opt_out_overrides},
          {"alpha_overrides", iv.alpha_overrides}};
}

inline InterventionSpec intervention_from_json(const nlohmann::json& j) {
  try {
    InterventionSpec iv;
    iv.name = j.at("name").get<std::string>();
    iv.utility_deltas =
        j.value("utility_deltas", std::map<std::string, std::map<std::string, double>>{});
    iv.opt_out_overrides = j.value("opt_out_overrides", std::map<std::string, double>{});
    iv.alpha_overrides = j.value("alpha_overrides", std::map<std::string, double>{});
    if (auto v = validate_intervention(iv); !v.empty()) throw ValidationError(std::move(v));
    return iv;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("intervention: ") + e.what());
  }
}

/// Reads {"interventions": [...]}; names must be unique.
inline std::vector<InterventionSpec> load_interventions(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  std::vector<InterventionSpec> out;
  try {
    for (const auto& ji : j.at("interventions")) out.push_back(intervention_from_json(ji));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  for (std::size_t a = 0; a < out.size(); ++a)
    for (std::size_t b = a + 1; b < out.size(); ++b)
      if (out[a].name == out[b].name)
        throw ValidationError({{"interventions", "duplicate name '" + out[a].name + "'"}});
  return out;
}

// ---------------------------------------------------------------------------
// Fixed-wait comparison model

/// Choice probabilities with waits held at the reference waits and the
/// scenario's own sensitivities, so sensitivity overrides cannot move them.
/// Flows follow from the probabilities, waits from one pass of the delay
/// functions without feedback; saturated levels get an infinite wait.
inline Outcome mnl_only_evaluate(const Scenario& s, const InterventionSpec& iv,
                                 double feasibility_cap = 10.0) {
  const auto ref = s.reference_waits();
  if (!ref) throw std::invalid_argument("fixed-wait evaluation needs reference waits");
  InterventionSpec utilities_only = iv;
  utilities_only.alpha_overrides.clear();
  const Scenario edited = apply_intervention(s, utilities_only);

  Outcome o;
  o.choice = choice_matrix(edited, *ref);
  o.flows = level_flows(edited, o.choice);
  o.waits.resize(o.flows.size());
  for (Eigen::Index i = 0; i < o.flows.size(); ++i) {
    const auto d = delay_model(edited.levels[static_cast<std::size_t>(i)]);
    try {
      o.waits(i) = wait(d, o.flows(i));
    } catch (const SaturationError&) {
      o.waits(i) = std::numeric_limits<double>::infinity();
    }
  }
  o.feasible = (o.waits.array() <= feasibility_cap).all();
  return o;
}

}  // namespace hospeq::case_study

#endif  // HOSPEQ_CASE_STUDY_HPP
