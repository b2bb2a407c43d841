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

#ifndef HOSPEQ_MODEL_HPP
#define HOSPEQ_MODEL_HPP

// Shared domain types for the hospital choice / waiting time equilibrium:
// patient classes, facility levels, scenarios and solution records, plus
// validation and the JSON scenario file format.
//
// Units: arrival rates and flows are patients/year, waits are hours,
// utilities are utils, capacity is doctor-hours/year.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace hospeq {

inline constexpr double kDefaultHoursPerYear = 261.0 * 8.0;

enum class QueueKind { mm1, mms };

/// Which delay a level reports: the time spent queueing before service, or
/// the full time in system (queueing plus service).
enum class WaitMetric { queue, system };

struct PatientClass {
  std::string id;
  double arrival_rate = 0.0;  // patients/year
  double alpha = 0.0;         // utils lost per hour of waiting
  double gumbel_scale = 1.0;
  double opt_out_utility = 0.0;

  friend bool operator==(const PatientClass&, const PatientClass&) = default;
};

struct FacilityLevel {
  std::string id;
  QueueKind queue = QueueKind::mm1;
  WaitMetric metric = WaitMetric::queue;
  double service_rate = 0.0;  // patients per doctor-hour
  int servers = 1;            // servers per queue
  double multiplier = 1.0;    // number of identically loaded sequential queues
  double capacity = 0.0;      // doctor-hours/year for first visits
  std::optional<double> reference_wait;  // hours, used by calibration

  /// Arrival rate (patients/year) at which the level's wait diverges.
  double saturation() const {
    return capacity * static_cast<double>(servers) * service_rate;
  }

  friend bool operator==(const FacilityLevel&, const FacilityLevel&) = default;
};

struct Scenario {
  std::vector<FacilityLevel> levels;
  std::vector<PatientClass> classes;
  Eigen::MatrixXd ref_utility;  // classes x levels
  bool opt_out_enabled = true;
  double hours_per_year = kDefaultHoursPerYear;

  std::size_t num_levels() const { return levels.size(); }
  std::size_t num_classes() const { return classes.size(); }

  double total_demand() const {
    double total = 0.0;
    for (const auto& c : classes) total += c.arrival_rate;
    return total;
  }

  double total_saturation() const {
    double total = 0.0;
    for (const auto& l : levels) total += l.saturation();
    return total;
  }

  std::optional<std::size_t> class_index(std::string_view id) const {
    for (std::size_t k = 0; k < classes.size(); ++k)
      if (classes[k].id == id) return k;
    return std::nullopt;
  }

  std::optional<std::size_t> level_index(std::string_view id) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (levels[i].id == id) return i;
    return std::nullopt;
  }

  /// Reference waits per level, if every level carries one.
  std::optional<Eigen::VectorXd> reference_waits() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(levels.size()));
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (!levels[i].reference_wait) return std::nullopt;
      w(static_cast<Eigen::Index>(i)) = *levels[i].reference_wait;
    }
    return w;
  }

  friend bool operator==(const Scenario& a, const Scenario& b) {
    return a.levels == b.levels && a.classes == b.classes &&
           a.ref_utility.rows() == b.ref_utility.rows() &&
           a.ref_utility.cols() == b.ref_utility.cols() &&
           a.ref_utility == b.ref_utility &&
           a.opt_out_enabled == b.opt_out_enabled &&
           a.hours_per_year == b.hours_per_year;
  }
};

/// Choice probabilities, flows and waits for one scenario under some model.
/// `choice` is classes x (1 + levels); column 0 is opting out.
struct Outcome {
  Eigen::VectorXd waits;
  Eigen::VectorXd flows;
  Eigen::MatrixXd choice;
  bool feasible = true;
};

struct IterateRecord {
  double theta = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  bool hessian_pd = true;
};

struct Equilibrium : Outcome {
  double objective = 0.0;
  double grad_norm = 0.0;  // sup-norm of the objective gradient over total demand
  int iterations = 0;
  std::vector<IterateRecord> trace;
};

// ---------------------------------------------------------------------------
// Errors

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Violation {
  std::string field;
  std::string rule;

  friend bool operator==(const Violation&, const Violation&) = default;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : std::runtime_error(describe(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string describe(const std::vector<Violation>& vs) {
    std::ostringstream os;
    os << "invalid scenario:";
    for (const auto& v : vs) os << "\n  " << v.field << ": " << v.rule;
    return os.str();
  }

  std::vector<Violation> violations_;
};

// ---------------------------------------------------------------------------
// Validation

inline std::vector<Violation> validate_scenario(const Scenario& s) {
  std::vector<Violation> out;
  auto add = [&out](std::string field, std::string rule) {
    out.push_back({std::move(field), std::move(rule)});
  };
  auto finite = [](double v) { return std::isfinite(v); };

  if (s.levels.empty()) add("levels", "at least one facility level required");
  if (s.classes.empty()) add("classes", "at least one patient class required");
  if (!(finite(s.hours_per_year) && s.hours_per_year > 0.0))
    add("hours_per_year", "must be finite and > 0");

  for (std::size_t i = 0; i < s.levels.size(); ++i) {
    const auto& l = s.levels[i];
    const std::string p = "levels[" + std::to_string(i) + "].";
    if (!(finite(l.service_rate) && l.service_rate > 0.0))
      add(p + "service_rate", "must be finite and > 0");
    if (l.servers < 1) add(p + "servers", "must be >= 1");
    if (l.queue == QueueKind::mm1 && l.servers != 1)
      add(p + "servers", "an mm1 queue has exactly one server");
    if (!(finite(l.multiplier) && l.multiplier >= 1.0))
      add(p + "multiplier", "must be finite and >= 1");
    if (!(finite(l.capacity) && l.capacity > 0.0))
      add(p + "capacity", "must be finite and > 0");
    if (l.reference_wait && !finite(*l.reference_wait))
      add(p + "reference_wait", "must be finite");
    const double sat = l.saturation();
    if (!(finite(sat) && sat > 0.0))
      add(p + "saturation", "capacity x servers x service_rate must be finite and > 0");
  }

  for (std::size_t k = 0; k < s.classes.size(); ++k) {
    const auto& c = s.classes[k];
    const std::string p = "classes[" + std::to_string(k) + "].";
    if (!(finite(c.arrival_rate) && c.arrival_rate > 0.0))
      add(p + "arrival_rate", "must be finite and > 0");
    if (!(finite(c.alpha) && c.alpha > 0.0)) add(p + "alpha", "must be finite and > 0");
    if (!(finite(c.gumbel_scale) && c.gumbel_scale > 0.0))
      add(p + "gumbel_scale", "must be finite and > 0");
    if (!finite(c.opt_out_utility)) add(p + "opt_out_utility", "must be finite");
  }

  for (std::size_t a = 0; a < s.levels.size(); ++a)
    for (std::size_t b = a + 1; b < s.levels.size(); ++b)
      if (s.levels[a].id == s.levels[b].id) add("levels[" + std::to_string(b) + "].id", "duplicate id");
  for (std::size_t a = 0; a < s.classes.size(); ++a)
    for (std::size_t b = a + 1; b < s.classes.size(); ++b)
      if (s.classes[a].id == s.classes[b].id) add("classes[" + std::to_string(b) + "].id", "duplicate id");

  if (s.ref_utility.rows() != static_cast<Eigen::Index>(s.classes.size()) ||
      s.ref_utility.cols() != static_cast<Eigen::Index>(s.levels.size())) {
    add("ref_utility", "dimensions must be classes x levels");
  } else if (!s.ref_utility.allFinite()) {
    add("ref_utility", "all entries must be finite");
  }

  if (!s.opt_out_enabled && !(s.total_saturation() > s.total_demand()))
    add("opt_out_enabled",
        "non-saturation violated: total saturation must exceed total demand "
        "when opting out is impossible");

  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline std::string to_string(QueueKind k) { return k == QueueKind::mm1 ? "mm1" : "mms"; }
inline std::string to_string(WaitMetric m) { return m == WaitMetric::queue ? "queue" : "system"; }

inline QueueKind queue_kind_from_string(std::string_view s) {
  if (s == "mm1") return QueueKind::mm1;
  if (s == "mms") return QueueKind::mms;
  throw ParseError("unknown queue kind '" + std::string(s) + "' (expected mm1 or mms)");
}

inline WaitMetric wait_metric_from_string(std::string_view s) {
  if (s == "queue") return WaitMetric::queue;
  if (s == "system") return WaitMetric::system;
  throw ParseError("unknown wait metric '" + std::string(s) + "' (expected queue or system)");
}

inline nlohmann::json to_json(const Scenario& s) {
  using nlohmann::json;
  json levels = json::array();
  for (const auto& l : s.levels) {
    json j = {{"id", l.id},
              {"queue", to_string(l.queue)},
              {"wait_metric", to_string(l.metric)},
              {"service_rate", l.service_rate},
              {"servers", l.servers},
              {"multiplier", l.multiplier},
              {"capacity", l.capacity}};
    if (l.reference_wait) j["reference_wait"] = *l.reference_wait;
    levels.push_back(std::move(j));
  }
  json classes = json::array();
  for (const auto& c : s.classes) {
    classes.push_back({{"id", c.id},
                       {"arrival_rate", c.arrival_rate},
                       {"alpha", c.alpha},
                       {"gumbel_scale", c.gumbel_scale},
                       {"opt_out_utility", c.opt_out_utility}});
  }
  json utility = json::array();
  for (Eigen::Index k = 0; k < s.ref_utility.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index i = 0; i < s.ref_utility.cols(); ++i) row.push_back(s.ref_utility(k, i));
    utility.push_back(std::move(row));
  }
  return {{"hours_per_year", s.hours_per_year},
          {"opt_out_enabled", s.opt_out_enabled},
          {"levels", std::move(levels)},
          {"classes", std::move(classes)},
          {"ref_utility", std::move(utility)}};
}

/// Parses the scenario schema. Throws ParseError on structural problems;
/// does not validate invariants.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario s;
    s.hours_per_year = j.value("hours_per_year", kDefaultHoursPerYear);
    s.opt_out_enabled = j.value("opt_out_enabled", true);
    for (const auto& jl : j.at("levels")) {
      FacilityLevel l;
      l.id = jl.at("id").get<std::string>();
      l.queue = queue_kind_from_string(jl.value("queue", std::string("mm1")));
      l.metric = wait_metric_from_string(jl.value("wait_metric", std::string("queue")));
      l.service_rate = jl.at("service_rate").get<double>();
      l.servers = jl.value("servers", 1);
      l.multiplier = jl.value("multiplier", 1.0);
      l.capacity = jl.at("capacity").get<double>();
      if (jl.contains("reference_wait")) l.reference_wait = jl.at("reference_wait").get<double>();
      s.levels.push_back(std::move(l));
    }
    for (const auto& jc : j.at("classes")) {
      PatientClass c;
      c.id = jc.at("id").get<std::string>();
      c.arrival_rate = jc.at("arrival_rate").get<double>();
      c.alpha = jc.at("alpha").get<double>();
      c.gumbel_scale = jc.value("gumbel_scale", 1.0);
      c.opt_out_utility = jc.at("opt_out_utility").get<double>();
      s.classes.push_back(std::move(c));
    }
    const auto& ju = j.at("ref_utility");
    const auto rows = static_cast<Eigen::Index>(ju.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(ju.at(0).size()) : 0;
    s.ref_utility.resize(rows, cols);
    for (Eigen::Index k = 0; k < rows; ++k) {
      const auto& row = ju.at(static_cast<std::size_t>(k));
      if (static_cast<Eigen::Index>(row.size()) != cols)
        throw ParseError("ref_utility rows must all have the same length");
      for (Eigen::Index i = 0; i < cols; ++i)
        s.ref_utility(k, i) = row.at(static_cast<std::size_t>(i)).get<double>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario schema: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Loads and validates a scenario file.
inline Scenario load_scenario(const std::filesystem::path& path) {
  Scenario s = scenario_from_json(read_json_file(path));
  if (auto v = validate_scenario(s); !v.empty()) throw ValidationError(std::move(v));
  return s;
}

inline void save_scenario(const std::filesystem::path& path, const Scenario& s) {
  write_json_file(path, to_json(s));
}

}  // namespace hospeq

#endif  // HOSPEQ_MODEL_HPP
