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

// hospeq: command-line front end for the hospital choice equilibrium model.
//
// Exit codes: 0 success, 1 usage, 2 input (parse, validation, I/O),
// 3 numerical failure (solver, calibration, saturation).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "hospeq/hospeq.hpp"

namespace fs = std::filesystem;
using namespace hospeq;

namespace {

constexpr int kUsage = 1;
constexpr int kInput = 2;
constexpr int kNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string data_path(const char* name) { return (fs::path(HOSPEQ_DATA_DIR) / name).string(); }

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write " + out);
  f << text;
  if (!f) throw IoError("write failed: " + out);
}

StartPoint parse_start(const std::string& s) {
  if (s == "zero") return StartPoint::zero_flow;
  if (s == "reference") return StartPoint::reference;
  throw UsageError("--start must be 'zero' or 'reference'");
}

SolverSettings settings(double grad_tol, const std::string& start) {
  SolverSettings cfg;
  cfg.grad_tol = grad_tol;
  cfg.start = parse_start(start);
  return cfg;
}

/// A builtin name, "baseline", or a JSON file holding {"interventions": [...]};
/// "file.json#name" selects one spec from a file with several.
case_study::InterventionSpec resolve_intervention(const std::string& arg) {
  if (arg == "baseline") return case_study::no_intervention();
  for (auto& iv : case_study::builtin_interventions())
    if (iv.name == arg) return iv;

  std::string path = arg;
  std::string pick;
  if (auto hash = arg.rfind('#'); hash != std::string::npos) {
    path = arg.substr(0, hash);
    pick = arg.substr(hash + 1);
  }
  if (!fs::is_regular_file(path)) {
    std::string names = "baseline";
    for (const auto& iv : case_study::builtin_interventions()) names += ", " + iv.name;
    throw UsageError("unknown intervention '" + arg + "' (builtins: " + names + "; or a JSON file)");
  }
  auto specs = case_study::load_interventions(path);
  if (pick.empty()) {
    if (specs.size() == 1) return specs.front();
    throw UsageError(path + " holds " + std::to_string(specs.size()) +
                     " interventions; select one with " + path + "#NAME");
  }
  for (auto& iv : specs)
    if (iv.name == pick) return iv;
  throw UsageError("no intervention named '" + pick + "' in " + path);
}

std::vector<std::string> choice_columns(const Scenario& s) {
  std::vector<std::string> cols{"opt_out"};
  for (const auto& l : s.levels) cols.push_back(l.id);
  return cols;
}

std::string fmt_wait(double w) { return std::isfinite(w) ? fmt::format("{:.2f}", w) : "inf"; }

// ---------------------------------------------------------------------------

std::string equilibrium_table(const Scenario& s, const Equilibrium& eq) {
  std::string out = fmt::format("{:<12}{:>10}{:>16}\n", "level", "wait_h", "flow_per_year");
  for (std::size_t i = 0; i < s.num_levels(); ++i)
    out += fmt::format("{:<12}{:>10}{:>16.0f}\n", s.levels[i].id, fmt_wait(eq.waits(i)), eq.flows(i));
  const auto cols = choice_columns(s);
  out += fmt::format("\n{:<12}", "class");
  for (const auto& c : cols) out += fmt::format("{:>12}", c);
  out += "\n";
  for (std::size_t k = 0; k < s.num_classes(); ++k) {
    out += fmt::format("{:<12}", s.classes[k].id);
    for (Eigen::Index j = 0; j < eq.choice.cols(); ++j) out += fmt::format("{:>12.4f}", eq.choice(k, j));
    out += "\n";
  }
  out += fmt::format("\nobjective {:.10g}  grad_norm {:.3e}  iterations {}  feasible {}\n", eq.objective,
                     eq.grad_norm, eq.iterations, eq.feasible ? "yes" : "no");
  return out;
}

std::string equilibrium_csv(const Scenario& s, const Equilibrium& eq) {
  std::string out = "quantity,class,level,value\n";
  for (std::size_t i = 0; i < s.num_levels(); ++i)
    out += fmt::format("wait,,{},{:.17g}\n", s.levels[i].id, eq.waits(i));
  for (std::size_t i = 0; i < s.num_levels(); ++i)
    out += fmt::format("flow,,{},{:.17g}\n", s.levels[i].id, eq.flows(i));
  const auto cols = choice_columns(s);
  for (std::size_t k = 0; k < s.num_classes(); ++k)
    for (Eigen::Index j = 0; j < eq.choice.cols(); ++j)
      out += fmt::format("probability,{},{},{:.17g}\n", s.classes[k].id, cols[j], eq.choice(k, j));
  out += fmt::format("objective,,,{:.17g}\ngrad_norm,,,{:.17g}\niterations,,,{}\n", eq.objective,
                     eq.grad_norm, eq.iterations);
  return out;
}

/// Variable-by-variable comparison of one intervention against the
/// unperturbed baseline equilibrium.
std::string intervene_report(const Scenario& s, const case_study::InterventionSpec& iv,
                             const SolverSettings& cfg, bool csv) {
  const auto names = experiment::variable_names(s);
  const auto base = experiment::outcome_values(solve(s, cfg));
  const auto mnl = experiment::outcome_values(case_study::mnl_only_evaluate(s, iv, cfg.feasibility_cap));
  const auto eq = experiment::outcome_values(solve(case_study::apply_intervention(s, iv), cfg));
  std::string out;
  if (csv) {
    out = "variable,baseline,mnl,eq,change\n";
    for (std::size_t v = 0; v < names.size(); ++v)
      out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", names[v], base[v], mnl[v], eq[v],
                         eq[v] - base[v]);
    return out;
  }
  out = fmt::format("{:<10}{:>10}{:>10}{:>10}{:>10}\n", iv.name.substr(0, 9), "baseline", "MNL", "1-4",
                    "change");
  for (std::size_t v = 0; v < names.size(); ++v) {
    const bool w = experiment::is_wait_variable(names[v]);
    out += fmt::format("{:<10}{:>10}{:>10}{:>10}{:>10}\n", names[v], experiment::format_value(base[v], w),
                       experiment::format_value(mnl[v], w), experiment::format_value(eq[v], w),
                       experiment::format_value(eq[v] - base[v], w));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hospital choice equilibrium: solve, calibrate, intervene, study"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string scenario_path, out, format = "table", start = "zero", intervention;
  double grad_tol = 1e-10;
  auto add_solver_flags = [&](CLI::App* c) {
    c->add_option("--grad-tol", grad_tol, "Stop when sup|grad| / total demand falls below this")
        ->check(CLI::PositiveNumber);
    c->add_option("--start", start, "Newton start: zero (zero-flow waits) or reference")
        ->check(CLI::IsMember({"zero", "reference"}));
  };
  auto add_format = [&](CLI::App* c) {
    c->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "table"}));
  };

  auto* solve_cmd = app.add_subcommand("solve", "Solve the equilibrium of a scenario file");
  solve_cmd->add_option("scenario", scenario_path, "Scenario JSON")->required();
  add_solver_flags(solve_cmd);
  add_format(solve_cmd);
  solve_cmd->add_option("--out", out, "Write the report here instead of standard output");

  auto* cal_cmd = app.add_subcommand("calibrate", "Fit per-level capacity factors to the reference waits");
  cal_cmd->add_option("scenario", scenario_path, "Scenario JSON with reference waits")->required();
  cal_cmd->add_option("--out", out, "Write the calibration result (with calibrated scenario) here");

  std::string table1 = data_path("table1.json"), table2 = data_path("table2.json");
  double mild_share = 0.479, demand = 160'432'700.0;
  bool raw = false;
  std::string metric = "system";
  auto* build_cmd = app.add_subcommand("build", "Build the case-study scenario from the data tables");
  build_cmd->add_option("--table1", table1, "Facility table JSON");
  build_cmd->add_option("--table2", table2, "Patient utility table JSON");
  build_cmd->add_option("--mild-share", mild_share, "Share of demand perceiving mild disease")
      ->check(CLI::Range(0.0, 1.0));
  build_cmd->add_option("--demand", demand, "Total patients per year")->check(CLI::PositiveNumber);
  build_cmd->add_option("--wait-metric", metric, "Reported wait: system (incl. service) or queue")
      ->check(CLI::IsMember({"system", "queue"}));
  build_cmd->add_flag("--raw", raw, "Skip calibration; keep the nominal capacities");
  build_cmd->add_option("--out", out, "Scenario output path")->required();

  auto* iv_cmd = app.add_subcommand("intervene", "Compare one intervention against the baseline");
  iv_cmd->add_option("scenario", scenario_path, "Calibrated scenario JSON")->required();
  iv_cmd->add_option("intervention", intervention, "Builtin name, 'baseline', or FILE.json[#NAME]")
      ->required();
  std::string scenario_out;
  iv_cmd->add_option("--scenario-out", scenario_out, "Also write the intervened scenario");
  add_solver_flags(iv_cmd);
  add_format(iv_cmd);
  iv_cmd->add_option("--out", out, "Write the report here instead of standard output");

  std::int64_t instances_pos = -1, instances_flag = -1;
  std::uint64_t seed_pos = 0, seed_flag = 0;
  std::string out_pos;
  unsigned threads = 1;
  auto* study_cmd = app.add_subcommand("study", "Paired perturbation study of one intervention");
  study_cmd->add_option("scenario", scenario_path, "Calibrated scenario JSON")->required();
  study_cmd->add_option("intervention", intervention, "Builtin name, 'baseline', or FILE.json[#NAME]")
      ->required();
  auto* inst_opt = study_cmd->add_option("instances_pos", instances_pos, "Number of instances");
  auto* seed_opt = study_cmd->add_option("seed_pos", seed_pos, "Master seed");
  study_cmd->add_option("out_pos", out_pos, "Output directory");
  auto* inst_flag = study_cmd->add_option("--instances", instances_flag, "Number of instances (default 1000)");
  auto* seed_flag_opt = study_cmd->add_option("--seed", seed_flag, "Master seed (default 42)");
  study_cmd->add_option("--out", out, "Output directory (default study_out)");
  study_cmd->add_option("--threads", threads, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber);
  add_solver_flags(study_cmd);
  add_format(study_cmd);

  std::string report_path;
  auto* report_cmd = app.add_subcommand("report", "Render a saved study report");
  report_cmd->add_option("report", report_path, "Report JSON written by 'study'")->required();
  add_format(report_cmd);
  report_cmd->add_option("--out", out, "Write here instead of standard output");

  auto* list_cmd = app.add_subcommand("list", "List the builtin interventions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*solve_cmd) {
      const Scenario s = load_scenario(scenario_path);
      const auto eq = solve(s, settings(grad_tol, start));
      emit(format == "csv" ? equilibrium_csv(s, eq) : equilibrium_table(s, eq), out);
    } else if (*cal_cmd) {
      const Scenario s = load_scenario(scenario_path);
      const auto r = case_study::calibrate(s);
      std::cout << fmt::format("mild_share {:.3f}\n", r.mild_share);
      for (std::size_t i = 0; i < s.num_levels(); ++i)
        std::cout << fmt::format("capacity factor {:<10} {:.9f}\n", s.levels[i].id, r.capacity_factors[i]);
      std::cout << fmt::format("residual {:.3e} h\n", r.residual);
      if (!out.empty()) write_json_file(out, case_study::to_json(r));
    } else if (*build_cmd) {
      auto data = case_study::load_case_data(table1, table2);
      data.mild_share = mild_share;
      data.total_demand = demand;
      Scenario s = case_study::build_baseline(data);
      for (auto& l : s.levels) l.metric = wait_metric_from_string(metric);
      if (!raw) s = case_study::calibrate(s).scenario;
      save_scenario(out, s);
    } else if (*iv_cmd) {
      const Scenario s = load_scenario(scenario_path);
      const auto iv = resolve_intervention(intervention);
      if (!scenario_out.empty()) save_scenario(scenario_out, case_study::apply_intervention(s, iv));
      emit(intervene_report(s, iv, settings(grad_tol, start), format == "csv"), out);
    } else if (*study_cmd) {
      const std::int64_t n = inst_flag->count() ? instances_flag : inst_opt->count() ? instances_pos : 1000;
      const std::uint64_t seed = seed_flag_opt->count() ? seed_flag : seed_opt->count() ? seed_pos : 42;
      const std::string dir = !out.empty() ? out : !out_pos.empty() ? out_pos : "study_out";
      if (n < 1) throw UsageError("the number of instances must be at least 1");

      const Scenario s = load_scenario(scenario_path);
      const auto iv = resolve_intervention(intervention);
      const auto cfg = settings(grad_tol, start);
      const auto samples = experiment::sample_perturbations(static_cast<std::size_t>(n), seed, s.num_levels());
      const auto result = experiment::run_paired_study(s, iv, samples, cfg, threads);
      const auto report = experiment::build_report(result);

      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
      const fs::path base = fs::path(dir) / iv.name;
      emit(experiment::to_csv(report), base.string() + ".csv");
      emit(experiment::to_text_table(report), base.string() + ".txt");
      write_json_file(base.string() + ".json", experiment::to_json(report));
      write_json_file(fs::path(dir) / "manifest.json",
                      {{"artifact", "hospeq"},
                       {"version", kVersion},
                       {"command", "study"},
                       {"scenario", scenario_path},
                       {"scenario_hash", fmt::format("{:016x}", experiment::scenario_hash(s))},
                       {"intervention", case_study::to_json(iv)},
                       {"instances", n},
                       {"seed", seed},
                       {"rng", "splitmix64 counter stream per instance"},
                       {"perturbation_spread", experiment::kDefaultSpread},
                       {"grad_tol", cfg.grad_tol},
                       {"start", start},
                       {"feasibility_cap_hours", cfg.feasibility_cap},
                       {"outputs", {base.filename().string() + ".csv", base.filename().string() + ".txt",
                                    base.filename().string() + ".json"}}});
      std::cout << (format == "csv" ? experiment::to_csv(report) : experiment::to_text_table(report));
    } else if (*report_cmd) {
      const auto rep = experiment::report_from_json(read_json_file(report_path));
      emit(format == "csv" ? experiment::to_csv(rep) : experiment::to_text_table(rep), out);
    } else if (*list_cmd) {
      std::cout << "baseline\n";
      for (const auto& iv : case_study::builtin_interventions()) std::cout << iv.name << "\n";
    }
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kUsage;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "{}\n", e.what());
    return kInput;
  } catch (const ParseError& e) {
    fmt::print(stderr, "parse error: {}\n", e.what());
    return kInput;
  } catch (const IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kInput;
  } catch (const case_study::CalibrationError& e) {
    fmt::print(stderr, "calibration failed: {}\n", e.what());
    return kNumerical;
  } catch (const SolverError& e) {
    fmt::print(stderr, "solver failed: {}\n", e.what());
    return kNumerical;
  } catch (const SaturationError& e) {
    fmt::print(stderr, "saturated: {}\n", e.what());
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return kInput;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInput;
  }
  return 0;
}
