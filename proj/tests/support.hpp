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

#ifndef HOSPEQ_TESTS_SUPPORT_HPP
#define HOSPEQ_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "hospeq/hospeq.hpp"

namespace hospeq::fixtures {

inline std::string data_file(const char* name) { return std::string(HOSPEQ_DATA_DIR) + "/" + name; }

inline Scenario calibrated_baseline() {
  return case_study::calibrate(case_study::build_baseline(case_study::builtin_case_data())).scenario;
}

/// Random but well-posed scenario. With opt-out the load may exceed the
/// joint saturation; without it there is always strict surplus.
inline Scenario random_scenario(std::uint64_t seed, bool allow_mms = true) {
  std::mt19937_64 gen(seed);
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); };
  auto I = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen); };

  Scenario s;
  s.opt_out_enabled = I(0, 3) != 0;
  const int levels = I(2, 4);
  const int classes = I(1, 3);
  for (int i = 0; i < levels; ++i) {
    FacilityLevel l;
    l.id = "L" + std::to_string(i);
    l.queue = allow_mms && I(0, 1) ? QueueKind::mms : QueueKind::mm1;
    l.metric = I(0, 1) ? WaitMetric::system : WaitMetric::queue;
    l.servers = l.queue == QueueKind::mms ? I(1, 4) : 1;
    l.service_rate = U(4.0, 15.0);
    l.multiplier = U(1.0, 6.0);
    l.capacity = U(1e3, 1e5);
    s.levels.push_back(l);
  }
  const double sat = s.total_saturation();
  const double load = s.opt_out_enabled ? U(0.2, 1.5) : U(0.2, 0.9);
  s.ref_utility.resize(classes, levels);
  for (int k = 0; k < classes; ++k) {
    PatientClass c;
    c.id = "C" + std::to_string(k);
    c.arrival_rate = load * sat / classes * U(0.5, 1.5);
    c.alpha = U(0.05, 1.0);
    c.gumbel_scale = U(0.5, 2.0);
    c.opt_out_utility = U(-2.0, 2.0);
    s.classes.push_back(c);
    for (int i = 0; i < levels; ++i) s.ref_utility(k, i) = U(-1.5, 1.5);
  }
  if (!s.opt_out_enabled && s.total_demand() >= 0.95 * sat) {
    const double f = 0.9 * sat / s.total_demand();
    for (auto& c : s.classes) c.arrival_rate *= f;
  }
  return s;
}

/// Waits strictly above every level's zero-flow wait, inside the domain of H.
inline Eigen::VectorXd random_waits(const Scenario& s, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Eigen::VectorXd w(static_cast<Eigen::Index>(s.num_levels()));
  for (std::size_t i = 0; i < s.num_levels(); ++i)
    w(i) = delay_model(s.levels[i]).zero_flow_wait() +
           std::uniform_real_distribution<double>(-0.2, 3.0)(gen);
  return w;
}

namespace detail {

// w_i - wait_i(x_i) with the other waits held fixed. Increasing in w_i;
// a saturated level counts as "wait too short".
inline double coordinate_gap(const Scenario& s, Eigen::VectorXd& w, Eigen::Index i, double wi) {
  w(i) = wi;
  const double x = level_flows(s, choice_matrix(s, w))(i);
  const auto d = delay_model(s.levels[static_cast<std::size_t>(i)]);
  if (!(x < d.saturation())) return -1.0;
  return wi - wait(d, x);
}

// Cyclic exact line minimisation of the convex objective, one level at a
// time by bisection. Slow but needs nothing beyond the forward maps.
inline Eigen::VectorXd coordinate_bisection(const Scenario& s, Eigen::VectorXd w) {
  const auto n = static_cast<Eigen::Index>(s.num_levels());
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double moved = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lo = delay_model(s.levels[static_cast<std::size_t>(i)]).zero_flow_wait();
      double hi = std::max(w(i), lo) + 1.0;
      Eigen::VectorXd trial = w;
      while (coordinate_gap(s, trial, i, hi) <= 0.0) hi = lo + 2.0 * (hi - lo);
      const auto [a, b] = boost::math::tools::bisect(
          [&](double wi) { return coordinate_gap(s, trial, i, wi); }, lo, hi,
          [](double u, double v) { return std::abs(v - u) <= 1e-15 * std::max(1.0, std::abs(u)); });
      const double next = 0.5 * (a + b);
      moved = std::max(moved, std::abs(next - w(i)));
      w(i) = next;
    }
    if (moved <= 1e-13 * std::max(1.0, w.lpNorm<Eigen::Infinity>())) return w;
  }
  throw std::runtime_error("coordinate bisection did not settle");
}

}  // namespace detail

/// Reference equilibrium waits that do not use Newton: damped fixed-point
/// iteration from long waits, then per-level bisection if every damping
/// diverges (plain iteration can push a level past saturation).
inline Eigen::VectorXd reference_waits(const Scenario& s) {
  const Eigen::VectorXd start = zero_flow_waits(s).array() + 10.0;
  for (double damping : {0.5, 0.2, 0.05, 0.01, 0.002}) {
    try {
      const auto e = fixed_point_oracle(s, damping, 200000, start);
      if (e.iterations < 200000) return e.waits;
    } catch (const DivergenceError&) {
    }
  }
  return detail::coordinate_bisection(s, start);
}

}  // namespace hospeq::fixtures

#endif  // HOSPEQ_TESTS_SUPPORT_HPP
