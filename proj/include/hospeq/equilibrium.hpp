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

#ifndef HOSPEQ_EQUILIBRIUM_HPP
#define HOSPEQ_EQUILIBRIUM_HPP

// Equilibrium of choice and waiting time as the minimiser of
//
//   Theta(w) = sum_i H_i(w_i) + sum_k (I_k / alpha_k) Phi_k(u_k0, ubar_k1 - alpha_k w_1, ...)
//
// whose gradient theta_i^{-1}(w_i) - sum_k I_k pi_ki(w) vanishes exactly at
// the equilibrium. Theta is smooth and strictly convex in w, so a damped
// Newton method with backtracking finds it from any start.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hospeq/choice.hpp"
#include "hospeq/model.hpp"
#include "hospeq/queueing.hpp"

namespace hospeq {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonSaturationError : public SolverError {
 public:
  using SolverError::SolverError;
};

class DivergenceError : public SolverError {
 public:
  using SolverError::SolverError;
};

enum class StartPoint { zero_flow, reference, explicit_vector };

struct SolverSettings {
  double grad_tol = 1e-10;  // on sup-norm of the gradient divided by total demand
  double wait_tol = 1e-10;  // relative |theta(x) - w| / w, checked with grad_tol
  int max_iters = 200;
  StartPoint start = StartPoint::zero_flow;
  Eigen::VectorXd initial_waits;  // used with StartPoint::explicit_vector
  double damping = 0.3;           // fixed-point oracle relaxation
  double feasibility_cap = 10.0;  // hours
};

struct ObjectiveReport {
  double theta = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  bool hessian_pd = false;
};

/// Utilities of class k at waits w; includes the opt-out at position 0 when
/// the scenario allows opting out.
inline UtilityVector class_utilities(const Scenario& s, std::size_t k, const Eigen::VectorXd& w) {
  const auto& c = s.classes[k];
  const auto n = static_cast<Eigen::Index>(s.num_levels());
  const Eigen::Index off = s.opt_out_enabled ? 1 : 0;
  UtilityVector u;
  u.scale = c.gumbel_scale;
  u.values.resize(n + off);
  if (s.opt_out_enabled) u.values(0) = c.opt_out_utility;
  u.values.tail(n) =
      s.ref_utility.row(static_cast<Eigen::Index>(k)).transpose() - c.alpha * w;
  return u;
}

/// Choice matrix, classes x (1 + levels); column 0 is the opt-out (zero when
/// opting out is disabled).
inline Eigen::MatrixXd choice_matrix(const Scenario& s, const Eigen::VectorXd& w) {
  const auto n = static_cast<Eigen::Index>(s.num_levels());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.num_classes()), n + 1);
  for (std::size_t k = 0; k < s.num_classes(); ++k) {
    const auto row = mnl_probabilities(class_utilities(s, k, w));
    const auto kk = static_cast<Eigen::Index>(k);
    if (s.opt_out_enabled)
      p.row(kk) = row.transpose();
    else
      p.row(kk).tail(n) = row.transpose();
  }
  return p;
}

/// x_i = sum_k I_k pi_ki.
inline Eigen::VectorXd level_flows(const Scenario& s, const Eigen::MatrixXd& choice) {
  const auto n = static_cast<Eigen::Index>(s.num_levels());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < s.num_classes(); ++k)
    x += s.classes[k].arrival_rate * choice.row(static_cast<Eigen::Index>(k)).tail(n).transpose();
  return x;
}

inline Eigen::VectorXd zero_flow_waits(const Scenario& s) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(s.num_levels()));
  for (std::size_t i = 0; i < s.num_levels(); ++i)
    w(static_cast<Eigen::Index>(i)) = delay_model(s.levels[i]).zero_flow_wait();
  return w;
}

inline ObjectiveReport theta(const Scenario& s, const Eigen::VectorXd& w) {
  const auto n = static_cast<Eigen::Index>(s.num_levels());
  ObjectiveReport r;
  r.gradient.resize(n);
  r.hessian = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto d = delay_model(s.levels[static_cast<std::size_t>(i)]);
    r.theta += h_integral(d, w(i));
    r.gradient(i) = inverse_wait(d, w(i));
    r.hessian(i, i) = inverse_wait_slope(d, w(i));
  }
  for (std::size_t k = 0; k < s.num_classes(); ++k) {
    const auto& c = s.classes[k];
    const auto u = class_utilities(s, k, w);
    r.theta += c.arrival_rate / c.alpha * mnl_phi(u);
    const Eigen::VectorXd p = mnl_probabilities(u).tail(n);
    r.gradient -= c.arrival_rate * p;
    const double weight = c.arrival_rate * c.alpha * c.gumbel_scale;
    r.hessian.diagonal() += weight * p;
    r.hessian -= weight * p * p.transpose();
  }
  // multi-server levels have unbounded curvature at their zero-flow wait
  r.hessian_pd = r.hessian.allFinite() && Eigen::LLT<Eigen::MatrixXd>(r.hessian).info() == Eigen::Success;
  return r;
}

/// Solution record at waits w: choice from w (Eqs 1-2), flows from choice.
inline Equilibrium equilibrium_at(const Scenario& s, const Eigen::VectorXd& w, double feasibility_cap) {
  Equilibrium e;
  e.waits = w;
  e.choice = choice_matrix(s, w);
  e.flows = level_flows(s, e.choice);
  e.feasible = (w.array() <= feasibility_cap).all();
  const auto rep = theta(s, w);
  e.objective = rep.theta;
  e.grad_norm = rep.gradient.lpNorm<Eigen::Infinity>() / s.total_demand();
  return e;
}

/// max_i |theta_i(x_i(w)) - w_i| / |w_i|; infinite if a level saturates.
inline double wait_residual(const Scenario& s, const Eigen::VectorXd& w) {
  const Eigen::VectorXd x = level_flows(s, choice_matrix(s, w));
  double worst = 0.0;
  for (std::size_t i = 0; i < s.num_levels(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto d = delay_model(s.levels[i]);
    if (!(x(ii) < d.saturation())) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(wait(d, x(ii)) - w(ii)) / std::max(std::abs(w(ii)), 1e-12));
  }
  return worst;
}

struct NonSaturation {
  bool holds = false;
  double margin = 0.0;  // total saturation - total demand
  double total_saturation = 0.0;
  double total_demand = 0.0;
};

inline NonSaturation check_nonsaturation(const Scenario& s) {
  NonSaturation r;
  r.total_saturation = s.total_saturation();
  r.total_demand = s.total_demand();
  r.margin = r.total_saturation - r.total_demand;
  r.holds = r.total_saturation > r.total_demand;
  return r;
}

inline Eigen::VectorXd starting_waits(const Scenario& s, const SolverSettings& cfg) {
  switch (cfg.start) {
    case StartPoint::zero_flow:
      return zero_flow_waits(s);
    case StartPoint::reference:
      if (auto w = s.reference_waits()) return *w;
      throw std::invalid_argument("scenario has no reference waits");
    case StartPoint::explicit_vector:
      if (cfg.initial_waits.size() != static_cast<Eigen::Index>(s.num_levels()) ||
          !cfg.initial_waits.allFinite())
        throw std::invalid_argument("initial waits must be finite, one per level");
      return cfg.initial_waits;
  }
  throw std::invalid_argument("unknown start point");
}

inline Equilibrium solve(const Scenario& s, const SolverSettings& cfg = {}) {
  if (!(cfg.grad_tol > 0.0) || !(cfg.wait_tol > 0.0) || cfg.max_iters < 1)
    throw std::invalid_argument("grad_tol and wait_tol must be > 0, max_iters >= 1");
  if (!s.opt_out_enabled) {
    if (const auto ns = check_nonsaturation(s); !ns.holds)
      throw NonSaturationError("total saturation does not exceed total demand (margin " +
                               std::to_string(ns.margin) + ")");
  }
  if (auto v = validate_scenario(s); !v.empty()) throw ValidationError(std::move(v));

  const double demand = s.total_demand();
  Eigen::VectorXd w = starting_waits(s, cfg);
  std::vector<IterateRecord> trace;
  ObjectiveReport rep = theta(s, w);

  for (int iter = 0;; ++iter) {
    const double gnorm = rep.gradient.lpNorm<Eigen::Infinity>() / demand;
    trace.push_back({rep.theta, gnorm, 0.0, rep.hessian_pd});
    if (gnorm <= cfg.grad_tol && wait_residual(s, w) <= cfg.wait_tol) {
      Equilibrium e = equilibrium_at(s, w, cfg.feasibility_cap);
      e.iterations = iter;
      e.trace = std::move(trace);
      return e;
    }
    if (iter >= cfg.max_iters)
      throw SolverError("no convergence after " + std::to_string(cfg.max_iters) +
                        " iterations (gradient " + std::to_string(gnorm) + ")");

    Eigen::VectorXd dir;
    if (rep.hessian_pd) dir = -Eigen::LLT<Eigen::MatrixXd>(rep.hessian).solve(rep.gradient);
    if (!rep.hessian_pd || !dir.allFinite() || !(rep.gradient.dot(dir) < 0.0)) {
      // steepest descent, at most one hour per coordinate before backtracking
      dir = -rep.gradient / rep.gradient.lpNorm<Eigen::Infinity>();
    }

    // Theta is a sum of terms of order total demand x utility, so values
    // closer than a few ulps of that scale are indistinguishable.
    const double slack = 1e-13 * (std::abs(rep.theta) + demand);
    const double slope = rep.gradient.dot(dir);
    double step = 1.0;
    ObjectiveReport next;
    bool accepted = false;
    for (int halvings = 0; halvings < 80; ++halvings, step *= 0.5) {
      next = theta(s, w + step * dir);
      if (next.theta <= rep.theta + 1e-4 * step * slope + slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw SolverError("line search failed to decrease the objective");
    w += step * dir;
    trace.back().step = step;
    rep = std::move(next);
  }
}

/// Damped iteration of the fixed-point system w <- (1-l) w + l theta(x(pi(w))).
/// Independent of the objective; used to cross-check solve().
inline Equilibrium fixed_point_oracle(const Scenario& s, double damping, int iters,
                                      std::optional<Eigen::VectorXd> start = std::nullopt,
                                      double feasibility_cap = 10.0) {
  if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
  Eigen::VectorXd w;
  if (start) {
    w = *start;
  } else if (auto ref = s.reference_waits()) {
    w = *ref;
  } else {
    w = zero_flow_waits(s);
  }
  const auto n = static_cast<Eigen::Index>(s.num_levels());
  std::vector<double> residuals;
  int it = 0;
  for (; it < iters; ++it) {
    const Eigen::VectorXd x = level_flows(s, choice_matrix(s, w));
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      try {
        target(i) = wait(delay_model(s.levels[static_cast<std::size_t>(i)]), x(i));
      } catch (const SaturationError&) {
        throw DivergenceError("fixed-point iterate saturates level " +
                              s.levels[static_cast<std::size_t>(i)].id);
      }
    }
    const double r = (target - w).lpNorm<Eigen::Infinity>();
    residuals.push_back(r);
    if (residuals.size() > 50 && r > 10.0 * residuals[residuals.size() - 51])
      throw DivergenceError("fixed-point residual grew tenfold over 50 iterations");
    w = (1.0 - damping) * w + damping * target;
    if (r <= 1e-14 * std::max(1.0, w.lpNorm<Eigen::Infinity>())) {
      ++it;
      break;
    }
  }
  Equilibrium e = equilibrium_at(s, w, feasibility_cap);
  e.iterations = it;
  return e;
}

}  // namespace hospeq

#endif  // HOSPEQ_EQUILIBRIUM_HPP
