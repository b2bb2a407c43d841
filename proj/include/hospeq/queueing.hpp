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

#ifndef HOSPEQ_QUEUEING_HPP
#define HOSPEQ_QUEUEING_HPP

// Delay functions theta(x): annual level flow -> expected wait in hours.
//
// A level's flow is spread evenly over its doctor-hours, so the arrival rate
// seen by one queue is x_q = flow / capacity (patients per hour). The level
// wait is `multiplier` times the single-queue wait, modelling that many
// identically loaded sequential queues. Below zero flow the function is
// extended linearly, theta(x) = theta(0) + x_q, which makes the inverse
// defined on the whole real line.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "hospeq/model.hpp"

namespace hospeq {

struct DelayModel {
  QueueKind kind = QueueKind::mm1;
  WaitMetric metric = WaitMetric::queue;
  double service_rate = 1.0;  // mu, per server-hour
  int servers = 1;
  double multiplier = 1.0;
  double capacity = 1.0;  // doctor-hours/year

  double saturation() const { return capacity * servers * service_rate; }

  /// Per-queue arrival rate at which the queue saturates.
  double queue_saturation() const { return servers * service_rate; }

  /// theta(0): zero for queueing delay, one service time per queue otherwise.
  double zero_flow_wait() const {
    return metric == WaitMetric::system ? multiplier / service_rate : 0.0;
  }
};

inline DelayModel delay_model(const FacilityLevel& l) {
  return {l.queue, l.metric, l.service_rate, l.servers, l.multiplier, l.capacity};
}

class SaturationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Erlang C probability of waiting for s servers at offered load a < s.
/// Uses the Erlang B recursion, which stays stable for large s.
inline double erlang_c(int servers, double load) {
  double b = 1.0;
  for (int k = 1; k <= servers; ++k) b = load * b / (k + load * b);
  const double s = servers;
  return s * b / (s - load * (1.0 - b));
}

/// Wait (hours) of one queue at per-queue arrival rate 0 <= x_q < s*mu.
inline double single_queue_wait(const DelayModel& d, double xq) {
  const double mu = d.service_rate;
  double wq = 0.0;
  if (d.kind == QueueKind::mm1) {
    wq = xq / (mu * (mu - xq));
  } else {
    // s*mu - x_q rather than mu*(s - x_q/mu): no cancellation near saturation
    wq = erlang_c(d.servers, xq / mu) / (d.servers * mu - xq);
  }
  return d.metric == WaitMetric::system ? wq + 1.0 / mu : wq;
}

/// theta(flow) in hours. Throws SaturationError when flow >= saturation.
inline double wait(const DelayModel& d, double flow) {
  const double xq = flow / d.capacity;
  if (xq < 0.0) return d.zero_flow_wait() + xq;
  if (!(xq < d.queue_saturation()))
    throw SaturationError("flow " + std::to_string(flow) + " reaches saturation " +
                          std::to_string(d.saturation()));
  return d.multiplier * single_queue_wait(d, xq);
}

/// theta^{-1}(w) in patients/year; defined for every finite w.
inline double inverse_wait(const DelayModel& d, double w) {
  const double w0 = d.zero_flow_wait();
  if (w <= w0) return (w - w0) * d.capacity;
  const double mu = d.service_rate;
  const double v = w / d.multiplier;  // single-queue wait
  double xq = 0.0;
  if (d.kind == QueueKind::mm1) {
    xq = d.metric == WaitMetric::queue ? mu * mu * v / (1.0 + mu * v) : mu - 1.0 / v;
  } else {
    const double hi = d.queue_saturation() * (1.0 - 1e-12);
    if (single_queue_wait(d, hi) <= v) {
      xq = hi;
    } else {
      auto f = [&](double x) { return single_queue_wait(d, x) - v; };
      // bisect down to a few ulps; near saturation the wait is steep in x
      const double floor = std::numeric_limits<double>::epsilon() * hi;
      auto tol = [floor](double a, double b) {
        return std::abs(b - a) <=
               std::max(floor, 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b)));
      };
      boost::uintmax_t max_iter = 200;
      auto [a, b] = boost::math::tools::bisect(f, 0.0, hi, tol, max_iter);
      xq = 0.5 * (a + b);
    }
  }
  return xq * d.capacity;
}

/// d/dw theta^{-1}(w).
inline double inverse_wait_slope(const DelayModel& d, double w) {
  const double w0 = d.zero_flow_wait();
  if (w < w0) return d.capacity;
  const double mu = d.service_rate;
  const double m = d.multiplier;
  const double v = w / m;
  if (d.kind == QueueKind::mm1) {
    if (d.metric == WaitMetric::queue) {
      const double den = 1.0 + mu * v;
      return d.capacity * mu * mu / (m * den * den);
    }
    return d.capacity / (m * v * v);
  }
  const double xq = inverse_wait(d, w) / d.capacity;
  const double h = 1e-6 * std::max(xq, 1e-3);
  const double lo = std::max(0.0, xq - h);
  const double hi = std::min(d.queue_saturation() * (1.0 - 1e-12), xq + h);
  const double dv_dx = (single_queue_wait(d, hi) - single_queue_wait(d, lo)) / (hi - lo);
  return d.capacity / (m * dv_dx);
}

/// H(w) = integral of theta^{-1} from theta(0) to w, in patient-hours/year.
inline double h_integral(const DelayModel& d, double w) {
  const double w0 = d.zero_flow_wait();
  if (w <= w0) return 0.5 * (w - w0) * (w - w0) * d.capacity;
  const double mu = d.service_rate;
  const double m = d.multiplier;
  if (d.kind == QueueKind::mm1) {
    if (d.metric == WaitMetric::queue)
      return d.capacity * (mu * w - m * std::log1p(mu * w / m));
    return d.capacity * (mu * (w - w0) - m * std::log(w / w0));
  }
  // By parts: int_{w0}^{w} x dz = x(w) w - int_0^{x(w)} theta(y) dy. The
  // wait formula is smooth in y, unlike x(z) which has a root-type cusp at w0.
  const double xq = inverse_wait(d, w) / d.capacity;
  auto theta_q = [&](double y) { return m * single_queue_wait(d, y); };
  double error = 0.0;
  const double area = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
      theta_q, 0.0, xq, 15, 1e-14, &error);
  return d.capacity * (xq * w - area);
}

}  // namespace hospeq

#endif  // HOSPEQ_QUEUEING_HPP
