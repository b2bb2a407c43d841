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

#ifndef HOSPEQ_CHOICE_HPP
#define HOSPEQ_CHOICE_HPP

// Random-utility choice: the expected maximum utility Phi(u) = E[max_j(u_j + e_j)]
// and its gradient, which is the vector of choice probabilities. Closed forms
// are provided for i.i.d. Gumbel noise (multinomial logit); any other noise
// is handled by Monte Carlo.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

#include "hospeq/rng.hpp"

namespace hospeq {

/// Deterministic utilities of all alternatives for one class, together with
/// the Gumbel scale. Position 0 is the opt-out when the model has one.
struct UtilityVector {
  Eigen::VectorXd values;
  double scale = 1.0;

  bool valid() const { return values.size() > 0 && values.allFinite() && scale > 0.0; }
};

/// Probabilities over the alternatives of a UtilityVector; sums to 1.
using ChoiceDistribution = Eigen::VectorXd;

/// (1/scale) * log(sum_j exp(scale * u_j)), max-shifted.
inline double mnl_phi(const UtilityVector& u) {
  const double top = u.values.maxCoeff();
  const double sum = (u.scale * (u.values.array() - top)).exp().sum();
  return top + std::log(sum) / u.scale;
}

/// Softmax at the given scale, renormalised so the entries sum to one.
inline ChoiceDistribution mnl_probabilities(const UtilityVector& u) {
  const double top = u.values.maxCoeff();
  Eigen::VectorXd p = (u.scale * (u.values.array() - top)).exp().matrix();
  p /= p.sum();
  // second pass pins the row sum to 1 to within one rounding step
  p /= p.sum();
  return p;
}

enum class NoiseKind { gumbel, normal };

/// Independent zero-mean noise per alternative. For Gumbel, `scale` is beta
/// and the noise is (G - gamma) / beta with G standard Gumbel, so the expected
/// maximum equals mnl_phi exactly. For Normal, `scale` is the standard deviation.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gumbel;
  double scale = 1.0;
};

inline NoiseSpec noise_from_string(std::string_view name, double scale) {
  if (name == "gumbel") return {NoiseKind::gumbel, scale};
  if (name == "normal") return {NoiseKind::normal, scale};
  throw std::invalid_argument("unsupported noise '" + std::string(name) + "'");
}

struct McEstimate {
  double phi = 0.0;
  double phi_stderr = 0.0;
  ChoiceDistribution probabilities;
  std::size_t samples = 0;

  /// Binomial standard error of probability i.
  double probability_stderr(Eigen::Index i) const {
    const double p = probabilities(i);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  }
};

/// Sample mean of max_j(u_j + e_j) and empirical argmax frequencies.
/// Deterministic in `seed`.
inline McEstimate mc_phi_and_probabilities(const Eigen::VectorXd& u, const NoiseSpec& noise,
                                           std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (!(noise.scale > 0.0) || !std::isfinite(noise.scale))
    throw std::invalid_argument("noise scale must be finite and > 0");
  if (u.size() == 0 || !u.allFinite()) throw std::invalid_argument("utilities must be finite");

  CounterRng rng(derive_key(seed, 0));
  boost::random::normal_distribution<double> normal(0.0, noise.scale);
  auto draw = [&]() {
    if (noise.kind == NoiseKind::gumbel)
      return (-std::log(-std::log(rng.uniform_open01())) - std::numbers::egamma) / noise.scale;
    return normal(rng);
  };

  const Eigen::Index n = u.size();
  Eigen::VectorXd wins = Eigen::VectorXd::Zero(n);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t t = 0; t < samples; ++t) {
    Eigen::Index best = 0;
    double best_value = u(0) + draw();
    for (Eigen::Index j = 1; j < n; ++j) {
      const double v = u(j) + draw();
      if (v > best_value) {
        best_value = v;
        best = j;
      }
    }
    wins(best) += 1.0;
    const double delta = best_value - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (best_value - mean);
  }

  McEstimate est;
  est.samples = samples;
  est.phi = mean;
  est.phi_stderr = samples > 1 ? std::sqrt(m2 / static_cast<double>(samples - 1) /
                                           static_cast<double>(samples))
                               : 0.0;
  est.probabilities = wins / static_cast<double>(samples);
  return est;
}

/// max_i |central difference of mnl_phi along i - mnl_probabilities(u)_i|.
inline double phi_gradient_check(const UtilityVector& u, double h) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("step must lie in (0, 1e-3]");
  const ChoiceDistribution p = mnl_probabilities(u);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < u.values.size(); ++i) {
    UtilityVector up = u;
    UtilityVector down = u;
    up.values(i) += h;
    down.values(i) -= h;
    const double fd = (mnl_phi(up) - mnl_phi(down)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - p(i)));
  }
  return worst;
}

}  // namespace hospeq

#endif  // HOSPEQ_CHOICE_HPP
