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

#ifndef HOSPEQ_HOSPEQ_HPP
#define HOSPEQ_HOSPEQ_HPP

#include "hospeq/case_study.hpp"
#include "hospeq/choice.hpp"
#include "hospeq/equilibrium.hpp"
#include "hospeq/experiment.hpp"
#include "hospeq/model.hpp"
#include "hospeq/queueing.hpp"
#include "hospeq/rng.hpp"

namespace hospeq {
inline constexpr const char* kVersion = "0.1.0";
}

#endif  // HOSPEQ_HOSPEQ_HPP
