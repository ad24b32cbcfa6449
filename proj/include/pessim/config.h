// Copyright 2026 The Pessim Authors.
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

#ifndef PESSIM_CONFIG_H_
#define PESSIM_CONFIG_H_

#include "pessim/harness.h"
#include "pessim/serialize.h"

namespace pessim {

// Experiment config documents. Keys mirror the struct fields exactly;
// missing keys take defaults and unknown keys throw ConfigError.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

ScenarioConfig ScenarioFromJson(const Json& doc);
// Fully resolved document (every key present).
Json ScenarioToJson(const ScenarioConfig& config);

LossConfig LossConfigFromJson(const Json& doc);
Json LossConfigToJson(const LossConfig& config);
TrainConfig TrainConfigFromJson(const Json& doc);
Json TrainConfigToJson(const TrainConfig& config);

// The arm list used when a config names none: vanilla DPO and every
// penalized scheme at z = 0.3, all sharing one train config.
std::vector<ArmConfig> DefaultArms();

}  // namespace pessim

#endif  // PESSIM_CONFIG_H_
