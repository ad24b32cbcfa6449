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

#ifndef PESSIM_SERIALIZE_H_
#define PESSIM_SERIALIZE_H_

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "pessim/env.h"
#include "pessim/policy.h"
#include "pessim/reward_ensemble.h"

namespace pessim {

using Json = nlohmann::ordered_json;

// Locale-independent, 17 significant digits.
std::string FormatReal(double value);

Json WorldToJson(const World& world);
World WorldFromJson(const Json& doc);

// One JSON object per line with prompt_id, chosen_id, rejected_id,
// score_chosen, score_rejected, u_chosen, u_rejected, corrupted.
std::string DatasetToJsonl(const PreferenceDataset& dataset);
// Dataset-level metadata is not part of the record stream; the caller sets
// world_seed and corruption_rate.
PreferenceDataset DatasetFromJsonl(std::string_view text);

Json PolicyToJson(const SoftmaxPolicy& policy);
SoftmaxPolicy PolicyFromJson(const Json& doc);

Json EnsembleToJson(const RewardEnsemble& ensemble);
RewardEnsemble EnsembleFromJson(const Json& doc);

// Serialized document text, newline terminated.
std::string DumpJson(const Json& doc);

// Throws std::runtime_error naming the path on failure.
std::string ReadFile(const std::filesystem::path& path);
// Creates missing parent directories.
void WriteFile(const std::filesystem::path& path, std::string_view content);

}  // namespace pessim

#endif  // PESSIM_SERIALIZE_H_
