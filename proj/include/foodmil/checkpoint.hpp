// Copyright 2026 The foodmil Authors
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

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "foodmil/error.hpp"
#include "foodmil/trainer.hpp"
#include "foodmil/types.hpp"

namespace foodmil {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  GatedAttentionModel model;
  std::optional<TrainConfig> train_config;
};

/// JSON document; matrices are flat row-major arrays. Doubles are printed
/// with 17 significant digits so loading restores them bit for bit.
inline nlohmann::json checkpoint_to_json(const GatedAttentionModel& model, const std::optional<TrainConfig>& cfg) {
  model.validate();
  nlohmann::json j = {{"format_version", kCheckpointFormatVersion},
                      {"m", model.m},
                      {"l", model.l},
                      {"V", model.V.data},
                      {"U", model.U.data},
                      {"w_attn", model.w_attn},
                      {"w_clf", model.w_clf},
                      {"b", model.b}};
  if (model.fusion) {
    j["fusion"] = {{"w_inc", model.fusion->w_inc},
                   {"income_mean", model.fusion->income_mean},
                   {"income_std", model.fusion->income_std}};
  }
  if (cfg) j["train_config"] = to_json(*cfg);
  return j;
}

namespace detail {

inline std::size_t checkpoint_dim(const nlohmann::json& j, const char* field) {
  if (!j.contains(field)) throw FormatError(std::string("checkpoint is missing field '") + field + "'");
  const auto& v = j.at(field);
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
    throw FormatError(std::string("checkpoint field '") + field + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

inline std::vector<double> checkpoint_array(const nlohmann::json& j, const char* field, std::size_t expected) {
  if (!j.contains(field)) throw FormatError(std::string("checkpoint is missing field '") + field + "'");
  const auto& v = j.at(field);
  if (!v.is_array()) throw FormatError(std::string("checkpoint field '") + field + "' must be an array");
  if (v.size() != expected) {
    throw FormatError(std::string("checkpoint field '") + field + "' has " + std::to_string(v.size()) +
                      " values, expected " + std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& x : v) {
    if (!x.is_number()) throw FormatError(std::string("checkpoint field '") + field + "' holds a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

inline double checkpoint_scalar(const nlohmann::json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_number()) {
    throw FormatError(std::string("checkpoint field '") + field + "' must be a number");
  }
  return j.at(field).get<double>();
}

}  // namespace detail

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("checkpoint must be a JSON object");
  if (!j.contains("format_version") || j.at("format_version") != kCheckpointFormatVersion) {
    throw FormatError("checkpoint field 'format_version' is missing or unsupported");
  }
  const std::size_t m = detail::checkpoint_dim(j, "m");
  const std::size_t l = detail::checkpoint_dim(j, "l");

  Checkpoint ck;
  ck.model = GatedAttentionModel::zeros(m, l);
  ck.model.V.data = detail::checkpoint_array(j, "V", l * m);
  ck.model.U.data = detail::checkpoint_array(j, "U", l * m);
  ck.model.w_attn = detail::checkpoint_array(j, "w_attn", l);
  ck.model.w_clf = detail::checkpoint_array(j, "w_clf", m);
  ck.model.b = detail::checkpoint_scalar(j, "b");
  if (j.contains("fusion") && !j.at("fusion").is_null()) {
    const auto& f = j.at("fusion");
    ck.model.fusion = FusionBlock{detail::checkpoint_scalar(f, "w_inc"), detail::checkpoint_scalar(f, "income_mean"),
                                  detail::checkpoint_scalar(f, "income_std")};
  }
  if (j.contains("train_config")) {
    try {
      ck.train_config = train_config_from_json(j.at("train_config"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint field 'train_config' is malformed: ") + e.what());
    }
  }
  try {
    ck.model.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint holds an invalid model: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const GatedAttentionModel& model,
                            const std::optional<TrainConfig>& cfg = std::nullopt) {
  const auto j = checkpoint_to_json(model, cfg);
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << j.dump(1) << '\n';
  if (!out) throw Error("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace foodmil
