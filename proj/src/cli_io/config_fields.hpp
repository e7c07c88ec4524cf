// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

// Key table shared by config files and checkpoint headers.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trams/cli_io.hpp"

namespace trams::detail {

struct ConfigField {
    std::string key;
    std::string help;
    bool model_field = false;
    /// Returns an empty string on success, otherwise the reason the value was rejected.
    std::function<std::string(RunConfig&, const nlohmann::json&)> set;
    std::function<nlohmann::json(const RunConfig&)> get;
};

const std::vector<ConfigField>& config_fields();

/// Applies every key of `object`; collects unknown keys and bad values.
std::vector<std::string> apply_fields(RunConfig& config, const nlohmann::json& object, bool model_only);

nlohmann::json model_config_to_json(const ModelConfig& config);

}  // namespace trams::detail
