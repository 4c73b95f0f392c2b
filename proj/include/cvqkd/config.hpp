// JSON form of ExperimentConfig. Unknown keys and type errors are rejected
// with the dotted path of the offending field.
#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "cvqkd/experiment.hpp"

namespace cvqkd::config {

nlohmann::ordered_json to_json(const experiment::ExperimentConfig& cfg);

/// Missing keys keep the values of `base`.
experiment::ExperimentConfig from_json(const nlohmann::ordered_json& j,
                                       const experiment::ExperimentConfig& base);

experiment::ExperimentConfig load_file(const std::string& path, const experiment::ExperimentConfig& base);

/// Sets the field at a dotted path ("tx.symbol_rate") from its text form.
/// The text is parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::ordered_json& j, const std::string& dotted_path, const std::string& value);

experiment::ExperimentConfig apply_overrides(
    const experiment::ExperimentConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace cvqkd::config
