#pragma once

#include <string>

#include "json.hpp"
#include "tpgst/data.hpp"
#include "tpgst/model.hpp"
#include "tpgst/train.hpp"

namespace tpgst {

struct PathsConfig {
    std::string data;
    std::string train_data;
    std::string out_dir;
    std::string report_dir;
};

struct RunConfig {
    TaskConfig task;
    ModelConfig model;
    TrainConfig train;
    PathsConfig paths;
};

RunConfig default_run_config();

// Strict parsing: unknown keys are rejected and all module invariants are
// validated, with path-qualified messages (ConfigError).
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

nlohmann::json task_to_json(const TaskConfig& c);
nlohmann::json model_to_json(const ModelConfig& c);
nlohmann::json train_to_json(const TrainConfig& c);
nlohmann::json run_config_to_json(const RunConfig& c);

TaskConfig task_from_json(const nlohmann::json& j, const std::string& where);
ModelConfig model_from_json(const nlohmann::json& j, const std::string& where);
TrainConfig train_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace tpgst
