#pragma once

#include <string>

#include <json.hpp>

#include "tabsight/agent.hpp"
#include "tabsight/env.hpp"

namespace tabsight {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string dataDir = "sessions";
    std::string checkpoint;  // empty: greedy recommendations
    int snapshotEvery = 20;
    int defaultBudget = 200;
};

void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);

/// Single configuration document: detector thresholds, episode settings
/// (T, SR, eta weights), training settings (lambda etc.) and service settings.
struct AppConfig {
    EpisodeConfig episode;
    TrainConfig train;
    ServiceConfig service;
};

/// Accepts {"thresholds", "episode", "train", "service"}; every section and key
/// is optional. The episode section (with thresholds) is also copied into the
/// training configuration.
AppConfig parse_config(const nlohmann::json& doc);
AppConfig load_config(const std::string& path);
/// TABSIGHT_PORT and TABSIGHT_DATA_DIR override the service section.
void apply_env_overrides(AppConfig& cfg);
nlohmann::json config_to_json(const AppConfig& cfg);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
TableState load_table_file(const std::string& path);

}  // namespace tabsight
