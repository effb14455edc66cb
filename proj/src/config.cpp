#include "tabsight/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tabsight {

using nlohmann::json;

void to_json(json& j, const ServiceConfig& c) {
    j = json{{"host", c.host},
             {"port", c.port},
             {"dataDir", c.dataDir},
             {"checkpoint", c.checkpoint},
             {"snapshotEvery", c.snapshotEvery},
             {"defaultBudget", c.defaultBudget}};
}

void from_json(const json& j, ServiceConfig& c) {
    if (j.contains("host")) c.host = j.at("host").get<std::string>();
    if (j.contains("port")) c.port = j.at("port").get<int>();
    if (j.contains("dataDir")) c.dataDir = j.at("dataDir").get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("snapshotEvery")) c.snapshotEvery = j.at("snapshotEvery").get<int>();
    if (j.contains("defaultBudget")) c.defaultBudget = j.at("defaultBudget").get<int>();
    if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::config, "port out of range");
    if (c.snapshotEvery < 1) throw Error(ErrorCode::config, "snapshotEvery must be positive");
}

AppConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::config, "configuration must be a JSON object");
    AppConfig cfg;
    try {
        if (doc.contains("episode")) cfg.episode = doc.at("episode").get<EpisodeConfig>();
        if (doc.contains("thresholds")) cfg.episode.thresholds = doc.at("thresholds").get<DetectorThresholds>();
        if (doc.contains("train")) {
            json t = doc.at("train");
            t["episode"] = cfg.episode;
            cfg.train = t.get<TrainConfig>();
        } else {
            cfg.train.episode = cfg.episode;
        }
        if (doc.contains("service")) cfg.service = doc.at("service").get<ServiceConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

AppConfig load_config(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::config, path + ": " + e.what());
    }
    return parse_config(doc);
}

void apply_env_overrides(AppConfig& cfg) {
    if (const char* port = std::getenv("TABSIGHT_PORT")) {
        try {
            cfg.service.port = std::stoi(port);
        } catch (const std::exception&) {
            throw Error(ErrorCode::config, std::string("TABSIGHT_PORT is not a number: ") + port);
        }
    }
    if (const char* dir = std::getenv("TABSIGHT_DATA_DIR")) cfg.service.dataDir = dir;
}

json config_to_json(const AppConfig& cfg) {
    return json{{"episode", cfg.episode}, {"thresholds", cfg.episode.thresholds}, {"train", cfg.train}, {"service", cfg.service}};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << content;
}

TableState load_table_file(const std::string& path) {
    const std::string text = read_file(path);
    return parse_table(std::string_view(text));
}

}  // namespace tabsight
