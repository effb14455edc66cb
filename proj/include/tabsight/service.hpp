#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabsight/agent.hpp"
#include "tabsight/config.hpp"
#include "tabsight/env.hpp"

namespace tabsight {

/// A removed (block, kind) pair; later agent runs do not re-propose it.
struct Tombstone {
    int rowEntry = 0;
    int colEntry = 0;
    InsightKind kind = InsightKind::outlier;

    bool operator==(const Tombstone&) const = default;
};

/// Immutable view of a session after some revision.
struct SessionSnapshot {
    std::string id;
    long revision = 0;
    TableState state;
    std::vector<InsightRecord> ledger;
    Metrics metrics;
    std::vector<Tombstone> tombstones;
    int nextInsightId = 0;
};

/// Session view for GET: table, vizMask, selection, insights, metrics and the
/// multi-block patterns anchored on each ledger block.
nlohmann::json session_to_json(const SessionSnapshot& s, const DetectorThresholds& th);

/// Canonical table JSON plus an `insights` array; accepted back by create.
nlohmann::json export_document(const SessionSnapshot& s);

/// Maps library errors onto HTTP status codes.
int http_status(ErrorCode code);

struct RecommendResult {
    std::vector<InsightRecord> added;
    Metrics metrics;
    long revision = 0;
    int steps = 0;
};

class SessionStore {
public:
    /// `policy` may be null: recommendations then use the greedy baseline.
    SessionStore(ServiceConfig service, EpisodeConfig episode, std::shared_ptr<const PolicyNet> policy = nullptr);

    /// Parses the document (with an optional `insights` array) and persists a
    /// new session. Returns its id.
    std::string create(const nlohmann::json& document);

    std::shared_ptr<const SessionSnapshot> get(const std::string& id) const;

    /// Runs at most `budget` selection steps from the current state. A second
    /// concurrent run on the same session throws conflict.
    RecommendResult recommend(const std::string& id, int budget);
    Metrics remove(const std::string& id, int insightId);
    std::vector<InsightRecord> alternatives(const std::string& id, int insightId) const;
    InsightRecord replace(const std::string& id, int insightId, InsightKind kind);
    InsightRecord add_manual(const std::string& id, int rowEntry, int colEntry, InsightKind kind);
    /// Applies a transformation chosen by the user; clears the ledger.
    std::shared_ptr<const SessionSnapshot> transform(const std::string& id, ActionKind action,
                                                     AggregateFn fn = AggregateFn::mean);
    nlohmann::json export_session(const std::string& id) const;

    const EpisodeConfig& episode() const { return episode_; }
    const ServiceConfig& service() const { return service_; }

    /// Called inside recommend after the run flag is set (tests use it to
    /// overlap two runs deterministically).
    std::function<void(const std::string&)> onRunStart;

private:
    struct Entry {
        std::mutex write;
        std::atomic<bool> running{false};
        mutable std::mutex publish;
        std::shared_ptr<const SessionSnapshot> current;
    };

    std::shared_ptr<Entry> entry(const std::string& id) const;
    std::shared_ptr<const SessionSnapshot> snapshot(const Entry& e) const;
    void commit(Entry& e, SessionSnapshot next, const nlohmann::json& event);
    std::filesystem::path sessionDir(const std::string& id) const;

    ServiceConfig service_;
    EpisodeConfig episode_;
    std::shared_ptr<const PolicyNet> policy_;
    mutable std::mutex sessionsMutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::atomic<long> created_{0};
};

/// Rebuilds a session from its events.jsonl log; returns the export document.
nlohmann::json replay_session_log(const std::string& path, const DetectorThresholds& th = {});

/// Blocking HTTP server over a store.
class HttpService {
public:
    explicit HttpService(SessionStore& store);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds to host:port (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tabsight
