#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tabsight/service.hpp"

namespace tabsight {

using nlohmann::json;
namespace fs = std::filesystem;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::schema:
        case ErrorCode::ragged_matrix:
        case ErrorCode::leaf_count_mismatch:
        case ErrorCode::duplicate_label:
        case ErrorCode::config:
            return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::not_applicable:
        case ErrorCode::insufficient_data:
        case ErrorCode::precondition:
        case ErrorCode::empty_block:
        case ErrorCode::illegal_action:
            return 422;
        case ErrorCode::numeric:
        case ErrorCode::io:
            return 500;
    }
    return 500;
}

namespace {

json insight_entry(const InsightRecord& r) {
    return json{{"id", r.id},
                {"kind", to_string(r.kind)},
                {"rowEntry", r.block.rowEntry},
                {"colEntry", r.block.colEntry},
                {"score", r.score},
                {"params", r.params},
                {"chart", r.chart},
                {"provenance", to_string(r.provenance)}};
}

InsightKind parse_kind(const json& j, const std::string& path) {
    if (!j.is_string()) throw Error(ErrorCode::schema, "kind must be a string", path);
    const auto k = kind_from_string(j.get<std::string>());
    if (!k) throw Error(ErrorCode::schema, "unknown insight kind '" + j.get<std::string>() + "'", path);
    return *k;
}

int get_int(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
        throw Error(ErrorCode::schema, std::string("'") + key + "' must be an integer", path + "/" + key);
    }
    return it->get<int>();
}

InsightRecord entry_to_record(const TableState& state, const json& j, const std::string& path) {
    if (!j.is_object()) throw Error(ErrorCode::schema, "insight must be an object", path);
    InsightRecord r;
    r.id = get_int(j, "id", path);
    r.kind = parse_kind(j.value("kind", json()), path + "/kind");
    r.block = block_for(state, get_int(j, "rowEntry", path), get_int(j, "colEntry", path));
    if (!j.contains("score") || !j.at("score").is_number()) throw Error(ErrorCode::schema, "score must be a number", path + "/score");
    r.score = j.at("score").get<double>();
    r.params = j.value("params", json::object());
    r.chart = j.value("chart", std::string());
    const std::string prov = j.value("provenance", std::string("agent"));
    if (prov != "agent" && prov != "manual") throw Error(ErrorCode::schema, "provenance must be agent or manual", path + "/provenance");
    r.provenance = prov == "manual" ? Provenance::manual : Provenance::agent;
    return r;
}

InsightRecord& find_record(SessionSnapshot& s, int insightId) {
    for (auto& r : s.ledger) {
        if (r.id == insightId) return r;
    }
    throw Error(ErrorCode::not_found, "no insight " + std::to_string(insightId));
}

const InsightRecord& find_record(const SessionSnapshot& s, int insightId) {
    return find_record(const_cast<SessionSnapshot&>(s), insightId);
}

void clear_cells(TableState& state, const Block& b) {
    for (int i = b.rowBegin; i < b.rowEnd; ++i) {
        for (int j = b.colBegin; j < b.colEnd; ++j) state.grid.setViz(i, j, kNoInsight);
    }
}

std::vector<InsightRecord> detect_or_empty(const TableState& state, const Block& block, const DetectorThresholds& th) {
    try {
        return detect_all(state, block, th);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::empty_block) return {};
        throw;
    }
}

// Pure session operations shared by the store and log replay -------------

SessionSnapshot op_create(const std::string& id, const json& doc) {
    SessionSnapshot s;
    s.id = id;
    s.state = parse_table(doc);
    if (doc.contains("insights")) {
        const json& arr = doc.at("insights");
        if (!arr.is_array()) throw Error(ErrorCode::schema, "insights must be an array", "/insights");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string path = "/insights/" + std::to_string(i);
            InsightRecord r = entry_to_record(s.state, arr[i], path);
            if (std::any_of(s.ledger.begin(), s.ledger.end(), [&](const InsightRecord& o) { return o.id == r.id; })) {
                throw Error(ErrorCode::schema, "duplicate insight id", path + "/id");
            }
            if (overlaps_mask(s.state, r.block)) throw Error(ErrorCode::conflict, "imported insights overlap", path);
            s.nextInsightId = std::max(s.nextInsightId, r.id + 1);
            embed_record(s.state, s.ledger, std::move(r));
        }
    }
    s.metrics = compute_metrics(s.state, s.ledger);
    return s;
}

Metrics op_remove(SessionSnapshot& s, int insightId) {
    const InsightRecord& r = find_record(s, insightId);
    clear_cells(s.state, r.block);
    s.tombstones.push_back(Tombstone{r.block.rowEntry, r.block.colEntry, r.kind});
    s.ledger.erase(std::find_if(s.ledger.begin(), s.ledger.end(), [&](const InsightRecord& o) { return o.id == insightId; }));
    s.metrics = compute_metrics(s.state, s.ledger);
    return s.metrics;
}

std::vector<InsightRecord> op_alternatives(const SessionSnapshot& s, int insightId, const DetectorThresholds& th) {
    const InsightRecord& r = find_record(s, insightId);
    std::vector<InsightRecord> out;
    for (auto& alt : detect_or_empty(s.state, r.block, th)) {
        if (alt.kind != r.kind) out.push_back(std::move(alt));
    }
    return out;
}

InsightRecord op_replace(SessionSnapshot& s, int insightId, InsightKind kind, const DetectorThresholds& th) {
    const auto alts = op_alternatives(s, insightId, th);
    auto it = std::find_if(alts.begin(), alts.end(), [&](const InsightRecord& a) { return a.kind == kind; });
    if (it == alts.end()) {
        throw Error(ErrorCode::not_applicable, std::string(to_string(kind)) + " is not an alternative for insight " +
                                                   std::to_string(insightId));
    }
    InsightRecord& r = find_record(s, insightId);
    r.kind = it->kind;
    r.score = it->score;
    r.params = it->params;
    r.chart = it->chart;
    r.provenance = Provenance::manual;
    s.metrics = compute_metrics(s.state, s.ledger);
    return r;
}

InsightRecord op_manual(SessionSnapshot& s, int rowEntry, int colEntry, InsightKind kind, const DetectorThresholds& th) {
    const Block block = block_for(s.state, rowEntry, colEntry);
    if (overlaps_mask(s.state, block)) throw Error(ErrorCode::conflict, "block overlaps an embedded insight");
    for (auto& found : detect_or_empty(s.state, block, th)) {
        if (found.kind != kind) continue;
        found.id = s.nextInsightId++;
        found.provenance = Provenance::manual;
        InsightRecord out = found;
        embed_record(s.state, s.ledger, std::move(found));
        s.metrics = compute_metrics(s.state, s.ledger);
        return out;
    }
    throw Error(ErrorCode::not_applicable, std::string(to_string(kind)) + " does not fire on this block");
}

void op_transform(SessionSnapshot& s, ActionKind action, AggregateFn fn) {
    if (!is_transform(action)) throw Error(ErrorCode::precondition, "only transformation actions can be applied");
    if (!transform_applicable(s.state, action)) {
        throw Error(ErrorCode::not_applicable, std::string(to_string(action)) + " is not applicable to this table");
    }
    const int step = s.state.step;
    s.state = action == ActionKind::aggregate ? aggregate(s.state, fn) : apply_action(s.state, action);
    s.state.step = step;
    s.state.grid.clearViz();
    s.ledger.clear();
    s.tombstones.clear();
    s.metrics = compute_metrics(s.state, s.ledger);
}

/// Embeds the records of a finished agent run and moves the selection.
void op_apply_run(SessionSnapshot& s, const std::vector<InsightRecord>& added, int rowSel, int colSel) {
    for (const auto& r : added) {
        s.nextInsightId = std::max(s.nextInsightId, r.id + 1);
        embed_record(s.state, s.ledger, r);
    }
    s.state.rowTree.select(rowSel);
    s.state.colTree.select(colSel);
    s.metrics = compute_metrics(s.state, s.ledger);
}

json multiblock_json(const SessionSnapshot& s, const DetectorThresholds& th) {
    json out = json::array();
    for (const auto& r : s.ledger) {
        for (const auto& rel : recommend_blocks(s.state, r.block)) {
            std::vector<std::vector<InsightRecord>> perBlock;
            for (const Block& b : rel.related) perBlock.push_back(detect_or_empty(s.state, b, th));
            if (auto m = compose_multiblock(rel, perBlock)) {
                json j = record_to_json(*m);
                j["anchorInsight"] = r.id;
                j["relation"] = relation_to_json(rel);
                out.push_back(std::move(j));
            }
        }
    }
    return out;
}

json tombstones_json(const std::vector<Tombstone>& ts) {
    json out = json::array();
    for (const auto& t : ts) out.push_back(json{{"rowEntry", t.rowEntry}, {"colEntry", t.colEntry}, {"kind", to_string(t.kind)}});
    return out;
}

AggregateFn parse_fn(const std::string& name) {
    if (name == "mean") return AggregateFn::mean;
    if (name == "sum") return AggregateFn::sum;
    throw Error(ErrorCode::schema, "aggregate must be mean or sum", "/aggregate");
}

std::string fn_name(AggregateFn fn) { return fn == AggregateFn::sum ? "sum" : "mean"; }

}  // namespace

json session_to_json(const SessionSnapshot& s, const DetectorThresholds& th) {
    json viz = json::array();
    for (int r = 0; r < s.state.grid.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < s.state.grid.cols(); ++c) {
            const int v = s.state.grid.viz(r, c);
            if (v == kNoInsight) row.push_back(nullptr); else row.push_back(v);
        }
        viz.push_back(std::move(row));
    }
    json insights = json::array();
    for (const auto& r : s.ledger) insights.push_back(record_to_json(r));
    return json{{"id", s.id},
                {"revision", s.revision},
                {"table", serialize_table(s.state)},
                {"viz", std::move(viz)},
                {"selection", {{"row", s.state.rowTree.selected()}, {"col", s.state.colTree.selected()}}},
                {"insights", std::move(insights)},
                {"metrics", metrics_to_json(s.metrics)},
                {"multiBlock", multiblock_json(s, th)},
                {"tombstones", tombstones_json(s.tombstones)}};
}

json export_document(const SessionSnapshot& s) {
    json doc = serialize_table(s.state);
    json insights = json::array();
    for (const auto& r : s.ledger) insights.push_back(insight_entry(r));
    doc["insights"] = std::move(insights);
    return doc;
}

// Store ------------------------------------------------------------------

SessionStore::SessionStore(ServiceConfig service, EpisodeConfig episode, std::shared_ptr<const PolicyNet> policy)
    : service_(std::move(service)), episode_(episode), policy_(std::move(policy)) {
    if (!service_.dataDir.empty()) fs::create_directories(service_.dataDir);
}

fs::path SessionStore::sessionDir(const std::string& id) const { return fs::path(service_.dataDir) / id; }

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) const {
    std::lock_guard lock(sessionsMutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "no session " + id);
    return it->second;
}

std::shared_ptr<const SessionSnapshot> SessionStore::snapshot(const Entry& e) const {
    std::lock_guard lock(e.publish);
    return e.current;
}

void SessionStore::commit(Entry& e, SessionSnapshot next, const json& event) {
    if (!service_.dataDir.empty()) {
        const fs::path dir = sessionDir(next.id);
        fs::create_directories(dir);
        json line = event;
        line["revision"] = next.revision;
        std::ofstream log(dir / "events.jsonl", std::ios::app);
        if (!log) throw Error(ErrorCode::io, "cannot append to " + (dir / "events.jsonl").string());
        log << line.dump() << '\n';
        if (next.revision % service_.snapshotEvery == 0) {
            json snap{{"id", next.id},
                      {"revision", next.revision},
                      {"nextInsightId", next.nextInsightId},
                      {"document", export_document(next)},
                      {"tombstones", tombstones_json(next.tombstones)}};
            const fs::path tmp = dir / "snapshot.json.tmp";
            write_file(tmp.string(), snap.dump());
            fs::rename(tmp, dir / "snapshot.json");
        }
    }
    auto published = std::make_shared<const SessionSnapshot>(std::move(next));
    std::lock_guard lock(e.publish);
    e.current = std::move(published);
}

std::string SessionStore::create(const json& document) {
    std::string id;
    for (;;) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "s%06ld", ++created_);
        id = buf;
        std::lock_guard lock(sessionsMutex_);
        if (sessions_.count(id) == 0 && (service_.dataDir.empty() || !fs::exists(sessionDir(id)))) break;
    }
    SessionSnapshot s = op_create(id, document);
    auto e = std::make_shared<Entry>();
    {
        std::lock_guard lock(sessionsMutex_);
        sessions_[id] = e;
    }
    std::lock_guard w(e->write);
    commit(*e, std::move(s), json{{"type", "create"}, {"id", id}, {"document", document}});
    return id;
}

std::shared_ptr<const SessionSnapshot> SessionStore::get(const std::string& id) const { return snapshot(*entry(id)); }

RecommendResult SessionStore::recommend(const std::string& id, int budget) {
    if (budget < 0) throw Error(ErrorCode::schema, "budget must be non-negative", "budget");
    auto e = entry(id);
    bool expected = false;
    if (!e->running.compare_exchange_strong(expected, true)) {
        throw Error(ErrorCode::conflict, "a recommendation run is already in progress for " + id);
    }
    struct Release {
        std::atomic<bool>& flag;
        ~Release() { flag = false; }
    } release{e->running};
    if (onRunStart) onRunStart(id);

    std::lock_guard w(e->write);
    SessionSnapshot next = *snapshot(*e);
    next.revision += 1;

    RecommendResult out;
    std::vector<InsightRecord> added;
    int rowSel = next.state.rowTree.selected();
    int colSel = next.state.colTree.selected();
    if (budget > 0) {
        EpisodeConfig ec = episode_;
        ec.shuffleHeadings = false;
        TableState start = next.state;
        start.step = ec.transformSteps();
        ec.totalSteps = start.step + budget;
        Environment env(start, ec);
        env.restore(start, next.ledger, next.nextInsightId);
        const EpisodeTrace trace =
            continue_episode(env, policy_.get(), budget, derive_seed(episode_.seed, static_cast<std::uint64_t>(next.revision)));
        out.steps = static_cast<int>(trace.actions.size());
        for (std::size_t i = next.ledger.size(); i < env.ledger().size(); ++i) {
            const InsightRecord& r = env.ledger()[i];
            const Tombstone t{r.block.rowEntry, r.block.colEntry, r.kind};
            if (std::find(next.tombstones.begin(), next.tombstones.end(), t) != next.tombstones.end()) continue;
            added.push_back(r);
        }
        rowSel = env.state().rowTree.selected();
        colSel = env.state().colTree.selected();
    }
    op_apply_run(next, added, rowSel, colSel);

    json recs = json::array();
    for (const auto& r : added) recs.push_back(insight_entry(r));
    out.added = added;
    out.metrics = next.metrics;
    out.revision = next.revision;
    commit(*e, std::move(next),
           json{{"type", "recommend"}, {"budget", budget}, {"added", std::move(recs)}, {"selection", {rowSel, colSel}}});
    return out;
}

Metrics SessionStore::remove(const std::string& id, int insightId) {
    auto e = entry(id);
    std::lock_guard w(e->write);
    SessionSnapshot next = *snapshot(*e);
    const Metrics m = op_remove(next, insightId);
    next.revision += 1;
    commit(*e, std::move(next), json{{"type", "remove"}, {"insight", insightId}});
    return m;
}

std::vector<InsightRecord> SessionStore::alternatives(const std::string& id, int insightId) const {
    return op_alternatives(*get(id), insightId, episode_.thresholds);
}

InsightRecord SessionStore::replace(const std::string& id, int insightId, InsightKind kind) {
    auto e = entry(id);
    std::lock_guard w(e->write);
    SessionSnapshot next = *snapshot(*e);
    InsightRecord r = op_replace(next, insightId, kind, episode_.thresholds);
    next.revision += 1;
    commit(*e, std::move(next), json{{"type", "replace"}, {"insight", insightId}, {"kind", to_string(kind)}});
    return r;
}

InsightRecord SessionStore::add_manual(const std::string& id, int rowEntry, int colEntry, InsightKind kind) {
    auto e = entry(id);
    std::lock_guard w(e->write);
    SessionSnapshot next = *snapshot(*e);
    InsightRecord r = op_manual(next, rowEntry, colEntry, kind, episode_.thresholds);
    next.revision += 1;
    commit(*e, std::move(next),
           json{{"type", "add"}, {"rowEntry", rowEntry}, {"colEntry", colEntry}, {"kind", to_string(kind)}});
    return r;
}

std::shared_ptr<const SessionSnapshot> SessionStore::transform(const std::string& id, ActionKind action, AggregateFn fn) {
    auto e = entry(id);
    std::lock_guard w(e->write);
    SessionSnapshot next = *snapshot(*e);
    op_transform(next, action, fn);
    next.revision += 1;
    commit(*e, std::move(next), json{{"type", "transform"}, {"action", to_string(action)}, {"aggregate", fn_name(fn)}});
    return snapshot(*e);
}

json SessionStore::export_session(const std::string& id) const { return export_document(*get(id)); }

// Replay -----------------------------------------------------------------

json replay_session_log(const std::string& path, const DetectorThresholds& th) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path);
    std::optional<SessionSnapshot> s;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineNo);
        json ev;
        try {
            ev = json::parse(line);
        } catch (const json::parse_error& err) {
            throw Error(ErrorCode::schema, where + ": " + err.what());
        }
        const std::string type = ev.value("type", std::string());
        if (type == "create") {
            s = op_create(ev.at("id").get<std::string>(), ev.at("document"));
        } else if (!s) {
            throw Error(ErrorCode::schema, where + ": log must start with a create event");
        } else if (type == "recommend") {
            std::vector<InsightRecord> added;
            for (const auto& r : ev.at("added")) added.push_back(entry_to_record(s->state, r, where));
            op_apply_run(*s, added, ev.at("selection").at(0).get<int>(), ev.at("selection").at(1).get<int>());
        } else if (type == "remove") {
            op_remove(*s, ev.at("insight").get<int>());
        } else if (type == "replace") {
            op_replace(*s, ev.at("insight").get<int>(), parse_kind(ev.at("kind"), where), th);
        } else if (type == "add") {
            op_manual(*s, ev.at("rowEntry").get<int>(), ev.at("colEntry").get<int>(), parse_kind(ev.at("kind"), where), th);
        } else if (type == "transform") {
            const auto action = action_from_string(ev.at("action").get<std::string>());
            if (!action) throw Error(ErrorCode::schema, where + ": unknown action");
            op_transform(*s, *action, parse_fn(ev.value("aggregate", std::string("mean"))));
        } else {
            throw Error(ErrorCode::schema, where + ": unknown event type '" + type + "'");
        }
        if (ev.contains("revision")) s->revision = ev.at("revision").get<long>();
    }
    if (!s) throw Error(ErrorCode::schema, path + ": empty session log");
    return export_document(*s);
}

}  // namespace tabsight
