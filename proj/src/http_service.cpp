#include <httplib.h>

#include "tabsight/service.hpp"

namespace tabsight {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    json body{{"error", to_string(e.code())}, {"message", e.what()}};
    if (!e.path().empty()) body["path"] = e.path();
    send_json(res, http_status(e.code()), body);
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::schema, std::string("malformed JSON: ") + e.what(), "");
    }
}

int parse_int(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(text, &used);
    } catch (const std::exception&) {
        throw Error(ErrorCode::schema, what + " must be an integer", what);
    }
    if (used != text.size()) throw Error(ErrorCode::schema, what + " must be an integer", what);
    return v;
}

InsightKind body_kind(const json& body) {
    if (!body.is_object() || !body.contains("kind") || !body.at("kind").is_string()) {
        throw Error(ErrorCode::schema, "body needs a string 'kind'", "/kind");
    }
    const auto k = kind_from_string(body.at("kind").get<std::string>());
    if (!k) throw Error(ErrorCode::schema, "unknown insight kind", "/kind");
    return *k;
}

int body_int(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || !body.at(key).is_number_integer()) {
        throw Error(ErrorCode::schema, std::string("body needs an integer '") + key + "'", std::string("/") + key);
    }
    return body.at(key).get<int>();
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const json::exception& e) {
            send_error(res, Error(ErrorCode::schema, e.what()));
        } catch (const std::exception& e) {
            send_json(res, 500, json{{"error", "internal"}, {"message", e.what()}});
        }
    };
}

}  // namespace

struct HttpService::Impl {
    SessionStore& store;
    httplib::Server server;

    explicit Impl(SessionStore& s) : store(s) { routes(); }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = store.create(parse_body(req));
            send_json(res, 201, json{{"id", id}, {"session", session_to_json(*store.get(id), store.episode().thresholds)}});
        }));

        server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, session_to_json(*store.get(req.matches[1]), store.episode().thresholds));
        }));

        server.Post(R"(/sessions/([^/]+)/recommend)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const int budget =
                req.has_param("budget") ? parse_int(req.get_param_value("budget"), "budget") : store.service().defaultBudget;
            const RecommendResult r = store.recommend(req.matches[1], budget);
            json added = json::array();
            for (const auto& rec : r.added) added.push_back(record_to_json(rec));
            send_json(res, 200,
                      json{{"added", std::move(added)},
                           {"metrics", metrics_to_json(r.metrics)},
                           {"revision", r.revision},
                           {"steps", r.steps}});
        }));

        server.Delete(R"(/sessions/([^/]+)/insights/([^/]+))",
                      guarded([this](const httplib::Request& req, httplib::Response& res) {
                          const std::string id = req.matches[1];
                          const Metrics m = store.remove(id, parse_int(req.matches[2], "insight id"));
                          send_json(res, 200, json{{"metrics", metrics_to_json(m)}, {"revision", store.get(id)->revision}});
                      }));

        server.Get(R"(/sessions/([^/]+)/insights/([^/]+)/alternatives)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       json alts = json::array();
                       for (const auto& r : store.alternatives(req.matches[1], parse_int(req.matches[2], "insight id"))) {
                           alts.push_back(record_to_json(r));
                       }
                       send_json(res, 200, json{{"alternatives", std::move(alts)}});
                   }));

        server.Post(R"(/sessions/([^/]+)/insights/([^/]+)/replace)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        const std::string id = req.matches[1];
                        const InsightRecord r =
                            store.replace(id, parse_int(req.matches[2], "insight id"), body_kind(parse_body(req)));
                        const auto snap = store.get(id);
                        send_json(res, 200,
                                  json{{"insight", record_to_json(r)},
                                       {"metrics", metrics_to_json(snap->metrics)},
                                       {"revision", snap->revision}});
                    }));

        server.Post(R"(/sessions/([^/]+)/insights)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const json body = parse_body(req);
            const InsightRecord r = store.add_manual(id, body_int(body, "rowEntry"), body_int(body, "colEntry"), body_kind(body));
            const auto snap = store.get(id);
            send_json(res, 201,
                      json{{"insight", record_to_json(r)}, {"metrics", metrics_to_json(snap->metrics)}, {"revision", snap->revision}});
        }));

        server.Post(R"(/sessions/([^/]+)/transform)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            if (!body.is_object() || !body.contains("action") || !body.at("action").is_string()) {
                throw Error(ErrorCode::schema, "body needs a string 'action'", "/action");
            }
            const auto action = action_from_string(body.at("action").get<std::string>());
            if (!action) throw Error(ErrorCode::schema, "unknown action", "/action");
            const std::string fn = body.value("aggregate", std::string("mean"));
            if (fn != "mean" && fn != "sum") throw Error(ErrorCode::schema, "aggregate must be mean or sum", "/aggregate");
            const auto snap = store.transform(req.matches[1], *action, fn == "sum" ? AggregateFn::sum : AggregateFn::mean);
            send_json(res, 200, session_to_json(*snap, store.episode().thresholds));
        }));

        server.Get(R"(/sessions/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, store.export_session(req.matches[1]));
        }));
    }
};

HttpService::HttpService(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) throw Error(ErrorCode::io, "cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

}  // namespace tabsight
