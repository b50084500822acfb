#include "warp2/daemon.hpp"

#include <charconv>

#include <httplib.h>

#include "http_util.hpp"
#include "warp2/error.hpp"
#include "warp2/json_views.hpp"

using nlohmann::json;

namespace warp2 {

bool is_loopback_host(const std::string& host) {
    return host == "127.0.0.1" || host == "::1" || host == "localhost" || host.rfind("127.", 0) == 0;
}

std::string generate_token() {
    std::array<std::uint8_t, 32> raw;
    system_entropy().fill(raw);
    return to_hex(raw);
}

namespace {

HashId id_param(const httplib::Request& req, std::size_t idx) {
    auto id = HashId::try_from_hex(req.matches[idx].str());
    if (!id) throw Error(ErrorCode::not_in_mailstore, "unknown message id");
    return *id;
}

double plan_param(const httplib::Request& req, const char* name, double fallback) {
    if (!req.has_param(name)) return fallback;
    std::string v = req.get_param_value(name);
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw Error(ErrorCode::invalid_argument, std::string("bad number for ") + name);
    }
    return out;
}

std::string string_field(const json& body, const char* name, bool required) {
    if (!body.contains(name) || body[name].is_null()) {
        if (required) throw Error(ErrorCode::invalid_argument, std::string("missing field ") + name);
        return {};
    }
    if (!body[name].is_string()) throw Error(ErrorCode::invalid_argument, std::string(name) + " must be a string");
    return body[name].get<std::string>();
}

}  // namespace

LocalDaemon::LocalDaemon(Client& client, std::string token, DaemonOptions options)
    : client_(client), token_(std::move(token)), options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;
    srv.set_payload_max_length(256u << 20);

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (req.path.rfind("/local/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
        std::string auth = req.get_header_value("Authorization");
        if (auth != "Bearer " + token_) {
            http::reply(res, json{{"error", "unauthorized"}, {"message", "missing or wrong bearer token"}}, 401);
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    srv.Get("/local/messages", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        bool all = req.has_param("all") && req.get_param_value("all") == "1";
        std::lock_guard lock(mu_);
        json received = json::array();
        for (const auto& [id, m] : client_.state().mailstore) {
            if (all || m.kind == MessageKind::mail) received.push_back(views::message_summary(m));
        }
        json sent = json::array();
        for (const auto& o : client_.state().outbox) {
            if (all || o.kind == MessageKind::mail) sent.push_back(views::sent_summary(o));
        }
        http::reply(res, json{{"received", std::move(received)}, {"sent", std::move(sent)}});
    }));

    srv.Get(R"(/local/messages/([^/]+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        HashId id = id_param(req, 1);
        std::lock_guard lock(mu_);
        client_.mark_read(id);
        http::reply(res, views::message_detail(client_.state().mailstore.at(id)));
    }));

    srv.Post("/local/send", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        json body = http::parse_json_body(req, ErrorCode::invalid_argument);
        std::string to = string_field(body, "to", true);
        std::string subject = string_field(body, "subject", false);
        Bytes text;
        if (body.contains("body_b64")) {
            text = from_base64(string_field(body, "body_b64", true));
        } else {
            text = to_bytes(string_field(body, "body", true));
        }
        std::optional<Bytes> attachment;
        if (body.contains("attachment_b64") && !body["attachment_b64"].is_null()) {
            attachment = from_base64(string_field(body, "attachment_b64", true));
        }
        std::lock_guard lock(mu_);
        HashId id = client_.send(to, subject, std::move(text), std::move(attachment));
        http::reply(res, json{{"header_id", id.hex()}});
    }));

    srv.Post(R"(/local/ack/([^/]+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        HashId id = id_param(req, 1);
        std::lock_guard lock(mu_);
        http::reply(res, json{{"purged", client_.acknowledge(id)}});
    }));

    srv.Post("/local/sync", http::guarded([this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        SyncReport report = client_.sync();
        last_sync_ = now_utc();
        http::reply(res, views::sync_report(report));
    }));

    srv.Get("/local/contacts", http::guarded([this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        json out = json::array();
        for (const auto& c : client_.state().keyring.contacts) out.push_back(views::contact(c));
        http::reply(res, json{{"contacts", std::move(out)}});
    }));

    srv.Post("/local/contacts", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        json body = http::parse_json_body(req, ErrorCode::invalid_argument);
        std::string alias = string_field(body, "alias", true);
        PublicKey key = import_public_key(string_field(body, "public_key", true));
        std::string address = string_field(body, "address", false);
        std::lock_guard lock(mu_);
        http::reply(res, views::contact(client_.import_contact(alias, key, address)), 201);
    }));

    srv.Post(R"(/local/rotate/([^/]+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        std::string alias = req.matches[1].str();
        std::lock_guard lock(mu_);
        HashId id = client_.rotate_keys(alias);
        http::reply(res, json{{"header_id", id.hex()}});
    }));

    srv.Get("/local/status", http::guarded([this](const httplib::Request&, httplib::Response& res) {
        std::lock_guard lock(mu_);
        const ClientState& s = client_.state();
        std::size_t pending = 0;
        for (const auto& o : s.outbox) pending += o.state == OutboxState::pending_upload;
        json j{{"schema", views::kSchemaVersion},
               {"address", s.address},
               {"server_url", options_.server_url},
               {"cursor", s.cursor},
               {"skip_cache", s.skip_cache.size()},
               {"mailstore", s.mailstore.size()},
               {"quarantine", s.quarantine.size()},
               {"outbox_pending", pending},
               {"live_keys", client_.live_keys().size()},
               {"last_sync", last_sync_ ? json(format_rfc3339(*last_sync_)) : json(nullptr)}};
        try {
            j["public_key"] = export_public_key(client_.published_key());
        } catch (const Error&) {
            j["public_key"] = nullptr;
        }
        http::reply(res, j);
    }));

    srv.Get("/local/plan", http::guarded([](const httplib::Request& req, httplib::Response& res) {
        LoadParams p;
        p.users = plan_param(req, "users", 1000);
        p.messages_per_user_per_day = plan_param(req, "rate", 10);
        p.header_ct_size = plan_param(req, "header_size", static_cast<double>(kHeaderCiphertextSize));
        p.syncs_per_user_per_day = plan_param(req, "syncs", 1);
        http::reply(res, views::estimate(p, estimate(p)));
    }));

    if (options_.static_dir) srv.set_mount_point("/", options_.static_dir->string());
}

LocalDaemon::~LocalDaemon() { stop(); }

int LocalDaemon::bind(const std::string& host, int port) {
    if (!is_loopback_host(host)) throw Error(ErrorCode::invalid_argument, "daemon only listens on loopback");
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error(ErrorCode::network_failure, "cannot bind " + host + ":" + std::to_string(port));
    return port_;
}

void LocalDaemon::start() {
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void LocalDaemon::run() { server_->listen_after_bind(); }

void LocalDaemon::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace warp2
