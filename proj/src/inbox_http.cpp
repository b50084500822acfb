#include "warp2/inbox_http.hpp"

#include <charconv>

#include <httplib.h>
#include <json.hpp>

#include "http_util.hpp"
#include "warp2/error.hpp"

using nlohmann::json;

namespace warp2 {

namespace {

std::uint64_t parse_u64_param(const httplib::Request& req, const char* name, std::uint64_t fallback) {
    if (!req.has_param(name)) return fallback;
    std::string v = req.get_param_value(name);
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) {
        throw Error(ErrorCode::invalid_argument, std::string("bad query parameter ") + name);
    }
    return out;
}

Envelope envelope_from_json(const json& j) {
    try {
        Envelope env;
        env.header_ct = from_base64(j.at("header_ct").get<std::string>());
        env.body_ct = from_base64(j.at("body_ct").get<std::string>());
        if (j.contains("attachment_ct") && !j["attachment_ct"].is_null()) {
            env.attachment_ct = from_base64(j["attachment_ct"].get<std::string>());
        }
        env.receipt_lock = HashId::from_hex(j.at("receipt_lock").get<std::string>());
        return env;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::malformed_envelope, std::string("bad envelope JSON: ") + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::malformed_envelope, e.what());
    }
}

json envelope_to_json(const Envelope& env) {
    json j{{"header_ct", to_base64(env.header_ct)},
           {"body_ct", to_base64(env.body_ct)},
           {"receipt_lock", env.receipt_lock.hex()}};
    if (env.attachment_ct) j["attachment_ct"] = to_base64(*env.attachment_ct);
    return j;
}

}  // namespace

InboxHttpServer::InboxHttpServer(InboxService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;
    // base64 inflates by 4/3; leave room for the JSON framing.
    srv.set_payload_max_length(service_.limits().max_blob_bytes * 3 + (1u << 20));

    srv.Post("/v1/messages", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        json body = http::parse_json_body(req, ErrorCode::malformed_envelope);
        auto result = service_.upload(envelope_from_json(body), req.remote_addr);
        http::reply(res, json{{"header_id", result.header_id.hex()}, {"seq", result.seq}});
    }));

    srv.Get("/v1/headers", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        std::uint64_t after = parse_u64_param(req, "after", 0);
        std::uint64_t limit = parse_u64_param(req, "limit", 0);
        HeaderPage page = service_.list_headers(after, static_cast<std::size_t>(limit));
        json entries = json::array();
        for (const auto& e : page.entries) {
            entries.push_back({{"seq", e.seq}, {"header_id", e.header_id.hex()}, {"header_ct", to_base64(e.header_ct)}});
        }
        http::reply(res, json{{"entries", std::move(entries)}, {"next_cursor", page.next_cursor}});
    }));

    srv.Get(R"(/v1/blob/(body|attachment)/([^/]+))",
            http::guarded([this](const httplib::Request& req, httplib::Response& res) {
                BlobKind kind = req.matches[1] == "body" ? BlobKind::body : BlobKind::attachment;
                auto id = HashId::try_from_hex(req.matches[2].str());
                if (!id) throw Error(ErrorCode::not_found, "unknown header id");
                Ciphertext blob = service_.fetch_blob(kind, *id);
                std::string key = kind == BlobKind::body ? "body_ct" : "attachment_ct";
                http::reply(res, json{{key, to_base64(blob)}});
            }));

    srv.Post("/v1/receipts", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
        json body = http::parse_json_body(req, ErrorCode::invalid_argument);
        if (!body.contains("preimage") || !body["preimage"].is_string()) {
            throw Error(ErrorCode::invalid_argument, "preimage must be a hex string");
        }
        auto preimage = HashId::try_from_hex(body["preimage"].get<std::string>());
        if (!preimage) throw Error(ErrorCode::invalid_argument, "preimage must be 64 lowercase hex chars");
        bool purged = service_.acknowledge(ReceiptSecret{*preimage}, req.remote_addr);
        http::reply(res, json{{"purged", purged}});
    }));

    srv.Get("/v1/stats", http::guarded([this](const httplib::Request&, httplib::Response& res) {
        InboxStats s = service_.stats();
        http::reply(res, json{{"live", s.live}, {"purged", s.purged}, {"bytes", s.total_bytes}});
    }));
}

InboxHttpServer::~InboxHttpServer() { stop(); }

int InboxHttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
    } else {
        port_ = server_->bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error(ErrorCode::network_failure, "cannot bind " + host + ":" + std::to_string(port));
    return port_;
}

void InboxHttpServer::start() {
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void InboxHttpServer::run() { server_->listen_after_bind(); }

void InboxHttpServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

HttpInboxClient::HttpInboxClient(std::string base_url) : base_url_(std::move(base_url)) {}

UploadResult HttpInboxClient::upload(const Envelope& envelope) {
    json r = http::call(base_url_, "POST", "/v1/messages", envelope_to_json(envelope));
    try {
        return UploadResult{HashId::from_hex(r.at("header_id").get<std::string>()), r.at("seq").get<std::uint64_t>()};
    } catch (const std::exception& e) {
        throw Error(ErrorCode::network_failure, std::string("bad upload response: ") + e.what());
    }
}

HeaderPage HttpInboxClient::list_headers(std::uint64_t after, std::size_t limit) {
    std::string path = "/v1/headers?after=" + std::to_string(after);
    if (limit) path += "&limit=" + std::to_string(limit);
    json r = http::call(base_url_, "GET", path);
    try {
        HeaderPage page;
        page.next_cursor = r.at("next_cursor").get<std::uint64_t>();
        for (const auto& e : r.at("entries")) {
            page.entries.push_back(HeaderEntry{e.at("seq").get<std::uint64_t>(),
                                               HashId::from_hex(e.at("header_id").get<std::string>()),
                                               from_base64(e.at("header_ct").get<std::string>())});
        }
        return page;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::network_failure, std::string("bad header page: ") + e.what());
    }
}

Ciphertext HttpInboxClient::fetch_blob(BlobKind kind, const HashId& header_id) {
    std::string k(to_string(kind));
    json r = http::call(base_url_, "GET", "/v1/blob/" + k + "/" + header_id.hex());
    try {
        return from_base64(r.at(k + "_ct").get<std::string>());
    } catch (const std::exception& e) {
        throw Error(ErrorCode::network_failure, std::string("bad blob response: ") + e.what());
    }
}

bool HttpInboxClient::acknowledge(const ReceiptSecret& receipt) { return post_receipt_hex(receipt.preimage.hex()); }

bool HttpInboxClient::post_receipt_hex(const std::string& preimage_hex) {
    json r = http::call(base_url_, "POST", "/v1/receipts", json{{"preimage", preimage_hex}});
    try {
        return r.at("purged").get<bool>();
    } catch (const std::exception& e) {
        throw Error(ErrorCode::network_failure, std::string("bad receipt response: ") + e.what());
    }
}

InboxStats HttpInboxClient::stats() {
    json r = http::call(base_url_, "GET", "/v1/stats");
    try {
        return InboxStats{r.at("live").get<std::uint64_t>(), r.at("purged").get<std::uint64_t>(),
                          r.at("bytes").get<std::uint64_t>()};
    } catch (const std::exception& e) {
        throw Error(ErrorCode::network_failure, std::string("bad stats response: ") + e.what());
    }
}

}  // namespace warp2
