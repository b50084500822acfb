#include "warp2/server_config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "warp2/error.hpp"

using nlohmann::json;

namespace warp2 {

std::optional<std::string> process_env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
}

std::pair<std::string, int> parse_listen(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0) throw Error(ErrorCode::invalid_argument, "listen must be host:port");
    std::string host = text.substr(0, colon);
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "bad port in '" + text + "'");
    }
    if (port < 0 || port > 65535) throw Error(ErrorCode::invalid_argument, "port out of range");
    if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    return {host, port};
}

namespace {

double to_number(const std::string& name, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        if (d < 0) throw std::invalid_argument("negative");
        return d;
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "bad numeric value for " + name + ": '" + v + "'");
    }
}

void apply(ServerConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "listen") {
        std::tie(cfg.host, cfg.port) = parse_listen(value);
    } else if (key == "inbox_dir") {
        cfg.data_dir = value;
    } else if (key == "page_limit") {
        cfg.limits.page_limit = static_cast<std::size_t>(to_number(key, value));
        if (cfg.limits.page_limit == 0) throw Error(ErrorCode::invalid_argument, "page_limit must be positive");
    } else if (key == "max_blob_bytes") {
        cfg.limits.max_blob_bytes = static_cast<std::size_t>(to_number(key, value));
    } else if (key == "upload_rate") {
        cfg.limits.uploads_per_minute = to_number(key, value);
    } else if (key == "receipt_rate") {
        cfg.limits.receipts_per_minute = to_number(key, value);
    } else if (key == "retention_seconds") {
        cfg.limits.retention = std::chrono::seconds(static_cast<std::int64_t>(to_number(key, value)));
    } else {
        throw Error(ErrorCode::invalid_argument, "unknown server config key '" + key + "'");
    }
}

}  // namespace

ServerConfig load_server_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
    ServerConfig cfg;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error(ErrorCode::invalid_argument, "cannot read config " + file->string());
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            apply(cfg, key, value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    static constexpr std::pair<const char*, const char*> kEnv[] = {
        {"WARP2_LISTEN", "listen"},
        {"WARP2_INBOX_DIR", "inbox_dir"},
        {"WARP2_PAGE_LIMIT", "page_limit"},
        {"WARP2_MAX_BLOB_BYTES", "max_blob_bytes"},
        {"WARP2_UPLOAD_RATE", "upload_rate"},
        {"WARP2_RECEIPT_RATE", "receipt_rate"},
        {"WARP2_RETENTION_SECONDS", "retention_seconds"},
    };
    for (const auto& [var, key] : kEnv) {
        if (auto v = env(var)) apply(cfg, key, *v);
    }
    return cfg;
}

}  // namespace warp2
