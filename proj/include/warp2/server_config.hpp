#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "warp2/inbox.hpp"

namespace warp2 {

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = "warp2-inbox";
    InboxLimits limits;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> process_env(const std::string& name);

/// "host:port" -> (host, port). Throws Error(invalid_argument).
std::pair<std::string, int> parse_listen(const std::string& text);

/// Defaults, then the JSON config file (if given), then environment:
///   WARP2_LISTEN, WARP2_INBOX_DIR, WARP2_PAGE_LIMIT, WARP2_MAX_BLOB_BYTES,
///   WARP2_UPLOAD_RATE, WARP2_RECEIPT_RATE, WARP2_RETENTION_SECONDS
/// File keys use the same names in lower case without the prefix
/// (listen, inbox_dir, page_limit, ...).
ServerConfig load_server_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env);

}  // namespace warp2
