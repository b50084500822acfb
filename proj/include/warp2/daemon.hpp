#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "warp2/client.hpp"

namespace httplib {
class Server;
}

namespace warp2 {

struct DaemonOptions {
    /// Shown in /local/status.
    std::string server_url;
    /// Served at / when set (the web UI bundle).
    std::optional<std::filesystem::path> static_dir;
};

/// Loopback-only HTTP/JSON API over a Client. Every request must carry
/// "Authorization: Bearer <token>". Mutations are applied one at a time.
/// The route list and payloads are described in docs/local-api.json.
class LocalDaemon {
public:
    LocalDaemon(Client& client, std::string token, DaemonOptions options = {});
    ~LocalDaemon();
    LocalDaemon(const LocalDaemon&) = delete;
    LocalDaemon& operator=(const LocalDaemon&) = delete;

    /// Throws Error(invalid_argument) for non-loopback hosts.
    int bind(const std::string& host, int port);
    void start();
    void run();
    void stop();
    int port() const { return port_; }

private:
    Client& client_;
    std::string token_;
    DaemonOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::mutex mu_;
    std::optional<Timestamp> last_sync_;
    int port_ = -1;
};

bool is_loopback_host(const std::string& host);

/// Random 32-byte token, hex encoded.
std::string generate_token();

}  // namespace warp2
