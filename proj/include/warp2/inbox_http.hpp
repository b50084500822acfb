#pragma once

#include <memory>
#include <string>
#include <thread>

#include "warp2/inbox.hpp"

namespace httplib {
class Server;
}

namespace warp2 {

/// HTTP/JSON front end for an InboxService. Blobs travel as base64, hashes
/// as lowercase hex. Serves plain HTTP; put TLS in a reverse proxy.
///
///   POST /v1/messages              {header_ct, body_ct, attachment_ct?, receipt_lock}
///   GET  /v1/headers?after=&limit=
///   GET  /v1/blob/{body|attachment}/<header_id>
///   POST /v1/receipts              {preimage}
///   GET  /v1/stats
class InboxHttpServer {
public:
    explicit InboxHttpServer(InboxService& service);
    ~InboxHttpServer();
    InboxHttpServer(const InboxHttpServer&) = delete;
    InboxHttpServer& operator=(const InboxHttpServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves on a background thread.
    void start();
    /// Serves on the calling thread until stop().
    void run();
    void stop();

    int port() const { return port_; }

private:
    InboxService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = -1;
};

class HttpInboxClient final : public InboxApi {
public:
    /// base_url like "http://127.0.0.1:8080".
    explicit HttpInboxClient(std::string base_url);

    UploadResult upload(const Envelope& envelope) override;
    HeaderPage list_headers(std::uint64_t after, std::size_t limit = 0) override;
    Ciphertext fetch_blob(BlobKind kind, const HashId& header_id) override;
    bool acknowledge(const ReceiptSecret& receipt) override;
    InboxStats stats() override;

    /// Raw receipt post with an arbitrary hex string, for probing servers.
    bool post_receipt_hex(const std::string& preimage_hex);

private:
    std::string base_url_;
};

}  // namespace warp2
