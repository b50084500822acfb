#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "warp2/message.hpp"

struct sqlite3;

namespace warp2 {

enum class BlobKind { body, attachment };

std::string_view to_string(BlobKind kind);

struct UploadResult {
    HashId header_id;
    std::uint64_t seq = 0;
};

struct HeaderEntry {
    std::uint64_t seq = 0;
    HashId header_id;
    Ciphertext header_ct;
};

struct HeaderPage {
    std::vector<HeaderEntry> entries;
    std::uint64_t next_cursor = 0;
};

struct InboxStats {
    std::uint64_t live = 0;
    std::uint64_t purged = 0;
    std::uint64_t total_bytes = 0;

    bool operator==(const InboxStats&) const = default;
};

/// What a client needs from an inbox, whether in-process or over HTTP.
class InboxApi {
public:
    virtual ~InboxApi() = default;

    virtual UploadResult upload(const Envelope& envelope) = 0;
    /// limit == 0 means the server's page limit.
    virtual HeaderPage list_headers(std::uint64_t after, std::size_t limit = 0) = 0;
    virtual Ciphertext fetch_blob(BlobKind kind, const HashId& header_id) = 0;
    virtual bool acknowledge(const ReceiptSecret& receipt) = 0;
    virtual InboxStats stats() = 0;
};

struct InboxLimits {
    std::size_t page_limit = 1000;
    std::size_t max_blob_bytes = 25u * 1024 * 1024;
    /// Per client address; 0 disables the limit.
    double uploads_per_minute = 60;
    double receipts_per_minute = 120;
    /// Tombstones older than this are hard-deleted.
    std::chrono::seconds retention{std::chrono::hours(24 * 30)};
};

/// Persistent record store: an SQLite index file plus a directory of blobs
/// named by the SHA-256 of their bytes. Holds only ciphertext and hashes.
/// Thread-safe; every operation is atomic with respect to the others.
class InboxStore {
public:
    explicit InboxStore(const std::filesystem::path& data_dir, std::size_t page_limit = 1000);
    ~InboxStore();
    InboxStore(const InboxStore&) = delete;
    InboxStore& operator=(const InboxStore&) = delete;

    /// Idempotent on header_id. Callers validate sizes first.
    UploadResult put(const Envelope& envelope, Timestamp now);
    HeaderPage list(std::uint64_t after, std::size_t limit);
    /// Throws Error(not_found) or Error(no_attachment).
    Ciphertext blob(BlobKind kind, const HashId& header_id);
    /// Purges every live record whose lock is sha256(preimage).
    bool purge(const ReceiptSecret& receipt, Timestamp now);
    InboxStats stats();
    /// Hard-deletes tombstones purged at or before `cutoff`. Returns rows removed.
    std::size_t compact(Timestamp cutoff);

    const std::filesystem::path& data_dir() const { return dir_; }

private:
    std::filesystem::path blob_path(const HashId& id) const;
    void write_blob(const HashId& id, ByteView data);
    void release_blob(const HashId& id);
    void exec(const char* sql);

    std::filesystem::path dir_;
    std::size_t page_limit_;
    sqlite3* db_ = nullptr;
    std::mutex mu_;
};

/// Token bucket per client key. A zero rate never limits.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    explicit RateLimiter(double per_minute, Clock clock = {});
    bool allow(const std::string& key);

private:
    struct Bucket {
        double tokens;
        std::chrono::steady_clock::time_point last;
    };
    double per_minute_;
    Clock clock_;
    std::map<std::string, Bucket> buckets_;
    std::mutex mu_;
};

/// Validation and rate limiting in front of an InboxStore.
class InboxService {
public:
    InboxService(const std::filesystem::path& data_dir, InboxLimits limits = {},
                 RateLimiter::Clock clock = {});

    /// Throws Error(malformed_envelope), Error(oversize_blob), Error(rate_limited).
    UploadResult upload(const Envelope& envelope, const std::string& client);
    HeaderPage list_headers(std::uint64_t after, std::size_t limit = 0);
    Ciphertext fetch_blob(BlobKind kind, const HashId& header_id);
    /// Throws Error(rate_limited).
    bool acknowledge(const ReceiptSecret& receipt, const std::string& client);
    InboxStats stats();

    const InboxLimits& limits() const { return limits_; }
    InboxStore& store() { return store_; }

private:
    void maybe_compact(Timestamp now);

    InboxLimits limits_;
    InboxStore store_;
    RateLimiter upload_limiter_;
    RateLimiter receipt_limiter_;
    std::mutex compact_mu_;
    Timestamp last_compact_{};
};

/// In-process InboxApi bound to one client identity for rate limiting.
class LocalInbox final : public InboxApi {
public:
    explicit LocalInbox(InboxService& service, std::string client = "local")
        : service_(service), client_(std::move(client)) {}

    UploadResult upload(const Envelope& envelope) override { return service_.upload(envelope, client_); }
    HeaderPage list_headers(std::uint64_t after, std::size_t limit) override {
        return service_.list_headers(after, limit);
    }
    Ciphertext fetch_blob(BlobKind kind, const HashId& id) override { return service_.fetch_blob(kind, id); }
    bool acknowledge(const ReceiptSecret& receipt) override { return service_.acknowledge(receipt, client_); }
    InboxStats stats() override { return service_.stats(); }

private:
    InboxService& service_;
    std::string client_;
};

}  // namespace warp2
