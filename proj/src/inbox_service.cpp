#include <algorithm>

#include "warp2/error.hpp"
#include "warp2/inbox.hpp"

namespace warp2 {

RateLimiter::RateLimiter(double per_minute, Clock clock)
    : per_minute_(per_minute), clock_(clock ? std::move(clock) : Clock([] {
          return std::chrono::steady_clock::now();
      })) {}

bool RateLimiter::allow(const std::string& key) {
    if (per_minute_ <= 0) return true;
    auto now = clock_();
    std::lock_guard lock(mu_);
    auto [it, inserted] = buckets_.try_emplace(key, Bucket{per_minute_, now});
    Bucket& b = it->second;
    if (!inserted) {
        double elapsed = std::chrono::duration<double>(now - b.last).count();
        b.tokens = std::min(per_minute_, b.tokens + elapsed * per_minute_ / 60.0);
        b.last = now;
    }
    if (b.tokens < 1.0) return false;
    b.tokens -= 1.0;
    return true;
}

InboxService::InboxService(const std::filesystem::path& data_dir, InboxLimits limits,
                           RateLimiter::Clock clock)
    : limits_(limits),
      store_(data_dir, limits.page_limit),
      upload_limiter_(limits.uploads_per_minute, clock),
      receipt_limiter_(limits.receipts_per_minute, clock) {}

UploadResult InboxService::upload(const Envelope& envelope, const std::string& client) {
    if (envelope.header_ct.size() != kHeaderCiphertextSize) {
        throw Error(ErrorCode::malformed_envelope,
                    "header ciphertext must be " + std::to_string(kHeaderCiphertextSize) + " bytes");
    }
    if (envelope.body_ct.size() <= kSealOverhead) {
        throw Error(ErrorCode::malformed_envelope, "body ciphertext too short");
    }
    if (envelope.attachment_ct && envelope.attachment_ct->size() <= kSealOverhead) {
        throw Error(ErrorCode::malformed_envelope, "attachment ciphertext too short");
    }
    if (envelope.body_ct.size() > limits_.max_blob_bytes ||
        (envelope.attachment_ct && envelope.attachment_ct->size() > limits_.max_blob_bytes)) {
        throw Error(ErrorCode::oversize_blob,
                    "blob exceeds limit of " + std::to_string(limits_.max_blob_bytes) + " bytes");
    }
    if (!upload_limiter_.allow(client)) throw Error(ErrorCode::rate_limited, "upload rate limit exceeded");

    Timestamp now = now_utc();
    maybe_compact(now);
    return store_.put(envelope, now);
}

HeaderPage InboxService::list_headers(std::uint64_t after, std::size_t limit) {
    return store_.list(after, limit);
}

Ciphertext InboxService::fetch_blob(BlobKind kind, const HashId& header_id) {
    return store_.blob(kind, header_id);
}

bool InboxService::acknowledge(const ReceiptSecret& receipt, const std::string& client) {
    if (!receipt_limiter_.allow(client)) throw Error(ErrorCode::rate_limited, "receipt rate limit exceeded");
    return store_.purge(receipt, now_utc());
}

InboxStats InboxService::stats() { return store_.stats(); }

void InboxService::maybe_compact(Timestamp now) {
    std::lock_guard lock(compact_mu_);
    if (now - last_compact_ < std::chrono::minutes(1)) return;
    last_compact_ = now;
    store_.compact(now - limits_.retention);
}

}  // namespace warp2
