#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "warp2/client_state.hpp"
#include "warp2/inbox.hpp"

namespace warp2 {

/// Subject that marks a body as a key rotation payload.
inline constexpr std::string_view kRotationSubject = "\x01KEYROTATE";

struct RotationPayload {
    PublicKey new_public_key;
    Timestamp effective_from{};
};

Bytes encode_rotation_payload(const RotationPayload& payload);
/// Throws Error(malformed_key) or Error(invalid_argument).
RotationPayload decode_rotation_payload(ByteView body);

struct ClientOptions {
    /// How long a retired own secret key keeps decrypting in-flight mail.
    std::chrono::seconds key_grace{std::chrono::hours(24 * 7)};
    /// Coarsen header dates to the hour.
    bool round_date_to_hour = false;
    std::function<Timestamp()> clock;
    /// Defaults to system entropy.
    EntropySource* rng = nullptr;
};

struct SyncReport {
    std::vector<HashId> new_messages;
    std::vector<HashId> delivered;
    std::size_t headers_seen = 0;
    std::size_t trial_decryptions = 0;
    std::size_t skipped = 0;
    std::size_t quarantined = 0;
    std::size_t rotations_applied = 0;
};

/// Client engine over an InboxApi. Not thread-safe: callers serialise
/// access (the daemon does so with a single mutex). When a StateFile is
/// attached, state is saved after every mutation.
class Client {
public:
    Client(ClientState state, InboxApi& inbox, ClientOptions options = {}, const StateFile* store = nullptr);

    /// Fresh state with one published key pair.
    static ClientState create_state(std::string address, EntropySource& rng, Timestamp now = now_utc());

    const ClientState& state() const { return state_; }
    InboxApi& inbox() { return inbox_; }

    /// Key to hand out for out-of-band first contact.
    /// Throws Error(not_found) if the published key has been retired.
    PublicKey published_key() const;
    /// Replaces the published key; the previous one retires if no contact uses it.
    PublicKey new_published_key();

    Contact import_contact(const std::string& alias, const PublicKey& key, std::string address = {});
    void remove_contact(const std::string& alias);

    /// Returns the header id. On network failure the envelope stays queued
    /// and retry_pending() re-uploads it.
    HashId send(const std::string& alias, const std::string& subject, Bytes body,
                std::optional<Bytes> attachment = std::nullopt);
    std::size_t retry_pending();

    SyncReport sync();

    /// Reveals the receipt preimage for a stored message.
    bool acknowledge(const HashId& header_id);
    void mark_read(const HashId& header_id);

    /// Starts a key rotation with a contact. Returns the rotation message id.
    HashId rotate_keys(const std::string& alias);

    /// Secret keys the trial decryption currently tries.
    std::vector<const OwnKey*> live_keys() const;
    /// Every open() attempted on a header since construction.
    std::uint64_t open_attempts() const { return open_attempts_; }

private:
    Timestamp now() const;
    EntropySource& rng() const;
    void persist() const;

    std::string add_own_key(Timestamp now);
    /// The published key is kept for new contacts unless include_published.
    void retire_if_unused(const std::string& key_id, Timestamp now, bool include_published);
    void destroy_expired_keys(Timestamp now);

    HashId send_to(Contact& contact, const std::string& subject, Bytes body, std::optional<Bytes> attachment,
                   MessageKind kind);
    bool upload_entry(OutboxEntry& entry);

    void process_entry(const HeaderEntry& entry, SyncReport& report);
    void apply_rotation(StoredMessage& msg, SyncReport& report);
    Contact* sender_of(const MessageHeader& header, const std::string& key_id);
    void check_delivery(SyncReport& report);

    ClientState state_;
    InboxApi& inbox_;
    ClientOptions options_;
    const StateFile* store_;
    std::uint64_t open_attempts_ = 0;
};

}  // namespace warp2
