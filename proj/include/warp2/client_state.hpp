#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "warp2/message.hpp"

namespace warp2 {

enum class RotationState { stable, offered, completed };

std::string_view to_string(RotationState s);

/// One of our own key pairs. `id` is a local handle and never leaves the client.
struct OwnKey {
    std::string id;
    KeyPair keypair;
    std::optional<Timestamp> retired_at;
};

std::string key_id_for(const PublicKey& key);

struct Contact {
    std::string alias;
    /// Name the peer puts in the header `from` field.
    std::string address;
    PublicKey current_pub;
    /// Retired keys of the peer, kept to attribute old mail.
    std::vector<PublicKey> previous_pubs;
    RotationState rotation_state = RotationState::stable;
    /// Own key this peer currently seals to.
    std::string my_key_id;
    /// Own key offered in an unfinished rotation.
    std::optional<std::string> pending_key_id;
};

struct Keyring {
    std::vector<OwnKey> keys;
    std::string published_key_id;
    std::vector<Contact> contacts;

    const OwnKey* find_key(std::string_view id) const;
    OwnKey* find_key(std::string_view id);
    const Contact* find_contact(std::string_view alias) const;
    Contact* find_contact(std::string_view alias);
    bool key_in_use(std::string_view id) const;
};

enum class MessageKind { mail, rotation };

struct StoredMessage {
    HashId header_id;
    std::uint64_t seq = 0;
    MessageHeader header;
    Bytes body;
    std::optional<Bytes> attachment;
    std::string key_id;
    /// Contact alias when the sender is known.
    std::string contact;
    MessageKind kind = MessageKind::mail;
    bool read = false;
    bool acked = false;
    Timestamp received_at{};
};

enum class OutboxState { pending_upload, uploaded, delivered };

std::string_view to_string(OutboxState s);

struct OutboxEntry {
    HashId header_id;
    std::uint64_t seq = 0;
    HashId receipt_lock;
    ReceiptSecret receipt;
    std::string to_alias;
    std::string subject;
    Timestamp date{};
    Bytes body;
    bool has_attachment = false;
    MessageKind kind = MessageKind::mail;
    OutboxState state = OutboxState::pending_upload;
    /// Retained until the server has acknowledged the upload.
    std::optional<Envelope> envelope;
};

struct ClientState {
    std::string address;
    std::uint64_t cursor = 0;
    std::set<HashId> skip_cache;
    /// Headers that decrypted but could not be used, with the reason.
    std::map<HashId, std::string> quarantine;
    std::map<HashId, StoredMessage> mailstore;
    std::vector<OutboxEntry> outbox;
    Keyring keyring;
};

std::string serialize_state(const ClientState& state);
/// Throws Error(storage_failure) on malformed documents.
ClientState deserialize_state(std::string_view json_text);

/// Passphrase-encrypted state file, replaced atomically on every save.
/// Layout: "WARP2ST1" | opslimit u64 | memlimit u64 | salt[16] | nonce[24] |
/// secretbox(json). Keys come from Argon2id over the passphrase.
class StateFile {
public:
    enum class KdfStrength { interactive, minimal };

    static StateFile create(std::filesystem::path path, std::string_view passphrase,
                            KdfStrength strength = KdfStrength::interactive);
    /// Throws Error(bad_passphrase) if the passphrase does not open the file.
    static StateFile open(std::filesystem::path path, std::string_view passphrase);

    StateFile(StateFile&&) noexcept;
    StateFile& operator=(StateFile&&) noexcept;
    ~StateFile();

    ClientState load() const;
    void save(const ClientState& state) const;
    const std::filesystem::path& path() const { return path_; }

private:
    StateFile() = default;

    std::filesystem::path path_;
    std::uint64_t opslimit_ = 0;
    std::uint64_t memlimit_ = 0;
    std::array<std::uint8_t, 16> salt_{};
    std::array<std::uint8_t, 32> key_{};
};

}  // namespace warp2
