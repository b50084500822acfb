#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "warp2/crypto.hpp"

namespace warp2 {

/// Padded plaintext header size; every header ciphertext is this plus the
/// seal overhead, so header length never depends on content.
inline constexpr std::size_t kHeaderSize = 512;
inline constexpr std::size_t kHeaderCiphertextSize = kHeaderSize + kSealOverhead;
inline constexpr std::size_t kMaxSubjectBytes = 256;
inline constexpr std::size_t kReceiptNonceSize = 16;

using ReceiptNonce = std::array<std::uint8_t, kReceiptNonceSize>;

struct MessageHeader {
    std::string to;
    std::string from;
    Timestamp date{};
    std::string subject;
    HashId body_hash;
    std::optional<HashId> attachment_hash;
    ReceiptNonce receipt_nonce{};

    bool operator==(const MessageHeader&) const = default;
};

/// RFC 3339 UTC at seconds precision, e.g. 2014-05-01T12:00:00Z.
std::string format_rfc3339(Timestamp t);
/// Accepts only the exact form produced by format_rfc3339.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

Timestamp round_down_to_hour(Timestamp t);

/// Wire form of a header, exactly kHeaderSize bytes:
///   to=...\nfrom=...\ndate=...\nsubject=...\nbody_hash=...\n
///   [attachment_hash=...\n]receipt_nonce=...\n 0x00 <zero padding>
/// Values escape '\\' as "\\\\" and newline as "\\n". Hashes and the nonce
/// are lowercase hex.
///
/// Throws Error(header_too_large) if the content exceeds kHeaderSize - 1
/// bytes, Error(invalid_argument) if a field violates the header invariants.
Bytes canonical_serialize(const MessageHeader& header);

/// Strict inverse of canonical_serialize: fields must appear once, in order,
/// and the padding must be all zero. Throws Error(malformed_header).
MessageHeader parse_header(ByteView data);

struct Envelope {
    Ciphertext header_ct;
    Ciphertext body_ct;
    std::optional<Ciphertext> attachment_ct;
    HashId receipt_lock;

    bool operator==(const Envelope&) const = default;
};

/// sha256 of the padded header plaintext. Revealing it to the server proves
/// the header was decrypted; the server only ever stores its hash.
struct ReceiptSecret {
    HashId preimage;
};

ReceiptSecret receipt_secret_for(const MessageHeader& header);
HashId receipt_lock_for(const ReceiptSecret& secret);

struct ComposeRequest {
    std::string to;
    std::string from;
    std::string subject;
    Timestamp date{};
    Bytes body;
    std::optional<Bytes> attachment;
};

struct ComposedMessage {
    Envelope envelope;
    ReceiptSecret receipt;
    MessageHeader header;
};

/// Seals body and attachment, addresses them from the header by ciphertext
/// hash, then seals the padded header.
ComposedMessage compose_envelope(const ComposeRequest& request, const PublicKey& recipient,
                                 EntropySource& rng);

struct OpenedContent {
    Bytes body;
    std::optional<Bytes> attachment;
};

/// Checks blob hashes against the header before any decryption.
/// Throws Error(hash_mismatch) or Error(decrypt_failure).
OpenedContent verify_and_open(const MessageHeader& header, ByteView body_ct,
                              std::optional<ByteView> attachment_ct, const KeyPair& keypair);

}  // namespace warp2
