#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "warp2/bytes.hpp"

namespace warp2 {

using Timestamp = std::chrono::sys_seconds;

Timestamp now_utc();

/// A SHA-256 digest. Used as content address for every blob the server
/// stores and as the receipt secret/lock.
class HashId {
public:
    static constexpr std::size_t size = 32;
    using Array = std::array<std::uint8_t, size>;

    HashId() = default;
    explicit HashId(const Array& digest) : digest_(digest) {}

    /// Throws Error(invalid_argument) unless exactly 32 bytes.
    static HashId from_bytes(ByteView raw);
    /// Throws Error(invalid_argument) unless 64 lowercase hex chars.
    static HashId from_hex(std::string_view hex);
    static std::optional<HashId> try_from_hex(std::string_view hex);

    const Array& bytes() const { return digest_; }
    ByteView view() const { return digest_; }
    std::string hex() const;

    auto operator<=>(const HashId&) const = default;

private:
    Array digest_{};
};

HashId sha256(ByteView data);
inline HashId sha256(std::string_view data) { return sha256(as_bytes(data)); }

/// Source of key material and sealing randomness.
class EntropySource {
public:
    virtual ~EntropySource() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;
};

/// OS entropy through libsodium. Throws Error(entropy_unavailable) if the
/// library cannot be initialised.
class SystemEntropy final : public EntropySource {
public:
    SystemEntropy();
    void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible stream for simulations and tests. Never use for real keys.
class SeededEntropy final : public EntropySource {
public:
    explicit SeededEntropy(std::uint64_t seed);
    void fill(std::span<std::uint8_t> out) override;

private:
    std::array<std::uint8_t, 32> seed_{};
    std::uint64_t counter_ = 0;
};

/// Process-wide SystemEntropy instance.
EntropySource& system_entropy();

class PublicKey {
public:
    static constexpr std::size_t size = 32;
    using Array = std::array<std::uint8_t, size>;

    PublicKey() = default;
    explicit PublicKey(const Array& raw) : raw_(raw) {}

    /// Throws Error(malformed_key) unless exactly 32 bytes.
    static PublicKey from_raw(ByteView raw);

    const Array& bytes() const { return raw_; }
    ByteView view() const { return raw_; }

    auto operator<=>(const PublicKey&) const = default;

private:
    Array raw_{};
};

/// X25519 secret scalar; wiped on destruction.
class SecretKey {
public:
    static constexpr std::size_t size = 32;
    using Array = std::array<std::uint8_t, size>;

    SecretKey() = default;
    explicit SecretKey(const Array& raw) : raw_(raw) {}
    SecretKey(const SecretKey&) = default;
    SecretKey& operator=(const SecretKey&) = default;
    ~SecretKey();

    const Array& bytes() const { return raw_; }
    void wipe();

    bool operator==(const SecretKey& other) const;

private:
    Array raw_{};
};

struct KeyPair {
    PublicKey public_part;
    SecretKey secret_part;
    Timestamp created_at{};
};

KeyPair generate_keypair(EntropySource& rng, Timestamp created_at = now_utc());

/// Rebuilds the public half from a stored secret.
KeyPair keypair_from_secret(const SecretKey& secret, Timestamp created_at);

/// Bytes added by seal(): 32-byte ephemeral public key plus 16-byte tag.
inline constexpr std::size_t kSealOverhead = 48;

using Ciphertext = Bytes;

/// Anonymous hybrid encryption: ephemeral X25519 key agreement with an
/// XSalsa20-Poly1305 box. The nonce is BLAKE2b(ephemeral_pk || recipient_pk),
/// so the output is byte-compatible with libsodium's crypto_box_seal.
/// The ciphertext carries nothing derived from the recipient other than
/// what the authenticated box needs; no key id is embedded.
///
/// Throws Error(invalid_public_key) for low-order or otherwise unusable keys.
Ciphertext seal(ByteView plaintext, const PublicKey& recipient, EntropySource& rng);

/// Returns nullopt when the ciphertext was not sealed to this key pair or has
/// been modified. Safe on arbitrary input.
std::optional<Bytes> open(ByteView ciphertext, const KeyPair& keypair);

/// Length-prefixed (u16 big-endian) raw key bytes.
Bytes serialize_public_key(const PublicKey& key);
/// Throws Error(malformed_key).
PublicKey deserialize_public_key(ByteView data);

/// base64(serialize_public_key(key)), the text form users exchange.
std::string export_public_key(const PublicKey& key);
/// Throws Error(malformed_key).
PublicKey import_public_key(std::string_view text);

bool is_valid_public_key(const PublicKey& key);

}  // namespace warp2

template <>
struct std::hash<warp2::HashId> {
    std::size_t operator()(const warp2::HashId& id) const noexcept {
        std::size_t h = 0;
        for (std::size_t i = 0; i < sizeof(std::size_t); ++i) h = (h << 8) | id.bytes()[i];
        return h;
    }
};
