#include "warp2/crypto.hpp"

#include <sodium.h>

#include <cstring>

#include "warp2/error.hpp"

namespace warp2 {

namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) throw Error(ErrorCode::entropy_unavailable, "libsodium initialisation failed");
}

// nonce = BLAKE2b-192(ephemeral_pk || recipient_pk)
std::array<std::uint8_t, crypto_box_NONCEBYTES> seal_nonce(const std::uint8_t* ephemeral_pk,
                                                           const std::uint8_t* recipient_pk) {
    std::array<std::uint8_t, crypto_box_NONCEBYTES> nonce{};
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, nonce.size());
    crypto_generichash_update(&st, ephemeral_pk, crypto_box_PUBLICKEYBYTES);
    crypto_generichash_update(&st, recipient_pk, crypto_box_PUBLICKEYBYTES);
    crypto_generichash_final(&st, nonce.data(), nonce.size());
    return nonce;
}

static_assert(kSealOverhead == crypto_box_SEALBYTES);
static_assert(PublicKey::size == crypto_box_PUBLICKEYBYTES);
static_assert(SecretKey::size == crypto_box_SECRETKEYBYTES);

}  // namespace

Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

HashId HashId::from_bytes(ByteView raw) {
    if (raw.size() != size) throw Error(ErrorCode::invalid_argument, "hash must be 32 bytes");
    Array a;
    std::memcpy(a.data(), raw.data(), size);
    return HashId(a);
}

HashId HashId::from_hex(std::string_view hex) {
    if (hex.size() != size * 2) throw Error(ErrorCode::invalid_argument, "hash must be 64 hex chars");
    return from_bytes(warp2::from_hex(hex));
}

std::optional<HashId> HashId::try_from_hex(std::string_view hex) {
    try {
        return from_hex(hex);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::string HashId::hex() const { return to_hex(digest_); }

HashId sha256(ByteView data) {
    ensure_sodium();
    HashId::Array out;
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return HashId(out);
}

SystemEntropy::SystemEntropy() { ensure_sodium(); }

void SystemEntropy::fill(std::span<std::uint8_t> out) { randombytes_buf(out.data(), out.size()); }

SeededEntropy::SeededEntropy(std::uint64_t seed) {
    ensure_sodium();
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    crypto_generichash(seed_.data(), seed_.size(), buf, sizeof buf, nullptr, 0);
}

void SeededEntropy::fill(std::span<std::uint8_t> out) {
    std::array<std::uint8_t, randombytes_SEEDBYTES> sub{};
    std::uint8_t ctr[8];
    for (int i = 0; i < 8; ++i) ctr[i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
    ++counter_;
    crypto_generichash(sub.data(), sub.size(), ctr, sizeof ctr, seed_.data(), seed_.size());
    randombytes_buf_deterministic(out.data(), out.size(), sub.data());
}

EntropySource& system_entropy() {
    static SystemEntropy instance;
    return instance;
}

PublicKey PublicKey::from_raw(ByteView raw) {
    if (raw.size() != size) throw Error(ErrorCode::malformed_key, "public key must be 32 bytes");
    Array a;
    std::memcpy(a.data(), raw.data(), size);
    return PublicKey(a);
}

SecretKey::~SecretKey() { wipe(); }

void SecretKey::wipe() { sodium_memzero(raw_.data(), raw_.size()); }

bool SecretKey::operator==(const SecretKey& other) const {
    return sodium_memcmp(raw_.data(), other.raw_.data(), size) == 0;
}

KeyPair generate_keypair(EntropySource& rng, Timestamp created_at) {
    ensure_sodium();
    SecretKey::Array seed;
    rng.fill(seed);
    PublicKey::Array pk;
    SecretKey::Array sk;
    crypto_box_seed_keypair(pk.data(), sk.data(), seed.data());
    sodium_memzero(seed.data(), seed.size());
    KeyPair kp{PublicKey(pk), SecretKey(sk), created_at};
    sodium_memzero(sk.data(), sk.size());
    return kp;
}

KeyPair keypair_from_secret(const SecretKey& secret, Timestamp created_at) {
    ensure_sodium();
    PublicKey::Array pk;
    crypto_scalarmult_base(pk.data(), secret.bytes().data());
    return KeyPair{PublicKey(pk), secret, created_at};
}

Ciphertext seal(ByteView plaintext, const PublicKey& recipient, EntropySource& rng) {
    ensure_sodium();
    KeyPair ephemeral = generate_keypair(rng, Timestamp{});
    const auto& epk = ephemeral.public_part.bytes();
    auto nonce = seal_nonce(epk.data(), recipient.bytes().data());

    Ciphertext out(plaintext.size() + kSealOverhead);
    std::memcpy(out.data(), epk.data(), epk.size());
    if (crypto_box_easy(out.data() + epk.size(), plaintext.data(), plaintext.size(), nonce.data(),
                        recipient.bytes().data(), ephemeral.secret_part.bytes().data()) != 0) {
        throw Error(ErrorCode::invalid_public_key, "recipient public key is not usable");
    }
    return out;
}

std::optional<Bytes> open(ByteView ciphertext, const KeyPair& keypair) {
    if (ciphertext.size() < kSealOverhead) return std::nullopt;
    ensure_sodium();
    const std::uint8_t* epk = ciphertext.data();
    auto nonce = seal_nonce(epk, keypair.public_part.bytes().data());
    Bytes plain(ciphertext.size() - kSealOverhead);
    if (crypto_box_open_easy(plain.data(), ciphertext.data() + crypto_box_PUBLICKEYBYTES,
                             ciphertext.size() - crypto_box_PUBLICKEYBYTES, nonce.data(), epk,
                             keypair.secret_part.bytes().data()) != 0) {
        return std::nullopt;
    }
    return plain;
}

Bytes serialize_public_key(const PublicKey& key) {
    Bytes out;
    out.reserve(2 + PublicKey::size);
    out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(PublicKey::size));
    out.insert(out.end(), key.bytes().begin(), key.bytes().end());
    return out;
}

PublicKey deserialize_public_key(ByteView data) {
    if (data.size() < 2) throw Error(ErrorCode::malformed_key, "key record truncated");
    std::size_t len = (std::size_t{data[0]} << 8) | data[1];
    if (len != PublicKey::size || data.size() != 2 + len) {
        throw Error(ErrorCode::malformed_key, "key record has wrong length");
    }
    PublicKey key = PublicKey::from_raw(data.subspan(2));
    if (!is_valid_public_key(key)) throw Error(ErrorCode::malformed_key, "key is a low-order point");
    return key;
}

std::string export_public_key(const PublicKey& key) { return to_base64(serialize_public_key(key)); }

PublicKey import_public_key(std::string_view text) {
    Bytes raw;
    try {
        raw = from_base64(text);
    } catch (const Error&) {
        throw Error(ErrorCode::malformed_key, "key text is not base64");
    }
    return deserialize_public_key(raw);
}

bool is_valid_public_key(const PublicKey& key) {
    ensure_sodium();
    // Clamped scalars clear the cofactor, so any low-order point maps to zero
    // and crypto_scalarmult reports failure.
    SecretKey::Array probe;
    probe.fill(0x5a);
    std::array<std::uint8_t, crypto_scalarmult_BYTES> out{};
    return crypto_scalarmult(out.data(), probe.data(), key.bytes().data()) == 0;
}

}  // namespace warp2
