#include <doctest.h>
#include <openssl/sha.h>
#include <sodium.h>

#include <random>
#include <unordered_set>

#include "test_util.hpp"
#include "warp2/crypto.hpp"
#include "warp2/error.hpp"

using namespace warp2;
using warp2::testing::random_bytes;

namespace {

// Independent SHA-256 (OpenSSL) used as the reference implementation.
std::string openssl_sha256_hex(ByteView data) {
    unsigned char out[SHA256_DIGEST_LENGTH];
    SHA256(data.data(), data.size(), out);
    static const char* digits = "0123456789abcdef";
    std::string hex;
    for (unsigned char c : out) {
        hex += digits[c >> 4];
        hex += digits[c & 15];
    }
    return hex;
}

}  // namespace

TEST_CASE("sha256 matches the reference implementation") {
    SUBCASE("empty input") {
        CHECK(sha256(ByteView{}).hex() == openssl_sha256_hex(ByteView{}));
        CHECK(sha256(ByteView{}).hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
    SUBCASE("1 MiB random buffer") {
        std::mt19937_64 gen(7);
        Bytes data = random_bytes(gen, 1 << 20);
        CHECK(sha256(data).hex() == openssl_sha256_hex(data));
    }
    SUBCASE("assorted lengths around block boundaries") {
        std::mt19937_64 gen(11);
        for (std::size_t n : {1u, 55u, 56u, 63u, 64u, 65u, 119u, 120u, 128u, 1000u}) {
            Bytes data = random_bytes(gen, n);
            CHECK(sha256(data).hex() == openssl_sha256_hex(data));
        }
    }
    SUBCASE("deterministic") {
        CHECK(sha256("abc") == sha256("abc"));
        CHECK(sha256("abc") != sha256("abd"));
    }
}

TEST_CASE("HashId rendering") {
    HashId id = sha256("x");
    CHECK(id.hex().size() == 64);
    CHECK(id.hex().find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(HashId::from_hex(id.hex()) == id);
    CHECK_FALSE(HashId::try_from_hex("ABCDEF"));
    std::string upper = id.hex();
    for (auto& c : upper) c = static_cast<char>(std::toupper(c));
    if (upper != id.hex()) {
        CHECK_FALSE(HashId::try_from_hex(upper));
    }
    CHECK_THROWS_AS(HashId::from_bytes(Bytes(31)), Error);
}

TEST_CASE("key generation") {
    auto& rng = system_entropy();
    KeyPair a = generate_keypair(rng);
    KeyPair b = generate_keypair(rng);
    CHECK(a.public_part != b.public_part);

    SUBCASE("public part round trips through its text form") {
        std::string text = export_public_key(a.public_part);
        PublicKey back = import_public_key(text);
        CHECK(back == a.public_part);
        Bytes wire = serialize_public_key(a.public_part);
        CHECK(wire.size() == 34);
        CHECK(wire[0] == 0);
        CHECK(wire[1] == 32);
    }
    SUBCASE("secret reconstructs the public part") {
        KeyPair again = keypair_from_secret(a.secret_part, a.created_at);
        CHECK(again.public_part == a.public_part);
    }
    SUBCASE("seeded entropy is reproducible") {
        SeededEntropy s1(42), s2(42), s3(43);
        CHECK(generate_keypair(s1).public_part == generate_keypair(s2).public_part);
        SeededEntropy s4(42);
        CHECK(generate_keypair(s3).public_part != generate_keypair(s4).public_part);
    }
}

TEST_CASE("public key parsing rejects malformed input") {
    CHECK_THROWS_AS(import_public_key("not base64!"), Error);
    CHECK_THROWS_AS(deserialize_public_key(Bytes{0, 31}), Error);
    Bytes zero_key(34, 0);
    zero_key[1] = 32;
    try {
        deserialize_public_key(zero_key);
        FAIL("low-order key accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::malformed_key);
    }
}

TEST_CASE("seal and open") {
    auto& rng = system_entropy();
    KeyPair alice = generate_keypair(rng);
    KeyPair bob = generate_keypair(rng);
    Bytes msg = to_bytes(std::string(100, 'm'));

    SUBCASE("round trip") {
        auto ct = seal(msg, alice.public_part, rng);
        auto pt = open(ct, alice);
        REQUIRE(pt);
        CHECK(*pt == msg);
    }
    SUBCASE("overhead is constant") {
        std::mt19937_64 gen(1);
        for (std::size_t n : {0u, 1u, 100u, 512u, 4096u}) {
            CHECK(seal(random_bytes(gen, n), alice.public_part, rng).size() == n + kSealOverhead);
        }
        CHECK(seal(Bytes(512), alice.public_part, rng).size() == 560);
    }
    SUBCASE("randomised") { CHECK(seal(msg, alice.public_part, rng) != seal(msg, alice.public_part, rng)); }
    SUBCASE("wrong key fails") { CHECK_FALSE(open(seal(msg, alice.public_part, rng), bob)); }
    SUBCASE("garbage fails") {
        std::mt19937_64 gen(3);
        for (std::size_t n : {0u, 10u, 47u, 48u, 600u}) CHECK_FALSE(open(random_bytes(gen, n), alice));
    }
    SUBCASE("every single-bit flip is rejected") {
        Bytes small = to_bytes("ten bytes!");
        Ciphertext ct = seal(small, alice.public_part, rng);
        for (std::size_t bit = 0; bit < ct.size() * 8; ++bit) {
            Ciphertext bad = ct;
            bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            CHECK_FALSE(open(bad, alice));
        }
    }
    SUBCASE("invalid recipient key") {
        try {
            seal(msg, PublicKey{}, rng);
            FAIL("sealed to the zero key");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::invalid_public_key);
        }
    }
}

TEST_CASE("seal is interoperable with libsodium sealed boxes") {
    auto& rng = system_entropy();
    KeyPair kp = generate_keypair(rng);
    Bytes msg = to_bytes("interop check");

    Ciphertext ours = seal(msg, kp.public_part, rng);
    Bytes plain(ours.size() - crypto_box_SEALBYTES);
    REQUIRE(crypto_box_seal_open(plain.data(), ours.data(), ours.size(), kp.public_part.bytes().data(),
                                 kp.secret_part.bytes().data()) == 0);
    CHECK(plain == msg);

    Bytes theirs(msg.size() + crypto_box_SEALBYTES);
    crypto_box_seal(theirs.data(), msg.data(), msg.size(), kp.public_part.bytes().data());
    auto opened = open(theirs, kp);
    REQUIRE(opened);
    CHECK(*opened == msg);
}

TEST_CASE("ciphertexts carry no recipient marker") {
    auto& rng = system_entropy();
    KeyPair a = generate_keypair(rng);
    KeyPair b = generate_keypair(rng);
    Bytes m = to_bytes(std::string(64, 'q'));
    constexpr int kSamples = 100;
    constexpr std::size_t kWindow = 8;

    std::vector<Ciphertext> to_a, to_b;
    for (int i = 0; i < kSamples; ++i) {
        to_a.push_back(seal(m, a.public_part, rng));
        to_b.push_back(seal(m, b.public_part, rng));
    }

    auto windows = [&](const Ciphertext& c) {
        std::unordered_set<std::string> w;
        for (std::size_t i = 0; i + kWindow <= c.size(); ++i) w.insert(std::string(c.begin() + i, c.begin() + i + kWindow));
        return w;
    };
    // Candidate markers: 8-byte windows of the first A sample present in all A samples.
    std::unordered_set<std::string> common = windows(to_a[0]);
    for (int i = 1; i < kSamples && !common.empty(); ++i) {
        auto w = windows(to_a[i]);
        std::erase_if(common, [&](const std::string& s) { return !w.contains(s); });
    }
    CHECK(common.empty());

    // Recipient key bytes never appear.
    std::string apk(a.public_part.bytes().begin(), a.public_part.bytes().end());
    for (const auto& c : to_a) CHECK(std::string(c.begin(), c.end()).find(apk.substr(0, kWindow)) == std::string::npos);

    for (int i = 0; i < kSamples; ++i) CHECK(to_a[i].size() == to_b[i].size());
}
