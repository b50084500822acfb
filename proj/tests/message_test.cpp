#include <doctest.h>

#include <json.hpp>
#include <random>
#include <set>

#include "golden_header.hpp"
#include "test_util.hpp"
#include "warp2/error.hpp"
#include "warp2/message.hpp"

using namespace warp2;
using namespace warp2::testing;

namespace {

MessageHeader random_header(std::mt19937_64& gen) {
    static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 \\\n=.@-";
    auto text = [&](std::size_t max) {
        std::string s;
        std::size_t n = 1 + gen() % max;
        for (std::size_t i = 0; i < n; ++i) s += alphabet[gen() % alphabet.size()];
        return s;
    };
    MessageHeader h;
    h.to = text(20);
    h.from = text(20);
    h.date = Timestamp{std::chrono::seconds{static_cast<std::int64_t>(gen() % 4'000'000'000ULL)}};
    h.subject = text(60);
    h.body_hash = sha256(random_bytes(gen, 8));
    if (gen() % 2) h.attachment_hash = sha256(random_bytes(gen, 8));
    for (auto& b : h.receipt_nonce) b = static_cast<std::uint8_t>(gen());
    return h;
}

}  // namespace

TEST_CASE("rfc3339 dates") {
    auto t = parse_rfc3339("2014-06-01T12:00:00Z");
    REQUIRE(t);
    CHECK(t->time_since_epoch().count() == 1401624000);
    CHECK(format_rfc3339(*t) == "2014-06-01T12:00:00Z");
    CHECK_FALSE(parse_rfc3339("2014-06-01T12:00:00+00:00"));
    CHECK_FALSE(parse_rfc3339("2014-02-30T12:00:00Z"));
    CHECK_FALSE(parse_rfc3339("2014-06-01 12:00:00Z"));
    CHECK(format_rfc3339(round_down_to_hour(*parse_rfc3339("2014-06-01T12:34:56Z"))) == "2014-06-01T12:00:00Z");
}

TEST_CASE("golden header files") {
    for (std::string name : {"header_v1", "header_v1_noattach"}) {
        CAPTURE(name);
        Bytes golden = read_file(golden_dir() / (name + ".bin"));
        REQUIRE(golden.size() == kHeaderSize);
        MessageHeader h = golden_header(name);
        CHECK(canonical_serialize(h) == golden);
        CHECK(parse_header(golden) == h);

        std::string receipt = read_text(golden_dir() / (name + ".receipt"));
        ReceiptSecret secret = receipt_secret_for(h);
        CHECK(receipt == secret.preimage.hex() + "\n" + receipt_lock_for(secret).hex() + "\n");
    }
}

TEST_CASE("canonical serialisation") {
    MessageHeader h = golden_header("header_v1");

    SUBCASE("always 512 bytes, round trips") {
        std::mt19937_64 gen(5);
        for (int i = 0; i < 500; ++i) {
            MessageHeader r = random_header(gen);
            Bytes wire = canonical_serialize(r);
            CHECK(wire.size() == kHeaderSize);
            MessageHeader back = parse_header(wire);
            CHECK(back == r);
            CHECK(canonical_serialize(back) == wire);
        }
    }
    SUBCASE("no attachment means no attachment_hash field") {
        h.attachment_hash.reset();
        std::string text = to_string(canonical_serialize(h));
        CHECK(text.find("attachment_hash=") == std::string::npos);
    }
    SUBCASE("subject limit") {
        h.subject = std::string(257, 's');
        CHECK_THROWS_AS(canonical_serialize(h), Error);
    }
    SUBCASE("content above 511 bytes is header_too_large") {
        h.subject = std::string(256, 's');
        h.to = std::string(100, 't');
        try {
            canonical_serialize(h);
            FAIL("accepted oversized header");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::header_too_large);
        }
    }
    SUBCASE("exactly 511 content bytes fits") {
        h.attachment_hash.reset();
        h.subject = "";
        std::size_t base = to_string(canonical_serialize(h)).find('\0');
        h.subject = std::string(std::min<std::size_t>(256, 511 - base), 'x');
        h.to += std::string(511 - base - h.subject.size(), 'y');
        Bytes wire = canonical_serialize(h);
        CHECK(wire[510] == '\n');
        CHECK(wire[511] == 0);
        h.to += "z";
        CHECK_THROWS_AS(canonical_serialize(h), Error);
    }
    SUBCASE("invalid fields") {
        MessageHeader bad = h;
        bad.to = "";
        CHECK_THROWS_AS(canonical_serialize(bad), Error);
        bad = h;
        bad.subject = std::string("a\0b", 3);
        CHECK_THROWS_AS(canonical_serialize(bad), Error);
        bad = h;
        bad.subject = "\xff\xfe";
        CHECK_THROWS_AS(canonical_serialize(bad), Error);
    }
}

TEST_CASE("parse_header rejects malformed input") {
    Bytes golden = read_file(golden_dir() / "header_v1.bin");
    auto expect_malformed = [](const Bytes& b) {
        try {
            parse_header(b);
            FAIL("accepted malformed header");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::malformed_header);
        }
    };
    expect_malformed(Bytes(512, 0));
    expect_malformed(Bytes(511, 0));

    Bytes trailing = golden;
    trailing[511] = 1;
    expect_malformed(trailing);

    Bytes no_terminator(512, 'a');
    expect_malformed(no_terminator);

    auto with_text = [](const std::string& s) {
        Bytes b(512, 0);
        std::copy(s.begin(), s.end(), b.begin());
        return b;
    };
    std::string hash(64, 'a');
    std::string nonce(32, '0');
    std::string good = "to=a\nfrom=b\ndate=2014-06-01T12:00:00Z\nsubject=s\nbody_hash=" + hash +
                       "\nreceipt_nonce=" + nonce + "\n";
    CHECK_NOTHROW(parse_header(with_text(good)));
    expect_malformed(with_text("x-extra=1\n" + good));
    expect_malformed(with_text(good + "cc=someone\n"));
    expect_malformed(with_text("from=b\nto=a\ndate=2014-06-01T12:00:00Z\nsubject=s\nbody_hash=" + hash +
                               "\nreceipt_nonce=" + nonce + "\n"));
    expect_malformed(with_text("to=a\nfrom=b\ndate=2014-06-01T12:00:00Z\nsubject=s\nbody_hash=" + hash + "\n"));
    expect_malformed(with_text("to=a\nfrom=b\ndate=yesterday\nsubject=s\nbody_hash=" + hash + "\nreceipt_nonce=" +
                               nonce + "\n"));
    expect_malformed(with_text("to=a\\q\nfrom=b\ndate=2014-06-01T12:00:00Z\nsubject=s\nbody_hash=" + hash +
                               "\nreceipt_nonce=" + nonce + "\n"));
    expect_malformed(with_text(good.substr(0, good.size() - 1)));
}

TEST_CASE("compose_envelope and verify_and_open") {
    auto& rng = system_entropy();
    KeyPair bob = generate_keypair(rng);
    KeyPair eve = generate_keypair(rng);
    ComposeRequest req{"bob", "alice", "hello", now_utc(), to_bytes("the body"), to_bytes("attached")};

    ComposedMessage c = compose_envelope(req, bob.public_part, rng);

    SUBCASE("envelope structure") {
        CHECK(c.envelope.header_ct.size() == kHeaderCiphertextSize);
        CHECK(c.header.body_hash == sha256(c.envelope.body_ct));
        REQUIRE(c.envelope.attachment_ct);
        CHECK(c.header.attachment_hash == sha256(*c.envelope.attachment_ct));
        CHECK(c.envelope.receipt_lock == sha256(c.receipt.preimage.view()));
        CHECK(c.receipt.preimage == sha256(canonical_serialize(c.header)));
    }
    SUBCASE("recipient pipeline recovers the plaintexts") {
        auto plain = open(c.envelope.header_ct, bob);
        REQUIRE(plain);
        MessageHeader h = parse_header(*plain);
        CHECK(h == c.header);
        CHECK(receipt_secret_for(h).preimage == c.receipt.preimage);
        OpenedContent out = verify_and_open(h, c.envelope.body_ct, ByteView(*c.envelope.attachment_ct), bob);
        CHECK(out.body == req.body);
        CHECK(out.attachment == req.attachment);
    }
    SUBCASE("other keys cannot open the header") { CHECK_FALSE(open(c.envelope.header_ct, eve)); }
    SUBCASE("without attachment") {
        req.attachment.reset();
        ComposedMessage n = compose_envelope(req, bob.public_part, rng);
        CHECK_FALSE(n.envelope.attachment_ct);
        CHECK_FALSE(n.header.attachment_hash);
        CHECK(n.envelope.header_ct.size() == kHeaderCiphertextSize);
    }
    SUBCASE("substituted body is a hash mismatch") {
        ComposedMessage other = compose_envelope(req, bob.public_part, rng);
        try {
            verify_and_open(c.header, other.envelope.body_ct, ByteView(*c.envelope.attachment_ct), bob);
            FAIL("substitution accepted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::hash_mismatch);
        }
    }
    SUBCASE("bit flips in the body never reach decryption") {
        std::mt19937_64 gen(9);
        for (int i = 0; i < 200; ++i) {
            Ciphertext bad = c.envelope.body_ct;
            std::size_t bit = gen() % (bad.size() * 8);
            bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            // eve's key: if decryption were attempted it would report decrypt_failure instead
            try {
                verify_and_open(c.header, bad, ByteView(*c.envelope.attachment_ct), eve);
                FAIL("flip accepted");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::hash_mismatch);
            }
        }
    }
    SUBCASE("missing attachment blob") {
        CHECK_THROWS_AS(verify_and_open(c.header, c.envelope.body_ct, std::nullopt, bob), Error);
    }
    SUBCASE("matching hashes but wrong key is decrypt_failure") {
        try {
            verify_and_open(c.header, c.envelope.body_ct, ByteView(*c.envelope.attachment_ct), eve);
            FAIL("opened with wrong key");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::decrypt_failure);
        }
    }
    SUBCASE("empty body rejected") {
        req.body.clear();
        CHECK_THROWS_AS(compose_envelope(req, bob.public_part, rng), Error);
    }
    SUBCASE("oversized header rejected before sealing") {
        req.subject = std::string(300, 's');
        CHECK_THROWS_AS(compose_envelope(req, bob.public_part, rng), Error);
    }
}

TEST_CASE("receipt properties over random messages") {
    auto& rng = system_entropy();
    KeyPair bob = generate_keypair(rng);
    std::mt19937_64 gen(21);
    std::set<HashId> locks;
    for (int i = 0; i < 1000; ++i) {
        ComposeRequest req{"bob", "alice", "same subject", Timestamp{std::chrono::seconds{1'400'000'000}},
                           random_bytes(gen, 1 + gen() % 64), std::nullopt};
        ComposedMessage c = compose_envelope(req, bob.public_part, rng);
        CHECK(sha256(c.receipt.preimage.view()) == c.envelope.receipt_lock);
        locks.insert(c.envelope.receipt_lock);
    }
    CHECK(locks.size() == 1000);

    SUBCASE("identical messages get distinct locks through the nonce") {
        ComposeRequest req{"bob", "alice", "s", Timestamp{}, to_bytes("x"), std::nullopt};
        MessageHeader h1 = compose_envelope(req, bob.public_part, rng).header;
        MessageHeader h2 = h1;
        h2.receipt_nonce[0] ^= 1;
        CHECK(receipt_lock_for(receipt_secret_for(h1)) != receipt_lock_for(receipt_secret_for(h2)));
    }
}
