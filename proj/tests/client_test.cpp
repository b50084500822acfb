#include <doctest.h>

#include <sys/stat.h>

#include <memory>
#include <random>

#include "test_util.hpp"
#include "warp2/client.hpp"
#include "warp2/error.hpp"

using namespace warp2;
using namespace warp2::testing;
using namespace std::chrono_literals;

namespace {

InboxLimits open_limits(std::size_t page_limit = 1000) {
    InboxLimits l;
    l.page_limit = page_limit;
    l.uploads_per_minute = 0;
    l.receipts_per_minute = 0;
    return l;
}

/// Forwards to a real inbox, failing selected calls with network errors.
class FlakyInbox final : public InboxApi {
public:
    explicit FlakyInbox(InboxApi& inner) : inner_(inner) {}

    int fail_uploads_before = 0;  // fail before the server sees the upload
    int fail_uploads_after = 0;   // fail after the server stored it
    int fail_fetches = 0;
    int fetches_before_failing = 0;

    UploadResult upload(const Envelope& e) override {
        if (fail_uploads_before > 0) {
            --fail_uploads_before;
            throw Error(ErrorCode::network_failure, "injected");
        }
        UploadResult r = inner_.upload(e);
        if (fail_uploads_after > 0) {
            --fail_uploads_after;
            throw Error(ErrorCode::network_failure, "injected");
        }
        return r;
    }
    HeaderPage list_headers(std::uint64_t after, std::size_t limit) override {
        return inner_.list_headers(after, limit);
    }
    Ciphertext fetch_blob(BlobKind kind, const HashId& id) override {
        if (fetches_before_failing > 0) {
            --fetches_before_failing;
        } else if (fail_fetches > 0) {
            --fail_fetches;
            throw Error(ErrorCode::network_failure, "injected");
        }
        return inner_.fetch_blob(kind, id);
    }
    bool acknowledge(const ReceiptSecret& r) override { return inner_.acknowledge(r); }
    InboxStats stats() override { return inner_.stats(); }

private:
    InboxApi& inner_;
};

struct World {
    TempDir dir;
    InboxService service;
    LocalInbox inbox;
    Timestamp now = Timestamp{std::chrono::seconds{1'800'000'000}};
    SeededEntropy rng;

    explicit World(std::size_t page_limit = 1000, std::uint64_t seed = 1)
        : service(dir.path() / "inbox", open_limits(page_limit)), inbox(service), rng(seed) {}

    ClientOptions options(std::chrono::seconds grace = 7 * 24h) {
        ClientOptions o;
        o.key_grace = grace;
        o.clock = [this] { return now; };
        o.rng = &rng;
        return o;
    }

    std::unique_ptr<Client> client(const std::string& address, InboxApi* api = nullptr,
                                   std::chrono::seconds grace = 7 * 24h) {
        return std::make_unique<Client>(Client::create_state(address, rng, now), api ? *api : inbox,
                                        options(grace));
    }
};

void introduce(Client& a, Client& b) {
    a.import_contact(b.state().address, b.published_key(), b.state().address);
    b.import_contact(a.state().address, a.published_key(), a.state().address);
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::invalid_argument;
}

std::string body_text(const StoredMessage& m) { return to_string(m.body); }

}  // namespace

TEST_CASE("rotation payload encoding") {
    SeededEntropy rng(9);
    KeyPair kp = generate_keypair(rng);
    RotationPayload p{kp.public_part, Timestamp{std::chrono::seconds{1'700'000'000}}};
    Bytes b = encode_rotation_payload(p);
    CHECK(to_string(b) == "new_public_key=" + export_public_key(kp.public_part) +
                              "\neffective_from=2023-11-14T22:13:20Z\n");
    RotationPayload back = decode_rotation_payload(b);
    CHECK(back.new_public_key == p.new_public_key);
    CHECK(back.effective_from == p.effective_from);
    CHECK(code_of([] { decode_rotation_payload(to_bytes("hello")); }) == ErrorCode::invalid_argument);
    CHECK(code_of([] { decode_rotation_payload(to_bytes("new_public_key=AAAA\neffective_from=2023-11-14T22:13:20Z\n")); }) ==
          ErrorCode::malformed_key);
}

TEST_CASE("contacts") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    alice->import_contact("bob", bob->published_key());
    CHECK(alice->state().keyring.find_contact("bob")->address == "bob");
    CHECK(code_of([&] { alice->import_contact("bob", bob->published_key()); }) == ErrorCode::duplicate_alias);
    CHECK(code_of([&] { alice->import_contact("zero", PublicKey{}); }) == ErrorCode::malformed_key);
    CHECK(code_of([&] { alice->remove_contact("carol"); }) == ErrorCode::unknown_contact);
    alice->remove_contact("bob");
    CHECK(alice->state().keyring.contacts.empty());
    // the published key survives contact removal
    CHECK_NOTHROW(alice->published_key());
}

TEST_CASE("send to an unknown alias uploads nothing") {
    World w;
    auto alice = w.client("alice");
    CHECK(code_of([&] { alice->send("nobody", "hi", to_bytes("x")); }) == ErrorCode::unknown_contact);
    CHECK(w.service.stats() == InboxStats{0, 0, 0});
    CHECK(alice->state().outbox.empty());
}

TEST_CASE("sync finds own messages among others") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    auto carol = w.client("carol");
    introduce(*alice, *bob);
    introduce(*carol, *alice);

    for (int i = 0; i < 8; ++i) carol->send("alice", "noise " + std::to_string(i), to_bytes("x"));
    HashId m1 = alice->send("bob", "one", to_bytes("first"));
    HashId m2 = alice->send("bob", "two", to_bytes("second"), to_bytes("attached"));
    REQUIRE(w.service.stats().live == 10);

    SyncReport r = bob->sync();
    CHECK(r.headers_seen == 10);
    CHECK(r.trial_decryptions == 10);
    CHECK(r.new_messages == std::vector<HashId>{m1, m2});
    CHECK(bob->state().skip_cache.size() == 8);
    CHECK(body_text(bob->state().mailstore.at(m1)) == "first");
    CHECK(bob->state().mailstore.at(m1).contact == "alice");
    CHECK(to_string(*bob->state().mailstore.at(m2).attachment) == "attached");

    SyncReport again = bob->sync();
    CHECK(again.trial_decryptions == 0);
    CHECK(again.new_messages.empty());

    SUBCASE("cursor reset hits the skip cache instead of decrypting") {
        ClientState st = bob->state();
        st.cursor = 0;
        Client replay(st, w.inbox, w.options());
        SyncReport r3 = replay.sync();
        CHECK(r3.headers_seen == 10);
        CHECK(r3.skipped == 10);
        CHECK(r3.trial_decryptions == 0);
    }
}

TEST_CASE("one trial decryption per header per live key") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);
    for (int i = 0; i < 1000; ++i) alice->send("bob", "s", to_bytes("b"));
    auto carol = w.client("carol");
    carol->sync();
    CHECK(carol->open_attempts() == 1000);
    CHECK(carol->state().mailstore.empty());
}

TEST_CASE("network failures during upload") {
    World w;
    FlakyInbox flaky(w.inbox);
    auto alice = w.client("alice", &flaky);
    auto bob = w.client("bob");
    introduce(*alice, *bob);

    SUBCASE("failure before the server stores") {
        flaky.fail_uploads_before = 1;
        CHECK(code_of([&] { alice->send("bob", "s", to_bytes("b")); }) == ErrorCode::network_failure);
        CHECK(w.service.stats().live == 0);
        REQUIRE(alice->state().outbox.size() == 1);
        CHECK(alice->state().outbox[0].state == OutboxState::pending_upload);
        CHECK(alice->retry_pending() == 1);
    }
    SUBCASE("failure after the server stored") {
        flaky.fail_uploads_after = 1;
        CHECK(code_of([&] { alice->send("bob", "s", to_bytes("b")); }) == ErrorCode::network_failure);
        CHECK(w.service.stats().live == 1);
        CHECK(alice->retry_pending() == 1);
    }
    CHECK(w.service.stats().live == 1);
    CHECK(alice->state().outbox[0].state == OutboxState::uploaded);
    CHECK_FALSE(alice->state().outbox[0].envelope.has_value());
    CHECK(bob->sync().new_messages.size() == 1);
}

TEST_CASE("oversize sends are dropped from the outbox") {
    TempDir dir;
    InboxLimits limits = open_limits();
    limits.max_blob_bytes = 1000;
    InboxService service(dir.path(), limits);
    LocalInbox inbox(service);
    SeededEntropy rng(3);
    Client alice(Client::create_state("alice", rng), inbox);
    Client bob(Client::create_state("bob", rng), inbox);
    introduce(alice, bob);
    CHECK(code_of([&] { alice.send("bob", "big", Bytes(2000, 1)); }) == ErrorCode::oversize_blob);
    CHECK(alice.state().outbox.empty());
}

TEST_CASE("acknowledge") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);
    HashId id = alice->send("bob", "s", to_bytes("b"));
    CHECK(code_of([&] { bob->acknowledge(id); }) == ErrorCode::not_in_mailstore);
    bob->sync();
    CHECK(bob->acknowledge(id));
    CHECK(bob->state().mailstore.at(id).acked);
    CHECK_FALSE(bob->acknowledge(id));
    CHECK(w.service.stats().live == 0);
    CHECK(w.service.stats().purged == 1);
}

TEST_CASE("receipts agree across sender and recipient") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);
    std::mt19937_64 gen(11);
    for (int i = 0; i < 1000; ++i) {
        std::string subject = "m" + std::to_string(gen() % 100000);
        std::optional<Bytes> att;
        if (gen() % 4 == 0) att = random_bytes(gen, 1 + gen() % 64);
        alice->send("bob", subject, random_bytes(gen, 1 + gen() % 256), att);
    }
    bob->sync();
    REQUIRE(bob->state().mailstore.size() == 1000);
    std::size_t checked = 0;
    for (const auto& o : alice->state().outbox) {
        const StoredMessage& m = bob->state().mailstore.at(o.header_id);
        ReceiptSecret derived = receipt_secret_for(m.header);
        CHECK(derived.preimage == o.receipt.preimage);
        CHECK(receipt_lock_for(derived) == o.receipt_lock);
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("delivery is observed by the sender") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);
    std::vector<HashId> sent;
    for (int i = 0; i < 20; ++i) sent.push_back(alice->send("bob", "n" + std::to_string(i), to_bytes("b")));
    CHECK(alice->sync().delivered.empty());

    bob->sync();
    for (int i = 0; i < 20; i += 2) CHECK(bob->acknowledge(sent[i]));
    SyncReport half = alice->sync();
    CHECK(half.delivered.size() == 10);
    for (int i = 1; i < 20; i += 2) CHECK(bob->acknowledge(sent[i]));
    SyncReport rest = alice->sync();
    CHECK(rest.delivered.size() == 10);
    for (const auto& o : alice->state().outbox) CHECK(o.state == OutboxState::delivered);
    CHECK(w.service.stats().live == 0);
}

TEST_CASE("tampered blobs are quarantined") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);

    ComposeRequest req;
    req.to = "bob";
    req.from = "alice";
    req.subject = "evil";
    req.date = w.now;
    req.body = to_bytes("original");
    ComposedMessage good = compose_envelope(req, bob->published_key(), w.rng);
    req.body = to_bytes("replaced");
    ComposedMessage other = compose_envelope(req, bob->published_key(), w.rng);
    Envelope forged = good.envelope;
    forged.body_ct = other.envelope.body_ct;
    w.inbox.upload(forged);

    SyncReport r = bob->sync();
    CHECK(r.quarantined == 1);
    CHECK(r.new_messages.empty());
    CHECK(bob->state().mailstore.empty());
    CHECK(bob->state().quarantine.begin()->second.rfind("hash_mismatch", 0) == 0);
}

TEST_CASE("key rotation walkthrough") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);
    PublicKey alice_k1 = alice->published_key();
    PublicKey bob_k1 = bob->published_key();

    alice->rotate_keys("bob");
    CHECK(alice->state().keyring.find_contact("bob")->rotation_state == RotationState::offered);
    CHECK(code_of([&] { alice->rotate_keys("bob"); }) == ErrorCode::rotation_pending);
    CHECK(alice->live_keys().size() == 2);

    // Bob has not seen the offer and still seals to the old key.
    HashId in_flight = bob->send("alice", "old key", to_bytes("sealed to k1"));

    SyncReport rb = bob->sync();
    CHECK(rb.rotations_applied == 1);
    const Contact& bob_view = *bob->state().keyring.find_contact("alice");
    CHECK(bob_view.rotation_state == RotationState::completed);
    CHECK(bob_view.current_pub != alice_k1);
    CHECK(bob_view.previous_pubs == std::vector<PublicKey>{alice_k1});

    SyncReport ra = alice->sync();
    CHECK(ra.rotations_applied == 1);
    const Contact& alice_view = *alice->state().keyring.find_contact("bob");
    CHECK(alice_view.rotation_state == RotationState::completed);
    CHECK(alice_view.current_pub != bob_k1);
    CHECK(alice_view.current_pub == bob->state().keyring.find_key(bob_view.my_key_id)->keypair.public_part);
    CHECK(bob_view.current_pub == alice->state().keyring.find_key(alice_view.my_key_id)->keypair.public_part);
    // mail sealed to the retired key still opens inside the grace period
    CHECK(alice->state().mailstore.contains(in_flight));

    // rotation messages were acknowledged automatically
    for (const auto& [id, m] : alice->state().mailstore) {
        if (m.kind == MessageKind::rotation) CHECK(m.acked);
    }

    HashId fresh = alice->send("bob", "new key", to_bytes("hello"));
    bob->sync();
    CHECK(bob->state().mailstore.at(fresh).key_id == bob_view.my_key_id);

    // after the grace period the retired key pairs are destroyed
    std::size_t before = alice->live_keys().size();
    w.now += 7 * 24h;
    alice->sync();
    bob->sync();
    CHECK(alice->live_keys().size() < before);
    for (const OwnKey* k : alice->live_keys()) CHECK(k->keypair.public_part != alice_k1);
    for (const OwnKey* k : bob->live_keys()) CHECK(k->keypair.public_part != bob_k1);
    CHECK(alice->live_keys().size() == 1);
    CHECK(bob->live_keys().size() == 1);
    CHECK(code_of([&] { (void)alice->published_key(); }) == ErrorCode::not_found);
}

TEST_CASE("simultaneous rotation offers converge") {
    World w;
    auto alice = w.client("alice");
    auto bob = w.client("bob");
    introduce(*alice, *bob);
    alice->rotate_keys("bob");
    bob->rotate_keys("alice");
    alice->sync();
    bob->sync();
    alice->sync();
    bob->sync();
    const Contact& a = *alice->state().keyring.find_contact("bob");
    const Contact& b = *bob->state().keyring.find_contact("alice");
    CHECK(a.current_pub == bob->state().keyring.find_key(b.my_key_id)->keypair.public_part);
    CHECK(b.current_pub == alice->state().keyring.find_key(a.my_key_id)->keypair.public_part);
    HashId x = alice->send("bob", "after", to_bytes("x"));
    HashId y = bob->send("alice", "after", to_bytes("y"));
    bob->sync();
    alice->sync();
    CHECK(bob->state().mailstore.contains(x));
    CHECK(alice->state().mailstore.contains(y));
}

TEST_CASE("rotations interleaved with mail lose nothing") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        CAPTURE(seed);
        World w(7, seed);
        auto alice = w.client("alice");
        auto bob = w.client("bob");
        introduce(*alice, *bob);
        Client* peers[2] = {alice.get(), bob.get()};
        const char* other[2] = {"bob", "alice"};
        std::mt19937_64 gen(seed);

        int rotations = 0, mails = 0;
        std::vector<std::pair<int, HashId>> sent;  // recipient index, id
        while (rotations < 10 || mails < 10) {
            int who = static_cast<int>(gen() % 2);
            switch (gen() % 3) {
                case 0:
                    if (rotations < 10 &&
                        peers[who]->state().keyring.find_contact(other[who])->rotation_state != RotationState::offered) {
                        peers[who]->rotate_keys(other[who]);
                        ++rotations;
                    }
                    break;
                case 1:
                    if (mails < 10) {
                        sent.emplace_back(1 - who, peers[who]->send(other[who], "m", to_bytes(std::to_string(mails))));
                        ++mails;
                    }
                    break;
                default:
                    peers[who]->sync();
            }
            w.now += 10min;
        }
        for (int i = 0; i < 4; ++i) {
            alice->sync();
            bob->sync();
        }
        for (const auto& [to, id] : sent) CHECK(peers[to]->state().mailstore.contains(id));
        CHECK(alice->state().quarantine.empty());
        CHECK(bob->state().quarantine.empty());
        const Contact& a = *alice->state().keyring.find_contact("bob");
        const Contact& b = *bob->state().keyring.find_contact("alice");
        CHECK(a.rotation_state != RotationState::offered);
        CHECK(b.rotation_state != RotationState::offered);
        CHECK(a.current_pub == bob->state().keyring.find_key(b.my_key_id)->keypair.public_part);
        CHECK(b.current_pub == alice->state().keyring.find_key(a.my_key_id)->keypair.public_part);
    }
}

TEST_CASE("new published key retires the old one when unused") {
    World w;
    auto alice = w.client("alice", nullptr, 0s);
    PublicKey k1 = alice->published_key();
    PublicKey k2 = alice->new_published_key();
    CHECK(k1 != k2);
    CHECK(alice->published_key() == k2);
    alice->sync();
    CHECK(alice->live_keys().size() == 1);

    auto bob = w.client("bob");
    introduce(*alice, *bob);
    alice->new_published_key();
    alice->sync();
    // k2 is still what bob seals to
    CHECK(alice->live_keys().size() == 2);
}

TEST_CASE("state file") {
    TempDir dir;
    SeededEntropy rng(5);
    ClientState st = Client::create_state("alice", rng);
    auto path = dir / "state.bin";
    StateFile f = StateFile::create(path, "correct horse", StateFile::KdfStrength::minimal);
    f.save(st);

    struct stat sb{};
    REQUIRE(::stat(path.c_str(), &sb) == 0);
    CHECK((sb.st_mode & 0777) == 0600);

    StateFile g = StateFile::open(path, "correct horse");
    CHECK(serialize_state(g.load()) == serialize_state(st));
    CHECK(code_of([&] { StateFile::open(path, "wrong"); }) == ErrorCode::bad_passphrase);
    CHECK(read_text(path).find("alice") == std::string::npos);
    CHECK(code_of([] { deserialize_state("{not json"); }) == ErrorCode::storage_failure);
}

TEST_CASE("state survives a crash in the middle of a sync") {
    World w(4);
    auto alice = w.client("alice");
    auto path = w.dir / "bob.state";
    StateFile file = StateFile::create(path, "pw", StateFile::KdfStrength::minimal);
    FlakyInbox flaky(w.inbox);
    auto bob = std::make_unique<Client>(Client::create_state("bob", w.rng, w.now), flaky, w.options(), &file);
    introduce(*alice, *bob);

    std::vector<HashId> sent;
    for (int i = 0; i < 10; ++i) sent.push_back(alice->send("bob", "s", to_bytes(std::to_string(i))));

    // two pages of four succeed, then a fetch fails in the third
    flaky.fetches_before_failing = 8;
    flaky.fail_fetches = 1;
    CHECK(code_of([&] { bob->sync(); }) == ErrorCode::network_failure);
    bob.reset();

    ClientState saved = StateFile::open(path, "pw").load();
    CHECK(saved.cursor == 8);
    CHECK(saved.mailstore.size() == 8);

    Client resumed(saved, w.inbox, w.options(), &file);
    SyncReport r = resumed.sync();
    CHECK(r.new_messages.size() == 2);
    CHECK(resumed.state().mailstore.size() == 10);
    for (const auto& id : sent) CHECK(resumed.state().mailstore.contains(id));
    CHECK(serialize_state(file.load()) == serialize_state(resumed.state()));
}
