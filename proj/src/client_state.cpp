#include "warp2/client_state.hpp"

#include <fcntl.h>
#include <sodium.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "warp2/error.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace warp2 {

std::string_view to_string(RotationState s) {
    switch (s) {
        case RotationState::stable: return "stable";
        case RotationState::offered: return "offered";
        case RotationState::completed: return "completed";
    }
    return "stable";
}

std::string_view to_string(OutboxState s) {
    switch (s) {
        case OutboxState::pending_upload: return "pending_upload";
        case OutboxState::uploaded: return "uploaded";
        case OutboxState::delivered: return "delivered";
    }
    return "pending_upload";
}

std::string key_id_for(const PublicKey& key) { return sha256(key.view()).hex().substr(0, 16); }

const OwnKey* Keyring::find_key(std::string_view id) const {
    for (const auto& k : keys) {
        if (k.id == id) return &k;
    }
    return nullptr;
}

OwnKey* Keyring::find_key(std::string_view id) {
    return const_cast<OwnKey*>(std::as_const(*this).find_key(id));
}

const Contact* Keyring::find_contact(std::string_view alias) const {
    for (const auto& c : contacts) {
        if (c.alias == alias) return &c;
    }
    return nullptr;
}

Contact* Keyring::find_contact(std::string_view alias) {
    return const_cast<Contact*>(std::as_const(*this).find_contact(alias));
}

bool Keyring::key_in_use(std::string_view id) const {
    for (const auto& c : contacts) {
        if (c.my_key_id == id || (c.pending_key_id && *c.pending_key_id == id)) return true;
    }
    return false;
}

namespace {

std::int64_t secs(Timestamp t) { return t.time_since_epoch().count(); }
Timestamp from_secs(std::int64_t s) { return Timestamp{std::chrono::seconds{s}}; }

RotationState rotation_from(const std::string& s) {
    if (s == "offered") return RotationState::offered;
    if (s == "completed") return RotationState::completed;
    return RotationState::stable;
}

OutboxState outbox_from(const std::string& s) {
    if (s == "uploaded") return OutboxState::uploaded;
    if (s == "delivered") return OutboxState::delivered;
    return OutboxState::pending_upload;
}

json header_json(const MessageHeader& h) {
    json j{{"to", h.to},
           {"from", h.from},
           {"date", secs(h.date)},
           {"subject", h.subject},
           {"body_hash", h.body_hash.hex()},
           {"receipt_nonce", to_hex(h.receipt_nonce)}};
    if (h.attachment_hash) j["attachment_hash"] = h.attachment_hash->hex();
    return j;
}

MessageHeader header_from(const json& j) {
    MessageHeader h;
    h.to = j.at("to").get<std::string>();
    h.from = j.at("from").get<std::string>();
    h.date = from_secs(j.at("date").get<std::int64_t>());
    h.subject = j.at("subject").get<std::string>();
    h.body_hash = HashId::from_hex(j.at("body_hash").get<std::string>());
    if (j.contains("attachment_hash")) h.attachment_hash = HashId::from_hex(j["attachment_hash"].get<std::string>());
    Bytes nonce = from_hex(j.at("receipt_nonce").get<std::string>());
    if (nonce.size() != h.receipt_nonce.size()) throw Error(ErrorCode::storage_failure, "bad nonce");
    std::copy(nonce.begin(), nonce.end(), h.receipt_nonce.begin());
    return h;
}

json envelope_json(const Envelope& e) {
    json j{{"header_ct", to_base64(e.header_ct)}, {"body_ct", to_base64(e.body_ct)}, {"receipt_lock", e.receipt_lock.hex()}};
    if (e.attachment_ct) j["attachment_ct"] = to_base64(*e.attachment_ct);
    return j;
}

Envelope envelope_from(const json& j) {
    Envelope e;
    e.header_ct = from_base64(j.at("header_ct").get<std::string>());
    e.body_ct = from_base64(j.at("body_ct").get<std::string>());
    if (j.contains("attachment_ct")) e.attachment_ct = from_base64(j["attachment_ct"].get<std::string>());
    e.receipt_lock = HashId::from_hex(j.at("receipt_lock").get<std::string>());
    return e;
}

PublicKey pub_from(const json& j) { return PublicKey::from_raw(from_base64(j.get<std::string>())); }

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
        ssize_t w = ::write(fd, p, n);
        if (w < 0) throw Error(ErrorCode::storage_failure, std::string("write failed: ") + std::strerror(errno));
        p += w;
        n -= static_cast<std::size_t>(w);
    }
}

constexpr char kMagic[8] = {'W', 'A', 'R', 'P', '2', 'S', 'T', '1'};
constexpr std::size_t kPrefix = 8 + 8 + 8 + 16;

void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
    return v;
}

Bytes read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::storage_failure, "cannot read " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::string serialize_state(const ClientState& s) {
    json j;
    j["version"] = 1;
    j["address"] = s.address;
    j["cursor"] = s.cursor;

    json skip = json::array();
    for (const auto& id : s.skip_cache) skip.push_back(id.hex());
    j["skip_cache"] = std::move(skip);

    json quarantine = json::object();
    for (const auto& [id, why] : s.quarantine) quarantine[id.hex()] = why;
    j["quarantine"] = std::move(quarantine);

    json mail = json::array();
    for (const auto& [id, m] : s.mailstore) {
        json e{{"header_id", id.hex()},
               {"seq", m.seq},
               {"header", header_json(m.header)},
               {"body", to_base64(m.body)},
               {"key_id", m.key_id},
               {"contact", m.contact},
               {"kind", m.kind == MessageKind::mail ? "mail" : "rotation"},
               {"read", m.read},
               {"acked", m.acked},
               {"received_at", secs(m.received_at)}};
        if (m.attachment) e["attachment"] = to_base64(*m.attachment);
        mail.push_back(std::move(e));
    }
    j["mailstore"] = std::move(mail);

    json outbox = json::array();
    for (const auto& o : s.outbox) {
        json e{{"header_id", o.header_id.hex()},
               {"seq", o.seq},
               {"receipt_lock", o.receipt_lock.hex()},
               {"receipt", o.receipt.preimage.hex()},
               {"to", o.to_alias},
               {"subject", o.subject},
               {"date", secs(o.date)},
               {"body", to_base64(o.body)},
               {"has_attachment", o.has_attachment},
               {"kind", o.kind == MessageKind::mail ? "mail" : "rotation"},
               {"state", std::string(to_string(o.state))}};
        if (o.envelope) e["envelope"] = envelope_json(*o.envelope);
        outbox.push_back(std::move(e));
    }
    j["outbox"] = std::move(outbox);

    json keys = json::array();
    for (const auto& k : s.keyring.keys) {
        json e{{"id", k.id},
               {"public", to_base64(k.keypair.public_part.view())},
               {"secret", to_base64(k.keypair.secret_part.bytes())},
               {"created_at", secs(k.keypair.created_at)}};
        if (k.retired_at) e["retired_at"] = secs(*k.retired_at);
        keys.push_back(std::move(e));
    }
    json contacts = json::array();
    for (const auto& c : s.keyring.contacts) {
        json prev = json::array();
        for (const auto& p : c.previous_pubs) prev.push_back(to_base64(p.view()));
        json e{{"alias", c.alias},
               {"address", c.address},
               {"current_pub", to_base64(c.current_pub.view())},
               {"previous_pubs", std::move(prev)},
               {"rotation_state", std::string(to_string(c.rotation_state))},
               {"my_key_id", c.my_key_id}};
        if (c.pending_key_id) e["pending_key_id"] = *c.pending_key_id;
        contacts.push_back(std::move(e));
    }
    j["keyring"] = json{{"keys", std::move(keys)},
                        {"published_key_id", s.keyring.published_key_id},
                        {"contacts", std::move(contacts)}};
    return j.dump();
}

ClientState deserialize_state(std::string_view text) {
    try {
        json j = json::parse(text);
        if (j.at("version").get<int>() != 1) throw Error(ErrorCode::storage_failure, "unsupported state version");
        ClientState s;
        s.address = j.at("address").get<std::string>();
        s.cursor = j.at("cursor").get<std::uint64_t>();
        for (const auto& id : j.at("skip_cache")) s.skip_cache.insert(HashId::from_hex(id.get<std::string>()));
        for (const auto& [id, why] : j.at("quarantine").items()) s.quarantine[HashId::from_hex(id)] = why.get<std::string>();
        for (const auto& e : j.at("mailstore")) {
            StoredMessage m;
            m.header_id = HashId::from_hex(e.at("header_id").get<std::string>());
            m.seq = e.at("seq").get<std::uint64_t>();
            m.header = header_from(e.at("header"));
            m.body = from_base64(e.at("body").get<std::string>());
            if (e.contains("attachment")) m.attachment = from_base64(e["attachment"].get<std::string>());
            m.key_id = e.at("key_id").get<std::string>();
            m.contact = e.at("contact").get<std::string>();
            m.kind = e.at("kind").get<std::string>() == "rotation" ? MessageKind::rotation : MessageKind::mail;
            m.read = e.at("read").get<bool>();
            m.acked = e.at("acked").get<bool>();
            m.received_at = from_secs(e.at("received_at").get<std::int64_t>());
            s.mailstore.emplace(m.header_id, std::move(m));
        }
        for (const auto& e : j.at("outbox")) {
            OutboxEntry o;
            o.header_id = HashId::from_hex(e.at("header_id").get<std::string>());
            o.seq = e.at("seq").get<std::uint64_t>();
            o.receipt_lock = HashId::from_hex(e.at("receipt_lock").get<std::string>());
            o.receipt.preimage = HashId::from_hex(e.at("receipt").get<std::string>());
            o.to_alias = e.at("to").get<std::string>();
            o.subject = e.at("subject").get<std::string>();
            o.date = from_secs(e.at("date").get<std::int64_t>());
            o.body = from_base64(e.at("body").get<std::string>());
            o.has_attachment = e.at("has_attachment").get<bool>();
            o.kind = e.at("kind").get<std::string>() == "rotation" ? MessageKind::rotation : MessageKind::mail;
            o.state = outbox_from(e.at("state").get<std::string>());
            if (e.contains("envelope")) o.envelope = envelope_from(e["envelope"]);
            s.outbox.push_back(std::move(o));
        }
        const json& kr = j.at("keyring");
        for (const auto& e : kr.at("keys")) {
            Bytes secret = from_base64(e.at("secret").get<std::string>());
            if (secret.size() != SecretKey::size) throw Error(ErrorCode::storage_failure, "bad secret key");
            SecretKey::Array raw;
            std::copy(secret.begin(), secret.end(), raw.begin());
            sodium_memzero(secret.data(), secret.size());
            OwnKey k;
            k.id = e.at("id").get<std::string>();
            k.keypair = keypair_from_secret(SecretKey(raw), from_secs(e.at("created_at").get<std::int64_t>()));
            sodium_memzero(raw.data(), raw.size());
            if (e.contains("retired_at")) k.retired_at = from_secs(e["retired_at"].get<std::int64_t>());
            s.keyring.keys.push_back(std::move(k));
        }
        s.keyring.published_key_id = kr.at("published_key_id").get<std::string>();
        for (const auto& e : kr.at("contacts")) {
            Contact c;
            c.alias = e.at("alias").get<std::string>();
            c.address = e.at("address").get<std::string>();
            c.current_pub = pub_from(e.at("current_pub"));
            for (const auto& p : e.at("previous_pubs")) c.previous_pubs.push_back(pub_from(p));
            c.rotation_state = rotation_from(e.at("rotation_state").get<std::string>());
            c.my_key_id = e.at("my_key_id").get<std::string>();
            if (e.contains("pending_key_id")) c.pending_key_id = e["pending_key_id"].get<std::string>();
            s.keyring.contacts.push_back(std::move(c));
        }
        return s;
    } catch (const Error& e) {
        throw Error(ErrorCode::storage_failure, std::string("corrupt client state: ") + e.what());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::storage_failure, std::string("corrupt client state: ") + e.what());
    }
}

namespace {

void derive_key(std::array<std::uint8_t, 32>& key, std::string_view passphrase,
                const std::array<std::uint8_t, 16>& salt, std::uint64_t ops, std::uint64_t mem) {
    if (sodium_init() < 0) throw Error(ErrorCode::entropy_unavailable, "libsodium initialisation failed");
    if (crypto_pwhash(key.data(), key.size(), passphrase.data(), passphrase.size(), salt.data(), ops,
                      static_cast<std::size_t>(mem), crypto_pwhash_ALG_ARGON2ID13) != 0) {
        throw Error(ErrorCode::storage_failure, "key derivation failed (out of memory?)");
    }
}

}  // namespace

StateFile StateFile::create(fs::path path, std::string_view passphrase, KdfStrength strength) {
    StateFile f;
    f.path_ = std::move(path);
    if (strength == KdfStrength::interactive) {
        f.opslimit_ = crypto_pwhash_OPSLIMIT_INTERACTIVE;
        f.memlimit_ = crypto_pwhash_MEMLIMIT_INTERACTIVE;
    } else {
        f.opslimit_ = crypto_pwhash_OPSLIMIT_MIN;
        f.memlimit_ = crypto_pwhash_MEMLIMIT_MIN;
    }
    system_entropy().fill(f.salt_);
    derive_key(f.key_, passphrase, f.salt_, f.opslimit_, f.memlimit_);
    return f;
}

StateFile StateFile::open(fs::path path, std::string_view passphrase) {
    Bytes raw = read_file(path);
    if (raw.size() < kPrefix + crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES ||
        std::memcmp(raw.data(), kMagic, 8) != 0) {
        throw Error(ErrorCode::storage_failure, path.string() + " is not a warp2 state file");
    }
    StateFile f;
    f.path_ = std::move(path);
    f.opslimit_ = get_u64(raw.data() + 8);
    f.memlimit_ = get_u64(raw.data() + 16);
    std::memcpy(f.salt_.data(), raw.data() + 24, f.salt_.size());
    derive_key(f.key_, passphrase, f.salt_, f.opslimit_, f.memlimit_);
    f.load();  // verifies the passphrase
    return f;
}

StateFile::StateFile(StateFile&& other) noexcept
    : path_(std::move(other.path_)),
      opslimit_(other.opslimit_),
      memlimit_(other.memlimit_),
      salt_(other.salt_),
      key_(other.key_) {
    sodium_memzero(other.key_.data(), other.key_.size());
}

StateFile& StateFile::operator=(StateFile&& other) noexcept {
    if (this != &other) {
        path_ = std::move(other.path_);
        opslimit_ = other.opslimit_;
        memlimit_ = other.memlimit_;
        salt_ = other.salt_;
        key_ = other.key_;
        sodium_memzero(other.key_.data(), other.key_.size());
    }
    return *this;
}

StateFile::~StateFile() { sodium_memzero(key_.data(), key_.size()); }

ClientState StateFile::load() const {
    Bytes raw = read_file(path_);
    if (raw.size() < kPrefix + crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES) {
        throw Error(ErrorCode::storage_failure, "state file truncated");
    }
    const std::uint8_t* nonce = raw.data() + kPrefix;
    const std::uint8_t* box = nonce + crypto_secretbox_NONCEBYTES;
    std::size_t box_len = raw.size() - kPrefix - crypto_secretbox_NONCEBYTES;
    std::string plain(box_len - crypto_secretbox_MACBYTES, '\0');
    if (crypto_secretbox_open_easy(reinterpret_cast<std::uint8_t*>(plain.data()), box, box_len, nonce,
                                   key_.data()) != 0) {
        throw Error(ErrorCode::bad_passphrase, "cannot decrypt state file (wrong passphrase?)");
    }
    ClientState s = deserialize_state(plain);
    sodium_memzero(plain.data(), plain.size());
    return s;
}

void StateFile::save(const ClientState& state) const {
    std::string plain = serialize_state(state);
    Bytes out;
    out.reserve(kPrefix + crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES + plain.size());
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u64(out, opslimit_);
    put_u64(out, memlimit_);
    out.insert(out.end(), salt_.begin(), salt_.end());
    std::array<std::uint8_t, crypto_secretbox_NONCEBYTES> nonce;
    system_entropy().fill(nonce);
    out.insert(out.end(), nonce.begin(), nonce.end());
    std::size_t box_at = out.size();
    out.resize(box_at + crypto_secretbox_MACBYTES + plain.size());
    crypto_secretbox_easy(out.data() + box_at, reinterpret_cast<const std::uint8_t*>(plain.data()), plain.size(),
                          nonce.data(), key_.data());
    sodium_memzero(plain.data(), plain.size());

    fs::path tmp = path_;
    tmp += ".tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) throw Error(ErrorCode::storage_failure, "cannot write " + tmp.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, out.data(), out.size());
        if (::fsync(fd) != 0) throw Error(ErrorCode::storage_failure, "fsync failed");
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    std::error_code ec;
    fs::rename(tmp, path_, ec);
    if (ec) throw Error(ErrorCode::storage_failure, "cannot replace " + path_.string() + ": " + ec.message());
    int dfd = ::open(path_.parent_path().empty() ? "." : path_.parent_path().c_str(), O_RDONLY | O_DIRECTORY);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

}  // namespace warp2
