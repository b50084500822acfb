#include "warp2/client.hpp"

#include <algorithm>
#include <unordered_set>

#include "warp2/error.hpp"

namespace warp2 {

Bytes encode_rotation_payload(const RotationPayload& payload) {
    std::string text = "new_public_key=" + export_public_key(payload.new_public_key) +
                       "\neffective_from=" + format_rfc3339(payload.effective_from) + "\n";
    return to_bytes(text);
}

RotationPayload decode_rotation_payload(ByteView body) {
    std::string text = to_string(body);
    constexpr std::string_view key_prefix = "new_public_key=";
    constexpr std::string_view date_prefix = "effective_from=";
    auto nl1 = text.find('\n');
    if (nl1 == std::string::npos || text.compare(0, key_prefix.size(), key_prefix) != 0) {
        throw Error(ErrorCode::invalid_argument, "rotation payload: missing new_public_key");
    }
    auto nl2 = text.find('\n', nl1 + 1);
    if (nl2 != text.size() - 1 || text.compare(nl1 + 1, date_prefix.size(), date_prefix) != 0) {
        throw Error(ErrorCode::invalid_argument, "rotation payload: missing effective_from");
    }
    RotationPayload p;
    p.new_public_key = import_public_key(text.substr(key_prefix.size(), nl1 - key_prefix.size()));
    auto date = parse_rfc3339(text.substr(nl1 + 1 + date_prefix.size(), nl2 - nl1 - 1 - date_prefix.size()));
    if (!date) throw Error(ErrorCode::invalid_argument, "rotation payload: bad effective_from");
    p.effective_from = *date;
    return p;
}

Client::Client(ClientState state, InboxApi& inbox, ClientOptions options, const StateFile* store)
    : state_(std::move(state)), inbox_(inbox), options_(std::move(options)), store_(store) {}

ClientState Client::create_state(std::string address, EntropySource& rng, Timestamp now) {
    if (address.empty()) throw Error(ErrorCode::invalid_argument, "address must not be empty");
    ClientState s;
    s.address = std::move(address);
    KeyPair kp = generate_keypair(rng, now);
    std::string id = key_id_for(kp.public_part);
    s.keyring.keys.push_back(OwnKey{id, std::move(kp), std::nullopt});
    s.keyring.published_key_id = id;
    return s;
}

Timestamp Client::now() const { return options_.clock ? options_.clock() : now_utc(); }

EntropySource& Client::rng() const { return options_.rng ? *options_.rng : system_entropy(); }

void Client::persist() const {
    if (store_) store_->save(state_);
}

PublicKey Client::published_key() const {
    const OwnKey* k = state_.keyring.find_key(state_.keyring.published_key_id);
    if (!k || k->retired_at) throw Error(ErrorCode::not_found, "no published key; run keygen");
    return k->keypair.public_part;
}

PublicKey Client::new_published_key() {
    Timestamp t = now();
    std::string old = state_.keyring.published_key_id;
    state_.keyring.published_key_id = add_own_key(t);
    retire_if_unused(old, t, true);
    persist();
    return state_.keyring.find_key(state_.keyring.published_key_id)->keypair.public_part;
}

std::string Client::add_own_key(Timestamp t) {
    KeyPair kp = generate_keypair(rng(), t);
    std::string id = key_id_for(kp.public_part);
    state_.keyring.keys.push_back(OwnKey{id, std::move(kp), std::nullopt});
    return id;
}

void Client::retire_if_unused(const std::string& key_id, Timestamp t, bool include_published) {
    if (key_id.empty() || state_.keyring.key_in_use(key_id)) return;
    if (!include_published && key_id == state_.keyring.published_key_id) return;
    OwnKey* k = state_.keyring.find_key(key_id);
    if (k && !k->retired_at) k->retired_at = t;
}

void Client::destroy_expired_keys(Timestamp t) {
    auto& keys = state_.keyring.keys;
    keys.erase(std::remove_if(keys.begin(), keys.end(),
                              [&](const OwnKey& k) { return k.retired_at && t - *k.retired_at >= options_.key_grace; }),
               keys.end());
}

std::vector<const OwnKey*> Client::live_keys() const {
    std::vector<const OwnKey*> out;
    for (const auto& k : state_.keyring.keys) out.push_back(&k);
    return out;
}

Contact Client::import_contact(const std::string& alias, const PublicKey& key, std::string address) {
    if (alias.empty()) throw Error(ErrorCode::invalid_argument, "alias must not be empty");
    if (state_.keyring.find_contact(alias)) throw Error(ErrorCode::duplicate_alias, "contact '" + alias + "' exists");
    if (!is_valid_public_key(key)) throw Error(ErrorCode::malformed_key, "contact key is not a usable public key");
    Contact c;
    c.alias = alias;
    c.address = address.empty() ? alias : std::move(address);
    c.current_pub = key;
    const OwnKey* published = state_.keyring.find_key(state_.keyring.published_key_id);
    if (published && !published->retired_at) c.my_key_id = published->id;
    state_.keyring.contacts.push_back(c);
    persist();
    return c;
}

void Client::remove_contact(const std::string& alias) {
    auto& contacts = state_.keyring.contacts;
    auto it = std::find_if(contacts.begin(), contacts.end(), [&](const Contact& c) { return c.alias == alias; });
    if (it == contacts.end()) throw Error(ErrorCode::unknown_contact, "no contact '" + alias + "'");
    std::string mine = it->my_key_id;
    std::optional<std::string> pending = it->pending_key_id;
    contacts.erase(it);
    Timestamp t = now();
    retire_if_unused(mine, t, false);
    if (pending) retire_if_unused(*pending, t, false);
    persist();
}

HashId Client::send(const std::string& alias, const std::string& subject, Bytes body,
                    std::optional<Bytes> attachment) {
    Contact* c = state_.keyring.find_contact(alias);
    if (!c) throw Error(ErrorCode::unknown_contact, "no contact '" + alias + "'");
    return send_to(*c, subject, std::move(body), std::move(attachment), MessageKind::mail);
}

HashId Client::send_to(Contact& contact, const std::string& subject, Bytes body, std::optional<Bytes> attachment,
                       MessageKind kind) {
    Timestamp t = now();
    ComposeRequest req;
    req.to = contact.address;
    req.from = state_.address;
    req.subject = subject;
    req.date = options_.round_date_to_hour ? round_down_to_hour(t) : t;
    req.body = std::move(body);
    req.attachment = std::move(attachment);
    ComposedMessage composed = compose_envelope(req, contact.current_pub, rng());

    OutboxEntry entry;
    entry.header_id = sha256(composed.envelope.header_ct);
    entry.receipt_lock = composed.envelope.receipt_lock;
    entry.receipt = composed.receipt;
    entry.to_alias = contact.alias;
    entry.subject = subject;
    entry.date = req.date;
    entry.body = std::move(req.body);
    entry.has_attachment = req.attachment.has_value();
    entry.kind = kind;
    entry.envelope = std::move(composed.envelope);
    state_.outbox.push_back(std::move(entry));
    persist();

    HashId id = state_.outbox.back().header_id;
    upload_entry(state_.outbox.back());
    return id;
}

bool Client::upload_entry(OutboxEntry& entry) {
    if (entry.state != OutboxState::pending_upload || !entry.envelope) return false;
    try {
        UploadResult r = inbox_.upload(*entry.envelope);
        entry.seq = r.seq;
        entry.state = OutboxState::uploaded;
        entry.envelope.reset();
        persist();
        return true;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::oversize_blob || e.code() == ErrorCode::malformed_envelope) {
            HashId id = entry.header_id;
            std::erase_if(state_.outbox, [&](const OutboxEntry& o) { return o.header_id == id; });
            persist();
        }
        throw;
    }
}

std::size_t Client::retry_pending() {
    std::size_t n = 0;
    for (std::size_t i = 0; i < state_.outbox.size(); ++i) {
        if (upload_entry(state_.outbox[i])) ++n;
    }
    return n;
}

SyncReport Client::sync() {
    SyncReport report;
    Timestamp t = now();
    destroy_expired_keys(t);
    retry_pending();

    for (;;) {
        HeaderPage page = inbox_.list_headers(state_.cursor, 0);
        if (page.entries.empty()) break;
        for (const auto& e : page.entries) process_entry(e, report);
        state_.cursor = std::max(state_.cursor, page.next_cursor);
        persist();
    }

    for (auto& [id, msg] : state_.mailstore) {
        if (msg.kind != MessageKind::rotation || msg.acked) continue;
        try {
            acknowledge(id);
        } catch (const Error&) {
            // retried on the next sync
        }
    }

    check_delivery(report);
    destroy_expired_keys(now());
    persist();
    return report;
}

void Client::process_entry(const HeaderEntry& entry, SyncReport& report) {
    ++report.headers_seen;
    HashId id = sha256(entry.header_ct);
    if (state_.skip_cache.contains(id) || state_.mailstore.contains(id) || state_.quarantine.contains(id)) {
        ++report.skipped;
        return;
    }
    if (id != entry.header_id) {
        state_.quarantine[id] = "server header id does not match ciphertext";
        ++report.quarantined;
        return;
    }

    const OwnKey* key = nullptr;
    std::optional<Bytes> plain;
    for (const OwnKey* k : live_keys()) {
        ++open_attempts_;
        ++report.trial_decryptions;
        plain = open(entry.header_ct, k->keypair);
        if (plain) {
            key = k;
            break;
        }
    }
    if (!plain) {
        state_.skip_cache.insert(id);
        return;
    }

    MessageHeader header;
    OpenedContent content;
    try {
        header = parse_header(*plain);
        Ciphertext body_ct = inbox_.fetch_blob(BlobKind::body, id);
        std::optional<Ciphertext> att_ct;
        if (header.attachment_hash) att_ct = inbox_.fetch_blob(BlobKind::attachment, id);
        std::optional<ByteView> att_view;
        if (att_ct) att_view = ByteView(*att_ct);
        content = verify_and_open(header, body_ct, att_view, key->keypair);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::network_failure) throw;
        state_.quarantine[id] = std::string(to_string(e.code())) + ": " + e.what();
        ++report.quarantined;
        return;
    }

    StoredMessage msg;
    msg.header_id = id;
    msg.seq = entry.seq;
    msg.key_id = key->id;
    msg.header = std::move(header);
    msg.body = std::move(content.body);
    msg.attachment = std::move(content.attachment);
    msg.kind = msg.header.subject == kRotationSubject ? MessageKind::rotation : MessageKind::mail;
    msg.received_at = now();
    if (Contact* c = sender_of(msg.header, msg.key_id)) msg.contact = c->alias;

    auto [it, inserted] = state_.mailstore.emplace(id, std::move(msg));
    report.new_messages.push_back(id);
    if (it->second.kind == MessageKind::rotation) apply_rotation(it->second, report);
}

Contact* Client::sender_of(const MessageHeader& header, const std::string& key_id) {
    Contact* by_address = nullptr;
    for (auto& c : state_.keyring.contacts) {
        if (c.address != header.from) continue;
        if (c.my_key_id == key_id || (c.pending_key_id && *c.pending_key_id == key_id)) return &c;
        if (!by_address) by_address = &c;
    }
    return by_address;
}

void Client::apply_rotation(StoredMessage& msg, SyncReport& report) {
    Contact* c = state_.keyring.find_contact(msg.contact);
    if (!c) return;
    RotationPayload payload;
    try {
        payload = decode_rotation_payload(msg.body);
    } catch (const Error&) {
        return;
    }
    if (payload.new_public_key == c->current_pub) return;

    std::erase(c->previous_pubs, payload.new_public_key);
    c->previous_pubs.push_back(c->current_pub);
    c->current_pub = payload.new_public_key;
    Timestamp t = now();
    std::string old = c->my_key_id;

    if (c->rotation_state == RotationState::offered && c->pending_key_id) {
        // Peer answered our offer, or offered at the same time.
        c->my_key_id = *c->pending_key_id;
        c->pending_key_id.reset();
        c->rotation_state = RotationState::completed;
        retire_if_unused(old, t, true);
    } else {
        c->my_key_id = add_own_key(t);
        c->rotation_state = RotationState::completed;
        retire_if_unused(old, t, true);
        RotationPayload answer{state_.keyring.find_key(c->my_key_id)->keypair.public_part, t};
        try {
            send_to(*c, std::string(kRotationSubject), encode_rotation_payload(answer), std::nullopt,
                    MessageKind::rotation);
        } catch (const Error& e) {
            // Stays queued in the outbox; retry_pending() resends it.
            if (e.code() != ErrorCode::network_failure && e.code() != ErrorCode::rate_limited) throw;
        }
    }
    ++report.rotations_applied;
}

void Client::check_delivery(SyncReport& report) {
    std::uint64_t lo = UINT64_MAX, hi = 0;
    for (const auto& o : state_.outbox) {
        if (o.state != OutboxState::uploaded) continue;
        lo = std::min(lo, o.seq);
        hi = std::max(hi, o.seq);
    }
    if (lo == UINT64_MAX) return;

    std::unordered_set<HashId> live;
    std::uint64_t cursor = lo - 1;
    for (;;) {
        HeaderPage page = inbox_.list_headers(cursor, 0);
        if (page.entries.empty()) break;
        for (const auto& e : page.entries) live.insert(e.header_id);
        cursor = page.next_cursor;
        if (cursor >= hi) break;
    }
    bool changed = false;
    for (auto& o : state_.outbox) {
        if (o.state == OutboxState::uploaded && !live.contains(o.header_id)) {
            o.state = OutboxState::delivered;
            report.delivered.push_back(o.header_id);
            changed = true;
        }
    }
    if (changed) persist();
}

bool Client::acknowledge(const HashId& header_id) {
    auto it = state_.mailstore.find(header_id);
    if (it == state_.mailstore.end()) throw Error(ErrorCode::not_in_mailstore, "message not in mailstore");
    ReceiptSecret receipt = receipt_secret_for(it->second.header);
    bool purged = inbox_.acknowledge(receipt);
    if (purged && !it->second.acked) {
        it->second.acked = true;
        persist();
    }
    return purged;
}

void Client::mark_read(const HashId& header_id) {
    auto it = state_.mailstore.find(header_id);
    if (it == state_.mailstore.end()) throw Error(ErrorCode::not_in_mailstore, "message not in mailstore");
    if (!it->second.read) {
        it->second.read = true;
        persist();
    }
}

HashId Client::rotate_keys(const std::string& alias) {
    Contact* c = state_.keyring.find_contact(alias);
    if (!c) throw Error(ErrorCode::unknown_contact, "no contact '" + alias + "'");
    if (c->rotation_state == RotationState::offered) {
        throw Error(ErrorCode::rotation_pending, "rotation with '" + alias + "' already pending");
    }
    Timestamp t = now();
    std::string fresh = add_own_key(t);
    c->pending_key_id = fresh;
    c->rotation_state = RotationState::offered;
    RotationPayload offer{state_.keyring.find_key(fresh)->keypair.public_part, t};
    return send_to(*c, std::string(kRotationSubject), encode_rotation_payload(offer), std::nullopt,
                   MessageKind::rotation);
}

}  // namespace warp2
