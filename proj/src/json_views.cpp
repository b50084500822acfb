#include "warp2/json_views.hpp"

using nlohmann::json;

namespace warp2::views {

namespace {

json maybe_text(const Bytes& b) {
    std::string s = to_string(b);
    json probe = s;
    try {
        (void)probe.dump();
        return s;
    } catch (const json::exception&) {
        return nullptr;
    }
}

json ids(const std::vector<HashId>& v) {
    json out = json::array();
    for (const auto& id : v) out.push_back(id.hex());
    return out;
}

// Exact integer rendering for byte counts; the model keeps them integral
// whenever the inputs are.
json number(double v) {
    if (v == static_cast<double>(static_cast<std::uint64_t>(v)) && v < 9.007199254740992e15) {
        return static_cast<std::uint64_t>(v);
    }
    return v;
}

}  // namespace

json message_summary(const StoredMessage& m) {
    return json{{"id", m.header_id.hex()},
                {"seq", m.seq},
                {"direction", "received"},
                {"kind", m.kind == MessageKind::mail ? "mail" : "rotation"},
                {"contact", m.contact},
                {"from", m.header.from},
                {"to", m.header.to},
                {"subject", m.kind == MessageKind::mail ? m.header.subject : std::string("(key rotation)")},
                {"date", format_rfc3339(m.header.date)},
                {"has_attachment", m.attachment.has_value()},
                {"body_bytes", m.body.size()},
                {"read", m.read},
                {"acked", m.acked}};
}

json message_detail(const StoredMessage& m) {
    json j = message_summary(m);
    j["body"] = maybe_text(m.body);
    j["body_b64"] = to_base64(m.body);
    if (m.attachment) {
        j["attachment_b64"] = to_base64(*m.attachment);
        j["attachment_bytes"] = m.attachment->size();
    }
    return j;
}

json sent_summary(const OutboxEntry& o) {
    return json{{"id", o.header_id.hex()},
                {"seq", o.seq},
                {"direction", "sent"},
                {"kind", o.kind == MessageKind::mail ? "mail" : "rotation"},
                {"contact", o.to_alias},
                {"subject", o.kind == MessageKind::mail ? o.subject : std::string("(key rotation)")},
                {"date", format_rfc3339(o.date)},
                {"has_attachment", o.has_attachment},
                {"state", std::string(to_string(o.state))}};
}

json contact(const Contact& c) {
    return json{{"alias", c.alias},
                {"address", c.address},
                {"public_key", export_public_key(c.current_pub)},
                {"previous_keys", c.previous_pubs.size()},
                {"rotation_state", std::string(to_string(c.rotation_state))}};
}

json sync_report(const SyncReport& r) {
    return json{{"new_messages", ids(r.new_messages)},
                {"delivered", ids(r.delivered)},
                {"headers_seen", r.headers_seen},
                {"trial_decryptions", r.trial_decryptions},
                {"skipped", r.skipped},
                {"quarantined", r.quarantined},
                {"rotations_applied", r.rotations_applied}};
}

json estimate(const LoadParams& p, const LoadEstimate& e) {
    return json{{"users", number(p.users)},
                {"messages_per_user_per_day", number(p.messages_per_user_per_day)},
                {"header_ct_size", number(p.header_ct_size)},
                {"syncs_per_user_per_day", number(p.syncs_per_user_per_day)},
                {"daily_new_header_bytes", number(e.daily_new_header_bytes)},
                {"per_client_daily_decrypt_bytes", number(e.per_client_daily_decrypt_bytes)},
                {"server_daily_egress_bytes", number(e.server_daily_egress_bytes)},
                {"trial_decryptions_per_client_per_day", number(e.trial_decryptions_per_client_per_day)}};
}

json stats(const InboxStats& s) { return json{{"live", s.live}, {"purged", s.purged}, {"bytes", s.total_bytes}}; }

}  // namespace warp2::views
