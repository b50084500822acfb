#include "warp2/message.hpp"

#include <ctime>
#include <string_view>

#include "warp2/error.hpp"

namespace warp2 {

namespace {

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xe0) == 0xc0) {
            extra = 1;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            extra = 2;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= s.size()) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xc0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3f);
        }
        static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
        if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
        i += extra + 1;
    }
    return true;
}

void escape_into(std::string& out, std::string_view value) {
    for (char c : value) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '\n') {
            out += "\\n";
        } else {
            out += c;
        }
    }
}

std::optional<std::string> unescape(std::string_view value) {
    std::string out;
    out.reserve(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (value[i] != '\\') {
            out += value[i];
            continue;
        }
        if (++i == value.size()) return std::nullopt;
        if (value[i] == '\\') {
            out += '\\';
        } else if (value[i] == 'n') {
            out += '\n';
        } else {
            return std::nullopt;
        }
    }
    return out;
}

void check_text_field(std::string_view name, std::string_view value, bool required) {
    if (required && value.empty()) {
        throw Error(ErrorCode::invalid_argument, std::string(name) + " must not be empty");
    }
    if (value.find('\0') != std::string_view::npos) {
        throw Error(ErrorCode::invalid_argument, std::string(name) + " must not contain NUL");
    }
    if (!valid_utf8(value)) {
        throw Error(ErrorCode::invalid_argument, std::string(name) + " is not valid UTF-8");
    }
}

void check_header(const MessageHeader& h) {
    check_text_field("to", h.to, true);
    check_text_field("from", h.from, true);
    check_text_field("subject", h.subject, false);
    if (h.subject.size() > kMaxSubjectBytes) {
        throw Error(ErrorCode::invalid_argument, "subject exceeds 256 bytes");
    }
}

[[noreturn]] void malformed(const std::string& why) {
    throw Error(ErrorCode::malformed_header, "malformed header: " + why);
}

}  // namespace

std::string format_rfc3339(Timestamp t) {
    std::time_t tt = t.time_since_epoch().count();
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return {buf, n};
}

std::optional<Timestamp> parse_rfc3339(std::string_view text) {
    // YYYY-MM-DDTHH:MM:SSZ
    if (text.size() != 20) return std::nullopt;
    static constexpr std::string_view shape = "dddd-dd-ddTdd:dd:ddZ";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == 'd') {
            if (text[i] < '0' || text[i] > '9') return std::nullopt;
        } else if (text[i] != shape[i]) {
            return std::nullopt;
        }
    }
    auto num = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (text[i] - '0');
        return v;
    };
    std::tm tm{};
    tm.tm_year = num(0, 4) - 1900;
    tm.tm_mon = num(5, 2) - 1;
    tm.tm_mday = num(8, 2);
    tm.tm_hour = num(11, 2);
    tm.tm_min = num(14, 2);
    tm.tm_sec = num(17, 2);
    Timestamp t{std::chrono::seconds{timegm(&tm)}};
    // Reject out-of-range components that timegm silently normalises.
    if (format_rfc3339(t) != text) return std::nullopt;
    return t;
}

Timestamp round_down_to_hour(Timestamp t) {
    return std::chrono::floor<std::chrono::hours>(t);
}

Bytes canonical_serialize(const MessageHeader& header) {
    check_header(header);

    std::string content;
    content.reserve(kHeaderSize);
    auto field = [&](std::string_view name, std::string_view value) {
        content += name;
        content += '=';
        escape_into(content, value);
        content += '\n';
    };
    field("to", header.to);
    field("from", header.from);
    field("date", format_rfc3339(header.date));
    field("subject", header.subject);
    field("body_hash", header.body_hash.hex());
    if (header.attachment_hash) field("attachment_hash", header.attachment_hash->hex());
    field("receipt_nonce", to_hex(header.receipt_nonce));

    if (content.size() > kHeaderSize - 1) {
        throw Error(ErrorCode::header_too_large,
                    "header content is " + std::to_string(content.size()) + " bytes, limit " +
                        std::to_string(kHeaderSize - 1));
    }
    Bytes out(kHeaderSize, 0);
    std::copy(content.begin(), content.end(), out.begin());
    return out;
}

MessageHeader parse_header(ByteView data) {
    if (data.size() != kHeaderSize) malformed("expected 512 bytes");

    std::size_t end = 0;
    while (end < data.size() && data[end] != 0) ++end;
    if (end == data.size()) malformed("missing terminator");
    for (std::size_t i = end; i < data.size(); ++i) {
        if (data[i] != 0) malformed("non-zero padding");
    }

    std::string_view content(reinterpret_cast<const char*>(data.data()), end);
    if (content.empty() || content.back() != '\n') malformed("content must end with newline");

    MessageHeader h;
    static constexpr std::string_view kOrder[] = {"to",        "from",            "date",
                                                  "subject",   "body_hash",       "attachment_hash",
                                                  "receipt_nonce"};
    std::size_t next = 0;  // index into kOrder of the next acceptable field
    bool have_nonce = false;

    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;

        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) malformed("line without '='");
        std::string_view name = line.substr(0, eq);
        auto value = unescape(line.substr(eq + 1));
        if (!value) malformed("bad escape sequence");

        std::size_t idx = next;
        while (idx < std::size(kOrder) && kOrder[idx] != name) {
            if (kOrder[idx] != "attachment_hash") malformed("field missing or out of order before " + std::string(name));
            ++idx;
        }
        if (idx == std::size(kOrder)) malformed("unknown or repeated field '" + std::string(name) + "'");
        next = idx + 1;

        const std::string& v = *value;
        if (name == "to") {
            h.to = v;
        } else if (name == "from") {
            h.from = v;
        } else if (name == "date") {
            auto t = parse_rfc3339(v);
            if (!t) malformed("bad date");
            h.date = *t;
        } else if (name == "subject") {
            h.subject = v;
        } else if (name == "body_hash" || name == "attachment_hash") {
            auto id = HashId::try_from_hex(v);
            if (!id) malformed("bad hash in " + std::string(name));
            if (name == "body_hash") {
                h.body_hash = *id;
            } else {
                h.attachment_hash = *id;
            }
        } else {
            Bytes nonce;
            try {
                nonce = from_hex(v);
            } catch (const Error&) {
                malformed("bad receipt_nonce");
            }
            if (nonce.size() != kReceiptNonceSize) malformed("receipt_nonce must be 16 bytes");
            std::copy(nonce.begin(), nonce.end(), h.receipt_nonce.begin());
            have_nonce = true;
        }
    }
    if (!have_nonce) malformed("missing mandatory fields");

    try {
        check_header(h);
    } catch (const Error& e) {
        malformed(e.what());
    }
    return h;
}

ReceiptSecret receipt_secret_for(const MessageHeader& header) {
    return ReceiptSecret{sha256(canonical_serialize(header))};
}

HashId receipt_lock_for(const ReceiptSecret& secret) { return sha256(secret.preimage.view()); }

ComposedMessage compose_envelope(const ComposeRequest& request, const PublicKey& recipient,
                                 EntropySource& rng) {
    if (request.body.empty()) throw Error(ErrorCode::invalid_argument, "message body must not be empty");
    if (!is_valid_public_key(recipient)) {
        throw Error(ErrorCode::invalid_public_key, "recipient public key is not usable");
    }

    MessageHeader header;
    header.to = request.to;
    header.from = request.from;
    header.date = request.date;
    header.subject = request.subject;
    rng.fill(header.receipt_nonce);
    // Fail on oversized headers before spending time sealing large blobs.
    canonical_serialize(MessageHeader{header.to, header.from, header.date, header.subject, HashId{},
                                      request.attachment ? std::optional<HashId>(HashId{}) : std::nullopt,
                                      header.receipt_nonce});

    Envelope env;
    env.body_ct = seal(request.body, recipient, rng);
    header.body_hash = sha256(env.body_ct);
    if (request.attachment) {
        env.attachment_ct = seal(*request.attachment, recipient, rng);
        header.attachment_hash = sha256(*env.attachment_ct);
    }

    Bytes plain = canonical_serialize(header);
    ReceiptSecret secret{sha256(plain)};
    env.receipt_lock = receipt_lock_for(secret);
    env.header_ct = seal(plain, recipient, rng);
    return ComposedMessage{std::move(env), secret, std::move(header)};
}

OpenedContent verify_and_open(const MessageHeader& header, ByteView body_ct,
                              std::optional<ByteView> attachment_ct, const KeyPair& keypair) {
    if (sha256(body_ct) != header.body_hash) {
        throw Error(ErrorCode::hash_mismatch, "body blob does not match header body_hash");
    }
    if (header.attachment_hash.has_value() != attachment_ct.has_value()) {
        throw Error(ErrorCode::hash_mismatch, "attachment presence does not match header");
    }
    if (attachment_ct && sha256(*attachment_ct) != *header.attachment_hash) {
        throw Error(ErrorCode::hash_mismatch, "attachment blob does not match header attachment_hash");
    }

    OpenedContent out;
    auto body = open(body_ct, keypair);
    if (!body) throw Error(ErrorCode::decrypt_failure, "body blob is not sealed to this key");
    out.body = std::move(*body);
    if (attachment_ct) {
        auto att = open(*attachment_ct, keypair);
        if (!att) throw Error(ErrorCode::decrypt_failure, "attachment blob is not sealed to this key");
        out.attachment = std::move(*att);
    }
    return out;
}

}  // namespace warp2
