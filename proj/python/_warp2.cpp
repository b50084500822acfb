#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "warp2/client.hpp"
#include "warp2/error.hpp"
#include "warp2/load_model.hpp"

namespace py = pybind11;
using namespace warp2;

namespace {

py::bytes to_py(ByteView b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_py(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::int64_t epoch(Timestamp t) { return t.time_since_epoch().count(); }
Timestamp from_epoch(std::int64_t s) { return Timestamp{std::chrono::seconds{s}}; }

PublicKey key_arg(const py::object& o) {
    if (py::isinstance<py::str>(o)) return import_public_key(o.cast<std::string>());
    return PublicKey::from_raw(from_py(o.cast<std::string>()));
}

py::dict envelope_dict(const Envelope& e) {
    py::dict d;
    d["header_ct"] = to_py(e.header_ct);
    d["body_ct"] = to_py(e.body_ct);
    d["attachment_ct"] = e.attachment_ct ? py::object(to_py(*e.attachment_ct)) : py::none();
    d["receipt_lock"] = e.receipt_lock.hex();
    return d;
}

Envelope envelope_arg(const py::dict& d) {
    Envelope e;
    e.header_ct = from_py(d["header_ct"].cast<std::string>());
    e.body_ct = from_py(d["body_ct"].cast<std::string>());
    if (d.contains("attachment_ct") && !d["attachment_ct"].is_none()) {
        e.attachment_ct = from_py(d["attachment_ct"].cast<std::string>());
    }
    e.receipt_lock = HashId::from_hex(d["receipt_lock"].cast<std::string>());
    return e;
}

py::dict report_dict(const SyncReport& r) {
    py::dict d;
    std::vector<std::string> fresh, delivered;
    for (const auto& id : r.new_messages) fresh.push_back(id.hex());
    for (const auto& id : r.delivered) delivered.push_back(id.hex());
    d["new_messages"] = fresh;
    d["delivered"] = delivered;
    d["headers_seen"] = r.headers_seen;
    d["trial_decryptions"] = r.trial_decryptions;
    d["skipped"] = r.skipped;
    d["quarantined"] = r.quarantined;
    d["rotations_applied"] = r.rotations_applied;
    return d;
}

/// In-process inbox plus one rate-limit identity, owned together.
struct PyInbox {
    InboxService service;
    LocalInbox local;

    PyInbox(const std::string& dir, std::size_t page_limit)
        : service(dir, limits(page_limit)), local(service) {}

    static InboxLimits limits(std::size_t page_limit) {
        InboxLimits l;
        l.page_limit = page_limit;
        l.uploads_per_minute = 0;
        l.receipts_per_minute = 0;
        return l;
    }
};

}  // namespace

PYBIND11_MODULE(_warp2, m) {
    m.doc() = "Bindings for the warp2 core library";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()));
            PyErr_SetObject(error.ptr(), args.ptr());
        }
    });

    m.attr("HEADER_SIZE") = kHeaderSize;
    m.attr("HEADER_CIPHERTEXT_SIZE") = kHeaderCiphertextSize;
    m.attr("SEAL_OVERHEAD") = kSealOverhead;

    m.def("sha256", [](const py::bytes& data) { return sha256(from_py(data)).hex(); }, py::arg("data"),
          "Lowercase hex SHA-256 digest.");

    py::class_<KeyPair>(m, "KeyPair")
        .def_property_readonly("public_key", [](const KeyPair& k) { return to_py(k.public_part.view()); })
        .def_property_readonly("public_key_text", [](const KeyPair& k) { return export_public_key(k.public_part); });

    m.def(
        "generate_keypair",
        [](std::optional<std::uint64_t> seed) {
            if (seed) {
                SeededEntropy rng(*seed);
                return generate_keypair(rng);
            }
            return generate_keypair(system_entropy());
        },
        py::arg("seed") = py::none(), "Fresh X25519 key pair; a seed makes it reproducible (tests only).");

    m.def("seal", [](const py::bytes& plaintext, const py::object& key) {
        return to_py(seal(from_py(plaintext), key_arg(key), system_entropy()));
    });
    m.def("open", [](const py::bytes& ciphertext, const KeyPair& kp) -> py::object {
        auto out = open(from_py(ciphertext), kp);
        if (!out) return py::none();
        return to_py(*out);
    });

    py::class_<MessageHeader>(m, "Header")
        .def(py::init<>())
        .def_readwrite("to", &MessageHeader::to)
        .def_readwrite("sender", &MessageHeader::from)
        .def_readwrite("subject", &MessageHeader::subject)
        .def_property(
            "date", [](const MessageHeader& h) { return epoch(h.date); },
            [](MessageHeader& h, std::int64_t s) { h.date = from_epoch(s); })
        .def_property(
            "body_hash", [](const MessageHeader& h) { return h.body_hash.hex(); },
            [](MessageHeader& h, const std::string& hex) { h.body_hash = HashId::from_hex(hex); })
        .def_property(
            "attachment_hash",
            [](const MessageHeader& h) -> py::object {
                return h.attachment_hash ? py::object(py::str(h.attachment_hash->hex())) : py::none();
            },
            [](MessageHeader& h, std::optional<std::string> hex) {
                h.attachment_hash = hex ? std::optional<HashId>(HashId::from_hex(*hex)) : std::nullopt;
            })
        .def_property(
            "receipt_nonce", [](const MessageHeader& h) { return to_py(h.receipt_nonce); },
            [](MessageHeader& h, const py::bytes& b) {
                Bytes raw = from_py(b);
                if (raw.size() != kReceiptNonceSize) throw Error(ErrorCode::invalid_argument, "nonce must be 16 bytes");
                std::copy(raw.begin(), raw.end(), h.receipt_nonce.begin());
            })
        .def("__eq__", [](const MessageHeader& a, const MessageHeader& b) { return a == b; });

    m.def("canonical_serialize", [](const MessageHeader& h) { return to_py(canonical_serialize(h)); });
    m.def("parse_header", [](const py::bytes& b) { return parse_header(from_py(b)); });
    m.def("receipt_secret", [](const MessageHeader& h) { return receipt_secret_for(h).preimage.hex(); });
    m.def("receipt_lock", [](const MessageHeader& h) { return receipt_lock_for(receipt_secret_for(h)).hex(); });

    m.def(
        "compose",
        [](const std::string& to, const std::string& sender, const std::string& subject, const py::bytes& body,
           const py::object& recipient, std::optional<py::bytes> attachment, std::optional<std::int64_t> date) {
            ComposeRequest req;
            req.to = to;
            req.from = sender;
            req.subject = subject;
            req.body = from_py(body);
            req.date = date ? from_epoch(*date) : now_utc();
            if (attachment) req.attachment = from_py(*attachment);
            ComposedMessage c = compose_envelope(req, key_arg(recipient), system_entropy());
            py::dict d = envelope_dict(c.envelope);
            d["receipt"] = c.receipt.preimage.hex();
            d["header"] = c.header;
            return d;
        },
        py::arg("to"), py::arg("sender"), py::arg("subject"), py::arg("body"), py::arg("recipient"),
        py::arg("attachment") = py::none(), py::arg("date") = py::none(),
        "Seal a message; returns the envelope fields plus the sender's receipt secret.");

    m.def(
        "verify_and_open",
        [](const MessageHeader& h, const py::bytes& body_ct, std::optional<py::bytes> att_ct, const KeyPair& kp) {
            std::optional<Bytes> att;
            if (att_ct) att = from_py(*att_ct);
            std::optional<ByteView> view;
            if (att) view = ByteView(*att);
            OpenedContent c = verify_and_open(h, from_py(body_ct), view, kp);
            return py::make_tuple(to_py(c.body), c.attachment ? py::object(to_py(*c.attachment)) : py::none());
        },
        py::arg("header"), py::arg("body_ct"), py::arg("attachment_ct"), py::arg("keypair"));

    m.def(
        "estimate",
        [](double users, double rate, double header_size, double syncs) {
            LoadEstimate e = estimate({users, rate, header_size, syncs});
            py::dict d;
            d["daily_new_header_bytes"] = e.daily_new_header_bytes;
            d["per_client_daily_decrypt_bytes"] = e.per_client_daily_decrypt_bytes;
            d["server_daily_egress_bytes"] = e.server_daily_egress_bytes;
            d["trial_decryptions_per_client_per_day"] = e.trial_decryptions_per_client_per_day;
            return d;
        },
        py::arg("users"), py::arg("rate"), py::arg("header_size") = static_cast<double>(kHeaderCiphertextSize),
        py::arg("syncs") = 1.0);

    py::class_<PyInbox>(m, "Inbox", "In-process inbox server storing under a directory.")
        .def(py::init<const std::string&, std::size_t>(), py::arg("directory"), py::arg("page_limit") = 1000)
        .def("upload",
             [](PyInbox& in, const py::dict& env) {
                 UploadResult r = in.local.upload(envelope_arg(env));
                 return py::make_tuple(r.header_id.hex(), r.seq);
             })
        .def(
            "list_headers",
            [](PyInbox& in, std::uint64_t after, std::size_t limit) {
                HeaderPage p = in.local.list_headers(after, limit);
                py::list entries;
                for (const auto& e : p.entries) entries.append(py::make_tuple(e.seq, e.header_id.hex(), to_py(e.header_ct)));
                return py::make_tuple(entries, p.next_cursor);
            },
            py::arg("after") = 0, py::arg("limit") = 0)
        .def("fetch_blob",
             [](PyInbox& in, const std::string& kind, const std::string& id) {
                 BlobKind k = kind == "attachment" ? BlobKind::attachment : BlobKind::body;
                 return to_py(in.local.fetch_blob(k, HashId::from_hex(id)));
             })
        .def("acknowledge",
             [](PyInbox& in, const std::string& preimage_hex) {
                 return in.local.acknowledge(ReceiptSecret{HashId::from_hex(preimage_hex)});
             })
        .def("stats", [](PyInbox& in) {
            InboxStats s = in.local.stats();
            py::dict d;
            d["live"] = s.live;
            d["purged"] = s.purged;
            d["bytes"] = s.total_bytes;
            return d;
        });

    py::class_<Client>(m, "Client", "Client engine bound to an in-process Inbox (state kept in memory).")
        .def(py::init([](const std::string& address, PyInbox& inbox) {
                 return std::make_unique<Client>(Client::create_state(address, system_entropy()), inbox.local);
             }),
             py::arg("address"), py::arg("inbox"), py::keep_alive<1, 3>())
        .def_property_readonly("address", [](const Client& c) { return c.state().address; })
        .def_property_readonly("public_key", [](const Client& c) { return export_public_key(c.published_key()); })
        .def(
            "import_contact",
            [](Client& c, const std::string& alias, const std::string& key, const std::string& address) {
                c.import_contact(alias, import_public_key(key), address);
            },
            py::arg("alias"), py::arg("public_key"), py::arg("address") = "")
        .def("remove_contact", &Client::remove_contact)
        .def(
            "send",
            [](Client& c, const std::string& alias, const std::string& subject, const py::bytes& body,
               std::optional<py::bytes> attachment) {
                std::optional<Bytes> att;
                if (attachment) att = from_py(*attachment);
                return c.send(alias, subject, from_py(body), att).hex();
            },
            py::arg("to"), py::arg("subject"), py::arg("body"), py::arg("attachment") = py::none())
        .def("sync", [](Client& c) { return report_dict(c.sync()); })
        .def("acknowledge", [](Client& c, const std::string& id) { return c.acknowledge(HashId::from_hex(id)); })
        .def("rotate_keys", [](Client& c, const std::string& alias) { return c.rotate_keys(alias).hex(); })
        .def_property_readonly("open_attempts", &Client::open_attempts)
        .def("messages", [](const Client& c) {
            py::list out;
            for (const auto& [id, msg] : c.state().mailstore) {
                py::dict d;
                d["id"] = id.hex();
                d["contact"] = msg.contact;
                d["subject"] = msg.header.subject;
                d["body"] = to_py(msg.body);
                d["attachment"] = msg.attachment ? py::object(to_py(*msg.attachment)) : py::none();
                d["kind"] = msg.kind == MessageKind::mail ? "mail" : "rotation";
                d["acked"] = msg.acked;
                out.append(d);
            }
            return out;
        });
}
