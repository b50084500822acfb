#include <fcntl.h>
#include <pthread.h>
#include <signal.h>
#include <sys/stat.h>
#include <termios.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "warp2/client.hpp"
#include "warp2/daemon.hpp"
#include "warp2/error.hpp"
#include "warp2/inbox_http.hpp"
#include "warp2/json_views.hpp"
#include "warp2/server_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace warp2;

namespace {

struct Settings {
    std::string server_url = "http://127.0.0.1:8080";
    fs::path data_dir;
    std::string identity = "default";
    bool machine = false;
    int passphrase_fd = -1;
};

struct Flags {
    std::optional<std::string> server, data_dir, identity, config;
    bool json = false;
    int passphrase_fd = -1;
};

fs::path home_subdir(const char* xdg_var, const char* fallback) {
    if (const char* xdg = std::getenv(xdg_var); xdg && *xdg) return fs::path(xdg) / "warp2";
    const char* home = std::getenv("HOME");
    return fs::path(home ? home : ".") / fallback / "warp2";
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

Settings resolve(const Flags& f) {
    Settings s;
    s.data_dir = home_subdir("XDG_DATA_HOME", ".local/share");

    fs::path config_path = f.config ? fs::path(*f.config) : home_subdir("XDG_CONFIG_HOME", ".config") / "config.json";
    if (f.config || fs::exists(config_path)) {
        std::ifstream in(config_path);
        if (!in) throw Error(ErrorCode::invalid_argument, "cannot read config " + config_path.string());
        json c = json::parse(in, nullptr, false);
        if (c.is_discarded() || !c.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
        try {
            if (c.contains("server")) s.server_url = c["server"].get<std::string>();
            if (c.contains("data_dir")) s.data_dir = c["data_dir"].get<std::string>();
            if (c.contains("identity")) s.identity = c["identity"].get<std::string>();
            if (c.contains("output")) s.machine = c["output"].get<std::string>() == "json";
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, std::string("config: ") + e.what());
        }
    }

    if (auto v = env("WARP2_SERVER")) s.server_url = *v;
    if (auto v = env("WARP2_DATA_DIR")) s.data_dir = *v;
    if (auto v = env("WARP2_IDENTITY")) s.identity = *v;
    if (auto v = env("WARP2_OUTPUT")) s.machine = *v == "json";

    if (f.server) s.server_url = *f.server;
    if (f.data_dir) s.data_dir = *f.data_dir;
    if (f.identity) s.identity = *f.identity;
    if (f.json) s.machine = true;
    s.passphrase_fd = f.passphrase_fd;

    if (s.identity.empty() || s.identity.find_first_of("/\\") != std::string::npos || s.identity[0] == '.') {
        throw Error(ErrorCode::invalid_argument, "identity must be a plain name");
    }
    return s;
}

// ---- output ---------------------------------------------------------------

class Output {
public:
    explicit Output(bool machine) : machine_(machine) {}
    bool machine() const { return machine_; }

    void record(const std::string& type, json body) const {
        json line{{"schema", views::kSchemaVersion}, {"type", type}};
        line.update(body);
        std::cout << line.dump() << "\n";
    }
    std::ostream& text() const { return std::cout; }

private:
    bool machine_;
};

std::string short_id(const HashId& id) { return id.hex().substr(0, 12); }

std::string human_bytes(double v) {
    static const char* units[] = {"B", "kB", "MB", "GB", "TB", "PB"};
    int u = 0;
    while (v >= 1000 && u < 5) {
        v /= 1000;
        ++u;
    }
    std::ostringstream os;
    os << std::setprecision(3) << v << " " << units[u];
    return os.str();
}

std::string grouped(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(0) << v;
    std::string s = os.str();
    for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
    return s;
}

// ---- passphrase and state -------------------------------------------------

std::string read_line_fd(int fd) {
    std::string out;
    char c;
    while (::read(fd, &c, 1) == 1 && c != '\n') out.push_back(c);
    return out;
}

std::string prompt_passphrase(const std::string& prompt) {
    int tty = ::open("/dev/tty", O_RDWR | O_CLOEXEC);
    if (tty < 0) {
        throw Error(ErrorCode::invalid_argument,
                    "no terminal for the passphrase prompt; use WARP2_PASSPHRASE or --passphrase-fd");
    }
    (void)!::write(tty, prompt.data(), prompt.size());
    termios old{};
    bool restore = ::tcgetattr(tty, &old) == 0;
    if (restore) {
        termios quiet = old;
        quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
        ::tcsetattr(tty, TCSAFLUSH, &quiet);
    }
    std::string line = read_line_fd(tty);
    if (restore) ::tcsetattr(tty, TCSAFLUSH, &old);
    (void)!::write(tty, "\n", 1);
    ::close(tty);
    return line;
}

std::string passphrase(const Settings& s, bool confirm) {
    if (s.passphrase_fd >= 0) return read_line_fd(s.passphrase_fd);
    if (auto v = env("WARP2_PASSPHRASE")) return *v;
    std::string first = prompt_passphrase("warp2 passphrase: ");
    if (confirm && prompt_passphrase("repeat passphrase: ") != first) {
        throw Error(ErrorCode::invalid_argument, "passphrases do not match");
    }
    return first;
}

void ensure_private_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::storage_failure, "cannot create " + dir.string() + ": " + ec.message());
    fs::permissions(dir, fs::perms::owner_all, fs::perm_options::replace, ec);
    if (ec) throw Error(ErrorCode::storage_failure, "cannot restrict " + dir.string() + ": " + ec.message());
}

fs::path state_path(const Settings& s) { return s.data_dir / (s.identity + ".state"); }

/// An opened identity: state file, server connection and client engine.
struct Session {
    StateFile file;
    HttpInboxClient inbox;
    Client client;

    Session(StateFile f, const std::string& url)
        : file(std::move(f)), inbox(url), client(file.load(), inbox, ClientOptions{}, &file) {}
};

std::unique_ptr<Session> open_session(const Settings& s) {
    fs::path p = state_path(s);
    if (!fs::exists(p)) {
        throw Error(ErrorCode::invalid_argument,
                    "no identity '" + s.identity + "' in " + s.data_dir.string() + "; run `warp2 keygen` first");
    }
    return std::make_unique<Session>(StateFile::open(p, passphrase(s, false)), s.server_url);
}

HashId find_message(const ClientState& st, const std::string& text) {
    if (auto exact = HashId::try_from_hex(text)) return *exact;
    if (text.size() < 6) throw Error(ErrorCode::invalid_argument, "message id prefix too short");
    std::optional<HashId> found;
    for (const auto& [id, m] : st.mailstore) {
        if (id.hex().rfind(text, 0) == 0) {
            if (found) throw Error(ErrorCode::invalid_argument, "ambiguous message id prefix");
            found = id;
        }
    }
    if (!found) throw Error(ErrorCode::not_in_mailstore, "no stored message with id " + text);
    return *found;
}

Bytes read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::invalid_argument, "cannot read " + path);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_private_file(const fs::path& path, const std::string& data) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) throw Error(ErrorCode::storage_failure, "cannot write " + path.string());
    bool ok = ::write(fd, data.data(), data.size()) == static_cast<ssize_t>(data.size());
    ::close(fd);
    if (!ok) throw Error(ErrorCode::storage_failure, "short write to " + path.string());
}

/// Blocks SIGINT/SIGTERM in every thread and calls `stop` when one arrives.
template <class Stop>
std::thread stop_on_signal(Stop stop) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return std::thread([set, stop] {
        int sig = 0;
        sigwait(&set, &sig);
        stop();
    });
}

// ---- commands ---------------------------------------------------------------

void cmd_keygen(const Settings& s, const Output& out, const std::string& address, bool fresh, bool export_only) {
    fs::path p = state_path(s);
    PublicKey key;
    std::string addr;
    if (!fs::exists(p)) {
        ensure_private_dir(s.data_dir);
        auto strength = env("WARP2_KDF") == std::optional<std::string>("minimal") ? StateFile::KdfStrength::minimal
                                                                                    : StateFile::KdfStrength::interactive;
        StateFile file = StateFile::create(p, passphrase(s, true), strength);
        ClientState st = Client::create_state(address.empty() ? s.identity : address, system_entropy());
        file.save(st);
        Session session(std::move(file), s.server_url);
        key = session.client.published_key();
        addr = st.address;
    } else {
        auto session = open_session(s);
        if (!address.empty() && address != session->client.state().address) {
            throw Error(ErrorCode::invalid_argument, "identity already exists with address " +
                                                         session->client.state().address);
        }
        key = fresh ? session->client.new_published_key() : session->client.published_key();
        addr = session->client.state().address;
    }
    if (out.machine()) {
        out.record("identity", {{"identity", s.identity}, {"address", addr}, {"public_key", export_public_key(key)}});
    } else if (export_only) {
        out.text() << export_public_key(key) << "\n";
    } else {
        out.text() << "identity  " << s.identity << "\naddress   " << addr << "\npublic key (share out of band):\n"
                   << export_public_key(key) << "\n";
    }
}

void cmd_contacts_add(const Settings& s, const Output& out, const std::string& alias, const std::string& key_text,
                      const std::string& address) {
    auto session = open_session(s);
    Contact c = session->client.import_contact(alias, import_public_key(key_text), address);
    if (out.machine()) {
        out.record("contact", views::contact(c));
    } else {
        out.text() << "added " << c.alias << " <" << c.address << ">\n";
    }
}

void cmd_contacts_list(const Settings& s, const Output& out) {
    auto session = open_session(s);
    for (const auto& c : session->client.state().keyring.contacts) {
        if (out.machine()) {
            out.record("contact", views::contact(c));
        } else {
            out.text() << std::left << std::setw(16) << c.alias << " " << std::setw(24) << c.address << " "
                       << to_string(c.rotation_state) << "\n";
        }
    }
}

void cmd_contacts_remove(const Settings& s, const Output& out, const std::string& alias) {
    auto session = open_session(s);
    session->client.remove_contact(alias);
    if (out.machine()) {
        out.record("contact_removed", {{"alias", alias}});
    } else {
        out.text() << "removed " << alias << "\n";
    }
}

void cmd_send(const Settings& s, const Output& out, const std::string& to, const std::string& subject,
              const std::optional<std::string>& body_text, const std::optional<std::string>& body_file,
              const std::optional<std::string>& attach) {
    auto session = open_session(s);
    // Validate the recipient before reading stdin.
    if (!session->client.state().keyring.find_contact(to)) {
        throw Error(ErrorCode::unknown_contact, "no contact '" + to + "'");
    }
    Bytes body;
    if (body_text) {
        body = to_bytes(*body_text);
    } else if (body_file) {
        body = read_file_bytes(*body_file);
    } else {
        body = Bytes(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
    }
    std::optional<Bytes> attachment;
    if (attach) attachment = read_file_bytes(*attach);
    HashId id = session->client.send(to, subject, std::move(body), std::move(attachment));
    if (out.machine()) {
        out.record("sent", {{"id", id.hex()}, {"to", to}});
    } else {
        out.text() << "sent " << short_id(id) << " to " << to << "\n";
    }
}

void cmd_sync(const Settings& s, const Output& out) {
    auto session = open_session(s);
    SyncReport r = session->client.sync();
    if (out.machine()) {
        out.record("sync", views::sync_report(r));
        return;
    }
    out.text() << r.headers_seen << " headers, " << r.trial_decryptions << " trial decryptions, "
               << r.new_messages.size() << " new, " << r.delivered.size() << " delivered";
    if (r.quarantined) out.text() << ", " << r.quarantined << " quarantined";
    if (r.rotations_applied) out.text() << ", " << r.rotations_applied << " key rotations";
    out.text() << "\n";
    for (const auto& id : r.new_messages) {
        const StoredMessage& m = session->client.state().mailstore.at(id);
        if (m.kind == MessageKind::mail) {
            out.text() << "  new  " << short_id(id) << "  " << (m.contact.empty() ? m.header.from : m.contact) << "  "
                       << m.header.subject << "\n";
        }
    }
    for (const auto& id : r.delivered) out.text() << "  delivered  " << short_id(id) << "\n";
}

void cmd_list(const Settings& s, const Output& out, bool all) {
    auto session = open_session(s);
    const ClientState& st = session->client.state();
    std::vector<const StoredMessage*> received;
    for (const auto& [id, m] : st.mailstore) {
        if (all || m.kind == MessageKind::mail) received.push_back(&m);
    }
    std::sort(received.begin(), received.end(), [](auto* a, auto* b) { return a->seq < b->seq; });
    if (out.machine()) {
        for (const auto* m : received) out.record("received", views::message_summary(*m));
        for (const auto& o : st.outbox) {
            if (all || o.kind == MessageKind::mail) out.record("sent", views::sent_summary(o));
        }
        return;
    }
    out.text() << "received\n";
    for (const auto* m : received) {
        json j = views::message_summary(*m);
        out.text() << "  " << (m->read ? ' ' : '*') << " " << short_id(m->header_id) << "  "
                   << j["date"].get<std::string>() << "  " << std::left << std::setw(14)
                   << (m->contact.empty() ? m->header.from : m->contact) << " " << j["subject"].get<std::string>()
                   << (m->attachment ? "  [attachment]" : "") << (m->acked ? "  [acked]" : "") << "\n";
    }
    out.text() << "sent\n";
    for (const auto& o : st.outbox) {
        if (!all && o.kind != MessageKind::mail) continue;
        json j = views::sent_summary(o);
        out.text() << "    " << short_id(o.header_id) << "  " << j["date"].get<std::string>() << "  " << std::left
                   << std::setw(14) << o.to_alias << " " << j["subject"].get<std::string>() << "  ["
                   << to_string(o.state) << "]\n";
    }
}

void cmd_read(const Settings& s, const Output& out, const std::string& id_text,
              const std::optional<std::string>& save_attachment) {
    auto session = open_session(s);
    HashId id = find_message(session->client.state(), id_text);
    session->client.mark_read(id);
    const StoredMessage& m = session->client.state().mailstore.at(id);
    if (save_attachment) {
        if (!m.attachment) throw Error(ErrorCode::no_attachment, "message has no attachment");
        std::ofstream f(*save_attachment, std::ios::binary);
        f.write(reinterpret_cast<const char*>(m.attachment->data()), static_cast<std::streamsize>(m.attachment->size()));
        if (!f) throw Error(ErrorCode::storage_failure, "cannot write " + *save_attachment);
    }
    if (out.machine()) {
        out.record("message", views::message_detail(m));
        return;
    }
    out.text() << "From:    " << m.header.from << (m.contact.empty() ? "" : " (" + m.contact + ")") << "\n"
               << "To:      " << m.header.to << "\n"
               << "Date:    " << format_rfc3339(m.header.date) << "\n"
               << "Subject: " << m.header.subject << "\n"
               << "Id:      " << id.hex() << "\n";
    if (m.attachment) out.text() << "Attachment: " << m.attachment->size() << " bytes\n";
    out.text() << "\n" << to_string(m.body);
    if (!m.body.empty() && m.body.back() != '\n') out.text() << "\n";
}

void cmd_ack(const Settings& s, const Output& out, const std::string& id_text) {
    auto session = open_session(s);
    HashId id = find_message(session->client.state(), id_text);
    bool purged = session->client.acknowledge(id);
    if (out.machine()) {
        out.record("ack", {{"id", id.hex()}, {"purged", purged}});
    } else {
        out.text() << (purged ? "acknowledged; server copy purged\n" : "no server copy left to purge\n");
    }
}

void cmd_rotate(const Settings& s, const Output& out, const std::string& alias) {
    auto session = open_session(s);
    HashId id = session->client.rotate_keys(alias);
    if (out.machine()) {
        out.record("rotation_offered", {{"id", id.hex()}, {"alias", alias}});
    } else {
        out.text() << "offered a new key to " << alias << "; completes when their reply arrives\n";
    }
}

void cmd_plan(const Output& out, const LoadParams& p) {
    LoadEstimate e = estimate(p);
    if (out.machine()) {
        out.record("plan", views::estimate(p, e));
        return;
    }
    out.text() << grouped(p.users) << " users, " << p.messages_per_user_per_day << " messages/user/day, "
               << grouped(p.header_ct_size) << "-byte headers, " << p.syncs_per_user_per_day << " syncs/user/day\n"
               << "  new header bytes per day        " << std::setw(20) << grouped(e.daily_new_header_bytes) << "  (~"
               << human_bytes(e.daily_new_header_bytes) << ")\n"
               << "  per-client decrypt per day      " << std::setw(20) << grouped(e.per_client_daily_decrypt_bytes)
               << "  (~" << human_bytes(e.per_client_daily_decrypt_bytes) << ")\n"
               << "  server egress per day           " << std::setw(20) << grouped(e.server_daily_egress_bytes)
               << "  (~" << human_bytes(e.server_daily_egress_bytes) << ")\n"
               << "  trial decryptions/client/day    " << std::setw(20)
               << grouped(e.trial_decryptions_per_client_per_day) << "\n";
}

void cmd_daemon(const Settings& s, const Output& out, const std::string& listen,
                const std::optional<std::string>& static_dir) {
    auto session = open_session(s);
    auto [host, port] = parse_listen(listen);
    std::string token = generate_token();
    DaemonOptions opts{s.server_url, std::nullopt};
    if (static_dir) opts.static_dir = *static_dir;
    LocalDaemon daemon(session->client, token, opts);
    int bound = daemon.bind(host, port);
    fs::path token_file = s.data_dir / (s.identity + ".token");
    write_private_file(token_file, token + "\n");
    if (out.machine()) {
        out.record("daemon", {{"url", "http://" + host + ":" + std::to_string(bound)},
                              {"token_file", token_file.string()}});
    } else {
        out.text() << "local API on http://" << host << ":" << bound << "\nbearer token in " << token_file.string()
                   << "\n";
    }
    std::cout.flush();
    std::thread waiter = stop_on_signal([&daemon] { daemon.stop(); });
    daemon.run();
    waiter.detach();
    fs::remove(token_file);
}

void cmd_serve(const Output& out, const std::optional<std::string>& config_file, const std::optional<std::string>& listen,
               const std::optional<std::string>& inbox_dir) {
    std::optional<fs::path> file;
    if (config_file) file = *config_file;
    ServerConfig cfg = load_server_config(file);
    if (listen) std::tie(cfg.host, cfg.port) = parse_listen(*listen);
    if (inbox_dir) cfg.data_dir = *inbox_dir;

    InboxService service(cfg.data_dir, cfg.limits);
    InboxHttpServer server(service);
    int bound = server.bind(cfg.host, cfg.port);
    if (out.machine()) {
        out.record("serve", {{"url", "http://" + cfg.host + ":" + std::to_string(bound)},
                             {"inbox_dir", cfg.data_dir.string()}});
    } else {
        out.text() << "inbox server on http://" << cfg.host << ":" << bound << " storing in " << cfg.data_dir.string()
                   << "\n";
    }
    std::cout.flush();
    std::thread waiter = stop_on_signal([&server] { server.stop(); });
    server.run();
    waiter.detach();
}

void report_error(bool machine, const std::string& code, const std::string& message) {
    if (machine) {
        std::cerr << json{{"schema", views::kSchemaVersion}, {"type", "error"}, {"error", code}, {"message", message}}.dump()
                  << "\n";
    } else {
        std::cerr << "warp2: " << code << ": " << message << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"warp2: mail with encrypted headers over a shared inbox"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "warp2 0.1.0");

    Flags flags;
    app.add_option("--server", flags.server, "Inbox server URL (env WARP2_SERVER)")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--data-dir", flags.data_dir, "Directory holding identity state (env WARP2_DATA_DIR)")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--identity", flags.identity, "Identity name (env WARP2_IDENTITY)")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", flags.config, "Config file (JSON)")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_flag("--json", flags.json, "Machine-readable output, one JSON object per line (env WARP2_OUTPUT=json)");
    app.add_option("--passphrase-fd", flags.passphrase_fd, "Read the passphrase from this file descriptor");

    auto* keygen = app.add_subcommand("keygen", "Create the identity, or show or replace its public key");
    std::string address;
    bool fresh = false;
    keygen->add_option("--address", address, "Address peers see in the from field (default: identity name)");
    keygen->add_flag("--new", fresh, "Replace the published key");
    bool export_only = false;
    keygen->add_flag("--export", export_only, "Print only the public key text (for contacts add @FILE)");

    auto* contacts = app.add_subcommand("contacts", "Manage contacts");
    contacts->require_subcommand(1);
    auto* c_add = contacts->add_subcommand("add", "Import a contact's public key");
    std::string alias, key_text, contact_address;
    c_add->add_option("alias", alias)->required();
    c_add->add_option("public_key", key_text, "Base64 public key, or @FILE")->required();
    c_add->add_option("--address", contact_address, "Contact's address (default: alias)");
    auto* c_list = contacts->add_subcommand("list", "List contacts");
    auto* c_remove = contacts->add_subcommand("remove", "Remove a contact");
    c_remove->add_option("alias", alias)->required();

    auto* send = app.add_subcommand("send", "Send a message");
    std::string to, subject;
    std::optional<std::string> body_text, body_file, attach;
    send->add_option("--to", to, "Contact alias")->required();
    send->add_option("--subject", subject, "Subject line")->required();
    auto* body_opt = send->add_option("--body", body_text, "Body text (default: read stdin)");
    send->add_option("--body-file", body_file, "Read the body from a file")->excludes(body_opt);
    send->add_option("--attach", attach, "Attach a file");

    auto* sync = app.add_subcommand("sync", "Fetch new mail and delivery receipts");

    auto* list = app.add_subcommand("list", "List stored messages");
    bool all = false;
    list->add_flag("--all", all, "Include key rotation messages");

    auto* read = app.add_subcommand("read", "Show a message");
    std::string id_text;
    std::optional<std::string> save_attachment;
    read->add_option("id", id_text, "Message id or unique prefix")->required();
    read->add_option("--save-attachment", save_attachment, "Write the attachment to this file");

    auto* ack = app.add_subcommand("ack", "Acknowledge a message so the server purges it");
    ack->add_option("id", id_text, "Message id or unique prefix")->required();

    auto* rotate = app.add_subcommand("rotate", "Replace the keys used with a contact");
    rotate->add_option("alias", alias)->required();

    auto* plan = app.add_subcommand("plan", "Estimate shared inbox load");
    LoadParams params{1000, 10, static_cast<double>(kHeaderCiphertextSize), 1};
    plan->add_option("--users", params.users, "Users on the server")->capture_default_str();
    plan->add_option("--rate", params.messages_per_user_per_day, "Messages per user per day")->capture_default_str();
    plan->add_option("--header-size", params.header_ct_size, "Header ciphertext bytes")->capture_default_str();
    plan->add_option("--syncs", params.syncs_per_user_per_day, "Syncs per user per day")->capture_default_str();

    auto* daemon = app.add_subcommand("daemon", "Serve the local API (and web UI) on loopback");
    std::string daemon_listen = "127.0.0.1:8377";
    std::optional<std::string> static_dir;
    daemon->add_option("--listen", daemon_listen, "Loopback host:port")->capture_default_str();
    daemon->add_option("--static", static_dir, "Directory of web UI assets to serve at /");

    auto* serve = app.add_subcommand("serve", "Run an inbox server");
    std::optional<std::string> serve_listen, inbox_dir, server_config;
    serve->add_option("--listen", serve_listen, "host:port (env WARP2_LISTEN)");
    serve->add_option("--inbox-dir", inbox_dir, "Storage directory (env WARP2_INBOX_DIR)");
    serve->add_option("--server-config", server_config, "Server config file (JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    bool machine = flags.json || env("WARP2_OUTPUT") == std::optional<std::string>("json");
    try {
        Settings s = resolve(flags);
        machine = s.machine;
        Output out(s.machine);

        if (keygen->parsed()) cmd_keygen(s, out, address, fresh, export_only);
        else if (c_add->parsed()) {
            if (!key_text.empty() && key_text[0] == '@') {
                key_text = to_string(read_file_bytes(key_text.substr(1)));
                while (!key_text.empty() && std::isspace(static_cast<unsigned char>(key_text.back()))) key_text.pop_back();
            }
            cmd_contacts_add(s, out, alias, key_text, contact_address);
        } else if (c_list->parsed()) cmd_contacts_list(s, out);
        else if (c_remove->parsed()) cmd_contacts_remove(s, out, alias);
        else if (send->parsed()) cmd_send(s, out, to, subject, body_text, body_file, attach);
        else if (sync->parsed()) cmd_sync(s, out);
        else if (list->parsed()) cmd_list(s, out, all);
        else if (read->parsed()) cmd_read(s, out, id_text, save_attachment);
        else if (ack->parsed()) cmd_ack(s, out, id_text);
        else if (rotate->parsed()) cmd_rotate(s, out, alias);
        else if (plan->parsed()) cmd_plan(out, params);
        else if (daemon->parsed()) cmd_daemon(s, out, daemon_listen, static_dir);
        else if (serve->parsed()) cmd_serve(out, server_config, serve_listen, inbox_dir);
        return 0;
    } catch (const Error& e) {
        report_error(machine, std::string(to_string(e.code())), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        report_error(machine, "internal", e.what());
        return 3;
    }
}
