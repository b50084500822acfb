#include <sqlite3.h>

#include <fstream>

#include "warp2/error.hpp"
#include "warp2/inbox.hpp"

namespace fs = std::filesystem;

namespace warp2 {

namespace {

enum RecordState : int { kLive = 0, kPurged = 1 };

class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail("prepare");
    }
    ~Stmt() { sqlite3_finalize(stmt_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, ByteView b) {
        check(sqlite3_bind_blob(stmt_, i, b.data(), static_cast<int>(b.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Stmt& bind(int i, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }
    Stmt& bind_null(int i) {
        check(sqlite3_bind_null(stmt_, i));
        return *this;
    }

    /// True while rows remain.
    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        fail("step");
    }

    std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    Bytes blob(int col) const {
        auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
        int n = sqlite3_column_bytes(stmt_, col);
        return p ? Bytes(p, p + n) : Bytes{};
    }
    HashId hash(int col) const { return HashId::from_bytes(blob(col)); }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) fail("bind");
    }
    [[noreturn]] void fail(const char* what) {
        throw Error(ErrorCode::storage_failure, std::string("sqlite ") + what + ": " + sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

std::string_view to_string(BlobKind kind) { return kind == BlobKind::body ? "body" : "attachment"; }

InboxStore::InboxStore(const fs::path& data_dir, std::size_t page_limit)
    : dir_(data_dir), page_limit_(page_limit) {
    std::error_code ec;
    fs::create_directories(dir_ / "blobs", ec);
    if (ec) throw Error(ErrorCode::storage_failure, "cannot create " + (dir_ / "blobs").string());
    if (sqlite3_open((dir_ / "inbox.db").c_str(), &db_) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        throw Error(ErrorCode::storage_failure, "cannot open inbox database: " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA journal_mode=WAL");
    exec("PRAGMA synchronous=NORMAL");
    exec(R"(CREATE TABLE IF NOT EXISTS records (
              seq INTEGER PRIMARY KEY AUTOINCREMENT,
              header_id BLOB NOT NULL UNIQUE,
              header_ct BLOB,
              body_id BLOB NOT NULL,
              body_size INTEGER NOT NULL,
              attachment_id BLOB,
              attachment_size INTEGER NOT NULL DEFAULT 0,
              receipt_lock BLOB NOT NULL,
              state INTEGER NOT NULL,
              purged_at INTEGER))");
    exec("CREATE INDEX IF NOT EXISTS records_lock ON records(receipt_lock)");
}

InboxStore::~InboxStore() { sqlite3_close(db_); }

void InboxStore::exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw Error(ErrorCode::storage_failure, "sqlite: " + msg);
    }
}

fs::path InboxStore::blob_path(const HashId& id) const {
    std::string hex = id.hex();
    return dir_ / "blobs" / hex.substr(0, 2) / hex;
}

void InboxStore::write_blob(const HashId& id, ByteView data) {
    fs::path path = blob_path(id);
    if (fs::exists(path)) return;
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) throw Error(ErrorCode::storage_failure, "cannot write blob " + path.string());
    }
    fs::rename(tmp, path);
}

void InboxStore::release_blob(const HashId& id) {
    Stmt q(db_, "SELECT COUNT(*) FROM records WHERE state = 0 AND (body_id = ?1 OR attachment_id = ?1)");
    q.bind(1, id.view());
    q.step();
    if (q.int64(0) == 0) {
        std::error_code ec;
        fs::remove(blob_path(id), ec);
    }
}

UploadResult InboxStore::put(const Envelope& envelope, Timestamp now) {
    (void)now;
    HashId header_id = sha256(envelope.header_ct);
    std::lock_guard lock(mu_);

    {
        Stmt q(db_, "SELECT seq FROM records WHERE header_id = ?1");
        q.bind(1, header_id.view());
        if (q.step()) return UploadResult{header_id, static_cast<std::uint64_t>(q.int64(0))};
    }

    HashId body_id = sha256(envelope.body_ct);
    write_blob(body_id, envelope.body_ct);
    std::optional<HashId> attachment_id;
    if (envelope.attachment_ct) {
        attachment_id = sha256(*envelope.attachment_ct);
        write_blob(*attachment_id, *envelope.attachment_ct);
    }

    Stmt ins(db_, R"(INSERT INTO records
        (header_id, header_ct, body_id, body_size, attachment_id, attachment_size, receipt_lock, state)
        VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, 0))");
    ins.bind(1, header_id.view()).bind(2, envelope.header_ct).bind(3, body_id.view());
    ins.bind(4, static_cast<std::int64_t>(envelope.body_ct.size()));
    if (attachment_id) {
        ins.bind(5, attachment_id->view()).bind(6, static_cast<std::int64_t>(envelope.attachment_ct->size()));
    } else {
        ins.bind_null(5).bind(6, std::int64_t{0});
    }
    ins.bind(7, envelope.receipt_lock.view());
    ins.step();
    return UploadResult{header_id, static_cast<std::uint64_t>(sqlite3_last_insert_rowid(db_))};
}

HeaderPage InboxStore::list(std::uint64_t after, std::size_t limit) {
    if (limit == 0 || limit > page_limit_) limit = page_limit_;
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT seq, header_id, header_ct FROM records WHERE state = 0 AND seq > ?1 ORDER BY seq LIMIT ?2");
    q.bind(1, static_cast<std::int64_t>(after)).bind(2, static_cast<std::int64_t>(limit));
    HeaderPage page;
    page.next_cursor = after;
    while (q.step()) {
        HeaderEntry e{static_cast<std::uint64_t>(q.int64(0)), q.hash(1), q.blob(2)};
        page.next_cursor = e.seq;
        page.entries.push_back(std::move(e));
    }
    return page;
}

Ciphertext InboxStore::blob(BlobKind kind, const HashId& header_id) {
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT state, body_id, attachment_id FROM records WHERE header_id = ?1");
    q.bind(1, header_id.view());
    if (!q.step() || q.int64(0) != kLive) throw Error(ErrorCode::not_found, "no live message " + header_id.hex());
    HashId id;
    if (kind == BlobKind::body) {
        id = q.hash(1);
    } else {
        if (q.is_null(2)) throw Error(ErrorCode::no_attachment, "message has no attachment");
        id = q.hash(2);
    }
    std::ifstream in(blob_path(id), std::ios::binary);
    if (!in) throw Error(ErrorCode::storage_failure, "blob file missing for " + header_id.hex());
    return Ciphertext(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool InboxStore::purge(const ReceiptSecret& receipt, Timestamp now) {
    HashId lock_value = receipt_lock_for(receipt);
    std::lock_guard lock(mu_);

    std::vector<std::pair<std::int64_t, std::pair<HashId, std::optional<HashId>>>> hits;
    {
        Stmt q(db_, "SELECT seq, body_id, attachment_id FROM records WHERE receipt_lock = ?1 AND state = 0");
        q.bind(1, lock_value.view());
        while (q.step()) {
            std::optional<HashId> att;
            if (!q.is_null(2)) att = q.hash(2);
            hits.push_back({q.int64(0), {q.hash(1), att}});
        }
    }
    if (hits.empty()) return false;

    exec("BEGIN");
    try {
        for (const auto& [seq, blobs] : hits) {
            Stmt u(db_, "UPDATE records SET state = 1, header_ct = NULL, purged_at = ?2 WHERE seq = ?1");
            u.bind(1, seq).bind(2, static_cast<std::int64_t>(now.time_since_epoch().count()));
            u.step();
        }
        exec("COMMIT");
    } catch (...) {
        exec("ROLLBACK");
        throw;
    }
    for (const auto& [seq, blobs] : hits) {
        release_blob(blobs.first);
        if (blobs.second) release_blob(*blobs.second);
    }
    return true;
}

InboxStats InboxStore::stats() {
    std::lock_guard lock(mu_);
    Stmt q(db_, R"(SELECT
        COALESCE(SUM(state = 0), 0),
        COALESCE(SUM(state = 1), 0),
        COALESCE(SUM(CASE WHEN state = 0 THEN length(header_ct) + body_size + attachment_size ELSE 0 END), 0)
        FROM records)");
    q.step();
    return InboxStats{static_cast<std::uint64_t>(q.int64(0)), static_cast<std::uint64_t>(q.int64(1)),
                      static_cast<std::uint64_t>(q.int64(2))};
}

std::size_t InboxStore::compact(Timestamp cutoff) {
    std::lock_guard lock(mu_);
    Stmt d(db_, "DELETE FROM records WHERE state = 1 AND purged_at <= ?1");
    d.bind(1, static_cast<std::int64_t>(cutoff.time_since_epoch().count()));
    d.step();
    return static_cast<std::size_t>(sqlite3_changes(db_));
}

}  // namespace warp2
