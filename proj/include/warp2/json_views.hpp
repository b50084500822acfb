#pragma once

// JSON renderings shared by the local daemon API and the CLI's
// machine-readable output.

#include <json.hpp>

#include "warp2/client.hpp"
#include "warp2/load_model.hpp"

namespace warp2::views {

inline constexpr int kSchemaVersion = 1;

nlohmann::json message_summary(const StoredMessage& m);
/// Summary plus body (text when valid UTF-8) and base64 payloads.
nlohmann::json message_detail(const StoredMessage& m);
nlohmann::json sent_summary(const OutboxEntry& o);
nlohmann::json contact(const Contact& c);
nlohmann::json sync_report(const SyncReport& r);
nlohmann::json estimate(const LoadParams& p, const LoadEstimate& e);
nlohmann::json stats(const InboxStats& s);

}  // namespace warp2::views
