#pragma once

#include <functional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "warp2/error.hpp"

namespace warp2::http {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

int status_for(ErrorCode code);

void reply(httplib::Response& res, const nlohmann::json& body, int status = 200);
void reply_error(httplib::Response& res, ErrorCode code, const std::string& message);

/// Wraps a handler so warp2::Error and stray exceptions become JSON errors.
Handler guarded(Handler inner);

/// Throws Error(on_error) if the body is not a JSON object.
nlohmann::json parse_json_body(const httplib::Request& req, ErrorCode on_error);

/// Performs a request against base_url and returns the decoded JSON body.
/// Transport failures raise network_failure; error bodies are mapped back
/// to their ErrorCode.
nlohmann::json call(const std::string& base_url, const std::string& method, const std::string& path,
                    const nlohmann::json& body = nullptr, const std::string& bearer = {});

}  // namespace warp2::http
