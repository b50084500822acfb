#include "http_util.hpp"

using nlohmann::json;

namespace warp2::http {

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::malformed_envelope:
        case ErrorCode::invalid_argument:
        case ErrorCode::malformed_key:
        case ErrorCode::header_too_large:
        case ErrorCode::invalid_public_key:
        case ErrorCode::non_positive_parameter:
            return 400;
        case ErrorCode::not_found:
        case ErrorCode::no_attachment:
        case ErrorCode::not_in_mailstore:
        case ErrorCode::unknown_contact:
            return 404;
        case ErrorCode::duplicate_alias:
        case ErrorCode::rotation_pending:
            return 409;
        case ErrorCode::oversize_blob:
            return 413;
        case ErrorCode::rate_limited:
            return 429;
        case ErrorCode::network_failure:
            return 502;
        default:
            return 500;
    }
}

void reply(httplib::Response& res, const json& body, int status) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    reply(res, json{{"error", std::string(to_string(code))}, {"message", message}}, status_for(code));
}

Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
        try {
            inner(req, res);
        } catch (const Error& e) {
            reply_error(res, e.code(), e.what());
        } catch (const std::exception& e) {
            reply_error(res, ErrorCode::storage_failure, e.what());
        }
    };
}

json parse_json_body(const httplib::Request& req, ErrorCode on_error) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw Error(on_error, "request body must be a JSON object");
    return body;
}

json call(const std::string& base_url, const std::string& method, const std::string& path, const json& body,
          const std::string& bearer) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(60);
    cli.set_write_timeout(60);
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

    httplib::Result res;
    if (method == "GET") {
        res = cli.Get(path, headers);
    } else {
        std::string payload = body.is_null() ? std::string("{}") : body.dump();
        res = cli.Post(path, headers, payload, "application/json");
    }
    if (!res) {
        throw Error(ErrorCode::network_failure,
                    method + " " + base_url + path + " failed: " + httplib::to_string(res.error()));
    }
    json decoded = json::parse(res->body, nullptr, false);
    if (res->status >= 200 && res->status < 300) {
        if (decoded.is_discarded()) throw Error(ErrorCode::network_failure, "response is not JSON");
        return decoded;
    }
    ErrorCode code = ErrorCode::network_failure;
    std::string message = "HTTP " + std::to_string(res->status);
    if (!decoded.is_discarded() && decoded.is_object()) {
        if (decoded.contains("error") && decoded["error"].is_string()) {
            if (!from_string(decoded["error"].get<std::string>(), code)) code = ErrorCode::network_failure;
        }
        if (decoded.contains("message") && decoded["message"].is_string()) message = decoded["message"].get<std::string>();
    }
    throw Error(code, message);
}

}  // namespace warp2::http
