#include "warp2/error.hpp"

#include <array>
#include <utility>

namespace warp2 {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 21> kNames{{
    {ErrorCode::entropy_unavailable, "entropy_unavailable"},
    {ErrorCode::invalid_public_key, "invalid_public_key"},
    {ErrorCode::malformed_key, "malformed_key"},
    {ErrorCode::header_too_large, "header_too_large"},
    {ErrorCode::malformed_header, "malformed_header"},
    {ErrorCode::hash_mismatch, "hash_mismatch"},
    {ErrorCode::decrypt_failure, "decrypt_failure"},
    {ErrorCode::oversize_blob, "oversize_blob"},
    {ErrorCode::malformed_envelope, "malformed_envelope"},
    {ErrorCode::rate_limited, "rate_limited"},
    {ErrorCode::not_found, "not_found"},
    {ErrorCode::no_attachment, "no_attachment"},
    {ErrorCode::unknown_contact, "unknown_contact"},
    {ErrorCode::duplicate_alias, "duplicate_alias"},
    {ErrorCode::rotation_pending, "rotation_already_pending"},
    {ErrorCode::not_in_mailstore, "not_in_mailstore"},
    {ErrorCode::network_failure, "network_failure"},
    {ErrorCode::non_positive_parameter, "non_positive_parameter"},
    {ErrorCode::invalid_argument, "invalid_argument"},
    {ErrorCode::storage_failure, "storage_failure"},
    {ErrorCode::bad_passphrase, "bad_passphrase"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
    for (const auto& [c, name] : kNames) {
        if (c == code) return name;
    }
    return "unknown";
}

bool from_string(std::string_view name, ErrorCode& out) {
    for (const auto& [c, n] : kNames) {
        if (n == name) {
            out = c;
            return true;
        }
    }
    return false;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::network_failure:
        case ErrorCode::rate_limited:
            return 2;
        case ErrorCode::entropy_unavailable:
        case ErrorCode::storage_failure:
        case ErrorCode::decrypt_failure:
        case ErrorCode::hash_mismatch:
            return 3;
        default:
            return 1;
    }
}

}  // namespace warp2
