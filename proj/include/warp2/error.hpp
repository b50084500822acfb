#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace warp2 {

enum class ErrorCode {
    entropy_unavailable,
    invalid_public_key,
    malformed_key,
    header_too_large,
    malformed_header,
    hash_mismatch,
    decrypt_failure,
    oversize_blob,
    malformed_envelope,
    rate_limited,
    not_found,
    no_attachment,
    unknown_contact,
    duplicate_alias,
    rotation_pending,
    not_in_mailstore,
    network_failure,
    non_positive_parameter,
    invalid_argument,
    storage_failure,
    bad_passphrase,
};

/// Stable snake_case name, used in JSON error bodies and CLI output.
std::string_view to_string(ErrorCode code);

/// Reverse of to_string; returns false for unknown names.
bool from_string(std::string_view name, ErrorCode& out);

/// Process exit code class for the CLI: 1 user error, 2 network, 3 internal.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace warp2
