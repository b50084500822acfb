#include "warp2/load_model.hpp"

#include <cmath>
#include <string>

#include "warp2/error.hpp"

namespace warp2 {

LoadEstimate estimate(const LoadParams& p) {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v <= 0) {
            throw Error(ErrorCode::non_positive_parameter, std::string(name) + " must be positive");
        }
    };
    check(p.users, "users");
    check(p.messages_per_user_per_day, "messages_per_user_per_day");
    check(p.header_ct_size, "header_ct_size");
    check(p.syncs_per_user_per_day, "syncs_per_user_per_day");

    LoadEstimate e;
    e.trial_decryptions_per_client_per_day = p.users * p.messages_per_user_per_day;
    e.daily_new_header_bytes = e.trial_decryptions_per_client_per_day * p.header_ct_size;
    e.per_client_daily_decrypt_bytes = e.daily_new_header_bytes;
    e.server_daily_egress_bytes = e.per_client_daily_decrypt_bytes * p.users * p.syncs_per_user_per_day;
    return e;
}

}  // namespace warp2
