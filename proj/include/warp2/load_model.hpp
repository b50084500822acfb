#pragma once

namespace warp2 {

/// Inputs for daily shared-inbox load. Rates may be fractional.
struct LoadParams {
    double users = 0;
    double messages_per_user_per_day = 0;
    double header_ct_size = 0;
    double syncs_per_user_per_day = 0;
};

struct LoadEstimate {
    /// users * messages/user/day * header size
    double daily_new_header_bytes = 0;
    /// Every client trial-decrypts every new header once.
    double per_client_daily_decrypt_bytes = 0;
    /// Upper bound: every sync of every user downloads the day's headers.
    double server_daily_egress_bytes = 0;
    double trial_decryptions_per_client_per_day = 0;
};

/// Throws Error(non_positive_parameter) unless every input is finite and > 0.
LoadEstimate estimate(const LoadParams& params);

}  // namespace warp2
