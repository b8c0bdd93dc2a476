#pragma once

#include <string>

#include "ebard/evidence.hpp"

namespace ebard {

/// Shortest decimal that round-trips to the same double ("inf"/"nan" for non-finite).
std::string format_double(double x);

/// Header "lambda,log_z,branch", plus ",std_error_log" when any point carries one.
std::string curve_to_csv(const EvidenceCurve& curve);

/// {"log_z_inf": ..., "second_order_coeff": ..., "kappa": ..., "sigma_w_sq": ...}
std::string asymptote_to_json(const Asymptote& asymptote);

}  // namespace ebard
