#include "ebard/io.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>

namespace ebard {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string curve_to_csv(const EvidenceCurve& curve) {
  bool with_se = false;
  for (const auto& p : curve.points) with_se = with_se || p.std_error_log.has_value();
  std::string out = with_se ? "lambda,log_z,branch,std_error_log\n" : "lambda,log_z,branch\n";
  for (const auto& p : curve.points) {
    out += format_double(p.lambda);
    out += ',';
    out += format_double(p.log_z);
    out += ',';
    out += to_string(p.branch);
    if (with_se) {
      out += ',';
      if (p.std_error_log) out += format_double(*p.std_error_log);
    }
    out += '\n';
  }
  return out;
}

std::string asymptote_to_json(const Asymptote& a) {
  nlohmann::ordered_json j;
  j["log_z_inf"] = a.log_z_inf;
  j["second_order_coeff"] = a.second_order_coeff;
  j["kappa"] = a.kappa;
  j["sigma_w_sq"] = a.sigma_w_sq;
  return j.dump();
}

}  // namespace ebard
