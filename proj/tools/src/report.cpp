#include "report.hpp"

#include <cmath>
#include <cstdio>

namespace irbm::cli {

namespace {

nlohmann::json number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

nlohmann::json number(const std::optional<double>& x) {
  return x ? number(*x) : nlohmann::json();
}

std::string cell(const std::optional<double>& x) {
  if (!x) return "";
  if (std::isnan(*x)) return "nan";
  if (std::isinf(*x)) return *x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", *x);
  return buf;
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [z, count] : r.z_histogram) hist[std::to_string(z)] = count;
  return {
      {"schema", "irbm.eval_report"},
      {"version", kEvalReportVersion},
      {"partition_method", r.partition_method},
      {"log_partition", number(r.log_partition)},
      {"log_partition_std_err", number(r.log_partition_std_err)},
      {"avg_loglik", number(r.avg_loglik)},
      {"avg_loglik_single_order", number(r.avg_loglik_single_order)},
      {"converted_rbm_loglik", number(r.converted_rbm_loglik)},
      {"classification_error", number(r.classification_error)},
      {"avg_condlik", number(r.avg_condlik)},
      {"N_h", r.effective_hidden},
      {"num_hidden", r.num_hidden},
      {"num_examples", r.num_examples},
      {"num_perms", r.num_perms},
      {"z_histogram", hist},
  };
}

nlohmann::json to_json(const InvarianceReport& r) {
  return {
      {"schema", "irbm.invariance_report"},
      {"version", kEvalReportVersion},
      {"regroup_length", r.regroup_length},
      {"num_perms", r.num_perms},
      {"max_log_mass", number(r.max_log_mass)},
      {"mean_log_mass", number(r.mean_log_mass)},
      {"loglik_spread", r.spread_computed ? number(r.loglik_spread) : nlohmann::json()},
  };
}

std::string metrics_header() {
  return "# irbm-metrics v" + std::to_string(kMetricsVersion) +
         "\nepoch,avg_loglik,error,N_h,l_t,M_t,max_log_mass\n";
}

std::string format_metrics_row(const MetricsRow& row) {
  return std::to_string(row.epoch) + "," + cell(row.avg_loglik) + "," + cell(row.error) + "," +
         std::to_string(row.effective_hidden) + "," + std::to_string(row.num_hidden) + "," +
         std::to_string(row.regroup_length) + "," + cell(row.max_log_mass) + "\n";
}

}  // namespace irbm::cli
