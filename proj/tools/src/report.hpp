#pragma once

#include <optional>
#include <string>

#include "irbm/evaluation.hpp"
#include "json.hpp"

namespace irbm::cli {

inline constexpr int kEvalReportVersion = 1;
inline constexpr int kMetricsVersion = 1;

/// Versioned JSON document. Non-finite numbers become null.
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const InvarianceReport& report);

/// First two lines of the metrics CSV.
std::string metrics_header();

struct MetricsRow {
  std::size_t epoch = 0;
  std::optional<double> avg_loglik;
  std::optional<double> error;
  std::size_t effective_hidden = 0;
  std::size_t num_hidden = 0;
  std::size_t regroup_length = 0;
  std::optional<double> max_log_mass;
};

std::string format_metrics_row(const MetricsRow& row);

}  // namespace irbm::cli
