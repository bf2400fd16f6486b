#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dermalab::cli {

struct SwarmPoint {
  std::size_t feature = 0;
  double shap = 0.0;
  double percentile = 0.0;
};

/// Feature indices ordered by mean |shap|, largest first; ties keep index order.
std::vector<std::size_t> impact_order(std::size_t n_features, const std::vector<SwarmPoint>& points);

/// One row per feature, most impactful on top; colour runs blue (low
/// feature value) to red (high).
std::string beeswarm_svg(const std::vector<std::string>& features,
                         const std::vector<SwarmPoint>& points, const std::string& title);

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};

std::string box_plot_svg(const std::string& title, const std::vector<BoxGroup>& groups);

/// Rows are true labels, columns predictions.
std::string confusion_svg(const std::vector<std::string>& labels, const Eigen::MatrixXi& counts,
                          const std::string& title);

}  // namespace dermalab::cli
