#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dermalab/features.hpp"

namespace dermalab {

struct KruskalResult {
  double h = 0.0;
  int df = 0;
  double p = 1.0;
};

/// Midranks (1-based) of x; tied values share the mean of their ranks.
Eigen::VectorXd midranks(const Eigen::VectorXd& x);

/// Tie-corrected Kruskal-Wallis H with its chi-square p-value.
KruskalResult kruskal_wallis(const std::vector<Eigen::VectorXd>& groups);

/// Pearson correlation of the midranks.
double spearman_rho(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Q(df/2, x/2), the chi-square upper tail.
double chi2_upper_tail(double x, int df);

inline constexpr std::array<const char*, 4> kEdaFeatureNames = {"tvsymp", "edasymp", "edasymp_n",
                                                                 "nsscr"};
inline constexpr std::array<const char*, 3> kSamDomains = {"valence", "arousal", "dominance"};

double eda_feature(const WindowFeatureRow& row, std::size_t index);

struct SummaryCell {
  double mean = 0.0;
  double std = 0.0;  // sample std, 0 when n == 1
  int n = 0;

  bool single() const { return n == 1; }
};

struct EventStats {
  std::vector<EventLabel> events;           // rows, in table order
  std::vector<std::vector<SummaryCell>> cells;  // [event][feature]
};

/// Event rows ordered baseline, prompting, pristine, polluted, genfill,
/// then any other label present.
EventStats event_summary(const std::vector<WindowFeatureRow>& rows);

struct Comparison {
  std::string name;
  std::vector<EventLabel> first;
  std::vector<EventLabel> second;
};

/// Rest vs. affective stimuli, polluted vs. generative-filled, pristine vs.
/// polluted (both kinds).
std::vector<Comparison> default_comparisons();

struct ComparisonResult {
  std::string name;
  std::string feature;
  KruskalResult result;
  int n_first = 0;
  int n_second = 0;
};

/// Throws EmptyGroup when either side of the comparison has no rows.
std::vector<ComparisonResult> run_comparison(const Comparison& comparison,
                                             const std::vector<WindowFeatureRow>& rows);

struct SpearmanResult {
  std::string domain;
  std::string feature;
  double rho = 0.0;
  int n = 0;
};

/// Every EDA feature against every SAM domain over rows carrying SAM data.
/// Pairs with fewer than three rows or constant inputs are skipped.
std::vector<SpearmanResult> sam_correlations(const std::vector<WindowFeatureRow>& rows);

/// `stats_report.csv`: section,group,feature,mean,std,n,display,H,df,p,rho.
std::string format_stats_report_csv(const EventStats& summary,
                                    const std::vector<ComparisonResult>& comparisons,
                                    const std::vector<SpearmanResult>& correlations);

}  // namespace dermalab
