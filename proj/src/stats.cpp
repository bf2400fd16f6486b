#include "dermalab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "dermalab/io.hpp"

namespace dermalab {

Eigen::VectorXd midranks(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x[order[static_cast<std::size_t>(j + 1)]] == x[order[static_cast<std::size_t>(i)]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) r[order[static_cast<std::size_t>(k)]] = rank;
    i = j + 1;
  }
  return r;
}

double chi2_upper_tail(double x, int df) {
  if (!(x >= 0.0)) throw Error(ErrorCode::NegativeStatistic, "chi-square statistic must be >= 0");
  if (df < 1) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be >= 1");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

KruskalResult kruskal_wallis(const std::vector<Eigen::VectorXd>& groups) {
  if (groups.size() < 2) throw Error(ErrorCode::TooFewGroups, "need at least two groups");
  Eigen::Index total = 0;
  for (const auto& g : groups) {
    if (g.size() == 0) throw Error(ErrorCode::EmptyGroup, "a group has no observations");
    total += g.size();
  }
  if (total < 3) throw Error(ErrorCode::TooFewRows, "need at least three observations");

  Eigen::VectorXd pooled(total);
  Eigen::Index at = 0;
  for (const auto& g : groups) {
    pooled.segment(at, g.size()) = g;
    at += g.size();
  }
  if (!pooled.allFinite()) throw Error(ErrorCode::NonFiniteInput, "non-finite observation");
  const Eigen::VectorXd r = midranks(pooled);

  const auto n = static_cast<double>(total);
  const double mean_rank = (n + 1.0) / 2.0;
  double between = 0.0;
  at = 0;
  for (const auto& g : groups) {
    const double d = r.segment(at, g.size()).mean() - mean_rank;
    between += static_cast<double>(g.size()) * d * d;
    at += g.size();
  }

  // Tie term from the sorted pooled sample.
  std::vector<double> sorted(pooled.data(), pooled.data() + total);
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const auto t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  const double correction = 1.0 - ties / (n * n * n - n);

  KruskalResult out;
  out.df = static_cast<int>(groups.size()) - 1;
  if (correction <= 0.0) return out;  // every value tied
  out.h = std::max(0.0, 12.0 / (n * (n + 1.0)) * between / correction);
  out.p = chi2_upper_tail(out.h, out.df);
  return out;
}

double spearman_rho(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "x and y differ in length");
  if (x.size() < 3) throw Error(ErrorCode::LengthMismatch, "need at least three pairs");
  const Eigen::VectorXd rx = midranks(x);
  const Eigen::VectorXd ry = midranks(y);
  const Eigen::ArrayXd dx = rx.array() - rx.mean();
  const Eigen::ArrayXd dy = ry.array() - ry.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw Error(ErrorCode::DegenerateInput, "each input needs two distinct values");
  }
  return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

double eda_feature(const WindowFeatureRow& row, std::size_t index) {
  switch (index) {
    case 0: return row.tvsymp;
    case 1: return row.edasymp;
    case 2: return row.edasymp_n;
    case 3: return row.nsscr;
    default: throw Error(ErrorCode::InvalidArgument, "feature index out of range");
  }
}

namespace {

constexpr std::array<EventLabel, 7> kTableOrder = {
    EventLabel::Baseline,         EventLabel::Prompting,       EventLabel::StimulusPristine,
    EventLabel::StimulusPolluted, EventLabel::StimulusGenfill, EventLabel::Task,
    EventLabel::Survey};

Eigen::VectorXd collect(const std::vector<WindowFeatureRow>& rows,
                        const std::vector<EventLabel>& labels, std::size_t feature) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (std::find(labels.begin(), labels.end(), r.label) != labels.end()) {
      v.push_back(eda_feature(r, feature));
    }
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string join_labels(const std::vector<EventLabel>& labels) {
  std::string s;
  for (const auto l : labels) {
    if (!s.empty()) s += '+';
    s += to_string(l);
  }
  return s;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

EventStats event_summary(const std::vector<WindowFeatureRow>& rows) {
  EventStats out;
  for (const auto label : kTableOrder) {
    const bool present = std::any_of(rows.begin(), rows.end(),
                                     [&](const WindowFeatureRow& r) { return r.label == label; });
    if (!present) continue;
    out.events.push_back(label);
    std::vector<SummaryCell> cells;
    for (std::size_t f = 0; f < kEdaFeatureNames.size(); ++f) {
      const Eigen::VectorXd v = collect(rows, {label}, f);
      SummaryCell c;
      c.n = static_cast<int>(v.size());
      c.mean = v.mean();
      if (c.n > 1) c.std = std::sqrt((v.array() - c.mean).square().sum() / (c.n - 1));
      cells.push_back(c);
    }
    out.cells.push_back(std::move(cells));
  }
  return out;
}

std::vector<Comparison> default_comparisons() {
  using L = EventLabel;
  return {
      {"Rest vs. Affective Stimuli",
       {L::Baseline},
       {L::StimulusPristine, L::StimulusPolluted, L::StimulusGenfill}},
      {"Real Image vs. AI Generated Affective Stimuli", {L::StimulusPolluted}, {L::StimulusGenfill}},
      {"Calming (Pristine) vs. Distressing (Polluted) Stimuli",
       {L::StimulusPristine},
       {L::StimulusPolluted, L::StimulusGenfill}},
  };
}

std::vector<ComparisonResult> run_comparison(const Comparison& comparison,
                                             const std::vector<WindowFeatureRow>& rows) {
  std::vector<ComparisonResult> out;
  for (std::size_t f = 0; f < kEdaFeatureNames.size(); ++f) {
    const Eigen::VectorXd a = collect(rows, comparison.first, f);
    const Eigen::VectorXd b = collect(rows, comparison.second, f);
    if (a.size() == 0 || b.size() == 0) {
      throw Error(ErrorCode::EmptyGroup,
                  "comparison '" + comparison.name + "' has no rows for " +
                      join_labels(a.size() == 0 ? comparison.first : comparison.second));
    }
    ComparisonResult r;
    r.name = comparison.name;
    r.feature = kEdaFeatureNames[f];
    r.result = kruskal_wallis({a, b});
    r.n_first = static_cast<int>(a.size());
    r.n_second = static_cast<int>(b.size());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SpearmanResult> sam_correlations(const std::vector<WindowFeatureRow>& rows) {
  std::vector<const WindowFeatureRow*> with_sam;
  for (const auto& r : rows) {
    if (r.sam) with_sam.push_back(&r);
  }
  std::vector<SpearmanResult> out;
  if (with_sam.size() < 3) return out;
  const auto n = static_cast<Eigen::Index>(with_sam.size());
  for (std::size_t d = 0; d < kSamDomains.size(); ++d) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& sam = *with_sam[static_cast<std::size_t>(i)]->sam;
      y[i] = d == 0 ? sam.valence : d == 1 ? sam.arousal : sam.dominance;
    }
    for (std::size_t f = 0; f < kEdaFeatureNames.size(); ++f) {
      Eigen::VectorXd x(n);
      for (Eigen::Index i = 0; i < n; ++i) x[i] = eda_feature(*with_sam[static_cast<std::size_t>(i)], f);
      try {
        out.push_back({kSamDomains[d], kEdaFeatureNames[f], spearman_rho(x, y), static_cast<int>(n)});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateInput) throw;
      }
    }
  }
  return out;
}

std::string format_stats_report_csv(const EventStats& summary,
                                    const std::vector<ComparisonResult>& comparisons,
                                    const std::vector<SpearmanResult>& correlations) {
  std::string out = "section,group,feature,mean,std,n,display,H,df,p,rho\n";
  for (std::size_t e = 0; e < summary.events.size(); ++e) {
    for (std::size_t f = 0; f < kEdaFeatureNames.size(); ++f) {
      const auto& c = summary.cells[e][f];
      std::string display = io::format_sig(c.mean, 4) + " \xC2\xB1 " + io::format_sig(c.std, 4);
      if (c.single()) display += " (n=1)";
      out += std::string("summary,") + std::string(to_string(summary.events[e])) + ',' +
             kEdaFeatureNames[f] + ',' + io::format_double(c.mean) + ',' +
             io::format_double(c.std) + ',' + std::to_string(c.n) + ',' + display + ",,,,\n";
    }
  }
  for (const auto& c : comparisons) {
    out += "kruskal," + csv_quote(c.name) + ',' + c.feature + ",,," +
           std::to_string(c.n_first + c.n_second) + ",," + io::format_double(c.result.h) + ',' +
           std::to_string(c.result.df) + ',' + io::format_double(c.result.p) + ",\n";
  }
  for (const auto& s : correlations) {
    out += "spearman," + s.domain + ',' + s.feature + ",,," + std::to_string(s.n) + ",,,,," +
           io::format_double(s.rho) + '\n';
  }
  return out;
}

}  // namespace dermalab
