#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "dermalab/stats.hpp"
#include "oracles.hpp"

using namespace dermalab;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

WindowFeatureRow row(const std::string& id, EventLabel label, double tv, double eda, double ns,
                     std::optional<int> arousal = std::nullopt) {
  WindowFeatureRow r;
  r.window_id = id;
  r.label = label;
  r.tvsymp = tv;
  r.edasymp = eda;
  r.edasymp_n = eda / 2;
  r.nsscr = ns;
  if (arousal) r.sam = SamResponse{id, 10 - *arousal, *arousal, 5};
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("midranks") {
  const Eigen::VectorXd r = midranks(vec({10, 20, 20, 5, 30}));
  CHECK(r == vec({2, 3.5, 3.5, 1, 5}));
}

TEST_CASE("kruskal-wallis") {
  const auto k = kruskal_wallis({vec({1, 2, 3}), vec({4, 5, 6}), vec({7, 8, 9})});
  // 12/(9*10) * 3*(2^2 + 5^2 + 8^2) - 3*10 = 7.2
  CHECK(k.h == doctest::Approx(7.2).epsilon(1e-12));
  CHECK(k.df == 2);
  CHECK(k.p == doctest::Approx(std::exp(-3.6)).epsilon(1e-12));
  CHECK(std::abs(k.p - 0.02732) <= 1e-4);

  const auto same = kruskal_wallis({vec({1, 2, 3}), vec({1, 2, 3})});
  CHECK(std::abs(same.h) <= 1e-12);
  CHECK(same.p == doctest::Approx(1.0));

  const auto tied = kruskal_wallis({vec({4, 4}), vec({4, 4, 4})});
  CHECK(tied.h == 0.0);
  CHECK(tied.p == 1.0);

  // Rank statistics ignore monotone transforms.
  const std::vector<Eigen::VectorXd> g = {vec({0.3, 1.7, 2.2, 0.9}), vec({3.1, 0.4, 5.5}),
                                          vec({2.8, 4.4, 6.1, 7.0})};
  std::vector<Eigen::VectorXd> t;
  for (const auto& x : g) t.push_back(x.array().exp() * 3.0 + 1.0);
  CHECK(std::abs(kruskal_wallis(g).h - kruskal_wallis(t).h) <= 1e-12);

  // Hand-computed tie correction: ranks 1.5,1.5,3 | 4,5.5,5.5
  const auto tc = kruskal_wallis({vec({1, 1, 2}), vec({3, 4, 4})});
  const double h0 = 12.0 / 42.0 * (36.0 / 3 + 225.0 / 3) - 21.0;
  const double c = 1.0 - (6.0 + 6.0) / (216.0 - 6.0);
  CHECK(tc.h == doctest::Approx(h0 / c).epsilon(1e-12));

  CHECK(code_of([] { kruskal_wallis({vec({1, 2}), Eigen::VectorXd(0)}); }) == ErrorCode::EmptyGroup);
  CHECK(code_of([] { kruskal_wallis({vec({1, 2, 3})}); }) == ErrorCode::TooFewGroups);
}

TEST_CASE("spearman") {
  CHECK(spearman_rho(vec({1, 2, 3, 4}), vec({10, 20, 30, 45})) == 1.0);
  CHECK(spearman_rho(vec({1, 2, 3}), vec({3, 1, 2})) == -0.5);
  CHECK(spearman_rho(vec({1, 2, 3}), vec({3, 2, 1})) == -1.0);
  CHECK(code_of([] { spearman_rho(vec({1, 2, 3}), vec({1, 2})); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { spearman_rho(vec({1, 1, 1}), vec({1, 2, 3})); }) == ErrorCode::DegenerateInput);
}

TEST_CASE("chi-square upper tail") {
  CHECK(chi2_upper_tail(0.0, 3) == 1.0);
  for (double x : {0.1, 1.0, 7.2, 20.0, 60.0}) {
    CHECK(std::abs(chi2_upper_tail(x, 2) - std::exp(-x / 2)) <= 1e-12);
  }
  CHECK(chi2_upper_tail(3.841, 1) == doctest::Approx(0.05).epsilon(1e-3));
  for (int df : {1, 2, 3, 5}) {
    for (double x : {0.5, 3.841, 9.0}) {
      CHECK(chi2_upper_tail(x, df) == doctest::Approx(oracle::chi2_tail_simpson(x, df)).epsilon(1e-7));
    }
  }
  double prev = 1.0;
  for (double x = 0.25; x < 40; x += 0.25) {
    const double q = chi2_upper_tail(x, 4);
    CHECK(q < prev);
    prev = q;
  }
  CHECK(code_of([] { chi2_upper_tail(-1.0, 2); }) == ErrorCode::NegativeStatistic);
}

TEST_CASE("event summary") {
  std::vector<WindowFeatureRow> rows = {
      row("w1", EventLabel::StimulusPolluted, 1, 0.1, 3),
      row("w2", EventLabel::StimulusPolluted, 2, 0.2, 4),
      row("w3", EventLabel::StimulusPolluted, 3, 0.3, 5),
      row("b", EventLabel::Baseline, 5, 0.5, 1),
      row("g", EventLabel::StimulusGenfill, 4, 0.4, 2),
  };
  const auto s = event_summary(rows);
  REQUIRE(s.events.size() == 3);
  CHECK(s.events[0] == EventLabel::Baseline);
  CHECK(s.events[1] == EventLabel::StimulusPolluted);
  CHECK(s.events[2] == EventLabel::StimulusGenfill);
  const auto& polluted = s.cells[1][0];
  CHECK(polluted.mean == 2.0);
  CHECK(polluted.std == 1.0);
  CHECK(polluted.n == 3);
  CHECK(s.cells[0][0].single());
  CHECK(s.cells[0][0].std == 0.0);

  const auto csv = format_stats_report_csv(s, {}, {});
  CHECK(csv.rfind("section,group,feature,mean,std,n,display,H,df,p,rho\n", 0) == 0);
  CHECK(csv.find("(n=1)") != std::string::npos);
}

TEST_CASE("comparisons and correlations") {
  std::vector<WindowFeatureRow> rows;
  for (int i = 0; i < 4; ++i) {
    rows.push_back(row("p" + std::to_string(i), EventLabel::StimulusPristine, 1 + i, 0.1 * i, i, 2 + i));
    rows.push_back(row("q" + std::to_string(i), EventLabel::StimulusPolluted, 5 + i, 0.2 * i, i, 5 + i));
  }
  rows.push_back(row("base", EventLabel::Baseline, 0.5, 0.05, 0));

  const auto cmp = default_comparisons();
  REQUIRE(cmp.size() == 3);
  const auto rest = run_comparison(cmp[0], rows);
  REQUIRE(rest.size() == kEdaFeatureNames.size());
  CHECK(rest[0].n_first == 1);
  CHECK(rest[0].n_second == 8);

  // Polluted vs. generative-filled has no genfill rows here.
  CHECK(code_of([&] { run_comparison(cmp[1], rows); }) == ErrorCode::EmptyGroup);

  const auto calm = run_comparison(cmp[2], rows);
  CHECK(calm[0].feature == "tvsymp");
  CHECK(calm[0].result.p < 0.05);

  const auto corr = sam_correlations(rows);
  bool found = false;
  for (const auto& c : corr) {
    if (c.domain == "arousal" && c.feature == "tvsymp") {
      CHECK(c.n == 8);
      CHECK(c.rho > 0.9);
      found = true;
    }
  }
  CHECK(found);

  std::vector<WindowFeatureRow> no_sam = {row("a", EventLabel::Task, 1, 1, 1),
                                          row("b", EventLabel::Task, 2, 2, 2),
                                          row("c", EventLabel::Task, 3, 3, 3)};
  CHECK(sam_correlations(no_sam).empty());
}

TEST_CASE("kruskal p-values are uniform under the null") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  std::vector<double> pool(30);
  for (auto& v : pool) v = g(rng);
  std::vector<double> ps;
  for (int rep = 0; rep < 1000; ++rep) {
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<Eigen::VectorXd> groups(3, Eigen::VectorXd(10));
    for (int i = 0; i < 30; ++i) groups[i / 10][i % 10] = pool[i];
    ps.push_back(kruskal_wallis(groups).p);
  }
  std::sort(ps.begin(), ps.end());
  double d = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    d = std::max({d, (i + 1.0) / ps.size() - ps[i], ps[i] - static_cast<double>(i) / ps.size()});
  }
  // Critical value of the one-sample KS statistic at alpha = 0.01.
  CHECK(d < 1.628 / std::sqrt(1000.0));
}
