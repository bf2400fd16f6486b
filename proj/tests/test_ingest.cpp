#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>

#include "dermalab/ingest.hpp"

using namespace dermalab;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

const char* kEnvHeader = "unix_ms,noise_db,ir,dust,co2_ppm,temp_c,rh_pct,pressure,wind\n";

std::string env_row(long long t, double co2) {
  return std::to_string(t) + ",40,100,5," + std::to_string(co2) + ",21,45,1013,0.5\n";
}

RawEdaTrace ramp_eda(long long start, int n, double rate) {
  RawEdaTrace t;
  t.start_ms = start;
  t.sample_rate = rate;
  t.samples = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
  return t;
}

EnvTrace flat_env(long long start, long long end, double co2) {
  std::string text = kEnvHeader;
  for (long long t = start; t <= end; t += 1000) text += env_row(t, co2);
  return parse_env_text(text);
}

}  // namespace

TEST_CASE("eda parser") {
  CHECK(code_of([] { parse_eda_text("unix_ms,eda_us\n"); }) == ErrorCode::EmptyFile);
  CHECK(code_of([] { parse_eda_text(""); }) == ErrorCode::EmptyFile);

  const auto t = parse_eda_text("unix_ms,eda_us\n0,1.0\n100,1.1\n");
  CHECK(t.samples.size() == 2);
  CHECK(t.sample_rate == doctest::Approx(10.0));
  CHECK(t.samples[1] == doctest::Approx(1.1));

  CHECK(code_of([] { parse_eda_text("unix_ms,eda_us\n0,1.0\n100,-0.5\n"); }) ==
        ErrorCode::MalformedRow);
  CHECK(code_of([] { parse_eda_text("unix_ms,eda_us\n0,1.0\n100,abc\n"); }) ==
        ErrorCode::MalformedRow);
  CHECK(code_of([] { parse_eda_text("unix_ms,eda_us\n100,1.0\n0,1.0\n"); }) ==
        ErrorCode::NonMonotonicTime);
}

TEST_CASE("env parser") {
  std::string missing = "unix_ms,noise_db,ir,dust,temp_c,rh_pct,pressure,wind\n0,1,2,3,4,5,6,7\n";
  CHECK(code_of([&] { parse_env_text(missing); }) == ErrorCode::MissingChannel);

  std::string three = kEnvHeader;
  for (int i = 0; i < 3; ++i) three += env_row(1000LL * i, 400);
  const auto env = parse_env_text(three);
  CHECK(env.size() == 3);
  CHECK(env.sample_rate == doctest::Approx(1.0));
  CHECK(env.gaps.empty());
  CHECK(env.channels(0, 3) == doctest::Approx(400.0));

  const auto gap = parse_env_text(std::string(kEnvHeader) + env_row(0, 400) + env_row(10000, 400));
  REQUIRE(gap.gaps.size() == 1);
  CHECK(gap.gaps[0].seconds() == doctest::Approx(10.0));

  std::string bad = std::string(kEnvHeader) + "0,40,100,5,nan?,21,45,1013,0.5\n";
  CHECK(code_of([&] { parse_env_text(bad); }) == ErrorCode::MalformedRow);
}

TEST_CASE("env columns may come in any order") {
  const std::string text =
      "unix_ms,wind,pressure,rh_pct,temp_c,co2_ppm,dust,ir,noise_db\n0,8,7,6,5,4,3,2,1\n1000,8,7,6,5,4,3,2,1\n";
  const auto env = parse_env_text(text);
  for (Eigen::Index c = 0; c < 8; ++c) CHECK(env.channels(0, c) == doctest::Approx(c + 1.0));
}

TEST_CASE("stress labels") {
  CHECK(label_stress({"w", 7, 5}) == StressLabel::High);
  CHECK(label_stress({"w", 2, 2}) == StressLabel::Low);
  CHECK(label_stress({"w", 5, 4}) == StressLabel::Unlabeled);
  CHECK(label_stress({"w", 6, 5}) == StressLabel::Unlabeled);
  CHECK(label_stress({"w", 7, 4}) == StressLabel::Unlabeled);
  CHECK(label_stress({"w", 3, 2}) == StressLabel::Unlabeled);

  // Raising either score keeps a high label high and never produces low.
  const auto rank = [](StressLabel s) {
    return s == StressLabel::Low ? 0 : s == StressLabel::Unlabeled ? 1 : 2;
  };
  for (int d = 1; d <= 10; ++d) {
    for (int s = 1; s <= 7; ++s) {
      const int r = rank(label_stress({"w", d, s}));
      if (r == 2) {
        if (d < 10) CHECK(label_stress({"w", d + 1, s}) == StressLabel::High);
        if (s < 7) CHECK(label_stress({"w", d, s + 1}) == StressLabel::High);
      }
      if (r != 0 && d < 10) CHECK(label_stress({"w", d + 1, s}) != StressLabel::Low);
      if (r != 0 && s < 7) CHECK(label_stress({"w", d, s + 1}) != StressLabel::Low);
    }
  }
}

TEST_CASE("window alignment") {
  const long long t0 = 1'000'000;
  const auto eda = ramp_eda(t0, 3000, 10.0);  // 300 s
  const auto env = flat_env(t0, t0 + 300'000, 400.0);

  EventTimeline one({{"e1", t0 + 10'000, t0 + 70'000, EventLabel::Task}});
  const auto w = window_align(eda, env, one);
  REQUIRE(w.size() == 1);
  CHECK(w[0].eda.samples.size() == 600);
  CHECK(w[0].env_mean[3] == doctest::Approx(400.0));
  CHECK(w[0].event.event_id == "e1");
  CHECK(w[0].first_sample == 100);

  EventTimeline outside({{"late", t0 + 290'000, t0 + 400'000, EventLabel::Task}});
  CHECK(code_of([&] { window_align(eda, env, outside); }) == ErrorCode::PartialCoverage);

  EventTimeline adjacent({{"a", t0, t0 + 45'000, EventLabel::Baseline},
                          {"b", t0 + 45'000, t0 + 130'000, EventLabel::StimulusPolluted},
                          {"c", t0 + 130'000, t0 + 200'000, EventLabel::Survey}});
  const auto parts = window_align(eda, env, adjacent);
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    CHECK(p.first_sample == total);
    CHECK(p.eda.samples == eda.samples.segment(total, p.eda.samples.size()));
    total += p.eda.samples.size();
  }
  CHECK(total == 2000);
}

TEST_CASE("timeline validation") {
  CHECK(code_of([] {
          EventTimeline({{"a", 0, 100, EventLabel::Task}, {"b", 50, 150, EventLabel::Task}});
        }) == ErrorCode::InvalidSpec);
  CHECK(code_of([] {
          EventTimeline({{"a", 0, 100, EventLabel::Task}, {"a", 200, 300, EventLabel::Task}});
        }) == ErrorCode::InvalidSpec);
  CHECK(code_of([] { EventTimeline({{"a", 100, 100, EventLabel::Task}}); }) ==
        ErrorCode::InvalidSpec);
  const auto tl = parse_events_text(
      "event_id,start_ms,end_ms,label\nb,200,300,survey\na,0,100,stimulus_genfill\n");
  CHECK(tl.events()[0].event_id == "a");
  CHECK(tl.events()[1].label == EventLabel::Survey);
}

TEST_CASE("serialization round trip to six significant digits") {
  RawEdaTrace eda;
  eda.start_ms = 1'700'000'000'000;
  eda.sample_rate = 10.0;
  eda.samples.resize(50);
  for (int i = 0; i < 50; ++i) eda.samples[i] = 2.0 + std::sin(0.37 * i) * 1.234567891;
  const auto back = parse_eda_text(format_eda_csv(eda));
  CHECK(back.start_ms == eda.start_ms);
  CHECK(back.sample_rate == doctest::Approx(10.0));
  for (int i = 0; i < 50; ++i) {
    CHECK(std::abs(back.samples[i] - eda.samples[i]) <= 5e-6 * std::abs(eda.samples[i]));
  }

  const auto env = flat_env(0, 5000, 412.345678);
  const auto env2 = parse_env_text(format_env_csv(env));
  CHECK(env2.time_ms == env.time_ms);
  CHECK((env2.channels - env.channels).cwiseAbs().maxCoeff() <= 5e-6 * 1013);

  const std::vector<SamResponse> sam = {{"w01", 3, 7, 4}, {"w02", 9, 1, 5}};
  const auto sam2 = parse_sam_text(format_sam_csv(sam));
  REQUIRE(sam2.size() == 2);
  CHECK(sam2[1].valence == 9);
  CHECK(sam2[1].arousal == 1);

  const std::vector<SelfReport> rep = {{"w01", 7, 5}};
  CHECK(parse_reports_text(format_reports_csv(rep))[0].stress == 5);

  EventTimeline tl({{"w01", 10, 20, EventLabel::Prompting}});
  CHECK(format_events_csv(parse_events_text(format_events_csv(tl))) == format_events_csv(tl));
}

TEST_CASE("rating ranges are enforced") {
  CHECK(code_of([] { parse_sam_text("event_id,valence,arousal,dominance\nw,0,5,5\n"); }) ==
        ErrorCode::MalformedRow);
  CHECK(code_of([] { parse_reports_text("window_id,difficulty,stress\nw,11,5\n"); }) ==
        ErrorCode::MalformedRow);
  CHECK(code_of([] { parse_reports_text("window_id,difficulty,stress\nw,5,8\n"); }) ==
        ErrorCode::MalformedRow);
}
