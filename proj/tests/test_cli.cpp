#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "dermalab/features.hpp"
#include "dermalab/io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dermalab;

namespace {

struct Scratch {
  fs::path root = fs::temp_directory_path() / ("dermalab_cli_" + std::to_string(::getpid()));
  Scratch() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

fs::path scratch() {
  static const Scratch s;
  return s.root;
}

struct Run {
  int code = -1;
  std::string err;
};

Run run(const std::string& args, const std::string& env = "") {
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = (env.empty() ? "" : env + " ") + std::string(DERMALAB_BIN) + " " + args +
                          " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = io::read_file(err);
  return r;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) return false;
  for (const auto& n : na) {
    if (fs::is_regular_file(a / n) && slurp(a / n) != slurp(b / n)) return false;
  }
  return true;
}

/// A session already pushed through the pipeline, shared by later cases.
const fs::path& co2_features() {
  static const fs::path out = [] {
    const auto session = scratch() / "co2_60";
    const auto feat = scratch() / "co2_60_feat";
    REQUIRE(run("--seed 3 synth -o " + q(session) + " --windows 60 --relation co2").code == 0);
    REQUIRE(run("--seed 3 pipeline -s " + q(session) + " -o " + q(feat)).code == 0);
    return feat / "features.csv";
  }();
  return out;
}

WindowFeatureRow frow(const std::string& id, EventLabel label, double tv, int arousal) {
  WindowFeatureRow r;
  r.window_id = id;
  r.label = label;
  r.tvsymp = tv;
  r.edasymp = 0.1 * tv;
  r.edasymp_n = 0.3;
  r.nsscr = 2.0 + tv;
  r.env << 40, 100 + tv, 5, 600 + 10 * tv, 22, 45, 1013, 0.5;
  r.sam = SamResponse{id, 10 - arousal, arousal, 5};
  return r;
}

std::vector<std::string> csv_lines(const fs::path& p) {
  const auto text = slurp(p);
  std::vector<std::string> out;
  for (const auto& l : io::split_lines(text)) out.emplace_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  for (const auto& f : io::split_fields(line)) out.emplace_back(f);
  return out;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run("synth").code == 2);
  CHECK(run("").code == 2);
  CHECK(run("frobnicate -o x").code == 2);
  CHECK(run("--help").code == 0);
  CHECK(run("synth -o " + q(scratch() / "bad") + " --relation humidity").code == 2);
  CHECK(run("synth -o " + q(scratch() / "bad") + " --windows abc").code == 2);
}

TEST_CASE("synth writes the session file set deterministically") {
  const auto a = scratch() / "s_a", b = scratch() / "s_b", c = scratch() / "s_c";
  REQUIRE(run("--seed 11 synth -o " + q(a)).code == 0);
  for (const char* f : {"eda.csv", "env.csv", "events.csv", "sam.csv", "reports.csv", "ground_truth.json"}) {
    CHECK(fs::exists(a / f));
  }
  REQUIRE(run("synth -o " + q(b), "DERMALAB_SEED=11").code == 0);
  CHECK(same_tree(a, b));
  REQUIRE(run("synth -o " + q(c), "DERMALAB_SEED=12").code == 0);
  CHECK(slurp(a / "eda.csv") != slurp(c / "eda.csv"));

  // --seed wins over the config file, which wins over the environment.
  const auto cfg = scratch() / "seed.json";
  spit(cfg, R"({"seed": 11, "synth.windows": 8})");
  const auto d = scratch() / "s_d", e = scratch() / "s_e";
  REQUIRE(run("--config " + q(cfg) + " synth -o " + q(d), "DERMALAB_SEED=99").code == 0);
  CHECK(slurp(d / "eda.csv") == slurp(a / "eda.csv"));
  REQUIRE(run("--config " + q(cfg) + " --seed 12 synth -o " + q(e)).code == 0);
  CHECK(slurp(e / "eda.csv") == slurp(c / "eda.csv"));

  spit(cfg, R"({"no.such.key": 1})");
  CHECK(run("--config " + q(cfg) + " synth -o " + q(scratch() / "s_f")).code == 2);
}

TEST_CASE("pipeline") {
  const auto session = scratch() / "p_session";
  REQUIRE(run("--seed 5 synth -o " + q(session)).code == 0);
  const auto out = scratch() / "p_out", again = scratch() / "p_again";
  REQUIRE(run("--seed 5 pipeline -s " + q(session) + " -o " + q(out)).code == 0);
  const auto lines = csv_lines(out / "features.csv");
  CHECK(lines.size() == 9);  // header plus eight stimulus windows
  CHECK(fs::exists(out / "pipeline_log.json"));
  CHECK(fs::exists(out / "decomp_w01.csv"));
  const auto log = nlohmann::json::parse(slurp(out / "pipeline_log.json"));
  CHECK(log.contains("parameters"));

  REQUIRE(run("--seed 5 pipeline -s " + q(session) + " -o " + q(again)).code == 0);
  CHECK(same_tree(out, again));

  const auto with_base = scratch() / "p_base";
  REQUIRE(run("pipeline -s " + q(session) + " -o " + q(with_base) + " --include-baseline true").code == 0);
  CHECK(csv_lines(with_base / "features.csv").size() == 10);

  // A corrupt environment file stops the run before anything is written.
  const auto broken = scratch() / "p_broken";
  fs::copy(session, broken, fs::copy_options::recursive);
  auto env = slurp(broken / "env.csv");
  env.replace(env.find('\n', env.find('\n') + 1) - 3, 3, "abc");
  spit(broken / "env.csv", env);
  const auto bad_out = scratch() / "p_bad_out";
  const auto r = run("pipeline -s " + q(broken) + " -o " + q(bad_out));
  CHECK(r.code == 3);
  CHECK(!fs::exists(bad_out / "features.csv"));
  CHECK(r.err.find("error") != std::string::npos);

  CHECK(run("pipeline -s " + q(scratch() / "nowhere") + " -o " + q(bad_out)).code == 3);
}

TEST_CASE("analyze regression recovers the planted relation") {
  const auto out = scratch() / "a_reg";
  REQUIRE(run("--seed 3 analyze -f " + q(co2_features()) + " -o " + q(out)).code == 0);
  const auto m = nlohmann::json::parse(slurp(out / "metrics.json"));
  for (const char* k : {"task", "target", "r2", "confusion"}) CHECK(m.contains(k));
  CHECK(m["task"] == "regression");
  CHECK(m["target"] == "tvsymp");
  CHECK(m["confusion"].is_null());
  CHECK(m["r2"].get<double>() >= 0.5);
  for (const char* f : {"model.json", "shap_points.csv", "importance.csv"}) CHECK(fs::exists(out / f));

  const auto again = scratch() / "a_reg2";
  REQUIRE(run("--seed 3 analyze -f " + q(co2_features()) + " -o " + q(again)).code == 0);
  CHECK(same_tree(out, again));
}

TEST_CASE("analyze classification") {
  const auto out = scratch() / "a_cls";
  REQUIRE(run("--seed 3 analyze -f " + q(co2_features()) + " -o " + q(out) +
              " --task classification --target arousal --trees 300")
              .code == 0);
  const auto m = nlohmann::json::parse(slurp(out / "metrics.json"));
  for (const char* k : {"task", "target", "accuracy", "confusion"}) CHECK(m.contains(k));
  CHECK(m["confusion"].contains("labels"));
  CHECK(m["confusion"].contains("matrix"));

  std::vector<WindowFeatureRow> rows;
  for (int i = 0; i < 12; ++i) rows.push_back(frow("w" + std::to_string(i), EventLabel::StimulusPolluted, i, 5));
  const auto one = scratch() / "one_class.csv";
  spit(one, format_features_csv(rows));
  const auto r = run("analyze -f " + q(one) + " -o " + q(scratch() / "a_one") +
                     " --task classification --target arousal");
  CHECK(r.code == 4);
  CHECK(!fs::exists(scratch() / "a_one" / "metrics.json"));

  CHECK(run("analyze -f " + q(one) + " -o " + q(scratch() / "a_x") + " --task clustering").code == 2);
}

TEST_CASE("stats") {
  std::vector<WindowFeatureRow> rows;
  for (int i = 0; i < 5; ++i) {
    rows.push_back(frow("p" + std::to_string(i), EventLabel::StimulusPolluted, i, 3 + i));
    rows.push_back(frow("g" + std::to_string(i), EventLabel::StimulusGenfill, i, 3 + i));
    rows.push_back(frow("c" + std::to_string(i), EventLabel::StimulusPristine, 10 + i, 3 + i));
  }
  rows.push_back(frow("baseline", EventLabel::Baseline, 1, 5));
  const auto f = scratch() / "stats_in.csv";
  spit(f, format_features_csv(rows));
  const auto out = scratch() / "st";
  const auto r = run("stats -f " + q(f) + " -o " + q(out));
  REQUIRE(r.code == 0);
  const auto lines = csv_lines(out / "stats_report.csv");
  bool saw_identical = false, saw_spearman = false;
  for (const auto& line : lines) {
    const auto cols = fields(line);
    if (line.rfind("kruskal,", 0) == 0 && line.find("AI Generated") != std::string::npos &&
        line.find(",tvsymp,") != std::string::npos) {
      CHECK(std::stod(cols.at(9)) == doctest::Approx(1.0).epsilon(1e-9));
      saw_identical = true;
    }
    if (line.rfind("spearman,", 0) == 0) saw_spearman = true;
  }
  CHECK(saw_identical);
  CHECK(saw_spearman);

  // Summary rows follow the event table order.
  std::vector<std::string> groups;
  for (const auto& line : lines) {
    if (line.rfind("summary,", 0) != 0) continue;
    const auto g = fields(line).at(1);
    if (groups.empty() || groups.back() != g) groups.push_back(g);
  }
  CHECK(groups == std::vector<std::string>{"baseline", "stimulus_pristine", "stimulus_polluted",
                                           "stimulus_genfill"});

  for (auto& row : rows) row.sam.reset();
  const auto f2 = scratch() / "stats_nosam.csv";
  spit(f2, format_features_csv(rows));
  const auto out2 = scratch() / "st2";
  const auto r2 = run("stats -f " + q(f2) + " -o " + q(out2));
  REQUIRE(r2.code == 0);
  CHECK(r2.err.find("warning") != std::string::npos);
  CHECK(slurp(out2 / "stats_report.csv").find("\nspearman,") == std::string::npos);

  CHECK(run("stats -f " + q(f) + " -o " + q(scratch() / "st3") +
            " --compare 'x=task:baseline'")
            .code == 5);
  CHECK(!fs::exists(scratch() / "st3" / "stats_report.csv"));
}

TEST_CASE("report") {
  const auto analysis = scratch() / "r_an";
  REQUIRE(run("--seed 3 analyze -f " + q(co2_features()) + " -o " + q(analysis)).code == 0);
  const auto st = scratch() / "r_st";
  REQUIRE(run("stats -f " + q(co2_features()) + " -o " + q(st)).code == 0);
  const auto out = scratch() / "r_out", again = scratch() / "r_again";
  const std::string args = "report -a " + q(analysis) + " -f " + q(co2_features()) + " --stats " + q(st);
  REQUIRE(run(args + " -o " + q(out)).code == 0);
  int svgs = 0;
  for (const auto& e : fs::directory_iterator(out)) svgs += e.path().extension() == ".svg";
  CHECK(svgs >= 3);
  CHECK(fs::exists(out / "report.md"));

  // Beeswarm rows are ordered by mean |phi|, recomputed from shap_points.csv.
  std::map<std::string, std::pair<double, int>> acc;
  const auto pts = csv_lines(analysis / "shap_points.csv");
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto f = fields(pts[i]);
    auto& a = acc[f.at(1)];
    a.first += std::abs(std::stod(f.at(2)));
    a.second += 1;
  }
  std::vector<std::pair<double, std::string>> rank;
  for (const auto& [k, v] : acc) rank.emplace_back(-v.first / v.second, k);
  std::stable_sort(rank.begin(), rank.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  const auto svg = slurp(out / "shap_summary.svg");
  const std::regex label(R"(<text class="feature"[^>]*>([^<]*)</text>)");
  std::vector<std::string> drawn;
  for (std::sregex_iterator it(svg.begin(), svg.end(), label), end; it != end; ++it) {
    drawn.push_back((*it)[1]);
  }
  REQUIRE(drawn.size() == rank.size());
  for (std::size_t i = 0; i < rank.size(); ++i) {
    CHECK(acc[drawn[i]].first / acc[drawn[i]].second == doctest::Approx(-rank[i].first));
  }

  REQUIRE(run(args + " -o " + q(again)).code == 0);
  CHECK(same_tree(out, again));

  CHECK(run("report -a " + q(scratch() / "missing") + " -f " + q(co2_features()) + " -o " +
            q(scratch() / "r_bad"))
            .code == 6);
}
