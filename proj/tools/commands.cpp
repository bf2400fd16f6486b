#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <iostream>
#include <map>
#include <set>

#include "dermalab/cvxeda.hpp"
#include "dermalab/dsp.hpp"
#include "dermalab/features.hpp"
#include "dermalab/forest.hpp"
#include "dermalab/ingest.hpp"
#include "dermalab/io.hpp"
#include "dermalab/stats.hpp"
#include "dermalab/synth.hpp"
#include "plots.hpp"

namespace fs = std::filesystem;

namespace dermalab::cli {
namespace {

/// Files written by one command; removed again if the command fails.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void prepare() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Failure(kUsage, "cannot create " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, std::string_view contents) {
    io::write_file_atomic(dir_ / name, contents);
    written_.push_back(dir_ / name);
  }

  void rollback() noexcept {
    for (const auto& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : written_) out.push_back(p.filename().string());
    return out;
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

bool ingest_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedRow:
    case ErrorCode::NonMonotonicTime:
    case ErrorCode::EmptyFile:
    case ErrorCode::MissingChannel:
    case ErrorCode::PartialCoverage:
    case ErrorCode::EmptyWindow:
    case ErrorCode::TooShort:
    case ErrorCode::NonFiniteInput:
    case ErrorCode::RateMismatch:
    case ErrorCode::InvalidSpec:
    case ErrorCode::Io:
      return true;
    default:
      return false;
  }
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

nlohmann::ordered_json parameters(const Settings& s, const std::vector<std::string>& prefixes) {
  auto j = s.dump(prefixes);
  j["seed"] = s.seed();
  return j;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

std::vector<WindowFeatureRow> load_features(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "missing " + path.string());
  return parse_features_csv(io::read_file(path));
}

}  // namespace

// synth ---------------------------------------------------------------------

void run_synth(const Settings& s, const fs::path& out) {
  SessionSpec spec;
  spec.n_windows = static_cast<int>(s.integer("synth.windows"));
  const auto relation = parse_relation(s.text("synth.relation"));
  if (!relation) throw Failure(kUsage, "relation must be co2, ir or none");
  spec.relation = *relation;
  spec.seed = s.seed();
  spec.sample_rate = s.real("synth.sample_rate");
  spec.window_s = s.real("synth.window_s");
  spec.noise_std = s.real("synth.noise_std");
  spec.scr_rate = s.real("synth.scr_rate");
  SessionBundle bundle;
  try {
    bundle = gen_session(spec);
  } catch (const Error& e) {
    throw Failure(kUsage, e.what());
  }
  Outputs o(out);
  o.prepare();
  try {
    write_session(bundle, out);
  } catch (const Error& e) {
    throw Failure(kIngest, e.what());
  }
}

// pipeline ------------------------------------------------------------------

void run_pipeline(const Settings& s, const fs::path& session, const fs::path& out) {
  const auto clean_params = s.clean();
  if (clean_params.replacement == Replacement::Drop && s.flag("pipeline.clean")) {
    throw Failure(kUsage, "the pipeline keeps the time grid; use clean.replacement=interpolate");
  }
  const auto cvx = s.cvxeda();
  const auto feat = s.features();
  try {
    cvx.validate();
    feat.validate();
  } catch (const Error& e) {
    throw Failure(kUsage, e.what());
  }

  Outputs o(out);
  o.prepare();
  int stage_code = kIngest;
  try {
    const RawEdaTrace raw = parse_eda_csv(session / "eda.csv");
    const EnvTrace env = parse_env_csv(session / "env.csv");
    const EventTimeline timeline = parse_events_csv(session / "events.csv");
    std::map<std::string, SamResponse> sam;
    std::map<std::string, SelfReport> reports;
    const bool have_sam = fs::exists(session / "sam.csv");
    const bool have_reports = fs::exists(session / "reports.csv");
    if (have_sam) {
      for (auto& r : parse_sam_csv(session / "sam.csv")) sam[r.event_id] = r;
    } else {
      warn("no sam.csv; SAM columns left empty");
    }
    if (have_reports) {
      for (auto& r : parse_reports_csv(session / "reports.csv")) reports[r.window_id] = r;
    }

    nlohmann::ordered_json log;
    log["format"] = "dermalab.pipeline_log";
    log["version"] = 1;
    log["parameters"] = parameters(s, {"pipeline.", "clean.", "lowpass.", "cvxeda.", "features."});
    log["input"] = {{"eda_samples", raw.samples.size()},
                    {"eda_sample_rate", raw.sample_rate},
                    {"env_samples", env.size()},
                    {"env_gaps", env.gaps.size()},
                    {"events", timeline.size()},
                    {"sam", have_sam},
                    {"reports", have_reports}};

    RawEdaTrace trace = raw;
    if (s.flag("pipeline.clean")) {
      const auto cleaned = zscore_clean(trace.samples, clean_params);
      trace.samples = cleaned.values;
      log["clean"] = {{"outliers", cleaned.outliers.size()}};
    }
    if (s.flag("pipeline.normalize")) {
      trace.samples = standardize(trace.samples);
      log["normalize"] = "zscore";
    }
    if (s.flag("pipeline.filter")) {
      const double cutoff = s.real("lowpass.cutoff");
      if (cutoff < trace.sample_rate / 2.0) {
        const auto spec = design_butterworth(FilterKind::Lowpass, cutoff,
                                             static_cast<int>(s.integer("lowpass.order")),
                                             trace.sample_rate);
        trace.samples = zero_phase_filter<double>(spec, trace.samples);
        log["lowpass"] = nlohmann::ordered_json::parse(to_json(spec));
      } else {
        log["lowpass"] = "skipped: cutoff at or above Nyquist";
        warn("lowpass skipped, cutoff is not below Nyquist");
      }
    }

    const auto windows = window_align(trace, env, timeline);
    std::vector<WindowFeatureRow> rows;
    auto& jw = log["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : windows) {
      const auto label = w.event.label;
      if (label == EventLabel::Baseline && !s.flag("pipeline.include_baseline")) continue;
      if (label == EventLabel::Survey && !s.flag("pipeline.include_survey")) continue;

      stage_code = kModeling;
      Decomposition d;
      nlohmann::ordered_json entry = {{"event_id", w.event.event_id},
                                      {"label", to_string(label)},
                                      {"samples", w.eda.samples.size()}};
      if (s.flag("pipeline.decompose")) {
        d = decompose(w.eda.samples, w.eda.sample_rate, cvx);
        entry["decomposition"] = nlohmann::ordered_json::parse(decomposition_summary_json(d));
        o.write("decomp_" + w.event.event_id + ".csv",
                decomposition_csv(d, static_cast<double>(w.eda.start_ms), w.eda.sample_rate));
      } else {
        const auto n = w.eda.samples.size();
        d.tonic = w.eda.samples;
        d.phasic = d.driver = d.residual = Eigen::VectorXd::Zero(n);
      }
      stage_code = kIngest;
      auto row = extract_window_features(w, d, feat);
      if (auto it = sam.find(row.window_id); it != sam.end()) row.sam = it->second;
      if (auto it = reports.find(row.window_id); it != reports.end()) {
        row.stress = label_stress(it->second);
      }
      entry["features"] = {{"tvsymp", row.tvsymp},
                           {"edasymp", row.edasymp},
                           {"edasymp_n", row.edasymp_n},
                           {"nsscr", row.nsscr}};
      jw.push_back(std::move(entry));
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorCode::EmptyWindow, "no event selected for features");

    o.write("features.csv", format_features_csv(rows));
    auto names = o.names();
    names.push_back("pipeline_log.json");
    log["outputs"] = names;
    o.write("pipeline_log.json", dump(log));
  } catch (const Error& e) {
    o.rollback();
    const bool ingest = stage_code == kIngest || ingest_code(e.code());
    throw Failure(ingest ? kIngest : kModeling, e.what());
  } catch (...) {
    o.rollback();
    throw;
  }
}

// analyze -------------------------------------------------------------------

namespace {

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> features;
};

std::optional<double> target_value(const WindowFeatureRow& r, const std::string& target) {
  if (target == "tvsymp") return r.tvsymp;
  if (target == "edasymp") return r.edasymp;
  if (target == "edasymp_n") return r.edasymp_n;
  if (target == "nsscr") return r.nsscr;
  if (target == "valence" || target == "arousal" || target == "dominance") {
    if (!r.sam) return std::nullopt;
    return target == "valence" ? r.sam->valence : target == "arousal" ? r.sam->arousal : r.sam->dominance;
  }
  if (target == "stress") {
    if (!r.stress || *r.stress == StressLabel::Unlabeled) return std::nullopt;
    return *r.stress == StressLabel::High ? 1.0 : 0.0;
  }
  throw Failure(kUsage, "unknown target '" + target + "'");
}

Dataset build_dataset(const std::vector<WindowFeatureRow>& rows, ForestTask task,
                      const std::string& target) {
  Dataset d;
  std::vector<const WindowFeatureRow*> kept;
  std::vector<double> y;
  for (const auto& r : rows) {
    if (auto v = target_value(r, target)) {
      kept.push_back(&r);
      y.push_back(*v);
    }
  }
  if (task == ForestTask::Regression) {
    for (auto n : kEnvChannelNames) d.features.emplace_back(n);
  } else {
    d.features = {"tvsymp", "edasymp", "nsscr"};
  }
  d.x.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(d.features.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (task == ForestTask::Regression) {
      d.x.row(row) = kept[i]->env.transpose();
    } else {
      d.x.row(row) << kept[i]->tvsymp, kept[i]->edasymp, kept[i]->nsscr;
    }
  }
  d.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return d;
}

void analyze_group(const Settings& s, const std::vector<WindowFeatureRow>& rows, Outputs& o) {
  const auto task_name = s.text("analyze.task");
  ForestTask task;
  if (task_name == "regression") {
    task = ForestTask::Regression;
  } else if (task_name == "classification") {
    task = ForestTask::Classification;
  } else {
    throw Failure(kUsage, "task must be regression or classification");
  }
  std::string target = s.text("analyze.target");
  if (target.empty()) target = task == ForestTask::Regression ? "tvsymp" : "arousal";
  const bool class_target = target == "valence" || target == "arousal" || target == "dominance" ||
                            target == "stress";
  if ((task == ForestTask::Classification) != class_target) {
    throw Failure(kUsage, "target '" + target + "' does not fit task " + task_name);
  }
  const double ratio = s.real("split.ratio");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Failure(kUsage, "split.ratio must lie in (0, 1)");
  const auto params = s.forest(task);

  const Dataset d = build_dataset(rows, task, target);
  if (d.y.size() < 2) throw Error(ErrorCode::TooFewRows, "fewer than two rows carry " + target);
  const auto split = train_test_split(d.x.rows(), ratio, params.seed);
  const Eigen::MatrixXd xtr = take_rows(d.x, split.train), xte = take_rows(d.x, split.test);
  const Eigen::VectorXd ytr = take_rows(d.y, split.train), yte = take_rows(d.y, split.test);
  const RandomForest model = fit(xtr, ytr, task, params, d.features);

  nlohmann::ordered_json metrics;
  metrics["task"] = task_name;
  metrics["target"] = target;
  metrics["features"] = d.features;
  metrics["n_train"] = split.train.size();
  metrics["n_test"] = split.test.size();
  metrics["parameters"] = parameters(s, {"split.", "forest.", "shap."});
  metrics["parameters"]["forest.n_trees"] = params.n_trees;
  metrics["parameters"]["forest.min_samples_leaf"] = params.min_samples_leaf;
  metrics["parameters"]["forest.features_per_split"] =
      params.resolved_features(task, static_cast<int>(d.features.size()));
  int class_index = 0;
  if (task == ForestTask::Regression) {
    metrics["r2"] = evaluate_regression(model, xte, yte);
    metrics["confusion"] = nullptr;
  } else {
    const auto rep = evaluate_classification(model, xte, yte);
    metrics["accuracy"] = rep.accuracy;
    nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < rep.confusion.rows(); ++r) {
      std::vector<int> row;
      for (Eigen::Index c = 0; c < rep.confusion.cols(); ++c) row.push_back(rep.confusion(r, c));
      matrix.push_back(row);
    }
    metrics["confusion"] = {{"labels", rep.labels}, {"matrix", matrix}};
    const auto which = s.text("shap.class");
    if (which == "max") {
      class_index = static_cast<int>(model.classes.size()) - 1;
    } else {
      double label = 0.0;
      auto [p, ec] = std::from_chars(which.data(), which.data() + which.size(), label);
      const auto it = std::find(model.classes.begin(), model.classes.end(), label);
      if (ec != std::errc{} || p != which.data() + which.size() || it == model.classes.end()) {
        throw Failure(kUsage, "shap.class '" + which + "' is not a trained class");
      }
      class_index = static_cast<int>(it - model.classes.begin());
    }
    metrics["shap_class"] = model.classes[static_cast<std::size_t>(class_index)];
  }

  const auto bg_rows = std::min<Eigen::Index>(xtr.rows(), s.integer("shap.background_max"));
  if (bg_rows < 1) throw Failure(kUsage, "shap.background_max must be >= 1");
  const Eigen::MatrixXd background = xtr.topRows(bg_rows);
  const auto points = shap_summary_points(model, d.x, background, class_index);
  metrics["shap_background_rows"] = bg_rows;

  const Eigen::VectorXd imp = impurity_importance(model);
  std::string importance = "feature,importance\n";
  for (std::size_t f = 0; f < d.features.size(); ++f) {
    importance += d.features[f] + ',' + io::format_double(imp[static_cast<Eigen::Index>(f)]) + '\n';
  }

  o.write("model.json", model.to_json());
  o.write("metrics.json", dump(metrics));
  o.write("shap_points.csv", format_shap_points_csv(model, points));
  o.write("importance.csv", importance);
}

}  // namespace

void run_analyze(const Settings& s, const std::vector<fs::path>& features, const fs::path& out) {
  const auto grouping = s.text("analyze.grouping");
  if (grouping != "pooled" && grouping != "per-file") {
    throw Failure(kUsage, "grouping must be pooled or per-file");
  }
  std::vector<std::vector<WindowFeatureRow>> groups;
  try {
    for (const auto& p : features) groups.push_back(load_features(p));
  } catch (const Error& e) {
    throw Failure(kIngest, e.what());
  }
  if (grouping == "pooled" && groups.size() > 1) {
    std::vector<WindowFeatureRow> all;
    for (auto& g : groups) all.insert(all.end(), g.begin(), g.end());
    groups = {std::move(all)};
  }

  std::vector<Outputs> outputs;
  try {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      fs::path dir = out;
      if (grouping == "per-file") {
        dir /= "g" + std::to_string(g + 1) + "_" + features[g].stem().string();
      }
      outputs.emplace_back(dir);
      outputs.back().prepare();
      analyze_group(s, groups[g], outputs.back());
    }
  } catch (const Error& e) {
    for (auto& o : outputs) o.rollback();
    throw Failure(kModeling, e.what());
  } catch (...) {
    for (auto& o : outputs) o.rollback();
    throw;
  }
}

// stats ---------------------------------------------------------------------

namespace {

std::vector<EventLabel> parse_labels(std::string_view text) {
  std::vector<EventLabel> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('+', start), text.size());
    const auto label = parse_event_label(text.substr(start, end - start));
    if (!label) throw Failure(kUsage, "unknown event label '" + std::string(text.substr(start, end - start)) + "'");
    out.push_back(*label);
    start = end + 1;
  }
  return out;
}

/// "name=a+b:c;name2=..." with labels joined by '+'.
std::vector<Comparison> parse_comparisons(const std::string& spec) {
  std::vector<Comparison> out;
  std::size_t start = 0;
  while (start < spec.size()) {
    const auto end = std::min(spec.find(';', start), spec.size());
    const std::string item = spec.substr(start, end - start);
    start = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    const auto colon = item.find(':', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || colon == std::string::npos) {
      throw Failure(kUsage, "comparison '" + item + "' is not name=labels:labels");
    }
    out.push_back({item.substr(0, eq), parse_labels(std::string_view(item).substr(eq + 1, colon - eq - 1)),
                   parse_labels(std::string_view(item).substr(colon + 1))});
  }
  if (out.empty()) throw Failure(kUsage, "no comparison given");
  return out;
}

}  // namespace

void run_stats(const Settings& s, const std::vector<fs::path>& features, const fs::path& out) {
  std::vector<WindowFeatureRow> rows;
  try {
    for (const auto& p : features) {
      auto part = load_features(p);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  } catch (const Error& e) {
    throw Failure(kIngest, e.what());
  }
  if (rows.empty()) throw Failure(kStats, "features file has no rows");

  const bool custom = s.has("stats.comparisons");
  const auto comparisons = custom ? parse_comparisons(s.text("stats.comparisons")) : default_comparisons();

  Outputs o(out);
  o.prepare();
  try {
    const auto summary = event_summary(rows);
    std::vector<ComparisonResult> results;
    nlohmann::ordered_json log;
    log["format"] = "dermalab.stats_log";
    log["version"] = 1;
    log["parameters"] = parameters(s, {"stats."});
    log["rows"] = rows.size();
    auto& skipped = log["skipped_comparisons"] = nlohmann::ordered_json::array();
    for (const auto& c : comparisons) {
      try {
        auto r = run_comparison(c, rows);
        results.insert(results.end(), r.begin(), r.end());
      } catch (const Error& e) {
        if (custom || e.code() != ErrorCode::EmptyGroup) throw;
        warn(std::string(e.what()) + "; comparison skipped");
        skipped.push_back(c.name);
      }
    }
    const auto corr = sam_correlations(rows);
    const bool any_sam = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.sam.has_value(); });
    if (!any_sam) warn("no SAM ratings in the features; Spearman section omitted");
    log["spearman"] = any_sam ? "included" : "omitted: no SAM ratings";
    o.write("stats_report.csv", format_stats_report_csv(summary, results, corr));
    o.write("stats_log.json", dump(log));
  } catch (const Error& e) {
    o.rollback();
    throw Failure(kStats, e.what());
  } catch (...) {
    o.rollback();
    throw;
  }
}

// report --------------------------------------------------------------------

namespace {

struct ShapCsv {
  std::vector<std::string> features;
  std::vector<SwarmPoint> points;
};

ShapCsv read_shap_points(const fs::path& path) {
  const auto text = io::read_file(path);
  const auto lines = io::split_lines(text);
  if (lines.empty() || lines[0] != "row,feature,shap,value,percentile") {
    throw Error(ErrorCode::MalformedRow, "unexpected shap_points.csv header");
  }
  ShapCsv out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_fields(lines[i]);
    if (f.size() != 5) throw Error(ErrorCode::MalformedRow, "shap_points.csv line " + std::to_string(i + 1));
    const std::string name(f[1]);
    auto it = index.find(name);
    if (it == index.end()) {
      it = index.emplace(name, out.features.size()).first;
      out.features.push_back(name);
    }
    SwarmPoint p;
    p.feature = it->second;
    std::from_chars(f[2].data(), f[2].data() + f[2].size(), p.shap);
    std::from_chars(f[4].data(), f[4].data() + f[4].size(), p.percentile);
    out.points.push_back(p);
  }
  return out;
}

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> csv_fields(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace

void run_report(const Settings& s, const fs::path& analysis, const fs::path& features,
                const fs::path& stats, const fs::path& out) {
  (void)s;
  Outputs o(out);
  try {
    for (const auto* name : {"shap_points.csv", "metrics.json", "importance.csv"}) {
      if (!fs::exists(analysis / name)) throw Error(ErrorCode::Io, "missing " + (analysis / name).string());
    }
    if (!stats.empty() && !fs::exists(stats / "stats_report.csv")) {
      throw Error(ErrorCode::Io, "missing " + (stats / "stats_report.csv").string());
    }
    const auto rows = load_features(features);
    const auto metrics = nlohmann::json::parse(io::read_file(analysis / "metrics.json"));
    const auto shap = read_shap_points(analysis / "shap_points.csv");
    o.prepare();

    const std::string target = metrics.at("target").get<std::string>();
    std::string md = "# dermalab report\n\n";
    md += "## Model\n\n";
    md += "- task: " + metrics.at("task").get<std::string>() + "\n";
    md += "- target: " + target + "\n";
    md += "- rows: " + std::to_string(metrics.at("n_train").get<int>()) + " train, " +
          std::to_string(metrics.at("n_test").get<int>()) + " test\n";
    if (metrics.contains("r2")) md += "- held-out R^2: " + io::format_sig(metrics["r2"].get<double>(), 4) + "\n";
    if (metrics.contains("accuracy")) {
      md += "- held-out accuracy: " + io::format_sig(metrics["accuracy"].get<double>(), 4) + "\n";
    }

    o.write("shap_summary.svg", beeswarm_svg(shap.features, shap.points, "Shapley summary: " + target));
    const auto order = impact_order(shap.features.size(), shap.points);
    md += "\n## Shapley summary\n\nFeatures from most to least impactful (mean |phi|):\n\n";
    for (std::size_t i = 0; i < order.size(); ++i) {
      md += std::to_string(i + 1) + ". " + shap.features[order[i]] + "\n";
    }
    md += "\n![Shapley summary](shap_summary.svg)\n";

    md += "\n## Impurity importance\n\n| feature | importance |\n|---|---|\n";
    const auto imp_lines = io::split_lines(io::read_file(analysis / "importance.csv"));
    for (std::size_t i = 1; i < imp_lines.size(); ++i) {
      const auto f = io::split_fields(imp_lines[i]);
      if (f.size() != 2) continue;
      double v = 0.0;
      std::from_chars(f[1].data(), f[1].data() + f[1].size(), v);
      md += "| " + std::string(f[0]) + " | " + io::format_sig(v, 4) + " |\n";
    }

    if (metrics.contains("confusion") && metrics["confusion"].is_object()) {
      std::vector<std::string> labels;
      for (const auto& l : metrics["confusion"]["labels"]) labels.push_back(io::format_double(l.get<double>()));
      const auto& m = metrics["confusion"]["matrix"];
      Eigen::MatrixXi counts(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(labels.size()));
      for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        for (Eigen::Index c = 0; c < counts.cols(); ++c) {
          counts(r, c) = m.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<int>();
        }
      }
      o.write("confusion.svg", confusion_svg(labels, counts, "Confusion matrix: " + target));
      md += "\n## Confusion matrix\n\n![Confusion matrix](confusion.svg)\n";
    }

    md += "\n## EDA features per event\n\n";
    const auto summary = event_summary(rows);
    for (std::size_t f = 0; f < kEdaFeatureNames.size(); ++f) {
      std::vector<BoxGroup> groups;
      for (const auto label : summary.events) {
        BoxGroup g;
        g.label = std::string(to_string(label));
        for (const auto& r : rows) {
          if (r.label == label) g.values.push_back(eda_feature(r, f));
        }
        groups.push_back(std::move(g));
      }
      const std::string name = std::string("box_") + kEdaFeatureNames[f] + ".svg";
      o.write(name, box_plot_svg(std::string(kEdaFeatureNames[f]) + " by event", groups));
      md += "![" + std::string(kEdaFeatureNames[f]) + "](" + name + ")\n";
    }
    md += "\n| event | tvsymp | edasymp | edasymp_n | nsscr |\n|---|---|---|---|---|\n";
    for (std::size_t e = 0; e < summary.events.size(); ++e) {
      md += "| " + std::string(to_string(summary.events[e]));
      for (const auto& c : summary.cells[e]) {
        md += " | " + io::format_sig(c.mean, 4) + " \xC2\xB1 " + io::format_sig(c.std, 4);
        if (c.single()) md += " (n=1)";
      }
      md += " |\n";
    }

    if (!stats.empty()) {
      md += "\n## Kruskal-Wallis comparisons\n\n| comparison | feature | H | p |\n|---|---|---|---|\n";
      const auto lines = io::split_lines(io::read_file(stats / "stats_report.csv"));
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].rfind("kruskal,", 0) != 0) continue;
        const auto f = csv_fields(lines[i]);
        if (f.size() != 11) continue;
        md += "| " + f[1] + " | " + f[2] + " | " + f[7] + " | " + f[9] + " |\n";
      }
    }
    o.write("report.md", md);
  } catch (const Error& e) {
    o.rollback();
    throw Failure(kReport, e.what());
  } catch (const nlohmann::json::exception& e) {
    o.rollback();
    throw Failure(kReport, std::string("metrics.json: ") + e.what());
  } catch (...) {
    o.rollback();
    throw;
  }
}

}  // namespace dermalab::cli
