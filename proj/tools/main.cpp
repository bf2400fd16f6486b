#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "commands.hpp"
#include "dermalab/error.hpp"
#include "settings.hpp"

namespace fs = std::filesystem;
using namespace dermalab::cli;

namespace {

/// A flag that overrides one dotted config key when given.
struct Override {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

void add_override(CLI::App* app, std::vector<Override>& list, const std::string& flag,
                  const std::string& key, const std::string& help) {
  list.push_back({key, {}, nullptr});
  list.back().option = app->add_option(flag, list.back().value, help + " [" + key + "]");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dermalab: EDA decomposition, features, forests and statistics"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config;
  app.add_option("--config", config, "JSON file of dotted-key parameters")->check(CLI::ExistingFile);

  // CLI11 writes into these strings; reserve so their addresses stay put.
  std::vector<Override> overrides;
  overrides.reserve(64);
  std::string seed_text;
  app.add_option("--seed", seed_text, "seed; falls back to DERMALAB_SEED");

  auto* synth = app.add_subcommand("synth", "generate a synthetic session");
  std::string synth_out;
  synth->add_option("-o,--out", synth_out, "session directory")->required();
  add_override(synth, overrides, "--windows", "synth.windows", "stimulus windows");
  add_override(synth, overrides, "--relation", "synth.relation", "co2, ir or none");
  add_override(synth, overrides, "--noise", "synth.noise_std", "white noise std in uS");

  auto* pipeline = app.add_subcommand("pipeline", "clean, filter, decompose and extract features");
  std::string session, pipe_out;
  pipeline->add_option("-s,--session", session, "session directory")->required();
  pipeline->add_option("-o,--out", pipe_out, "output directory")->required();
  add_override(pipeline, overrides, "--alpha", "cvxeda.alpha", "driver sparsity weight");
  add_override(pipeline, overrides, "--gamma", "cvxeda.gamma", "spline regularization");
  add_override(pipeline, overrides, "--include-baseline", "pipeline.include_baseline", "true/false");
  add_override(pipeline, overrides, "--psd-overlap", "features.psd_overlap", "fraction or strict");

  auto* analyze = app.add_subcommand("analyze", "random forest with Shapley attributions");
  std::vector<std::string> analyze_features;
  std::string analyze_out;
  analyze->add_option("-f,--features", analyze_features, "features.csv (repeatable)")->required();
  analyze->add_option("-o,--out", analyze_out, "output directory")->required();
  add_override(analyze, overrides, "--task", "analyze.task", "regression or classification");
  add_override(analyze, overrides, "--target", "analyze.target", "feature or SAM domain");
  add_override(analyze, overrides, "--grouping", "analyze.grouping", "pooled or per-file");
  add_override(analyze, overrides, "--trees", "forest.n_trees", "number of trees");
  add_override(analyze, overrides, "--ratio", "split.ratio", "training fraction");

  auto* stats = app.add_subcommand("stats", "event summaries, Kruskal-Wallis and Spearman");
  std::vector<std::string> stats_features;
  std::string stats_out;
  stats->add_option("-f,--features", stats_features, "features.csv (repeatable)")->required();
  stats->add_option("-o,--out", stats_out, "output directory")->required();
  add_override(stats, overrides, "--compare", "stats.comparisons",
               "name=labels:labels[;...], labels joined by +");

  auto* report = app.add_subcommand("report", "plots and report.md");
  std::string report_analysis, report_features, report_stats, report_out;
  report->add_option("-a,--analysis", report_analysis, "analyze output directory")->required();
  report->add_option("-f,--features", report_features, "features.csv")->required();
  report->add_option("--stats", report_stats, "stats output directory");
  report->add_option("-o,--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    Settings settings;
    if (!config.empty()) settings.load_file(config);
    for (const auto& o : overrides) {
      if (o.option->count() > 0) settings.set_text(o.key, o.value);
    }
    if (!seed_text.empty()) settings.set_text("seed", seed_text);

    if (synth->parsed()) {
      run_synth(settings, synth_out);
    } else if (pipeline->parsed()) {
      run_pipeline(settings, session, pipe_out);
    } else if (analyze->parsed()) {
      run_analyze(settings, {analyze_features.begin(), analyze_features.end()}, analyze_out);
    } else if (stats->parsed()) {
      run_stats(settings, {stats_features.begin(), stats_features.end()}, stats_out);
    } else if (report->parsed()) {
      run_report(settings, report_analysis, report_features, report_stats, report_out);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.what() << '\n';
    return f.code();
  } catch (const dermalab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kModeling;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kModeling;
  }
  return kOk;
}
