#include "settings.hpp"

#include <charconv>
#include <cstdlib>
#include <map>

#include "dermalab/io.hpp"

namespace dermalab::cli {
namespace {

struct KeySpec {
  KeyType type;
  nlohmann::json fallback;  // null means "decided by the library"
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    const CleanParams clean;
    const CvxEdaParams cvx;
    const FeatureParams feat;
    std::map<std::string, KeySpec> t;
    t["seed"] = {KeyType::Int, nullptr};
    t["split.ratio"] = {KeyType::Real, 0.7};

    t["pipeline.clean"] = {KeyType::Bool, true};
    t["pipeline.normalize"] = {KeyType::Bool, true};
    t["pipeline.filter"] = {KeyType::Bool, true};
    t["pipeline.decompose"] = {KeyType::Bool, true};
    t["pipeline.include_baseline"] = {KeyType::Bool, false};
    t["pipeline.include_survey"] = {KeyType::Bool, false};
    t["clean.z_threshold"] = {KeyType::Real, clean.z_threshold};
    t["clean.replacement"] = {KeyType::Text, "interpolate"};
    t["lowpass.cutoff"] = {KeyType::Real, 1.5};
    t["lowpass.order"] = {KeyType::Int, 32};

    t["cvxeda.tau0"] = {KeyType::Real, cvx.tau0};
    t["cvxeda.tau1"] = {KeyType::Real, cvx.tau1};
    t["cvxeda.knot_spacing"] = {KeyType::Real, cvx.knot_spacing};
    t["cvxeda.alpha"] = {KeyType::Real, cvx.alpha};
    t["cvxeda.gamma"] = {KeyType::Real, cvx.gamma};
    t["cvxeda.solver_tol"] = {KeyType::Real, cvx.solver_tol};
    t["cvxeda.max_iters"] = {KeyType::Int, cvx.max_iters};

    t["features.scr_min_amplitude"] = {KeyType::Real, feat.scr_min_amplitude};
    t["features.scr_merge_s"] = {KeyType::Real, feat.scr_merge_s};
    t["features.tvsymp_low"] = {KeyType::Real, feat.tvsymp_low};
    t["features.tvsymp_high"] = {KeyType::Real, feat.tvsymp_high};
    t["features.edasymp_low"] = {KeyType::Real, feat.edasymp_low};
    t["features.edasymp_high"] = {KeyType::Real, feat.edasymp_high};
    t["features.psd_window_len"] = {KeyType::Int, feat.psd_window_len};
    t["features.psd_overlap"] = {KeyType::Text, "fraction"};
    t["features.psd_overlap_fraction"] = {KeyType::Real, feat.psd_overlap_fraction};
    t["features.cdm_num_bands"] = {KeyType::Int, feat.cdm_num_bands};
    t["features.cdm_bandwidth"] = {KeyType::Real, feat.cdm_bandwidth};
    t["features.cdm_filter_order"] = {KeyType::Int, feat.cdm_filter_order};
    t["features.spectral_rate"] = {KeyType::Real, feat.spectral_rate};
    t["features.detrend_cutoff"] = {KeyType::Real, feat.detrend_cutoff};
    t["features.detrend_order"] = {KeyType::Int, feat.detrend_order};

    t["forest.n_trees"] = {KeyType::Int, nullptr};
    t["forest.max_depth"] = {KeyType::Int, 0};
    t["forest.min_samples_leaf"] = {KeyType::Int, nullptr};
    t["forest.features_per_split"] = {KeyType::Int, 0};
    t["forest.bootstrap"] = {KeyType::Bool, true};

    t["analyze.task"] = {KeyType::Text, "regression"};
    t["analyze.target"] = {KeyType::Text, nullptr};
    t["analyze.grouping"] = {KeyType::Text, "pooled"};
    t["shap.background_max"] = {KeyType::Int, 100};
    t["shap.class"] = {KeyType::Text, "max"};

    t["stats.comparisons"] = {KeyType::Text, nullptr};

    t["synth.windows"] = {KeyType::Int, 8};
    t["synth.relation"] = {KeyType::Text, "co2"};
    t["synth.sample_rate"] = {KeyType::Real, 10.0};
    t["synth.window_s"] = {KeyType::Real, 120.0};
    t["synth.noise_std"] = {KeyType::Real, 0.005};
    t["synth.scr_rate"] = {KeyType::Real, 4.0};
    return t;
  }();
  return table;
}

const KeySpec& spec_of(const std::string& key) {
  const auto it = key_table().find(key);
  if (it == key_table().end()) throw Failure(kUsage, "unknown parameter '" + key + "'");
  return it->second;
}

nlohmann::json coerce(const std::string& key, const nlohmann::json& v) {
  const auto& spec = spec_of(key);
  switch (spec.type) {
    case KeyType::Real:
      if (v.is_number()) return v.get<double>();
      break;
    case KeyType::Int:
      if (v.is_number_integer()) return v;
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
      }
      break;
    case KeyType::Bool:
      if (v.is_boolean()) return v;
      break;
    case KeyType::Text:
      if (v.is_string()) return v;
      break;
  }
  throw Failure(kUsage, "parameter '" + key + "' has the wrong type");
}

}  // namespace

Settings::Settings() : values_(nlohmann::json::object()) {
  for (const auto& [key, spec] : key_table()) values_[key] = spec.fallback;
}

void Settings::load_file(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Failure(kUsage, "config " + path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Failure(kUsage, e.what());
  }
  if (!doc.is_object()) throw Failure(kUsage, "config must be a JSON object");
  for (const auto& [key, v] : doc.items()) set(key, v);
}

void Settings::set(const std::string& key, const nlohmann::json& value) {
  values_[key] = coerce(key, value);
}

void Settings::set_text(const std::string& key, const std::string& text) {
  const auto& spec = spec_of(key);
  switch (spec.type) {
    case KeyType::Real: {
      double d = 0.0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
      if (ec != std::errc{} || p != text.data() + text.size()) break;
      values_[key] = d;
      return;
    }
    case KeyType::Int: {
      long long i = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
      if (ec != std::errc{} || p != text.data() + text.size()) break;
      values_[key] = i;
      return;
    }
    case KeyType::Bool:
      if (text == "true" || text == "1") {
        values_[key] = true;
        return;
      }
      if (text == "false" || text == "0") {
        values_[key] = false;
        return;
      }
      break;
    case KeyType::Text:
      values_[key] = text;
      return;
  }
  throw Failure(kUsage, "bad value '" + text + "' for " + key);
}

const nlohmann::json& Settings::value(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

bool Settings::has(const std::string& key) const { return !value(key).is_null(); }

double Settings::real(const std::string& key) const { return value(key).get<double>(); }

long long Settings::integer(const std::string& key) const { return value(key).get<long long>(); }

bool Settings::flag(const std::string& key) const { return value(key).get<bool>(); }

std::string Settings::text(const std::string& key) const {
  const auto& v = value(key);
  return v.is_null() ? std::string() : v.get<std::string>();
}

std::uint64_t Settings::seed() const {
  if (has("seed")) return static_cast<std::uint64_t>(integer("seed"));
  if (const char* env = std::getenv("DERMALAB_SEED"); env && *env) {
    std::uint64_t s = 0;
    const std::string_view text(env);
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), s);
    if (ec != std::errc{} || p != text.data() + text.size()) {
      throw Failure(kUsage, "DERMALAB_SEED is not an unsigned integer");
    }
    return s;
  }
  return 0;
}

CleanParams Settings::clean() const {
  CleanParams p;
  p.z_threshold = real("clean.z_threshold");
  const auto mode = text("clean.replacement");
  if (mode == "interpolate") {
    p.replacement = Replacement::Interpolate;
  } else if (mode == "drop") {
    p.replacement = Replacement::Drop;
  } else {
    throw Failure(kUsage, "clean.replacement must be interpolate or drop");
  }
  return p;
}

CvxEdaParams Settings::cvxeda() const {
  CvxEdaParams p;
  p.tau0 = real("cvxeda.tau0");
  p.tau1 = real("cvxeda.tau1");
  p.knot_spacing = real("cvxeda.knot_spacing");
  p.alpha = real("cvxeda.alpha");
  p.gamma = real("cvxeda.gamma");
  p.solver_tol = real("cvxeda.solver_tol");
  p.max_iters = static_cast<int>(integer("cvxeda.max_iters"));
  return p;
}

FeatureParams Settings::features() const {
  FeatureParams p;
  p.scr_min_amplitude = real("features.scr_min_amplitude");
  p.scr_merge_s = real("features.scr_merge_s");
  p.tvsymp_low = real("features.tvsymp_low");
  p.tvsymp_high = real("features.tvsymp_high");
  p.edasymp_low = real("features.edasymp_low");
  p.edasymp_high = real("features.edasymp_high");
  p.psd_window_len = static_cast<int>(integer("features.psd_window_len"));
  const auto overlap = text("features.psd_overlap");
  if (overlap == "fraction") {
    p.psd_overlap = PsdOverlap::Fraction;
  } else if (overlap == "strict") {
    p.psd_overlap = PsdOverlap::Strict;
  } else {
    throw Failure(kUsage, "features.psd_overlap must be fraction or strict");
  }
  p.psd_overlap_fraction = real("features.psd_overlap_fraction");
  p.cdm_num_bands = static_cast<int>(integer("features.cdm_num_bands"));
  p.cdm_bandwidth = real("features.cdm_bandwidth");
  p.cdm_filter_order = static_cast<int>(integer("features.cdm_filter_order"));
  p.spectral_rate = real("features.spectral_rate");
  p.detrend_cutoff = real("features.detrend_cutoff");
  p.detrend_order = static_cast<int>(integer("features.detrend_order"));
  return p;
}

ForestParams Settings::forest(ForestTask task) const {
  ForestParams p = task == ForestTask::Regression ? ForestParams::regression()
                                                  : ForestParams::classification();
  if (has("forest.n_trees")) p.n_trees = static_cast<int>(integer("forest.n_trees"));
  if (has("forest.min_samples_leaf")) {
    p.min_samples_leaf = static_cast<int>(integer("forest.min_samples_leaf"));
  }
  p.max_depth = static_cast<int>(integer("forest.max_depth"));
  p.features_per_split = static_cast<int>(integer("forest.features_per_split"));
  p.bootstrap = flag("forest.bootstrap");
  p.seed = seed();
  return p;
}

nlohmann::ordered_json Settings::dump(const std::vector<std::string>& prefixes) const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [key, v] : values_.items()) {
    for (const auto& prefix : prefixes) {
      if (key.rfind(prefix, 0) == 0) {
        out[key] = v;
        break;
      }
    }
  }
  return out;
}

}  // namespace dermalab::cli
