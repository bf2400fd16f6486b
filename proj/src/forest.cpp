#include "dermalab/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dermalab/io.hpp"
#include "json.hpp"

namespace dermalab {

ForestParams ForestParams::regression() {
  ForestParams p;
  p.n_trees = 500;
  p.min_samples_leaf = 5;
  return p;
}

ForestParams ForestParams::classification() {
  ForestParams p;
  p.n_trees = 2000;
  p.min_samples_leaf = 1;
  return p;
}

int ForestParams::resolved_features(ForestTask task, int p) const {
  if (features_per_split > 0) return features_per_split;
  const double k = task == ForestTask::Classification ? std::sqrt(static_cast<double>(p))
                                                      : static_cast<double>(p) / 3.0;
  return std::clamp(static_cast<int>(std::ceil(k - 1e-12)), 1, p);
}

int Tree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return i;
}

std::uint64_t tree_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % bound;
}

SplitIndices train_test_split(Eigen::Index n, double ratio, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorCode::TooFewRows, "need at least two rows to split");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "split ratio must lie in (0, 1)");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_below(rng, i + 1)]);
  }
  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[idx[i]];
  return out;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double decrease = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& cls,
              int n_classes, ForestTask task, const ForestParams& params, int mtry,
              std::uint64_t seed)
      : x_(x), y_(y), cls_(cls), n_classes_(n_classes), task_(task), params_(params),
        mtry_(mtry), rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  Tree build(std::vector<int> samples) {
    tree_.nodes.clear();
    grow(std::move(samples), 0);
    return std::move(tree_);
  }

 private:
  double impurity(const std::vector<int>& s) const {
    const auto n = static_cast<double>(s.size());
    if (task_ == ForestTask::Regression) {
      double sum = 0.0;
      for (int i : s) sum += y_[i];
      const double mean = sum / n;
      double sse = 0.0;
      for (int i : s) sse += (y_[i] - mean) * (y_[i] - mean);
      return sse;
    }
    std::vector<double> counts(static_cast<std::size_t>(n_classes_), 0.0);
    for (int i : s) counts[static_cast<std::size_t>(cls_[static_cast<std::size_t>(i)])] += 1.0;
    double sq = 0.0;
    for (double c : counts) sq += c * c;
    return n - sq / n;
  }

  void fill_leaf(TreeNode& node, const std::vector<int>& s) const {
    if (task_ == ForestTask::Regression) {
      double sum = 0.0;
      for (int i : s) sum += y_[i];
      node.value = sum / static_cast<double>(s.size());
      return;
    }
    node.counts.assign(static_cast<std::size_t>(n_classes_), 0.0);
    for (int i : s) node.counts[static_cast<std::size_t>(cls_[static_cast<std::size_t>(i)])] += 1.0;
    node.vote = static_cast<int>(std::max_element(node.counts.begin(), node.counts.end()) -
                                 node.counts.begin());
  }

  /// Best threshold on one feature, or decrease <= 0 when none is valid.
  Split best_on_feature(int f, const std::vector<int>& s, double parent) const {
    const std::size_t n = s.size();
    std::vector<std::pair<double, int>> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = {x_(s[k], f), s[k]};
    std::sort(v.begin(), v.end());
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);

    Split best;
    best.feature = f;
    if (task_ == ForestTask::Regression) {
      double total = 0.0, total_sq = 0.0;
      for (auto& [val, i] : v) {
        total += y_[i];
        total_sq += y_[i] * y_[i];
      }
      double left = 0.0, left_sq = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        const double yi = y_[v[k - 1].second];
        left += yi;
        left_sq += yi * yi;
        if (k < min_leaf || n - k < min_leaf || !(v[k - 1].first < v[k].first)) continue;
        const auto nl = static_cast<double>(k);
        const auto nr = static_cast<double>(n - k);
        const double right = total - left;
        const double right_sq = total_sq - left_sq;
        const double child = (left_sq - left * left / nl) + (right_sq - right * right / nr);
        const double dec = parent - child;
        if (dec > best.decrease) {
          best.decrease = dec;
          best.threshold = midpoint(v[k - 1].first, v[k].first);
        }
      }
      return best;
    }

    std::vector<double> lc(static_cast<std::size_t>(n_classes_), 0.0);
    std::vector<double> tc(static_cast<std::size_t>(n_classes_), 0.0);
    for (auto& [val, i] : v) tc[static_cast<std::size_t>(cls_[static_cast<std::size_t>(i)])] += 1.0;
    for (std::size_t k = 1; k < n; ++k) {
      lc[static_cast<std::size_t>(cls_[static_cast<std::size_t>(v[k - 1].second)])] += 1.0;
      if (k < min_leaf || n - k < min_leaf || !(v[k - 1].first < v[k].first)) continue;
      const auto nl = static_cast<double>(k);
      const auto nr = static_cast<double>(n - k);
      double sl = 0.0, sr = 0.0;
      for (std::size_t c = 0; c < lc.size(); ++c) {
        sl += lc[c] * lc[c];
        const double r = tc[c] - lc[c];
        sr += r * r;
      }
      const double child = (nl - sl / nl) + (nr - sr / nr);
      const double dec = parent - child;
      if (dec > best.decrease) {
        best.decrease = dec;
        best.threshold = midpoint(v[k - 1].first, v[k].first);
      }
    }
    return best;
  }

  static double midpoint(double a, double b) {
    const double m = a + (b - a) / 2.0;
    return m < b ? m : a;
  }

  bool constant_feature(int f, const std::vector<int>& s) const {
    const double first = x_(s.front(), f);
    for (int i : s) {
      if (x_(i, f) != first) return false;
    }
    return true;
  }

  int grow(std::vector<int> s, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.back().samples = static_cast<int>(s.size());

    const double parent = impurity(s);
    const bool depth_ok = params_.max_depth <= 0 || depth < params_.max_depth;
    const bool size_ok = s.size() >= 2 * static_cast<std::size_t>(params_.min_samples_leaf);
    Split best;
    if (depth_ok && size_ok && parent > 0.0) {
      // Visit features in random order until mtry non-constant ones were tried.
      std::vector<int> order(static_cast<std::size_t>(x_.cols()));
      std::iota(order.begin(), order.end(), 0);
      int tried = 0;
      for (std::size_t k = 0; k < order.size() && tried < mtry_; ++k) {
        std::swap(order[k], order[k + uniform_below(rng_, order.size() - k)]);
        const int f = order[k];
        if (constant_feature(f, s)) continue;
        ++tried;
        const Split cand = best_on_feature(f, s, parent);
        if (cand.decrease <= 0.0) continue;
        const bool better =
            cand.decrease > best.decrease ||
            (cand.decrease == best.decrease &&
             (best.feature < 0 || cand.feature < best.feature ||
              (cand.feature == best.feature && cand.threshold < best.threshold)));
        if (best.feature < 0 || better) best = cand;
      }
    }

    if (best.feature < 0) {
      fill_leaf(tree_.nodes[static_cast<std::size_t>(id)], s);
      return id;
    }

    std::vector<int> left, right;
    for (int i : s) (x_(i, best.feature) <= best.threshold ? left : right).push_back(i);
    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.impurity_decrease = best.decrease;
    }
    s.clear();
    s.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  const std::vector<int>& cls_;
  int n_classes_;
  ForestTask task_;
  ForestParams params_;
  int mtry_;
  std::mt19937_64 rng_;
  Tree tree_;
};

}  // namespace

RandomForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, ForestTask task,
                 const ForestParams& params, std::vector<std::string> feature_names) {
  if (x.rows() == 0 || x.cols() == 0) throw Error(ErrorCode::EmptyData, "no training data");
  if (x.rows() != y.size()) {
    throw Error(ErrorCode::ArityMismatch, "feature rows and targets differ in count");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw Error(ErrorCode::EmptyData, "training data contains missing values");
  }
  if (params.n_trees < 1 || params.min_samples_leaf < 1) {
    throw Error(ErrorCode::InvalidArgument, "n_trees and min_samples_leaf must be >= 1");
  }
  const int p = static_cast<int>(x.cols());
  const int mtry = params.resolved_features(task, p);
  if (mtry < 1 || mtry > p) {
    throw Error(ErrorCode::InvalidArgument, "features_per_split must lie in [1, p]");
  }
  if (feature_names.empty()) {
    for (int f = 0; f < p; ++f) feature_names.push_back("x" + std::to_string(f + 1));
  }
  if (static_cast<int>(feature_names.size()) != p) {
    throw Error(ErrorCode::ArityMismatch, "feature name count differs from column count");
  }

  RandomForest model;
  model.task = task;
  model.params = params;
  model.feature_names = std::move(feature_names);

  std::vector<int> cls;
  if (task == ForestTask::Classification) {
    model.classes.assign(y.data(), y.data() + y.size());
    std::sort(model.classes.begin(), model.classes.end());
    model.classes.erase(std::unique(model.classes.begin(), model.classes.end()),
                        model.classes.end());
    if (model.classes.size() < 2) {
      throw Error(ErrorCode::DegenerateTarget, "classification needs at least two classes");
    }
    cls.resize(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      cls[static_cast<std::size_t>(i)] = static_cast<int>(
          std::lower_bound(model.classes.begin(), model.classes.end(), y[i]) -
          model.classes.begin());
    }
  } else {
    const double mean = y.mean();
    if (!((y.array() - mean).square().sum() > 0.0)) {
      throw Error(ErrorCode::DegenerateTarget, "regression target has zero variance");
    }
  }

  const auto n = static_cast<int>(x.rows());
  model.trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    TreeBuilder builder(x, y, cls, static_cast<int>(model.classes.size()), task, params, mtry,
                        tree_seed(params.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> sample;
    std::vector<int> oob;
    if (params.bootstrap) {
      std::vector<bool> drawn(static_cast<std::size_t>(n), false);
      sample.reserve(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) {
        const auto i = static_cast<int>(uniform_below(builder.rng(), static_cast<std::uint64_t>(n)));
        sample.push_back(i);
        drawn[static_cast<std::size_t>(i)] = true;
      }
      std::sort(sample.begin(), sample.end());
      for (int i = 0; i < n; ++i) {
        if (!drawn[static_cast<std::size_t>(i)]) oob.push_back(i);
      }
    } else {
      sample.resize(static_cast<std::size_t>(n));
      std::iota(sample.begin(), sample.end(), 0);
    }
    model.trees.push_back(builder.build(std::move(sample)));
    model.oob_indices.push_back(std::move(oob));
  }
  return model;
}

double RandomForest::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (row.size() != feature_count()) {
    throw Error(ErrorCode::ArityMismatch, "row has " + std::to_string(row.size()) +
                                              " features, model expects " +
                                              std::to_string(feature_count()));
  }
  if (task == ForestTask::Classification) return predict_class(row).label;
  // Running mean, exact when every tree agrees.
  double mean = 0.0;
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const double v = trees[t].nodes[static_cast<std::size_t>(trees[t].leaf_index(row))].value;
    mean += (v - mean) / static_cast<double>(t + 1);
  }
  return mean;
}

ClassPrediction RandomForest::predict_class(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (row.size() != feature_count()) {
    throw Error(ErrorCode::ArityMismatch, "row arity differs from the model");
  }
  if (task != ForestTask::Classification) {
    throw Error(ErrorCode::InvalidArgument, "predict_class on a regression forest");
  }
  ClassPrediction out;
  Eigen::VectorXd votes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes.size()));
  for (const auto& tree : trees) {
    votes[tree.nodes[static_cast<std::size_t>(tree.leaf_index(row))].vote] += 1.0;
  }
  out.probability = votes / static_cast<double>(trees.size());
  Eigen::Index best = 0;
  votes.maxCoeff(&best);
  out.class_index = static_cast<int>(best);
  out.label = classes[static_cast<std::size_t>(best)];
  return out;
}

double RandomForest::output(const Eigen::Ref<const Eigen::RowVectorXd>& row, int class_index) const {
  if (task == ForestTask::Regression) return predict(row);
  return predict_class(row).probability[class_index];
}

std::string RandomForest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "dermalab.random_forest";
  j["version"] = 1;
  j["task"] = task == ForestTask::Regression ? "regression" : "classification";
  j["feature_names"] = feature_names;
  j["classes"] = classes;
  j["params"] = {{"n_trees", params.n_trees},
                 {"max_depth", params.max_depth},
                 {"min_samples_leaf", params.min_samples_leaf},
                 {"features_per_split", params.features_per_split},
                 {"bootstrap", params.bootstrap},
                 {"seed", params.seed}};
  auto& jt = j["trees"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < trees.size(); ++t) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : trees[t].nodes) {
      nlohmann::ordered_json jn;
      jn["samples"] = n.samples;
      if (n.leaf()) {
        if (task == ForestTask::Regression) {
          jn["value"] = n.value;
        } else {
          jn["counts"] = n.counts;
          jn["vote"] = n.vote;
        }
      } else {
        jn["feature"] = n.feature;
        jn["threshold"] = n.threshold;
        jn["left"] = n.left;
        jn["right"] = n.right;
        jn["impurity_decrease"] = n.impurity_decrease;
      }
      nodes.push_back(std::move(jn));
    }
    jt.push_back({{"nodes", std::move(nodes)},
                  {"oob", t < oob_indices.size() ? oob_indices[t] : std::vector<int>{}}});
  }
  return j.dump();
}

RandomForest RandomForest::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRow, std::string("model json: ") + e.what());
  }
  if (j.value("format", "") != "dermalab.random_forest" || j.value("version", 0) != 1) {
    throw Error(ErrorCode::MalformedRow, "unsupported model document");
  }
  RandomForest m;
  m.task = j.at("task") == "regression" ? ForestTask::Regression : ForestTask::Classification;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.classes = j.at("classes").get<std::vector<double>>();
  const auto& jp = j.at("params");
  m.params.n_trees = jp.at("n_trees");
  m.params.max_depth = jp.at("max_depth");
  m.params.min_samples_leaf = jp.at("min_samples_leaf");
  m.params.features_per_split = jp.at("features_per_split");
  m.params.bootstrap = jp.at("bootstrap");
  m.params.seed = jp.at("seed");
  for (const auto& jt : j.at("trees")) {
    Tree tree;
    for (const auto& jn : jt.at("nodes")) {
      TreeNode n;
      n.samples = jn.at("samples");
      if (jn.contains("feature")) {
        n.feature = jn.at("feature");
        n.threshold = jn.at("threshold");
        n.left = jn.at("left");
        n.right = jn.at("right");
        n.impurity_decrease = jn.at("impurity_decrease");
      } else if (m.task == ForestTask::Regression) {
        n.value = jn.at("value");
      } else {
        n.counts = jn.at("counts").get<std::vector<double>>();
        n.vote = jn.at("vote");
      }
      tree.nodes.push_back(std::move(n));
    }
    m.trees.push_back(std::move(tree));
    m.oob_indices.push_back(jt.at("oob").get<std::vector<int>>());
  }
  return m;
}

double r2_score(const Eigen::VectorXd& truth, const Eigen::VectorXd& predicted) {
  if (truth.size() != predicted.size() || truth.size() == 0) {
    throw Error(ErrorCode::LengthMismatch, "R^2 needs equal, non-empty vectors");
  }
  const double mean = truth.mean();
  const double sst = (truth.array() - mean).square().sum();
  if (!(sst > 0.0)) throw Error(ErrorCode::DegenerateTarget, "test targets have zero variance");
  const double sse = (truth - predicted).squaredNorm();
  return 1.0 - sse / sst;
}

double evaluate_regression(const RandomForest& model, const Eigen::MatrixXd& x,
                           const Eigen::VectorXd& y) {
  Eigen::VectorXd pred(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) pred[i] = model.predict(x.row(i));
  return r2_score(y, pred);
}

ClassificationReport evaluate_classification(const RandomForest& model, const Eigen::MatrixXd& x,
                                             const Eigen::VectorXd& y) {
  ClassificationReport rep;
  rep.labels = model.classes;
  for (Eigen::Index i = 0; i < y.size(); ++i) rep.labels.push_back(y[i]);
  std::sort(rep.labels.begin(), rep.labels.end());
  rep.labels.erase(std::unique(rep.labels.begin(), rep.labels.end()), rep.labels.end());
  const auto k = static_cast<Eigen::Index>(rep.labels.size());
  rep.confusion = Eigen::MatrixXi::Zero(k, k);
  auto index_of = [&](double v) {
    return static_cast<Eigen::Index>(
        std::lower_bound(rep.labels.begin(), rep.labels.end(), v) - rep.labels.begin());
  };
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    rep.confusion(index_of(y[i]), index_of(model.predict_class(x.row(i)).label)) += 1;
  }
  rep.accuracy = y.size() ? static_cast<double>(rep.confusion.trace()) / static_cast<double>(y.size())
                          : 0.0;
  return rep;
}

Eigen::VectorXd impurity_importance(const RandomForest& model) {
  const auto p = static_cast<Eigen::Index>(model.feature_count());
  Eigen::VectorXd total = Eigen::VectorXd::Zero(p);
  for (const auto& tree : model.trees) {
    Eigen::VectorXd imp = Eigen::VectorXd::Zero(p);
    for (const auto& n : tree.nodes) {
      if (!n.leaf()) imp[n.feature] += n.impurity_decrease;
    }
    const double s = imp.sum();
    if (s > 0.0) total += imp / s;
  }
  const double s = total.sum();
  if (s > 0.0) total /= s;
  return total;
}

namespace {

double leaf_output(const RandomForest& model, const TreeNode& leaf, int class_index) {
  if (model.task == ForestTask::Regression) return leaf.value;
  return leaf.vote == class_index ? 1.0 : 0.0;
}

/// Adds every leaf reachable by mixing `fg` and `bg` to `table`, keyed by
/// the base-3 code of its constraints (digit 1: feature from fg, 2: from bg).
void collect_leaves(const RandomForest& model, const Tree& tree, int node,
                    const Eigen::Ref<const Eigen::RowVectorXd>& fg,
                    const Eigen::Ref<const Eigen::RowVectorXd>& bg, unsigned in_mask,
                    unsigned out_mask, std::size_t code, const std::vector<std::size_t>& pow3,
                    int class_index, std::vector<double>& table) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.leaf()) {
    table[code] += leaf_output(model, n, class_index);
    return;
  }
  const unsigned bit = 1u << n.feature;
  const int go_fg = fg[n.feature] <= n.threshold ? n.left : n.right;
  const int go_bg = bg[n.feature] <= n.threshold ? n.left : n.right;
  if (in_mask & bit) {
    collect_leaves(model, tree, go_fg, fg, bg, in_mask, out_mask, code, pow3, class_index, table);
  } else if (out_mask & bit) {
    collect_leaves(model, tree, go_bg, fg, bg, in_mask, out_mask, code, pow3, class_index, table);
  } else if (go_fg == go_bg) {
    collect_leaves(model, tree, go_fg, fg, bg, in_mask, out_mask, code, pow3, class_index, table);
  } else {
    const std::size_t p3 = pow3[static_cast<std::size_t>(n.feature)];
    collect_leaves(model, tree, go_fg, fg, bg, in_mask | bit, out_mask, code + p3, pow3,
                   class_index, table);
    collect_leaves(model, tree, go_bg, fg, bg, in_mask, out_mask | bit, code + 2 * p3, pow3,
                   class_index, table);
  }
}

}  // namespace

Eigen::VectorXd coalition_values(const RandomForest& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                 const Eigen::MatrixXd& background, int class_index) {
  const int p = model.feature_count();
  if (p > kMaxShapleyFeatures) {
    throw Error(ErrorCode::TooManyFeatures,
                "exact Shapley supports at most " + std::to_string(kMaxShapleyFeatures) +
                    " features");
  }
  if (background.rows() == 0) throw Error(ErrorCode::EmptyBackground, "background is empty");
  if (row.size() != p || background.cols() != p) {
    throw Error(ErrorCode::ArityMismatch, "row or background arity differs from the model");
  }
  if (model.task == ForestTask::Classification &&
      (class_index < 0 || class_index >= static_cast<int>(model.classes.size()))) {
    throw Error(ErrorCode::InvalidArgument, "class index out of range");
  }

  std::vector<std::size_t> pow3(static_cast<std::size_t>(p) + 1, 1);
  for (int f = 1; f <= p; ++f) pow3[static_cast<std::size_t>(f)] = pow3[static_cast<std::size_t>(f - 1)] * 3;
  std::vector<double> table(pow3[static_cast<std::size_t>(p)], 0.0);
  for (const auto& tree : model.trees) {
    for (Eigen::Index b = 0; b < background.rows(); ++b) {
      collect_leaves(model, tree, 0, row, background.row(b), 0u, 0u, 0, pow3, class_index, table);
    }
  }

  // Convert digits from the most significant down; a free digit feeds both
  // halves of the coalition bit.
  for (int f = p - 1; f >= 0; --f) {
    const std::size_t low = pow3[static_cast<std::size_t>(f)];
    const std::size_t high = std::size_t{1} << (p - 1 - f);
    std::vector<double> next(high * 2 * low);
    for (std::size_t h = 0; h < high; ++h) {
      for (std::size_t l = 0; l < low; ++l) {
        const double free_v = table[(h * 3 + 0) * low + l];
        const double in_v = table[(h * 3 + 1) * low + l];
        const double out_v = table[(h * 3 + 2) * low + l];
        next[(h * 2 + 1) * low + l] = in_v + free_v;
        next[(h * 2 + 0) * low + l] = out_v + free_v;
      }
    }
    table = std::move(next);
  }

  const double scale = static_cast<double>(model.trees.size()) * static_cast<double>(background.rows());
  Eigen::VectorXd v(static_cast<Eigen::Index>(table.size()));
  for (std::size_t s = 0; s < table.size(); ++s) v[static_cast<Eigen::Index>(s)] = table[s] / scale;
  return v;
}

ShapleyAttribution exact_shapley(const RandomForest& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                 const Eigen::MatrixXd& background, int class_index) {
  const Eigen::VectorXd v = coalition_values(model, row, background, class_index);
  const int p = model.feature_count();
  const std::size_t full = (std::size_t{1} << p) - 1;

  // weight(k) * p! = k! (p-k-1)!, kept integral so sums of integral
  // coalition values stay exact until the final division.
  std::vector<double> fact(static_cast<std::size_t>(p) + 1, 1.0);
  for (int k = 1; k <= p; ++k) fact[static_cast<std::size_t>(k)] = fact[static_cast<std::size_t>(k - 1)] * k;
  ShapleyAttribution out;
  out.phi = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < p; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double acc = 0.0;
    for (std::size_t s = 0; s <= full; ++s) {
      if (s & bit) continue;
      const int k = std::popcount(s);
      const double w = fact[static_cast<std::size_t>(k)] * fact[static_cast<std::size_t>(p - k - 1)];
      acc += w * (v[static_cast<Eigen::Index>(s | bit)] - v[static_cast<Eigen::Index>(s)]);
    }
    out.phi[i] = acc / fact[static_cast<std::size_t>(p)];
  }
  out.base_value = v[0];
  out.prediction = model.output(row, class_index);
  const double gap = std::abs(out.phi.sum() + out.base_value - out.prediction);
  if (gap > 1e-6 * std::max(1.0, std::abs(out.prediction))) {
    throw std::logic_error("Shapley efficiency violated by " + io::format_sig(gap, 3));
  }
  return out;
}

std::vector<ShapPoint> shap_summary_points(const RandomForest& model, const Eigen::MatrixXd& rows,
                                           const Eigen::MatrixXd& background, int class_index) {
  const int p = model.feature_count();
  const Eigen::Index n = rows.rows();
  // Midrank percentiles per feature.
  Eigen::MatrixXd pct(n, p);
  for (int f = 0; f < p; ++f) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return rows(a, f) < rows(b, f); });
    for (Eigen::Index i = 0; i < n;) {
      Eigen::Index j = i;
      while (j + 1 < n && rows(order[static_cast<std::size_t>(j + 1)], f) ==
                              rows(order[static_cast<std::size_t>(i)], f)) {
        ++j;
      }
      const double midrank = 0.5 * static_cast<double>(i + j);  // zero based
      for (Eigen::Index k = i; k <= j; ++k) {
        pct(order[static_cast<std::size_t>(k)], f) =
            n > 1 ? midrank / static_cast<double>(n - 1) : 0.5;
      }
      i = j + 1;
    }
  }
  std::vector<ShapPoint> points;
  points.reserve(static_cast<std::size_t>(n * p));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto attr = exact_shapley(model, rows.row(r), background, class_index);
    for (int f = 0; f < p; ++f) {
      points.push_back({static_cast<int>(r), f, attr.phi[f], rows(r, f), pct(r, f)});
    }
  }
  return points;
}

std::string format_shap_points_csv(const RandomForest& model,
                                   const std::vector<ShapPoint>& points) {
  std::string out = "row,feature,shap,value,percentile\n";
  for (const auto& pt : points) {
    out += std::to_string(pt.row) + ',' + model.feature_names[static_cast<std::size_t>(pt.feature)] +
           ',' + io::format_double(pt.shap) + ',' + io::format_double(pt.value) + ',' +
           io::format_double(pt.percentile) + '\n';
  }
  return out;
}

}  // namespace dermalab
