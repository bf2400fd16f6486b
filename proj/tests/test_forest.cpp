#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "dermalab/forest.hpp"
#include "dermalab/stats.hpp"
#include "oracles.hpp"

using namespace dermalab;

namespace {

TreeNode leaf(double value) {
  TreeNode n;
  n.value = value;
  return n;
}

TreeNode split(int feature, double threshold, int left, int right) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  return n;
}

RandomForest regression_model(int p, std::vector<Tree> trees) {
  RandomForest m;
  m.task = ForestTask::Regression;
  for (int f = 0; f < p; ++f) m.feature_names.push_back("x" + std::to_string(f + 1));
  m.trees = std::move(trees);
  m.params.n_trees = static_cast<int>(m.trees.size());
  return m;
}

/// Two trees over five binary features with integer leaves.
RandomForest toy_model() {
  Tree a;
  a.nodes = {split(0, 0.5, 1, 2), split(1, 0.5, 3, 4), split(2, 0.5, 5, 6), leaf(3), leaf(-1),
             leaf(7), split(4, 0.5, 7, 8), leaf(2), leaf(10)};
  Tree b;
  b.nodes = {split(3, 0.5, 1, 2), leaf(4), split(0, 0.5, 3, 4), leaf(-6), split(1, 0.5, 5, 6),
             leaf(1), leaf(9)};
  return regression_model(5, {a, b});
}

struct Data {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Data linear_data(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Data d{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < p; ++f) d.x(i, f) = u(rng);
    d.y[i] = 3.0 * d.x(i, 0);
  }
  return d;
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

TEST_CASE("train/test split") {
  const auto s = train_test_split(10, 0.7, 42);
  CHECK(s.train.size() == 7);
  CHECK(s.test.size() == 3);
  std::vector<Eigen::Index> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (Eigen::Index i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  const auto again = train_test_split(10, 0.7, 42);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(train_test_split(10, 0.7, 43).train != s.train);
  CHECK(code_of([] { train_test_split(10, 1.0, 1); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { train_test_split(10, 0.0, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("uniform_below is unbiased by construction") {
  std::mt19937_64 rng(5);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) ++hits[uniform_below(rng, 7)];
  for (int h : hits) CHECK(std::abs(h - 10000) < 500);
  CHECK(tree_seed(1, 0) != tree_seed(1, 1));
  CHECK(tree_seed(1, 0) == tree_seed(1, 0));
}

TEST_CASE("fit and evaluate regression") {
  const auto d = linear_data(500, 5, 7);
  const auto split_idx = train_test_split(500, 0.7, 7);
  auto params = ForestParams::regression();
  params.n_trees = 100;
  params.seed = 7;
  const auto model = fit(take_rows(d.x, split_idx.train), take_rows(d.y, split_idx.train),
                         ForestTask::Regression, params);
  CHECK(model.feature_names[0] == "x1");
  CHECK(evaluate_regression(model, take_rows(d.x, split_idx.test), take_rows(d.y, split_idx.test)) >=
        0.9);

  const Eigen::VectorXd imp = impurity_importance(model);
  CHECK(imp.sum() == doctest::Approx(1.0));
  CHECK(imp[0] >= 0.8);

  // Same seed, same forest.
  const auto again = fit(take_rows(d.x, split_idx.train), take_rows(d.y, split_idx.train),
                         ForestTask::Regression, params);
  CHECK(again.to_json() == model.to_json());

  // Shuffled targets carry no signal.
  Eigen::VectorXd shuffled = d.y;
  std::mt19937_64 rng(99);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto noise = fit(take_rows(d.x, split_idx.train), take_rows(shuffled, split_idx.train),
                         ForestTask::Regression, params);
  CHECK(evaluate_regression(noise, take_rows(d.x, split_idx.test),
                            take_rows(shuffled, split_idx.test)) <= 0.1);

  CHECK(code_of([&] { model.predict(Eigen::RowVectorXd::Zero(4)); }) == ErrorCode::ArityMismatch);
  CHECK(code_of([&] { fit(d.x, Eigen::VectorXd::Zero(3), ForestTask::Regression, params); }) ==
        ErrorCode::ArityMismatch);
  CHECK(code_of([&] { fit(d.x, Eigen::VectorXd::Constant(500, 2.0), ForestTask::Regression, params); }) ==
        ErrorCode::DegenerateTarget);
  CHECK(code_of([&] {
          fit(Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), ForestTask::Regression, params);
        }) == ErrorCode::EmptyData);
}

TEST_CASE("memorizing forest reproduces training targets") {
  const auto d = linear_data(60, 3, 3);
  ForestParams p;
  p.n_trees = 5;
  p.bootstrap = false;
  p.min_samples_leaf = 1;
  p.features_per_split = 3;
  const auto m = fit(d.x, d.y, ForestTask::Regression, p);
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) CHECK(m.predict(d.x.row(i)) == d.y[i]);
}

TEST_CASE("constant model predicts its constant") {
  // fit refuses zero-variance targets, so build the model by hand.
  Tree t;
  t.nodes = {leaf(2.5)};
  const auto m = regression_model(3, {t, t, t});
  CHECK(m.predict(Eigen::RowVector3d(0.1, 5, -3)) == 2.5);
  const auto back = RandomForest::from_json(m.to_json());
  CHECK(back.predict(Eigen::RowVector3d(9, 9, 9)) == 2.5);
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Random(4, 3);
  for (const auto& pt : shap_summary_points(m, rows, rows)) CHECK(pt.shap == 0.0);
}

TEST_CASE("r2 and accuracy") {
  const Eigen::Vector4d y(1, 2, 3, 4);
  CHECK(r2_score(y, y) == 1.0);
  CHECK(r2_score(y, Eigen::Vector4d::Constant(2.5)) == doctest::Approx(0.0));
  CHECK(code_of([&] { r2_score(y, Eigen::Vector3d(1, 2, 3)); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([&] { r2_score(Eigen::Vector3d::Ones(), Eigen::Vector3d(1, 2, 3)); }) ==
        ErrorCode::DegenerateTarget);

  // A stump that answers class 1 below 0.5 and class 2 above.
  RandomForest m;
  m.task = ForestTask::Classification;
  m.feature_names = {"x1"};
  m.classes = {1.0, 2.0};
  TreeNode l = leaf(0), r = leaf(0);
  l.counts = {1, 0};
  l.vote = 0;
  r.counts = {0, 1};
  r.vote = 1;
  Tree t;
  t.nodes = {split(0, 0.5, 1, 2), l, r};
  m.trees = {t};
  Eigen::MatrixXd x(4, 1);
  x << 0.1, 0.2, 0.8, 0.9;
  const auto rep = evaluate_classification(m, x, Eigen::Vector4d(1, 2, 1, 2));
  CHECK(rep.accuracy == 0.5);
  CHECK(rep.confusion.sum() == 4);
  CHECK(rep.confusion(0, 0) == 1);
  CHECK(rep.confusion(1, 1) == 1);
  const auto pc = m.predict_class(x.row(2));
  CHECK(pc.label == 2.0);
  CHECK(pc.probability.sum() == doctest::Approx(1.0));
}

TEST_CASE("classification forest") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd x(300, 3);
  Eigen::VectorXd y(300);
  for (int i = 0; i < 300; ++i) {
    for (int f = 0; f < 3; ++f) x(i, f) = u(rng);
    y[i] = x(i, 0) < 0.33 ? 3 : x(i, 0) < 0.66 ? 5 : 7;
  }
  auto p = ForestParams::classification();
  p.n_trees = 200;
  const auto m = fit(x, y, ForestTask::Classification, p);
  CHECK(m.classes == std::vector<double>{3, 5, 7});
  CHECK(evaluate_classification(m, x, y).accuracy >= 0.95);
  const Eigen::MatrixXd bg = x.topRows(20);
  for (int r = 0; r < 10; ++r) {
    const auto pr = m.predict_class(x.row(r));
    CHECK(pr.probability.sum() == doctest::Approx(1.0));
    double phi_total = 0.0;
    for (int c = 0; c < 3; ++c) phi_total += exact_shapley(m, x.row(r), bg, c).phi.sum();
    // Probabilities sum to one, so attributions across classes cancel.
    CHECK(std::abs(phi_total) <= 1e-9);
  }
  CHECK(code_of([&] { fit(x, Eigen::VectorXd::Constant(300, 5), ForestTask::Classification, p); }) ==
        ErrorCode::DegenerateTarget);
  const auto back = RandomForest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
}

TEST_CASE("exact shapley matches brute force bit for bit") {
  const auto m = toy_model();
  Eigen::MatrixXd bg(2, 5);
  bg << 0, 1, 0, 1, 1,
        1, 0, 1, 0, 0;
  for (unsigned bits = 0; bits < 32; ++bits) {
    Eigen::RowVectorXd row(5);
    for (int f = 0; f < 5; ++f) row[f] = (bits >> f) & 1u;
    const auto got = exact_shapley(m, row, bg);
    const Eigen::VectorXd want = oracle::permutation_shapley(m, row, bg);
    for (int f = 0; f < 5; ++f) CHECK(got.phi[f] == want[f]);
    const Eigen::VectorXd v = coalition_values(m, row, bg);
    for (unsigned s = 0; s < 32; ++s) CHECK(v[s] == oracle::coalition_value(m, row, bg, s, 0));
  }
}

TEST_CASE("shapley axioms on fitted forests") {
  const auto d = linear_data(300, 5, 11);
  auto params = ForestParams::regression();
  params.n_trees = 60;
  const auto m = fit(d.x, d.y, ForestTask::Regression, params);
  const Eigen::MatrixXd bg = d.x.topRows(30);

  SUBCASE("efficiency and agreement with permutations") {
    for (int r = 100; r < 110; ++r) {
      const auto a = exact_shapley(m, d.x.row(r), bg);
      CHECK(std::abs(a.phi.sum() + a.base_value - a.prediction) <= 1e-6);
      const Eigen::VectorXd want = oracle::permutation_shapley(m, d.x.row(r), bg);
      CHECK((a.phi - want).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("row equal to the background gives zeros") {
    const Eigen::MatrixXd one = d.x.row(5);
    CHECK(exact_shapley(m, d.x.row(5), one).phi.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("a never-split feature is a dummy") {
    Eigen::MatrixXd x = d.x;
    x.col(4).setConstant(0.5);
    const auto mm = fit(x, d.y, ForestTask::Regression, params);
    Eigen::RowVectorXd row = x.row(3);
    row[4] = 0.9;
    CHECK(exact_shapley(mm, row, x.topRows(30)).phi[4] == 0.0);
  }
  SUBCASE("scaling the model scales attributions") {
    RandomForest twice = m;
    for (auto& t : twice.trees) {
      for (auto& n : t.nodes) n.value *= 2.0;
    }
    for (int r = 0; r < 5; ++r) {
      const auto a = exact_shapley(m, d.x.row(r), bg);
      const auto b = exact_shapley(twice, d.x.row(r), bg);
      CHECK((b.phi - 2.0 * a.phi).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  CHECK(code_of([&] { exact_shapley(m, d.x.row(0), Eigen::MatrixXd(0, 5)); }) ==
        ErrorCode::EmptyBackground);
}

TEST_CASE("duplicated feature gets equal credit") {
  Tree a, b;
  a.nodes = {split(0, 0.5, 1, 2), leaf(1.0), leaf(4.0)};
  b.nodes = {split(1, 0.5, 1, 2), leaf(1.0), leaf(4.0)};
  Tree c;
  c.nodes = {split(2, 0.3, 1, 2), leaf(-2.0), leaf(0.5)};
  const auto m = regression_model(3, {a, b, c});
  Eigen::MatrixXd bg(3, 3);
  bg << 0.2, 0.2, 0.1,
        0.7, 0.7, 0.9,
        0.4, 0.4, 0.2;
  const auto phi = exact_shapley(m, Eigen::RowVector3d(0.9, 0.9, 0.5), bg).phi;
  CHECK(std::abs(phi[0] - phi[1]) <= 1e-9);
  CHECK(phi[0] > 0.0);
}

TEST_CASE("additive model has closed-form attributions") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd x(400, 3);
  Eigen::VectorXd y(400);
  for (int i = 0; i < 400; ++i) {
    for (int f = 0; f < 3; ++f) x(i, f) = u(rng);
    y[i] = x(i, 0) + 2.0 * x(i, 1) - x(i, 2);
  }
  ForestParams p;
  p.n_trees = 50;
  p.max_depth = 1;
  const auto m = fit(x, y, ForestTask::Regression, p);
  const Eigen::MatrixXd bg = x.topRows(40);
  for (int r = 200; r < 220; ++r) {
    Eigen::VectorXd want = Eigen::VectorXd::Zero(3);
    for (const auto& t : m.trees) {
      const auto& root = t.nodes[0];
      if (root.leaf()) continue;
      const auto value_at = [&](const Eigen::RowVectorXd& z) {
        return t.nodes[static_cast<std::size_t>(z[root.feature] <= root.threshold ? root.left : root.right)]
            .value;
      };
      double bg_mean = 0.0;
      for (Eigen::Index b = 0; b < bg.rows(); ++b) bg_mean += value_at(bg.row(b));
      bg_mean /= static_cast<double>(bg.rows());
      want[root.feature] += (value_at(x.row(r)) - bg_mean) / static_cast<double>(m.trees.size());
    }
    CHECK((exact_shapley(m, x.row(r), bg).phi - want).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("shap summary points") {
  const auto d = linear_data(80, 1, 5);
  ForestParams p;
  p.n_trees = 3;
  p.bootstrap = false;
  p.min_samples_leaf = 1;
  const auto m = fit(d.x, d.y, ForestTask::Regression, p);

  const auto one = shap_summary_points(m, d.x.topRows(1), d.x);
  CHECK(one.size() == 1);
  CHECK(one[0].percentile == 0.5);

  const auto pts = shap_summary_points(m, d.x, d.x);
  REQUIRE(pts.size() == 80);
  Eigen::VectorXd v(80), s(80);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = pts[i].value;
    s[static_cast<Eigen::Index>(i)] = pts[i].shap;
    CHECK(pts[i].percentile >= 0.0);
    CHECK(pts[i].percentile <= 1.0);
  }
  CHECK(spearman_rho(v, s) == 1.0);

  const auto m3 = toy_model();
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(1, 5);
  CHECK(shap_summary_points(m3, rows, rows).size() == 5);
  const auto csv = format_shap_points_csv(m3, shap_summary_points(m3, rows, rows));
  CHECK(csv.rfind("row,feature,shap,value,percentile\n", 0) == 0);
}

TEST_CASE("shapley refuses wide models") {
  const auto d = linear_data(50, 13, 2);
  ForestParams p;
  p.n_trees = 2;
  const auto m = fit(d.x, d.y, ForestTask::Regression, p);
  CHECK(code_of([&] { exact_shapley(m, d.x.row(0), d.x.topRows(2)); }) ==
        ErrorCode::TooManyFeatures);
}
