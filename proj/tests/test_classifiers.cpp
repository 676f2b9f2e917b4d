#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "tabforge/classifiers.hpp"
#include "tabforge/preprocess.hpp"
#include "tabforge/simulator.hpp"

using namespace tabforge;
using namespace tabforge::clf;

namespace {

DesignMatrix make_matrix(std::size_t n, std::size_t p, const std::vector<double>& x,
                         const std::vector<int>& y) {
  DesignMatrix d;
  d.n = n;
  d.p = p;
  d.x = x;
  d.y = y;
  for (std::size_t j = 0; j < p; ++j) d.feature_names.push_back("f" + std::to_string(j));
  return d;
}

DesignMatrix random_matrix(std::size_t n, std::size_t p, double pos_rate, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n * p);
  for (auto& v : x) v = rng.normal();
  std::vector<int> y(n);
  for (auto& v : y) v = rng.uniform() < pos_rate ? 1 : 0;
  return make_matrix(n, p, x, y);
}

}  // namespace

// ------------------------------ design matrix --------------------------------

TEST(DesignMatrixBuild, OneHotLayoutAndNames) {
  TableSchema s;
  s.columns.push_back({"color", ColumnKind::Categorical, {"red", "green", "blue"}});
  s.columns.push_back({"x", ColumnKind::Numeric, {}});
  s.columns.push_back({"vax", ColumnKind::OutcomeBinary, {}});
  MixedTable t(s);
  t.add_row({2, 1.5, 1});
  t.add_row({0, -0.5, 0});
  auto d = design_matrix(t, "vax");
  ASSERT_EQ(d.p, 4u);  // 3 one-hot + 1 numeric
  EXPECT_EQ(d.feature_names,
            (std::vector<std::string>{"color=red", "color=green", "color=blue", "x"}));
  EXPECT_EQ(d.row(0), (std::vector<double>{0, 0, 1, 1.5}));
  EXPECT_EQ(d.row(1), (std::vector<double>{1, 0, 0, -0.5}));
  EXPECT_EQ(d.y, (std::vector<int>{1, 0}));
}

TEST(DesignMatrixBuild, RejectsNonOutcomeTarget) {
  TableSchema s;
  s.columns.push_back({"x", ColumnKind::Numeric, {}});
  s.columns.push_back({"vax", ColumnKind::OutcomeBinary, {}});
  MixedTable t(s);
  t.add_row({1.0, 1});
  EXPECT_THROW(design_matrix(t, "x"), SchemaMismatchError);
}

// --------------------------- logistic regression -----------------------------

TEST(LogReg, SeparableTwoPointAccuracy) {
  auto d = make_matrix(2, 1, {-1.0, 1.0}, {0, 1});
  auto m = fit_logreg(d);
  auto labels = labels_at_half(predict_proba(m, d));
  EXPECT_EQ(labels, (std::vector<int>{0, 1}));
  EXPECT_TRUE(m.converged);
}

TEST(LogReg, GradientVanishesAtOptimum) {
  auto d = random_matrix(300, 4, 0.4, 7);
  // plant a signal so the optimum is nontrivial
  for (std::size_t i = 0; i < d.n; ++i)
    if (d.at(i, 0) > 0.3) d.y[i] = 1;
  auto m = fit_logreg(d);
  ASSERT_TRUE(m.converged);
  // independent gradient computation of the penalized mean log-loss
  std::vector<double> grad(d.p + 1, 0.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    double z = m.intercept;
    for (std::size_t j = 0; j < d.p; ++j) z += d.at(i, j) * m.weights[j];
    const double r = sigmoid(z) - d.y[i];
    for (std::size_t j = 0; j < d.p; ++j) grad[j] += r * d.at(i, j) / static_cast<double>(d.n);
    grad[d.p] += r / static_cast<double>(d.n);
  }
  for (std::size_t j = 0; j < d.p; ++j) grad[j] += m.lambda * m.weights[j];
  double gn = 0;
  for (double g : grad) gn += g * g;
  EXPECT_LE(std::sqrt(gn), 1e-6);
}

TEST(LogReg, NullModelMatchesBaseRate) {
  auto d = random_matrix(4000, 3, 0.3, 11);
  auto m = fit_logreg(d);
  auto proba = predict_proba(m, d);
  const double mean_p = std::accumulate(proba.begin(), proba.end(), 0.0) / proba.size();
  const double base = std::accumulate(d.y.begin(), d.y.end(), 0.0) / d.y.size();
  EXPECT_NEAR(mean_p, base, 0.02);
}

TEST(LogReg, RecoversPlantedCoefficients) {
  Rng rng(13);
  const std::size_t n = 8000;
  const std::vector<double> w_true = {1.2, -0.8};
  const double b_true = 0.4;
  std::vector<double> x(n * 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = rng.normal();
    x[2 * i + 1] = rng.normal();
    const double z = b_true + w_true[0] * x[2 * i] + w_true[1] * x[2 * i + 1];
    y[i] = rng.uniform() < sigmoid(z) ? 1 : 0;
  }
  auto m = fit_logreg(make_matrix(n, 2, x, y));
  EXPECT_NEAR(m.weights[0], w_true[0], 0.12);
  EXPECT_NEAR(m.weights[1], w_true[1], 0.12);
  EXPECT_NEAR(m.intercept, b_true, 0.12);
}

TEST(LogReg, ConvexityUnderRandomRestarts) {
  auto d = random_matrix(200, 3, 0.5, 17);
  LogRegConfig cfg;
  cfg.init_scale = 1.0;
  double first = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = fit_logreg(d, cfg, seed);
    if (seed == 1)
      first = m.loss;
    else
      EXPECT_NEAR(m.loss, first, 1e-6);
  }
}

TEST(LogReg, RowPermutationInvariance) {
  auto d = random_matrix(150, 3, 0.4, 19);
  auto m1 = fit_logreg(d);
  // reversed row order
  DesignMatrix r = d;
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = 0; j < d.p; ++j) r.x[i * d.p + j] = d.at(d.n - 1 - i, j);
    r.y[i] = d.y[d.n - 1 - i];
  }
  auto m2 = fit_logreg(r);
  for (std::size_t j = 0; j < d.p; ++j) EXPECT_NEAR(m1.weights[j], m2.weights[j], 1e-8);
  EXPECT_NEAR(m1.intercept, m2.intercept, 1e-8);
}

TEST(LogReg, NullParametersTieConvention) {
  LogRegModel m;
  m.weights = {0.0, 0.0};
  auto d = random_matrix(10, 2, 0.5, 23);
  auto proba = predict_proba(m, d);
  auto labels = labels_at_half(proba);
  for (std::size_t i = 0; i < d.n; ++i) {
    EXPECT_DOUBLE_EQ(proba[i], 0.5);
    EXPECT_EQ(labels[i], 1);  // p == 0.5 classifies positive
  }
}

TEST(LogReg, ProbabilityMonotoneInMargin) {
  LogRegModel m;
  m.weights = {2.0, -1.0};
  m.intercept = 0.3;
  auto d = random_matrix(50, 2, 0.5, 29);
  auto proba = predict_proba(m, d);
  std::vector<std::pair<double, double>> zp(d.n);
  for (std::size_t i = 0; i < d.n; ++i)
    zp[i] = {m.intercept + 2.0 * d.at(i, 0) - d.at(i, 1), proba[i]};
  std::sort(zp.begin(), zp.end());
  for (std::size_t i = 1; i < zp.size(); ++i) EXPECT_GE(zp[i].second, zp[i - 1].second);
}

TEST(LogReg, SingleClassThrows) {
  auto d = make_matrix(3, 1, {0.0, 1.0, 2.0}, {1, 1, 1});
  EXPECT_THROW(fit_logreg(d), SingleClassError);
  EXPECT_THROW(fit_gbt(d), SingleClassError);
  EXPECT_THROW(smote_oversample(d, 1), SingleClassError);
}

TEST(LogReg, DimensionMismatchThrows) {
  auto d = random_matrix(10, 3, 0.5, 31);
  LogRegModel m;
  m.weights = {0.1, 0.2};  // wrong width
  EXPECT_THROW(predict_proba(m, d), ShapeMismatchError);
}

// ------------------------- gradient-boosted trees ----------------------------

TEST(Gbt, XorTrainingAccuracy) {
  auto d = make_matrix(4, 2, {0, 0, 0, 1, 1, 0, 1, 1}, {0, 1, 1, 0});
  GbtConfig cfg;
  cfg.n_trees = 30;
  cfg.max_depth = 2;
  auto m = fit_gbt(d, cfg);
  auto labels = labels_at_half(predict_proba(m, d));
  EXPECT_EQ(labels, d.y);
}

TEST(Gbt, HandComputedFirstTree) {
  // x = 0,1,2,3; y = 0,0,1,1; at p=0.5: g = +-0.5, h = 0.25 per row.
  // Root split x < 1.5: G_L=1, H_L=0.5, G_R=-1, H_R=0.5, G=0, H=1, lambda=1
  // gain = 0.5*(1/1.5 + 1/1.5 - 0/2) = 2/3; leaves -G/(H+lambda) = -+2/3.
  auto d = make_matrix(4, 1, {0, 1, 2, 3}, {0, 0, 1, 1});
  GbtConfig cfg;
  cfg.n_trees = 1;
  auto m = fit_gbt(d, cfg);
  ASSERT_EQ(m.trees.size(), 1u);
  const auto& root = m.trees[0].nodes[0];
  ASSERT_FALSE(root.leaf);
  EXPECT_EQ(root.feature, 0u);
  EXPECT_DOUBLE_EQ(root.threshold, 1.5);
  EXPECT_NEAR(root.gain, 2.0 / 3.0, 1e-12);
  const auto& l = m.trees[0].nodes[static_cast<std::size_t>(root.left)];
  const auto& r = m.trees[0].nodes[static_cast<std::size_t>(root.right)];
  EXPECT_NEAR(l.weight, -2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.weight, 2.0 / 3.0, 1e-12);
}

TEST(Gbt, ThresholdRecovery) {
  Rng rng(37);
  auto sample = [&](std::size_t n, std::uint64_t) {
    std::vector<double> x(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-1.0, 1.0);
      y[i] = x[i] > 0 ? 1 : 0;
    }
    return make_matrix(n, 1, x, y);
  };
  auto train = sample(1000, 1);
  auto test = sample(500, 2);
  auto m = fit_gbt(train);
  auto labels = labels_at_half(predict_proba(m, test));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.n; ++i) correct += labels[i] == test.y[i];
  EXPECT_GE(static_cast<double>(correct) / 500.0, 0.98);
}

TEST(Gbt, ZeroTreesPredictHalf) {
  GbtModel m;
  auto d = random_matrix(5, 2, 0.5, 41);
  for (double p : predict_proba(m, d)) EXPECT_DOUBLE_EQ(p, 0.5);
  for (int lab : labels_at_half(predict_proba(m, d))) EXPECT_EQ(lab, 1);
}

TEST(Gbt, TrainLossNonincreasing) {
  auto d = random_matrix(300, 3, 0.4, 43);
  for (std::size_t i = 0; i < d.n; ++i)
    if (d.at(i, 1) + 0.5 * d.at(i, 2) > 0.2) d.y[i] = 1;
  GbtConfig cfg;
  cfg.n_trees = 40;
  auto m = fit_gbt(d, cfg);
  for (std::size_t t = 1; t < m.train_loss.size(); ++t)
    EXPECT_LE(m.train_loss[t], m.train_loss[t - 1] + 1e-12);
}

TEST(Gbt, FeatureImportancePlantedSignal) {
  Rng rng(47);
  const std::size_t n = 600;
  std::vector<double> x(n * 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = rng.normal();
    x[2 * i + 1] = rng.normal();
    y[i] = x[2 * i] > 0 ? 1 : 0;
  }
  GbtConfig cfg;
  cfg.n_trees = 20;
  auto m = fit_gbt(make_matrix(n, 2, x, y), cfg);
  auto imp = feature_importance(m);
  EXPECT_GT(imp.at("f0"), 0.9);
  const double total = imp.at("f0") + imp.at("f1");
  EXPECT_NEAR(total, 1.0, 1e-12);

  GbtModel empty;
  empty.feature_names = {"a", "b"};
  for (const auto& [k, v] : feature_importance(empty)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Gbt, RegistryFirstVisitAmongTopFeatures) {
  auto profile = sim::SimulatorProfile{}.with_vaccine("OPV3");
  auto t = sim::simulate_registry(2000, 51, profile);
  ScalerParams sc = fit_scaler(t);
  auto d = design_matrix(apply_scaler(t, sc), "OPV3");
  GbtConfig cfg;
  cfg.n_trees = 30;
  cfg.max_depth = 4;
  auto m = fit_gbt(d, cfg);
  auto imp = feature_importance(m);
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& [k, v] : imp) ranked.emplace_back(v, k);
  std::sort(ranked.rbegin(), ranked.rend());
  EXPECT_TRUE(ranked[0].second == "first_visit_day" || ranked[1].second == "first_visit_day")
      << "top-2: " << ranked[0].second << ", " << ranked[1].second;
}

TEST(Gbt, SaveLoadRoundTrip) {
  auto d = random_matrix(100, 3, 0.4, 53);
  for (std::size_t i = 0; i < d.n; ++i)
    if (d.at(i, 0) > 0) d.y[i] = 1;
  GbtConfig cfg;
  cfg.n_trees = 10;
  auto m = fit_gbt(d, cfg);
  const std::string path = (std::filesystem::temp_directory_path() / "tf_gbt.bin").string();
  save_gbt(m, path, 1234);
  auto m2 = load_gbt(path, 1234);
  EXPECT_EQ(predict_proba(m, d), predict_proba(m2, d));
  EXPECT_EQ(m2.feature_names, m.feature_names);
  EXPECT_THROW(load_gbt(path, 9999), Error);
  EXPECT_FALSE(dump_trees(m).empty());
  std::filesystem::remove(path);
}

TEST(LogRegIo, SaveLoadRoundTrip) {
  auto d = random_matrix(80, 3, 0.5, 59);
  auto m = fit_logreg(d);
  const std::string path = (std::filesystem::temp_directory_path() / "tf_lr.bin").string();
  save_logreg(m, path, 77);
  auto m2 = load_logreg(path, 77);
  EXPECT_EQ(m.weights, m2.weights);
  EXPECT_DOUBLE_EQ(m.intercept, m2.intercept);
  std::filesystem::remove(path);
}

// ---------------------------------- SMOTE ------------------------------------

TEST(Smote, BalancedInputUnchanged) {
  auto d = random_matrix(40, 3, 0.5, 61);
  for (std::size_t i = 0; i < 20; ++i) d.y[i] = 0;
  for (std::size_t i = 20; i < 40; ++i) d.y[i] = 1;
  auto r = smote_oversample(d, 5);
  EXPECT_EQ(r.data.x, d.x);
  EXPECT_EQ(r.data.y, d.y);
  EXPECT_FALSE(r.duplication_fallback);
}

TEST(Smote, CountContract) {
  auto d = random_matrix(100, 2, 0.5, 67);
  for (std::size_t i = 0; i < 100; ++i) d.y[i] = i < 10 ? 1 : 0;
  auto r = smote_oversample(d, 9);
  EXPECT_EQ(r.data.n, 180u);
  std::size_t pos = 0;
  for (int v : r.data.y) pos += v;
  EXPECT_EQ(pos, 90u);
  // originals preserved verbatim at the front
  EXPECT_TRUE(std::equal(d.x.begin(), d.x.end(), r.data.x.begin()));
}

TEST(Smote, SyntheticRowsOnMinoritySegments) {
  auto d = random_matrix(60, 3, 0.5, 71);
  std::vector<std::vector<double>> minority;
  for (std::size_t i = 0; i < 60; ++i) {
    d.y[i] = i < 12 ? 1 : 0;
    if (i < 12) minority.push_back(d.row(i));
  }
  auto r = smote_oversample(d, 3);
  for (std::size_t i = d.n; i < r.data.n; ++i) {
    auto row = r.data.row(i);
    ASSERT_EQ(r.data.y[i], 1);
    bool on_segment = false;
    for (std::size_t a = 0; a < minority.size() && !on_segment; ++a) {
      for (std::size_t b = 0; b < minority.size() && !on_segment; ++b) {
        if (a == b) continue;
        // recover u from the first coordinate where the endpoints differ,
        // then check all coordinates agree
        double u = -1;
        bool ok = true;
        for (std::size_t j = 0; j < d.p; ++j) {
          const double den = minority[b][j] - minority[a][j];
          if (std::abs(den) > 1e-12) {
            u = (row[j] - minority[a][j]) / den;
            break;
          }
        }
        if (u < -1e-9 || u > 1.0 + 1e-9) continue;
        for (std::size_t j = 0; j < d.p; ++j) {
          const double want = minority[a][j] + u * (minority[b][j] - minority[a][j]);
          if (std::abs(row[j] - want) > 1e-9) {
            ok = false;
            break;
          }
        }
        on_segment = ok;
      }
    }
    EXPECT_TRUE(on_segment) << "synthetic row " << i << " not on any minority segment";
  }
}

TEST(Smote, DuplicationFallbackForSingleton) {
  auto d = random_matrix(21, 2, 0.5, 73);
  for (std::size_t i = 0; i < 21; ++i) d.y[i] = i == 0 ? 1 : 0;
  auto r = smote_oversample(d, 7);
  EXPECT_TRUE(r.duplication_fallback);
  EXPECT_EQ(r.data.n, 40u);
  for (std::size_t i = 21; i < 40; ++i) EXPECT_EQ(r.data.row(i), d.row(0));
}

TEST(Smote, DeterministicUnderSeed) {
  auto d = random_matrix(50, 2, 0.5, 79);
  for (std::size_t i = 0; i < 50; ++i) d.y[i] = i < 8 ? 1 : 0;
  auto a = smote_oversample(d, 11);
  auto b = smote_oversample(d, 11);
  EXPECT_EQ(a.data.x, b.data.x);
  auto c = smote_oversample(d, 12);
  EXPECT_NE(a.data.x, c.data.x);
}
