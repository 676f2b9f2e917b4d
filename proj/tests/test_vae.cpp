#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tabforge/preprocess.hpp"
#include "tabforge/simulator.hpp"
#include "tabforge/vae.hpp"

using namespace tabforge;
using namespace tabforge::vae;

namespace {

TableSchema tiny_schema() {
  TableSchema s;
  s.columns.push_back({"color", ColumnKind::Categorical, {"red", "green", "blue"}});
  s.columns.push_back({"x", ColumnKind::Numeric, {}});
  s.columns.push_back({"vax", ColumnKind::OutcomeBinary, {}});
  return s;
}

MixedTable tiny_table(std::size_t n, std::uint64_t seed) {
  MixedTable t(tiny_schema());
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    t.add_row({static_cast<double>(rng.index(3)), x, x > 0 ? 1.0 : 0.0});
  }
  return t;
}

VaeConfig tiny_config() {
  VaeConfig c;
  c.token_width = 4;
  c.batch_size = 32;
  return c;
}

}  // namespace

TEST(Tokenizer, ZeroNumericGivesBias) {
  VaeModel m(tiny_schema(), tiny_config(), 3);
  MixedTable t(tiny_schema());
  t.add_row({0, 0.0, 0});
  auto tokens = m.tokenize(t, {0});
  // column 1 is numeric: token = 0*w + b = b
  for (std::size_t j = 0; j < m.cfg.token_width; ++j)
    EXPECT_DOUBLE_EQ(tokens->value[1 * m.cfg.token_width + j], m.tok.bias[1]->value[j]);
}

TEST(Tokenizer, CategoricalLooksUpEmbeddingRow) {
  VaeModel m(tiny_schema(), tiny_config(), 3);
  MixedTable t(tiny_schema());
  t.add_row({2, 1.5, 1});  // category "blue" = row 2
  auto tokens = m.tokenize(t, {0});
  const std::size_t d = m.cfg.token_width;
  for (std::size_t j = 0; j < d; ++j)
    EXPECT_DOUBLE_EQ(tokens->value[j], m.tok.weight[0]->value[2 * d + j] + m.tok.bias[0]->value[j]);
}

TEST(Tokenizer, IdenticalRowsIdenticalTokens) {
  VaeModel m(tiny_schema(), tiny_config(), 5);
  MixedTable t(tiny_schema());
  t.add_row({1, 0.7, 1});
  t.add_row({1, 0.7, 1});
  auto tokens = m.tokenize(t, {0, 1});
  const std::size_t half = tokens->value.size() / 2;
  for (std::size_t j = 0; j < half; ++j) EXPECT_DOUBLE_EQ(tokens->value[j], tokens->value[half + j]);
}

TEST(Tokenizer, UnknownCategoryThrows) {
  VaeModel m(tiny_schema(), tiny_config(), 3);
  MixedTable t(tiny_schema());
  t.add_row({1, 0.0, 0});
  // corrupt the stored index path by constructing a table with a wider schema
  // is prevented by MixedTable itself, so drive tokenize directly
  TableSchema wider = tiny_schema();
  wider.columns[0].categories.push_back("extra");
  MixedTable t2(wider);
  t2.add_row({3, 0.0, 0});
  EXPECT_THROW(m.tokenize(t2, {0}), UnknownCategoryError);
}

TEST(Reparameterize, ZeroNoiseLimitCollapsesToMu) {
  auto mu = ad::constant({1, 2, 2}, {0.3, -0.7, 1.1, 0.0});
  auto ls = ad::constant({1, 2, 2}, std::vector<double>(4, -10.0));
  Rng rng(1);
  auto z = reparameterize(mu, ls, rng);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z->value[i], mu->value[i], 1e-4);
}

TEST(Reparameterize, FormulaIdentityWithKnownEps) {
  auto mu = ad::constant({1, 1, 3}, {1.0, 2.0, 3.0});
  auto ls = ad::constant({1, 1, 3}, {0.5, -0.5, 0.0});
  Rng rng(99);
  std::vector<double> eps = {Rng(99).normal(), 0, 0};
  Rng probe(99);
  eps = {probe.normal(), probe.normal(), probe.normal()};
  Rng rng2(99);
  auto z = reparameterize(mu, ls, rng2);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(z->value[i], mu->value[i] + eps[i] * std::exp(ls->value[i]), 1e-12);
}

TEST(Reparameterize, MonteCarloMeanAndVariance) {
  const double mu_v = 0.4, ls_v = -0.3;
  const double sigma = std::exp(ls_v);
  Rng rng(5);
  const int N = 10000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < N; ++i) {
    auto z = reparameterize(ad::constant({1, 1, 1}, {mu_v}), ad::constant({1, 1, 1}, {ls_v}), rng);
    const double d = z->value[0] - mu_v;
    sum += z->value[0];
    sumsq += d * d;
  }
  const double se = sigma / std::sqrt(static_cast<double>(N));
  EXPECT_NEAR(sum / N, mu_v, 3 * se);
  EXPECT_NEAR(sumsq / N, sigma * sigma, 0.1 * sigma * sigma);
}

TEST(Detokenize, UntrainedShapesAndFiniteness) {
  VaeModel m(tiny_schema(), tiny_config(), 11);
  auto t = tiny_table(6, 1);
  std::vector<std::size_t> rows = {0, 1, 2, 3, 4, 5};
  auto [mu, ls] = m.encode(m.tokenize(t, rows));
  EXPECT_EQ(mu->shape, (ad::Shape{6, 3, 4}));
  EXPECT_EQ(ls->shape, mu->shape);
  Rng rng(2);
  auto cols = m.detokenize(m.decode(reparameterize(mu, ls, rng)));
  ASSERT_EQ(cols.size(), 3u);
  EXPECT_EQ(cols[0]->shape, (ad::Shape{6, 3}));  // 3 categories
  EXPECT_EQ(cols[1]->shape, (ad::Shape{6, 1}));  // numeric
  EXPECT_EQ(cols[2]->shape, (ad::Shape{6, 2}));  // outcome
  for (const auto& c : cols)
    for (double v : c->value) EXPECT_TRUE(std::isfinite(v));
}

TEST(VaeLossFn, KlIdentities) {
  // mu=0, sigma=1 -> KL = 0
  VaeModel m(tiny_schema(), tiny_config(), 1);
  MixedTable t(tiny_schema());
  t.add_row({0, 0.0, 0});
  auto mu0 = ad::constant({1, 1, 1}, {0.0});
  auto ls0 = ad::constant({1, 1, 1}, {0.0});
  // direct KL computation through vae_loss needs matching recon cols; build a
  // one-numeric-column model for the clean closed form instead
  TableSchema num1;
  num1.columns.push_back({"x", ColumnKind::Numeric, {}});
  VaeConfig c1 = tiny_config();
  c1.token_width = 1;
  VaeModel m1(num1, c1, 1);
  MixedTable t1(num1);
  t1.add_row({0.7});
  auto perfect = std::vector<ad::Tensor>{ad::constant({1, 1}, {0.7})};
  auto l0 = vae_loss(m1, t1, {0}, perfect, mu0, ls0, 1.0);
  EXPECT_NEAR(l0.kl->scalar(), 0.0, 1e-15);
  EXPECT_NEAR(l0.recon->scalar(), 0.0, 1e-15);
  EXPECT_NEAR(l0.total->scalar(), 0.0, 1e-15);
  // mu=1, sigma=1 -> KL = 0.5
  auto mu1 = ad::constant({1, 1, 1}, {1.0});
  auto l1 = vae_loss(m1, t1, {0}, perfect, mu1, ls0, 2.0);
  EXPECT_NEAR(l1.kl->scalar(), 0.5, 1e-12);
  EXPECT_NEAR(l1.total->scalar(), 2.0 * 0.5, 1e-12);
}

TEST(VaeLossFn, KlNonnegativeProperty) {
  Rng rng(8);
  TableSchema num1;
  num1.columns.push_back({"x", ColumnKind::Numeric, {}});
  VaeConfig c1 = tiny_config();
  c1.token_width = 1;
  VaeModel m1(num1, c1, 1);
  MixedTable t1(num1);
  t1.add_row({0.0});
  auto perfect = std::vector<ad::Tensor>{ad::constant({1, 1}, {0.0})};
  for (int i = 0; i < 200; ++i) {
    auto mu = ad::constant({1, 1, 1}, {rng.uniform(-3, 3)});
    auto ls = ad::constant({1, 1, 1}, {rng.uniform(-2, 2)});
    auto l = vae_loss(m1, t1, {0}, perfect, mu, ls, 1.0);
    EXPECT_GE(l.kl->scalar(), -1e-12);
  }
}

TEST(VaeLossFn, GradientMatchesFiniteDifferences) {
  // every parameter of the full objective on a 4-row table
  auto t = tiny_table(4, 3);
  VaeConfig cfg = tiny_config();
  VaeModel m(t.schema(), cfg, 7);
  std::vector<std::size_t> rows = {0, 1, 2, 3};
  auto forward = [&]() {
    auto tokens = m.tokenize(t, rows);
    auto [mu, ls] = m.encode(tokens);
    Rng rng(55);  // fixed noise each evaluation
    auto z = reparameterize(mu, ls, rng);
    auto cols = m.detokenize(m.decode(z));
    return vae_loss(m, t, rows, cols, mu, ls, 0.5).total;
  };
  auto params = m.parameters();
  for (auto& p : params) p->zero_grad();
  auto loss = forward();
  ad::backward(loss);
  std::vector<double> saved_grads;
  for (auto& p : params)
    for (double g : p->grad) saved_grads.push_back(g);
  double worst = 0;
  std::size_t k = 0;
  const double h = 1e-5;
  for (auto& p : params) {
    for (std::size_t j = 0; j < p->value.size(); ++j, ++k) {
      const double keep = p->value[j];
      p->value[j] = keep + h;
      const double up = forward()->scalar();
      p->value[j] = keep - h;
      const double dn = forward()->scalar();
      p->value[j] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = saved_grads[k];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainVae, LossHalvesOnSmallTable) {
  auto t = tiny_table(200, 17);
  VaeConfig cfg = tiny_config();
  cfg.max_epochs = 50;
  cfg.patience = 50;
  auto r = train_vae(t, cfg, 4);
  ASSERT_GE(r.curve.total.size(), 2u);
  EXPECT_LT(r.curve.total.back(), 0.5 * r.curve.total.front());
}

TEST(TrainVae, BetaZeroReconstructsNoWorse) {
  auto t = tiny_table(120, 23);
  VaeConfig cfg = tiny_config();
  cfg.max_epochs = 40;
  cfg.patience = 40;
  VaeConfig free = cfg;
  free.beta_start = 0.0;
  free.beta_min = 0.0;
  VaeConfig pen = cfg;
  pen.beta_start = 1.0;
  pen.beta_decay = 1.0;
  pen.beta_min = 1.0;
  auto r_free = train_vae(t, free, 9);
  auto r_pen = train_vae(t, pen, 9);
  EXPECT_LE(r_free.curve.recon.back(), r_pen.curve.recon.back() + 1e-9);
}

TEST(TrainVae, DeterministicCurves) {
  auto t = tiny_table(80, 2);
  VaeConfig cfg = tiny_config();
  cfg.max_epochs = 10;
  auto a = train_vae(t, cfg, 31);
  auto b = train_vae(t, cfg, 31);
  EXPECT_EQ(a.curve.total, b.curve.total);
  EXPECT_EQ(a.curve.kl, b.curve.kl);
}

TEST(TrainVae, MemorizesTinyTable) {
  auto t = tiny_table(10, 41);
  VaeConfig cfg = tiny_config();
  cfg.batch_size = 10;
  cfg.max_epochs = 800;
  cfg.patience = 800;
  cfg.beta_start = 0.001;
  auto r = train_vae(t, cfg, 12);
  // deterministic (mu) round trip: categorical argmax should match inputs
  std::vector<std::size_t> rows(10);
  for (std::size_t i = 0; i < 10; ++i) rows[i] = i;
  auto [mu, ls] = r.model.encode(r.model.tokenize(t, rows));
  auto cols = r.model.detokenize(r.model.decode(mu));
  int cat_hits = 0;
  double num_mae = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double* logits = cols[0]->value.data() + i * 3;
    if (std::max_element(logits, logits + 3) - logits == static_cast<long>(t.cell(i, 0))) ++cat_hits;
    num_mae += std::abs(cols[1]->value[i] - t.cell(i, 1));
  }
  EXPECT_GE(cat_hits, 9);
  EXPECT_LT(num_mae / 10.0, 0.1);
}

TEST(VaeModelIo, RoundTripAndSchemaGuard) {
  auto t = tiny_table(20, 1);
  VaeConfig cfg = tiny_config();
  cfg.max_epochs = 5;
  auto r = train_vae(t, cfg, 3);
  const std::string path = std::filesystem::temp_directory_path() / "tf_vae_test.bin";
  r.model.save(path);
  auto loaded = VaeModel::load(path, t.schema());
  auto a = encode_latents(r.model, t);
  auto b = encode_latents(loaded, t);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  // wrong schema refused
  TableSchema other = tiny_schema();
  other.columns[0].name = "colour";
  EXPECT_THROW(VaeModel::load(path, other), SchemaMismatchError);
  std::remove(path.c_str());
}

TEST(ShapeRoundTrip, EverySchemaShapeSurvives) {
  auto sim = sim::simulate_registry(300, 6, sim::SimulatorProfile{}.with_vaccine("BCG"));
  auto q = QuantileSet::fit(sim);
  auto tq = q.apply(sim);
  VaeModel m(sim.schema(), tiny_config(), 2);
  std::vector<std::size_t> rows = {0, 5, 17};
  auto [mu, ls] = m.encode(m.tokenize(tq, rows));
  Rng rng(4);
  auto cols = m.detokenize(m.decode(reparameterize(mu, ls, rng)));
  ASSERT_EQ(cols.size(), sim.schema().size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto& col = sim.schema().columns[c];
    const std::size_t want =
        col.kind == ColumnKind::Numeric ? 1
        : col.kind == ColumnKind::Categorical ? col.categories.size() : 2;
    EXPECT_EQ(cols[c]->shape, (ad::Shape{3, want}));
  }
}
