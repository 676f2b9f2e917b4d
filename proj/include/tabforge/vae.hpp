#pragma once

// Mixed-type tokenizer, transformer encoder with mu / log-sigma heads,
// reparameterization, decoder, detokenizer, and beta-annealed VAE training.
// Numeric inputs are expected in quantile-transformed (standard normal) space;
// outcome columns are modelled as two-category columns.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "tabforge/adam.hpp"
#include "tabforge/common.hpp"
#include "tabforge/preprocess.hpp"
#include "tabforge/serialize.hpp"
#include "tabforge/table.hpp"
#include "tabforge/tensor.hpp"

namespace tabforge::vae {

using ad::Tensor;

class UnknownCategoryError : public Error {
 public:
  explicit UnknownCategoryError(const std::string& msg) : Error("unknown category: " + msg) {}
};

struct VaeConfig {
  std::size_t token_width{4};  // d
  bool use_attention{true};    // false: pure-MLP mixing fallback
  // Reconstruction saturates within a few hundred epochs; training much past
  // that point keeps shrinking beta and stretches the latent distribution into
  // a shape the downstream diffusion prior matches poorly, so the default
  // epoch budget is deliberately short.
  std::size_t max_epochs{400};
  std::size_t batch_size{256};
  double learning_rate{1e-3};
  double beta_start{0.01};
  double beta_decay{0.9};
  double beta_min{1e-6};
  double plateau_tol{1e-3};
  std::size_t patience{400};  // early stop after this many epochs without improvement
};

namespace detail_vae {

inline std::vector<double> init(Rng& rng, std::size_t n, double scl) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() * scl;
  return v;
}

/// Effective category count: categorical columns keep their list, outcome
/// columns are {0,1}, numeric columns report 0.
inline std::size_t cat_count(const Column& c) {
  switch (c.kind) {
    case ColumnKind::Numeric: return 0;
    case ColumnKind::Categorical: return c.categories.size();
    case ColumnKind::OutcomeBinary: return 2;
  }
  return 0;
}

}  // namespace detail_vae

/// Per-column token parameters (Eq.-style linear map for numerics, embedding
/// lookup for categoricals).
struct Tokenizer {
  // numeric: w (1,d), b (1,d); categorical: W (C,d), b (1,d)
  std::vector<Tensor> weight, bias;
};

/// One self-attention + feed-forward block operating on (B, C, d).
struct Block {
  Tensor Wq, Wk, Wv, Wo;  // (d,d)
  Tensor W1, b1, W2, b2;  // ffn (d,4d),(1,4d),(4d,d),(1,d)
};

class VaeModel {
 public:
  TableSchema schema;
  VaeConfig cfg;
  Tokenizer tok;
  std::vector<Block> enc_blocks, dec_blocks;
  Tensor mu_W, mu_b, ls_W, ls_b;        // token-wise heads (d,d),(1,d)
  std::vector<Tensor> detok_W, detok_b;  // per column: numeric (d,1)/(1,1), cat (d,C)/(1,C)

  VaeModel() = default;

  VaeModel(TableSchema s, VaeConfig c, std::uint64_t seed) : schema(std::move(s)), cfg(c) {
    Rng rng(seed ^ 0x5aul);
    const std::size_t d = cfg.token_width;
    const double scl = 0.3 / std::sqrt(static_cast<double>(d));
    for (const auto& col : schema.columns) {
      const std::size_t C = detail_vae::cat_count(col);
      if (C == 0) {
        tok.weight.push_back(ad::param({1, d}, detail_vae::init(rng, d, scl)));
        detok_W.push_back(ad::param({d, 1}, detail_vae::init(rng, d, scl)));
        detok_b.push_back(ad::param({1, 1}, {0.0}));
      } else {
        tok.weight.push_back(ad::param({C, d}, detail_vae::init(rng, C * d, scl)));
        detok_W.push_back(ad::param({d, C}, detail_vae::init(rng, d * C, scl)));
        detok_b.push_back(ad::param({1, C}, std::vector<double>(C, 0.0)));
      }
      tok.bias.push_back(ad::param({1, d}, detail_vae::init(rng, d, scl)));
    }
    auto make_block = [&] {
      Block b;
      b.Wq = ad::param({d, d}, detail_vae::init(rng, d * d, scl));
      b.Wk = ad::param({d, d}, detail_vae::init(rng, d * d, scl));
      b.Wv = ad::param({d, d}, detail_vae::init(rng, d * d, scl));
      b.Wo = ad::param({d, d}, detail_vae::init(rng, d * d, scl));
      b.W1 = ad::param({d, 4 * d}, detail_vae::init(rng, 4 * d * d, scl));
      b.b1 = ad::param({1, 4 * d}, std::vector<double>(4 * d, 0.0));
      b.W2 = ad::param({4 * d, d}, detail_vae::init(rng, 4 * d * d, scl));
      b.b2 = ad::param({1, d}, std::vector<double>(d, 0.0));
      return b;
    };
    for (int i = 0; i < 2; ++i) enc_blocks.push_back(make_block());
    for (int i = 0; i < 2; ++i) dec_blocks.push_back(make_block());
    mu_W = ad::param({d, d}, detail_vae::init(rng, d * d, scl));
    mu_b = ad::param({1, d}, std::vector<double>(d, 0.0));
    ls_W = ad::param({d, d}, detail_vae::init(rng, d * d, scl));
    ls_b = ad::param({1, d}, std::vector<double>(d, 0.0));
  }

  std::size_t n_cols() const { return schema.size(); }
  std::size_t latent_dim() const { return schema.size() * cfg.token_width; }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p;
    for (const auto& t : tok.weight) p.push_back(t);
    for (const auto& t : tok.bias) p.push_back(t);
    for (const auto* blocks : {&enc_blocks, &dec_blocks})
      for (const auto& b : *blocks)
        for (const auto& t : {b.Wq, b.Wk, b.Wv, b.Wo, b.W1, b.b1, b.W2, b.b2}) p.push_back(t);
    for (const auto& t : {mu_W, mu_b, ls_W, ls_b}) p.push_back(t);
    for (const auto& t : detok_W) p.push_back(t);
    for (const auto& t : detok_b) p.push_back(t);
    return p;
  }

  /// Token matrices for a batch of rows: (B, C, d). Rows must already be in
  /// quantile-transformed space for numeric columns.
  Tensor tokenize(const MixedTable& t, const std::vector<std::size_t>& rows) const {
    const std::size_t B = rows.size(), d = cfg.token_width;
    std::vector<Tensor> col_tokens;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::size_t C = detail_vae::cat_count(schema.columns[c]);
      Tensor e;
      if (C == 0) {
        std::vector<double> x(B);
        for (std::size_t i = 0; i < B; ++i) x[i] = t.cell(rows[i], c);
        e = ad::add(ad::matmul(ad::constant({B, 1}, std::move(x)), tok.weight[c]), tok.bias[c]);
      } else {
        std::vector<double> oh(B * C, 0.0);
        for (std::size_t i = 0; i < B; ++i) {
          const auto v = static_cast<long>(t.cell(rows[i], c));
          if (v < 0 || v >= static_cast<long>(C))
            throw UnknownCategoryError(schema.columns[c].name + " index " + std::to_string(v));
          oh[i * C + static_cast<std::size_t>(v)] = 1.0;
        }
        e = ad::add(ad::matmul(ad::constant({B, C}, std::move(oh)), tok.weight[c]), tok.bias[c]);
      }
      col_tokens.push_back(ad::reshape(e, {B, 1, d}));
    }
    return ad::concat(col_tokens, 1);
  }

  Tensor run_blocks(const std::vector<Block>& blocks, Tensor x) const {
    const std::size_t B = x->shape[0], C = x->shape[1], d = cfg.token_width;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (const auto& b : blocks) {
      Tensor mixed;
      if (cfg.use_attention) {
        auto flat = ad::reshape(x, {B * C, d});
        auto q = ad::reshape(ad::matmul(flat, b.Wq), {B, C, d});
        auto k = ad::reshape(ad::matmul(flat, b.Wk), {B, C, d});
        auto v = ad::reshape(ad::matmul(flat, b.Wv), {B, C, d});
        auto att = ad::softmax(ad::scale(ad::bmm(q, ad::transpose_last(k)), inv_sqrt_d));
        auto ctx = ad::reshape(ad::bmm(att, v), {B * C, d});
        mixed = ad::reshape(ad::matmul(ctx, b.Wo), {B, C, d});
      } else {
        // MLP fallback: token-wise projection only
        auto flat = ad::reshape(x, {B * C, d});
        mixed = ad::reshape(ad::matmul(ad::tanh(ad::matmul(flat, b.Wq)), b.Wo), {B, C, d});
      }
      x = ad::add(x, mixed);
      auto flat = ad::reshape(x, {B * C, d});
      auto h = ad::relu(ad::add(ad::matmul(flat, b.W1), b.b1));
      auto ff = ad::reshape(ad::add(ad::matmul(h, b.W2), b.b2), {B, C, d});
      x = ad::add(x, ff);
    }
    return x;
  }

  /// (mu, log sigma), each (B, C, d). log sigma is clamped to [-10, 10].
  std::pair<Tensor, Tensor> encode(const Tensor& tokens) const {
    const std::size_t B = tokens->shape[0], C = tokens->shape[1], d = cfg.token_width;
    auto h = run_blocks(enc_blocks, tokens);
    auto flat = ad::reshape(h, {B * C, d});
    auto mu = ad::reshape(ad::add(ad::matmul(flat, mu_W), mu_b), {B, C, d});
    auto ls = ad::clamp(ad::reshape(ad::add(ad::matmul(flat, ls_W), ls_b), {B, C, d}), -10.0, 10.0);
    return {mu, ls};
  }

  Tensor decode(const Tensor& z) const { return run_blocks(dec_blocks, z); }

  /// Per-column reconstructions from decoded tokens: numeric -> (B,1) value,
  /// categorical -> (B,C_i) logits.
  std::vector<Tensor> detokenize(const Tensor& tokens_hat) const {
    const std::size_t B = tokens_hat->shape[0], d = cfg.token_width;
    std::vector<Tensor> out;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      auto tokc = ad::reshape(ad::slice(tokens_hat, 1, c, 1), {B, d});
      out.push_back(ad::add(ad::matmul(tokc, detok_W[c]), detok_b[c]));
    }
    return out;
  }

  // ------------------------------ persistence ------------------------------

  void save(const std::string& path) const {
    io::Container c;
    c.schema_hash = schema.hash();
    c.meta = {static_cast<double>(cfg.token_width), cfg.use_attention ? 1.0 : 0.0,
              static_cast<double>(schema.size())};
    auto put = [&](const std::string& name, const Tensor& t) {
      c.blocks[name] = io::Block{t->shape, t->value};
    };
    for (std::size_t i = 0; i < schema.size(); ++i) {
      put("tok_w" + std::to_string(i), tok.weight[i]);
      put("tok_b" + std::to_string(i), tok.bias[i]);
      put("det_w" + std::to_string(i), detok_W[i]);
      put("det_b" + std::to_string(i), detok_b[i]);
    }
    auto put_blocks = [&](const char* prefix, const std::vector<Block>& blocks) {
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const std::string p = prefix + std::to_string(i) + "_";
        put(p + "Wq", b.Wq);
        put(p + "Wk", b.Wk);
        put(p + "Wv", b.Wv);
        put(p + "Wo", b.Wo);
        put(p + "W1", b.W1);
        put(p + "b1", b.b1);
        put(p + "W2", b.W2);
        put(p + "b2", b.b2);
      }
    };
    put_blocks("enc", enc_blocks);
    put_blocks("dec", dec_blocks);
    put("mu_W", mu_W);
    put("mu_b", mu_b);
    put("ls_W", ls_W);
    put("ls_b", ls_b);
    c.save(path);
  }

  static VaeModel load(const std::string& path, const TableSchema& schema, VaeConfig cfg = {}) {
    auto c = io::Container::load(path, schema.hash());
    cfg.token_width = static_cast<std::size_t>(c.meta.at(0));
    cfg.use_attention = c.meta.at(1) != 0.0;
    VaeModel m(schema, cfg, /*seed=*/1);
    auto get = [&](const std::string& name, Tensor& t) {
      const auto& b = c.blocks.at(name);
      if (b.shape != t->shape) throw Error("parameter shape mismatch for " + name + " in " + path);
      t->value = b.data;
    };
    for (std::size_t i = 0; i < schema.size(); ++i) {
      get("tok_w" + std::to_string(i), m.tok.weight[i]);
      get("tok_b" + std::to_string(i), m.tok.bias[i]);
      get("det_w" + std::to_string(i), m.detok_W[i]);
      get("det_b" + std::to_string(i), m.detok_b[i]);
    }
    auto get_blocks = [&](const char* prefix, std::vector<Block>& blocks) {
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto& b = blocks[i];
        const std::string p = prefix + std::to_string(i) + "_";
        get(p + "Wq", b.Wq);
        get(p + "Wk", b.Wk);
        get(p + "Wv", b.Wv);
        get(p + "Wo", b.Wo);
        get(p + "W1", b.W1);
        get(p + "b1", b.b1);
        get(p + "W2", b.W2);
        get(p + "b2", b.b2);
      }
    };
    get_blocks("enc", m.enc_blocks);
    get_blocks("dec", m.dec_blocks);
    get("mu_W", m.mu_W);
    get("mu_b", m.mu_b);
    get("ls_W", m.ls_W);
    get("ls_b", m.ls_b);
    return m;
  }
};

/// zhat = mu + eps * exp(log sigma), eps ~ N(0, I) drawn from rng.
inline Tensor reparameterize(const Tensor& mu, const Tensor& log_sigma, Rng& rng) {
  std::vector<double> eps(mu->value.size());
  for (auto& e : eps) e = rng.normal();
  auto epst = ad::constant(mu->shape, std::move(eps));
  return ad::add(mu, ad::mul(epst, ad::exp(log_sigma)));
}

struct VaeLoss {
  Tensor total, recon, kl;
};

/// beta-VAE objective: numeric mean-squared error plus categorical
/// cross-entropy (each averaged over the batch, summed over columns) and the
/// Gaussian KL to N(0, I) averaged over the batch.
inline VaeLoss vae_loss(const VaeModel& m, const MixedTable& t, const std::vector<std::size_t>& rows,
                        const std::vector<Tensor>& recon_cols, const Tensor& mu, const Tensor& log_sigma,
                        double beta) {
  const std::size_t B = rows.size();
  Tensor recon = ad::scalar_const(0.0);
  for (std::size_t c = 0; c < m.schema.size(); ++c) {
    const std::size_t C = detail_vae::cat_count(m.schema.columns[c]);
    if (C == 0) {
      std::vector<double> target(B);
      for (std::size_t i = 0; i < B; ++i) target[i] = t.cell(rows[i], c);
      auto diff = ad::sub(recon_cols[c], ad::constant({B, 1}, std::move(target)));
      recon = ad::add(recon, ad::mean(ad::square(diff)));
    } else {
      std::vector<double> oh(B * C, 0.0);
      for (std::size_t i = 0; i < B; ++i)
        oh[i * C + static_cast<std::size_t>(t.cell(rows[i], c))] = 1.0;
      auto logp = ad::log_softmax(recon_cols[c]);
      auto picked = ad::sum(ad::mul(logp, ad::constant({B, C}, std::move(oh))));
      recon = ad::add(recon, ad::scale(picked, -1.0 / static_cast<double>(B)));
    }
  }
  // KL(N(mu, sigma) || N(0,1)) = 1/2 (mu^2 + sigma^2 - 1 - 2 log sigma), summed
  // over latent elements, averaged over the batch
  auto sigma2 = ad::exp(ad::scale(log_sigma, 2.0));
  auto per_elem = ad::sub(ad::add(ad::square(mu), sigma2),
                          ad::add(ad::constant(mu->shape, std::vector<double>(mu->value.size(), 1.0)),
                                  ad::scale(log_sigma, 2.0)));
  auto kl = ad::scale(ad::sum(per_elem), 0.5 / static_cast<double>(mu->shape[0]));
  auto total = ad::add(recon, ad::scale(kl, beta));
  return {total, recon, kl};
}

/// Posterior-mean latents (flattened C*d per row) for every row of a table;
/// the deterministic encoding the diffusion stage trains on.
inline std::vector<std::vector<double>> encode_latents(const VaeModel& model, const MixedTable& table) {
  std::vector<std::vector<double>> out;
  out.reserve(table.n_rows());
  const std::size_t Cd = model.latent_dim();
  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < table.n_rows(); start += chunk) {
    const std::size_t len = std::min(chunk, table.n_rows() - start);
    std::vector<std::size_t> rows(len);
    for (std::size_t i = 0; i < len; ++i) rows[i] = start + i;
    auto [mu, ls] = model.encode(model.tokenize(table, rows));
    for (std::size_t i = 0; i < len; ++i)
      out.emplace_back(mu->value.begin() + static_cast<long>(i * Cd),
                       mu->value.begin() + static_cast<long>((i + 1) * Cd));
  }
  return out;
}

struct TrainCurve {
  std::vector<double> total, recon, kl, beta;
};

struct TrainedVae {
  VaeModel model;
  TrainCurve curve;
};

/// Full training loop: Adam, shuffled mini-batches, beta annealed downward on
/// reconstruction plateaus, early stop after `patience` epochs without total
/// loss improvement. Deterministic under seed.
inline TrainedVae train_vae(const MixedTable& table, const VaeConfig& cfg, std::uint64_t seed) {
  if (table.n_rows() == 0) throw Error("train_vae: empty table");
  VaeModel model(table.schema(), cfg, seed);
  ad::Adam opt(model.parameters(), cfg.learning_rate);
  Rng rng(seed ^ 0x7f4a7c15ull);
  TrainCurve curve;

  std::vector<std::size_t> order(table.n_rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double beta = cfg.beta_start;
  double best_total = std::numeric_limits<double>::infinity();
  double prev_recon = std::numeric_limits<double>::infinity();
  double initial_total = 0.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double ep_total = 0, ep_recon = 0, ep_kl = 0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + start + len);
      opt.zero_grad();
      auto tokens = model.tokenize(table, batch);
      auto [mu, ls] = model.encode(tokens);
      auto z = reparameterize(mu, ls, rng);
      auto recon_cols = model.detokenize(model.decode(z));
      auto loss = vae_loss(model, table, batch, recon_cols, mu, ls, beta);
      ad::backward(loss.total);
      opt.step();
      ep_total += loss.total->scalar();
      ep_recon += loss.recon->scalar();
      ep_kl += loss.kl->scalar();
      ++n_batches;
    }
    ep_total /= static_cast<double>(n_batches);
    ep_recon /= static_cast<double>(n_batches);
    ep_kl /= static_cast<double>(n_batches);
    curve.total.push_back(ep_total);
    curve.recon.push_back(ep_recon);
    curve.kl.push_back(ep_kl);
    curve.beta.push_back(beta);

    if (epoch == 0) initial_total = ep_total;
    if (!std::isfinite(ep_total) || ep_total > 10.0 * initial_total + 10.0)
      throw DivergedError("vae epoch " + std::to_string(epoch) + " loss " + std::to_string(ep_total));

    if (ep_recon > prev_recon - cfg.plateau_tol) beta = std::max(cfg.beta_min, beta * cfg.beta_decay);
    prev_recon = ep_recon;

    if (ep_total < best_total - 1e-12) {
      best_total = ep_total;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return {std::move(model), std::move(curve)};
}

}  // namespace tabforge::vae
