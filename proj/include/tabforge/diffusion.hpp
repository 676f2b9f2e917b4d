#pragma once

// Score-based diffusion in the VAE latent space: forward noising
// z_t = z_0 + sigma(t) eps, denoising-score-matching training of a noise
// predictor, and Euler-Maruyama integration of the reverse SDE
//   dz = -2 sigma'(t) sigma(t) grad log p dt + sqrt(2 sigma'(t) sigma(t)) dw,
// with the score substituted as -eps_theta(z, t) / sigma(t).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tabforge/adam.hpp"
#include "tabforge/common.hpp"
#include "tabforge/preprocess.hpp"
#include "tabforge/serialize.hpp"
#include "tabforge/table.hpp"
#include "tabforge/tensor.hpp"
#include "tabforge/vae.hpp"

namespace tabforge::diffusion {

using ad::Tensor;

/// Linear schedule sigma(t) = sigma_min + (sigma_max - sigma_min) t on [0,1];
/// sigma' is constant, which keeps the reverse-SDE coefficients closed-form.
/// Training times are sampled uniformly on [t_min, 1] to stay away from the
/// score singularity at sigma -> 0.
struct NoiseSchedule {
  double sigma_min{0.0};
  double sigma_max{1.0};
  double t_min{0.002};

  double sigma(double t) const { return sigma_min + (sigma_max - sigma_min) * t; }
  double sigma_dot(double) const { return sigma_max - sigma_min; }
  double sample_t(Rng& rng) const { return rng.uniform(t_min, 1.0); }
};

struct DenoiserConfig {
  std::size_t hidden{256};
  std::size_t time_embed{32};
  std::size_t steps{10000};      // training steps (one batch each)
  std::size_t batch_size{256};
  double learning_rate{1e-3};
  // Per-dimension standardization of the training latents to a small common
  // scale before diffusion. The reverse SDE starts from N(0, sigma_max^2); that
  // prior is only correct when sigma_max dominates the data scale, and encoded
  // latents have per-dimension scales anywhere from ~0.03 to ~3. Centering and
  // shrinking them to `latent_target` makes the residual prior-mismatch bias
  // quadratically small. The transform is stored in the denoiser and inverted
  // by the sampler.
  bool normalize{true};
  double latent_target{0.35};
  // Exponential moving average of the weights; the averaged iterate is what
  // the sampler uses (0 disables).
  double ema_decay{0.999};
};

/// MLP noise predictor eps_theta(z_t, t): input is the flattened latent
/// concatenated with a sinusoidal embedding of t; three hidden layers.
class Denoiser {
 public:
  std::size_t latent_dim{0};
  DenoiserConfig cfg;
  Tensor W1, b1, W2, b2, W3, b3, Wout, bout;
  // raw latent = normalized latent * latent_scale + latent_shift (identity when
  // empty; filled in by train_denoiser when cfg.normalize is set)
  std::vector<double> latent_shift, latent_scale;

  Denoiser() = default;

  Denoiser(std::size_t latent, DenoiserConfig c, std::uint64_t seed) : latent_dim(latent), cfg(c) {
    Rng rng(seed ^ 0xd1f5ull);
    const std::size_t in = latent + cfg.time_embed, h = cfg.hidden;
    auto init = [&](std::size_t n, std::size_t fan_in) {
      std::vector<double> v(n);
      const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& x : v) x = rng.normal() * s;
      return v;
    };
    W1 = ad::param({in, h}, init(in * h, in));
    b1 = ad::param({1, h}, std::vector<double>(h, 0.0));
    W2 = ad::param({h, h}, init(h * h, h));
    b2 = ad::param({1, h}, std::vector<double>(h, 0.0));
    W3 = ad::param({h, h}, init(h * h, h));
    b3 = ad::param({1, h}, std::vector<double>(h, 0.0));
    // zero-init output layer: the initial predictor is the zero function
    Wout = ad::param({h, latent}, std::vector<double>(h * latent, 0.0));
    bout = ad::param({1, latent}, std::vector<double>(latent, 0.0));
  }

  std::vector<Tensor> parameters() const { return {W1, b1, W2, b2, W3, b3, Wout, bout}; }

  std::vector<double> time_embedding(double t) const {
    std::vector<double> e(cfg.time_embed);
    const std::size_t half = cfg.time_embed / 2;
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(1000.0, static_cast<double>(i) / static_cast<double>(half));
      e[2 * i] = std::sin(t * freq);
      e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
  }

  /// Predicted noise for a batch: z (B, latent), per-row times t (size B).
  Tensor forward(const Tensor& z, const std::vector<double>& t) const {
    const std::size_t B = z->shape[0];
    std::vector<double> emb(B * cfg.time_embed);
    for (std::size_t i = 0; i < B; ++i) {
      auto e = time_embedding(t[i]);
      std::copy(e.begin(), e.end(), emb.begin() + static_cast<long>(i * cfg.time_embed));
    }
    auto x = ad::concat({z, ad::constant({B, cfg.time_embed}, std::move(emb))}, 1);
    auto h1 = ad::relu(ad::add(ad::matmul(x, W1), b1));
    auto h2 = ad::relu(ad::add(ad::matmul(h1, W2), b2));
    auto h3 = ad::relu(ad::add(ad::matmul(h2, W3), b3));
    return ad::add(ad::matmul(h3, Wout), bout);
  }

  /// Plain-value forward pass used by the sampler (no graph).
  std::vector<double> predict(const std::vector<double>& z_row, double t) const {
    auto z = ad::constant({1, latent_dim}, z_row);
    return forward(z, {t})->value;
  }

  void save(const std::string& path, std::uint64_t schema_hash, const NoiseSchedule& sched) const {
    io::Container c;
    c.schema_hash = schema_hash;
    c.meta = {static_cast<double>(latent_dim), static_cast<double>(cfg.hidden),
              static_cast<double>(cfg.time_embed), sched.sigma_min, sched.sigma_max, sched.t_min};
    const char* names[] = {"W1", "b1", "W2", "b2", "W3", "b3", "Wout", "bout"};
    auto ps = parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) c.blocks[names[i]] = io::Block{ps[i]->shape, ps[i]->value};
    if (!latent_shift.empty()) {
      c.blocks["latent_shift"] = io::Block{{latent_shift.size()}, latent_shift};
      c.blocks["latent_scale"] = io::Block{{latent_scale.size()}, latent_scale};
    }
    c.save(path);
  }

  static std::pair<Denoiser, NoiseSchedule> load(const std::string& path, std::uint64_t schema_hash) {
    auto c = io::Container::load(path, schema_hash);
    DenoiserConfig cfg;
    cfg.hidden = static_cast<std::size_t>(c.meta.at(1));
    cfg.time_embed = static_cast<std::size_t>(c.meta.at(2));
    Denoiser d(static_cast<std::size_t>(c.meta.at(0)), cfg, 1);
    NoiseSchedule sched;
    sched.sigma_min = c.meta.at(3);
    sched.sigma_max = c.meta.at(4);
    sched.t_min = c.meta.at(5);
    const char* names[] = {"W1", "b1", "W2", "b2", "W3", "b3", "Wout", "bout"};
    Tensor* ps[] = {&d.W1, &d.b1, &d.W2, &d.b2, &d.W3, &d.b3, &d.Wout, &d.bout};
    for (std::size_t i = 0; i < 8; ++i) {
      const auto& b = c.blocks.at(names[i]);
      if (b.shape != (*ps[i])->shape) throw Error("denoiser parameter shape mismatch in " + path);
      (*ps[i])->value = b.data;
    }
    if (c.blocks.count("latent_shift")) {
      d.latent_shift = c.blocks.at("latent_shift").data;
      d.latent_scale = c.blocks.at("latent_scale").data;
    }
    return {std::move(d), sched};
  }
};

/// Forward noising z_t = z_0 + sigma(t) eps for a batch of latent rows.
inline std::vector<std::vector<double>> forward_noise(const std::vector<std::vector<double>>& z0,
                                                      double t, const NoiseSchedule& sched, Rng& rng) {
  if (t < 0.0 || t > 1.0) throw Error("forward_noise: t outside [0,1]");
  const double s = sched.sigma(t);
  auto out = z0;
  for (auto& row : out)
    for (auto& v : row) v += s * rng.normal();
  return out;
}

/// Denoising-score-matching objective with the time draws and the injected
/// noise supplied by the caller; `forward_fn` maps (z_t, times) to predicted
/// noise. The mean is over rows, the norm over latent coordinates.
template <typename ForwardFn>
Tensor dsm_loss_given(const std::vector<std::vector<double>>& z0_batch, ForwardFn&& forward_fn,
                      const NoiseSchedule& sched, const std::vector<double>& t,
                      const std::vector<double>& eps) {
  if (z0_batch.empty()) throw Error("dsm_loss: empty batch");
  const std::size_t B = z0_batch.size(), D = z0_batch[0].size();
  if (t.size() != B || eps.size() != B * D) throw ShapeMismatchError("dsm_loss: t/eps sizes");
  std::vector<double> zt(B * D);
  for (std::size_t i = 0; i < B; ++i) {
    const double s = sched.sigma(t[i]);
    for (std::size_t j = 0; j < D; ++j) zt[i * D + j] = z0_batch[i][j] + s * eps[i * D + j];
  }
  auto pred = forward_fn(ad::constant({B, D}, std::move(zt)), t);
  auto diff = ad::sub(pred, ad::constant({B, D}, eps));
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(B));
}

/// Standard DSM batch: t ~ p(t), eps ~ N(0, I) drawn from rng.
inline Tensor dsm_loss(const std::vector<std::vector<double>>& z0_batch, const Denoiser& den,
                       const NoiseSchedule& sched, Rng& rng) {
  if (z0_batch.empty()) throw Error("dsm_loss: empty batch");
  const std::size_t B = z0_batch.size(), D = z0_batch[0].size();
  std::vector<double> eps(B * D), t(B);
  for (std::size_t i = 0; i < B; ++i) t[i] = sched.sample_t(rng);
  for (auto& e : eps) e = rng.normal();
  return dsm_loss_given(
      z0_batch, [&](const Tensor& zt, const std::vector<double>& tv) { return den.forward(zt, tv); },
      sched, t, eps);
}

struct TrainedDenoiser {
  Denoiser denoiser;
  std::vector<double> curve;
};

/// Train the noise predictor on encoded latents (posterior means of the
/// training rows). Deterministic under seed.
inline TrainedDenoiser train_denoiser(const std::vector<std::vector<double>>& latents,
                                      const NoiseSchedule& sched, const DenoiserConfig& cfg,
                                      std::uint64_t seed) {
  if (latents.empty()) throw Error("train_denoiser: no latents");
  const std::size_t D = latents[0].size();
  Denoiser den(D, cfg, seed);

  std::vector<std::vector<double>> normalized;
  const std::vector<std::vector<double>>* data = &latents;
  if (cfg.normalize) {
    den.latent_shift.assign(D, 0.0);
    den.latent_scale.assign(D, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
      double mu = 0, var = 0;
      for (const auto& r : latents) mu += r[j];
      mu /= static_cast<double>(latents.size());
      for (const auto& r : latents) var += (r[j] - mu) * (r[j] - mu);
      var /= static_cast<double>(latents.size());
      den.latent_shift[j] = mu;
      den.latent_scale[j] = std::sqrt(var) / cfg.latent_target;
    }
    normalized.assign(latents.size(), std::vector<double>(D, 0.0));
    for (std::size_t i = 0; i < latents.size(); ++i)
      for (std::size_t j = 0; j < D; ++j)
        if (den.latent_scale[j] > 1e-12)
          normalized[i][j] = (latents[i][j] - den.latent_shift[j]) / den.latent_scale[j];
    data = &normalized;
  }

  ad::Adam opt(den.parameters(), cfg.learning_rate);
  Rng rng(seed ^ 0x9277ull);
  auto params = den.parameters();
  // zero-initialized, bias-corrected EMA (same correction as Adam's moments),
  // so short runs are not dragged toward the untrained weights
  std::vector<std::vector<double>> shadow;
  if (cfg.ema_decay > 0.0)
    for (auto& p : params) shadow.emplace_back(p->value.size(), 0.0);
  std::vector<double> curve;
  double initial = 0;
  const std::size_t report_every = std::max<std::size_t>(1, cfg.steps / 100);
  double window = 0;
  std::size_t in_window = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    // linear learning-rate decay: the final iterate is what the sampler uses,
    // so late-stage gradient noise must be annealed away
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps);
    opt.set_lr(cfg.learning_rate * std::max(0.01, 1.0 - frac));
    std::vector<std::vector<double>> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back((*data)[rng.index(data->size())]);
    opt.zero_grad();
    auto loss = dsm_loss(batch, den, sched, rng);
    ad::backward(loss);
    opt.step();
    if (cfg.ema_decay > 0.0)
      for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t j = 0; j < shadow[k].size(); ++j)
          shadow[k][j] = cfg.ema_decay * shadow[k][j] + (1.0 - cfg.ema_decay) * params[k]->value[j];
    window += loss->scalar();
    if (++in_window == report_every) {
      curve.push_back(window / static_cast<double>(in_window));
      window = 0;
      in_window = 0;
      if (curve.size() == 1) initial = curve.front();
      if (!std::isfinite(curve.back()) || curve.back() > 10.0 * initial + 10.0)
        throw DivergedError("denoiser step " + std::to_string(step));
    }
  }
  if (in_window > 0) curve.push_back(window / static_cast<double>(in_window));
  if (cfg.ema_decay > 0.0) {
    const double correction = 1.0 - std::pow(cfg.ema_decay, static_cast<double>(cfg.steps));
    if (correction > 1e-12)
      for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t j = 0; j < shadow[k].size(); ++j)
          params[k]->value[j] = shadow[k][j] / correction;
  }
  return {std::move(den), std::move(curve)};
}

/// Euler-Maruyama integration of the reverse SDE from t=1 (z ~ N(0,
/// sigma_max^2 I)) down to t=0. With the score substitution the drift is
/// +2 sigma'(t) eps_theta(z, t) per unit of backward time. Returns n latent
/// rows.
inline std::vector<std::vector<double>> sample_reverse(const Denoiser& den, const NoiseSchedule& sched,
                                                       std::size_t n, std::size_t steps,
                                                       std::uint64_t seed) {
  if (steps < 1) throw Error("sample_reverse: steps must be >= 1");
  Rng rng(seed ^ 0x5a11ull);
  const std::size_t D = den.latent_dim;
  const double dt = (1.0 - 0.0) / static_cast<double>(steps);

  std::vector<std::vector<double>> out(n, std::vector<double>(D));
  // batched over all n rows at each time step
  std::vector<double> z(n * D);
  for (auto& v : z) v = sched.sigma_max * rng.normal();
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = 1.0 - static_cast<double>(s) * dt;
    const double sig = sched.sigma(t);
    const double sigd = sched.sigma_dot(t);
    std::vector<double> tvec(n, t);
    auto pred = den.forward(ad::constant({n, D}, z), tvec);
    const double diff_coef = std::sqrt(std::max(0.0, 2.0 * sigd * sig * dt));
    const bool last = (s + 1 == steps);
    for (std::size_t i = 0; i < n * D; ++i) {
      z[i] += -2.0 * sigd * pred->value[i] * dt;
      if (!last) z[i] += diff_coef * rng.normal();
      if (!std::isfinite(z[i])) throw NonFiniteError("sample_reverse");
    }
  }
  // undo the training-time latent standardization, if any
  if (!den.latent_shift.empty())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < D; ++j)
        z[i * D + j] = z[i * D + j] * den.latent_scale[j] + den.latent_shift[j];
  for (std::size_t i = 0; i < n; ++i)
    std::copy(z.begin() + static_cast<long>(i * D), z.begin() + static_cast<long>((i + 1) * D),
              out[i].begin());
  return out;
}

/// Full synthesis path: reverse-SDE latents -> decoder -> detokenizer ->
/// categorical argmax -> inverse quantile transform. The returned table is in
/// the original (untransformed) value space and conforms to the schema.
inline MixedTable synthesize_table(const vae::VaeModel& model, const Denoiser& den,
                                   const NoiseSchedule& sched, const QuantileSet& quantiles,
                                   std::size_t n, std::size_t steps, std::uint64_t seed) {
  MixedTable out(model.schema);
  if (n == 0) return out;
  const std::size_t C = model.schema.size(), d = model.cfg.token_width;
  auto latents = sample_reverse(den, sched, n, steps, seed);

  // decode in batches to bound graph size
  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    std::vector<double> flat(len * C * d);
    for (std::size_t i = 0; i < len; ++i)
      std::copy(latents[start + i].begin(), latents[start + i].end(),
                flat.begin() + static_cast<long>(i * C * d));
    auto z = ad::constant({len, C, d}, std::move(flat));
    auto cols = model.detokenize(model.decode(z));
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> row(C, 0.0);
      std::size_t qk = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t nc = vae::detail_vae::cat_count(model.schema.columns[c]);
        if (nc == 0) {
          row[c] = quantiles.transforms[qk].inverse(cols[c]->value[i]);
          ++qk;
        } else {
          const double* logits = cols[c]->value.data() + i * nc;
          row[c] = static_cast<double>(std::max_element(logits, logits + nc) - logits);
        }
      }
      out.add_row(std::move(row));
    }
  }
  return out;
}

}  // namespace tabforge::diffusion
