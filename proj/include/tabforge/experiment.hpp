#pragma once

// Experiment orchestration: per-vaccine generative training, synthetic
// resampling, classifier training across the real / synthetic / combined
// regimes (with and without SMOTE), evaluation on the held-out real test
// split, and deterministic report emission.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tabforge/classifiers.hpp"
#include "tabforge/config.hpp"
#include "tabforge/diffusion.hpp"
#include "tabforge/metrics.hpp"
#include "tabforge/preprocess.hpp"
#include "tabforge/simulator.hpp"
#include "tabforge/table.hpp"
#include "tabforge/vae.hpp"

namespace tabforge::harness {

struct ExperimentConfig {
  std::string source{"simulator"};  // "simulator" | "csv"
  std::string csv_path, schema_path;
  std::size_t sim_rows{9718};
  bool sim_registry{true};  // plant the violation narrative rows
  bool filters{true};
  std::vector<std::string> village_allow;  // csv source only; empty disables
  std::vector<std::string> vaccines;       // empty: every outcome column
  double split_fraction{0.8};
  std::uint64_t seed{1};
  std::size_t synthetic_samples{5};
  std::vector<std::string> regimes{"real", "synthetic", "real+synthetic"};
  std::string smote{"both"};  // on | off | both
  std::vector<std::string> models{"logreg", "gbt"};
  std::size_t sample_steps{50};
  std::string output_dir;  // empty: no artifacts written

  vae::VaeConfig vae;
  diffusion::DenoiserConfig denoiser;
  diffusion::NoiseSchedule schedule;
  clf::GbtConfig gbt;
  clf::LogRegConfig logreg;

  void validate() const {
    if (source != "simulator" && source != "csv")
      throw ConfigError("experiment.source must be simulator or csv");
    if (source == "csv" && (csv_path.empty() || schema_path.empty()))
      throw ConfigError("csv source requires experiment.csv_path and experiment.schema_path");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw ConfigError("experiment.split_fraction must be in (0,1)");
    if (synthetic_samples < 1) throw ConfigError("experiment.synthetic_samples must be >= 1");
    if (smote != "on" && smote != "off" && smote != "both")
      throw ConfigError("experiment.smote must be on, off, or both");
    for (const auto& r : regimes)
      if (r != "real" && r != "synthetic" && r != "real+synthetic")
        throw ConfigError("unknown regime: " + r);
    if (regimes.empty()) throw ConfigError("experiment.regimes must be nonempty");
    for (const auto& m : models)
      if (m != "logreg" && m != "gbt") throw ConfigError("unknown model: " + m);
    if (models.empty()) throw ConfigError("experiment.models must be nonempty");
    if (sample_steps < 1) throw ConfigError("experiment.sample_steps must be >= 1");
  }

  static ExperimentConfig from_map(const cfg::ConfigMap& m) {
    ExperimentConfig c;
    c.source = m.get_str("experiment.source", c.source);
    c.csv_path = m.get_str("experiment.csv_path", "");
    c.schema_path = m.get_str("experiment.schema_path", "");
    c.sim_rows = m.get_size("experiment.sim_rows", c.sim_rows);
    c.sim_registry = m.get_flag("experiment.sim_registry", c.sim_registry);
    c.filters = m.get_flag("experiment.filters", c.filters);
    c.village_allow = m.get_list("experiment.village_allow", {});
    c.vaccines = m.get_list("experiment.vaccines", {});
    c.split_fraction = m.get_num("experiment.split_fraction", c.split_fraction);
    c.seed = static_cast<std::uint64_t>(m.get_num("experiment.seed", 1));
    c.synthetic_samples = m.get_size("experiment.synthetic_samples", c.synthetic_samples);
    c.regimes = m.get_list("experiment.regimes", c.regimes);
    c.smote = m.get_str("experiment.smote", c.smote);
    c.models = m.get_list("experiment.models", c.models);
    c.sample_steps = m.get_size("experiment.sample_steps", c.sample_steps);
    c.output_dir = m.get_str("experiment.output_dir", "");
    if (c.output_dir.empty())
      if (const char* root = std::getenv("TABFORGE_OUTPUT_ROOT")) c.output_dir = root;

    c.vae.token_width = m.get_size("vae.token_width", c.vae.token_width);
    c.vae.use_attention = m.get_flag("vae.use_attention", c.vae.use_attention);
    c.vae.max_epochs = m.get_size("vae.max_epochs", c.vae.max_epochs);
    c.vae.batch_size = m.get_size("vae.batch_size", c.vae.batch_size);
    c.vae.learning_rate = m.get_num("vae.learning_rate", c.vae.learning_rate);
    c.vae.beta_start = m.get_num("vae.beta_start", c.vae.beta_start);
    c.vae.beta_decay = m.get_num("vae.beta_decay", c.vae.beta_decay);
    c.vae.beta_min = m.get_num("vae.beta_min", c.vae.beta_min);
    c.vae.plateau_tol = m.get_num("vae.plateau_tol", c.vae.plateau_tol);
    c.vae.patience = m.get_size("vae.patience", c.vae.patience);

    c.denoiser.hidden = m.get_size("diffusion.hidden", c.denoiser.hidden);
    c.denoiser.time_embed = m.get_size("diffusion.time_embed", c.denoiser.time_embed);
    c.denoiser.steps = m.get_size("diffusion.steps", c.denoiser.steps);
    c.denoiser.batch_size = m.get_size("diffusion.batch_size", c.denoiser.batch_size);
    c.denoiser.learning_rate = m.get_num("diffusion.learning_rate", c.denoiser.learning_rate);
    c.denoiser.normalize = m.get_flag("diffusion.normalize", c.denoiser.normalize);
    c.denoiser.latent_target = m.get_num("diffusion.latent_target", c.denoiser.latent_target);
    c.denoiser.ema_decay = m.get_num("diffusion.ema_decay", c.denoiser.ema_decay);
    c.schedule.sigma_min = m.get_num("diffusion.sigma_min", c.schedule.sigma_min);
    c.schedule.sigma_max = m.get_num("diffusion.sigma_max", c.schedule.sigma_max);
    c.schedule.t_min = m.get_num("diffusion.t_min", c.schedule.t_min);

    c.gbt.n_trees = m.get_size("gbt.trees", c.gbt.n_trees);
    c.gbt.max_depth = m.get_size("gbt.depth", c.gbt.max_depth);
    c.gbt.eta = m.get_num("gbt.eta", c.gbt.eta);
    c.gbt.lambda_reg = m.get_num("gbt.lambda", c.gbt.lambda_reg);

    c.logreg.C = m.get_num("logreg.c", c.logreg.C);
    c.logreg.max_iters = m.get_size("logreg.max_iters", c.logreg.max_iters);
    c.logreg.tol = m.get_num("logreg.tol", c.logreg.tol);
    c.validate();
    return c;
  }

  /// Deterministic serialization of every field; its hash is the provenance
  /// config hash.
  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& e : v) s += e + ",";
      return s;
    };
    os << "source=" << source << "\ncsv_path=" << csv_path << "\nschema_path=" << schema_path
       << "\nsim_rows=" << sim_rows << "\nsim_registry=" << sim_registry
       << "\nfilters=" << filters << "\nvillage_allow=" << list(village_allow)
       << "\nvaccines=" << list(vaccines) << "\nsplit_fraction=" << split_fraction
       << "\nseed=" << seed << "\nsynthetic_samples=" << synthetic_samples
       << "\nregimes=" << list(regimes) << "\nsmote=" << smote << "\nmodels=" << list(models)
       << "\nsample_steps=" << sample_steps << "\nvae=" << vae.token_width << ","
       << vae.use_attention << "," << vae.max_epochs << "," << vae.batch_size << ","
       << vae.learning_rate << "," << vae.beta_start << "," << vae.beta_decay << ","
       << vae.beta_min << "," << vae.plateau_tol << "," << vae.patience
       << "\ndiffusion=" << denoiser.hidden << "," << denoiser.time_embed << ","
       << denoiser.steps << "," << denoiser.batch_size << "," << denoiser.learning_rate << ","
       << denoiser.normalize << "," << denoiser.latent_target << "," << denoiser.ema_decay << ","
       << schedule.sigma_min << "," << schedule.sigma_max << "," << schedule.t_min
       << "\ngbt=" << gbt.n_trees << "," << gbt.max_depth << "," << gbt.eta << ","
       << gbt.lambda_reg << "\nlogreg=" << logreg.C << "," << logreg.max_iters << ","
       << logreg.tol << "\n";
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }
};

struct Stat {
  double mean{0.0}, sd{0.0};
};

struct ResultRow {
  std::string vaccine, model, regime;
  bool smote{false};
  Stat f1, precision, recall;
  std::vector<metrics::ClassifierScores> per_sample;
};

struct ExperimentReport {
  std::uint64_t config_hash{0}, seed{0}, timestamp{0};
  std::vector<ResultRow> rows;
  std::vector<std::pair<std::string, metrics::FidelityReport>> fidelity;  // per vaccine
  FilterReport filter_report;
};

namespace detail_harness {

inline Stat aggregate(const std::vector<double>& xs) {
  Stat s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / static_cast<double>(xs.size()));
  return s;
}

inline clf::DesignMatrix concat_rows(const clf::DesignMatrix& a, const clf::DesignMatrix& b) {
  if (a.p != b.p) throw ShapeMismatchError("concat_rows: feature width mismatch");
  clf::DesignMatrix out = a;
  out.n += b.n;
  out.x.insert(out.x.end(), b.x.begin(), b.x.end());
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

inline std::uint64_t env_timestamp() {
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return static_cast<std::uint64_t>(std::stoull(e));
    } catch (const std::exception&) {
    }
  }
  return 0;  // fixed epoch keeps reports byte-reproducible
}

}  // namespace detail_harness

/// Load, filter, and compact the source table described by the config.
inline MixedTable load_source_table(const ExperimentConfig& c, FilterReport* report = nullptr) {
  MixedTable raw;
  std::vector<std::string> allow = c.village_allow;
  if (c.source == "simulator") {
    auto profile = c.sim_registry ? sim::registry_profile() : sim::SimulatorProfile{};
    if (!c.vaccines.empty()) {
      std::vector<sim::VaccineSpec> kept;
      for (const auto& v : profile.vaccines)
        for (const auto& want : c.vaccines)
          if (v.name == want) kept.push_back(v);
      if (kept.size() != c.vaccines.size())
        throw ConfigError("experiment.vaccines contains a name unknown to the simulator");
      profile.vaccines = std::move(kept);
    }
    raw = sim::simulate_registry(c.sim_rows, c.seed, profile);
    if (allow.empty()) {
      // the service region: in-region villages plus any planted rare villages
      // (rare rows are in-region; the min-count rule, not the allow-list,
      // should remove them)
      allow = profile.in_region_villages();
      const auto& vcol = raw.schema().columns[raw.schema().index_of("village")];
      for (const auto& name : vcol.categories)
        if (name.rfind("Rare-", 0) == 0) allow.push_back(name);
    }
  } else {
    std::ifstream sf(c.schema_path);
    if (!sf) throw ConfigError("cannot open schema file: " + c.schema_path);
    auto schema = load_schema(sf);
    IngestLog log;
    raw = ingest_csv_file(c.csv_path, schema, log);
  }
  if (!c.filters) {
    if (report) *report = FilterReport{};
    return raw.drop_unused_categories();
  }
  FilterConfig fc;
  fc.village_allow_list = allow;
  FilterReport rep;
  auto filtered = apply_filters(raw, fc, rep);
  if (report) *report = rep;
  return filtered.drop_unused_categories();
}

/// Full experiment: per vaccine, train the generative pair on the real
/// training split, draw synthetic resamples at training size, train each
/// classifier under each regime/SMOTE variant, and evaluate everything on the
/// untouched real test split.
inline ExperimentReport run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr) {
  c.validate();
  ExperimentReport rep;
  rep.config_hash = c.hash();
  rep.seed = c.seed;
  rep.timestamp = detail_harness::env_timestamp();

  namespace fs = std::filesystem;
  const bool artifacts = !c.output_dir.empty();
  if (artifacts)
    for (const char* sub : {"models", "samples", "reports", "logs"})
      fs::create_directories(fs::path(c.output_dir) / sub);

  auto logln = [&](const std::string& s) {
    if (log) *log << s << "\n";
  };

  auto table = load_source_table(c, &rep.filter_report);
  logln("source rows after filtering: " + std::to_string(table.n_rows()));

  std::vector<std::string> vaccines = c.vaccines;
  std::vector<std::string> covariates;
  for (const auto& col : table.schema().columns) {
    if (col.kind == ColumnKind::OutcomeBinary) {
      if (c.vaccines.empty()) vaccines.push_back(col.name);
    } else {
      covariates.push_back(col.name);
    }
  }
  if (vaccines.empty()) throw ConfigError("no outcome columns in source data");

  const std::vector<bool> smote_variants =
      c.smote == "both" ? std::vector<bool>{false, true} : std::vector<bool>{c.smote == "on"};

  for (const auto& vax : vaccines) {
    try {
      const std::uint64_t vseed = fnv1a(vax, c.seed);
      auto cols = covariates;
      cols.push_back(vax);
      auto proj = table.project(cols);

      auto split = split_indices(proj, c.split_fraction, vseed ^ 0x5017ull);
      auto train = proj.select(split.train);
      auto test = proj.select(split.test);
      const std::uint64_t test_hash = test.content_hash();
      logln(vax + ": train " + std::to_string(train.n_rows()) + " / test " +
            std::to_string(test.n_rows()));

      auto scaler = fit_scaler(train);
      auto quantiles = QuantileSet::fit(train);

      auto trained_vae = vae::train_vae(quantiles.apply(train), c.vae, fnv1a("vae", vseed));
      logln(vax + ": vae epochs " + std::to_string(trained_vae.curve.total.size()));
      auto latents = vae::encode_latents(trained_vae.model, quantiles.apply(train));
      auto trained_den =
          diffusion::train_denoiser(latents, c.schedule, c.denoiser, fnv1a("diffusion", vseed));

      std::vector<MixedTable> synth;
      for (std::size_t s = 0; s < c.synthetic_samples; ++s)
        synth.push_back(diffusion::synthesize_table(
            trained_vae.model, trained_den.denoiser, c.schedule, quantiles, train.n_rows(),
            c.sample_steps, fnv1a("sample" + std::to_string(s), vseed)));

      rep.fidelity.emplace_back(vax, metrics::fidelity_report(train, synth));

      auto dm_train = clf::design_matrix(apply_scaler(train, scaler), vax);
      auto dm_test = clf::design_matrix(apply_scaler(test, scaler), vax);
      std::vector<clf::DesignMatrix> dm_synth;
      for (const auto& s : synth)
        dm_synth.push_back(clf::design_matrix(apply_scaler(s, scaler), vax));

      for (const auto& model : c.models) {
        for (const auto& regime : c.regimes) {
          for (bool use_smote : smote_variants) {
            ResultRow row;
            row.vaccine = vax;
            row.model = model;
            row.regime = regime;
            row.smote = use_smote;
            const std::size_t runs = regime == "real" ? 1 : c.synthetic_samples;
            for (std::size_t s = 0; s < runs; ++s) {
              try {
                clf::DesignMatrix d =
                    regime == "real"        ? dm_train
                    : regime == "synthetic" ? dm_synth[s]
                                            : detail_harness::concat_rows(dm_train, dm_synth[s]);
                if (use_smote)
                  d = clf::smote_oversample(d, fnv1a("smote" + std::to_string(s), vseed)).data;
                std::vector<double> proba;
                if (model == "logreg") {
                  auto fitted = clf::fit_logreg(d, c.logreg, vseed);
                  proba = clf::predict_proba(fitted, dm_test);
                  if (artifacts)
                    clf::save_logreg(fitted,
                                     (fs::path(c.output_dir) / "models" /
                                      (vax + "_logreg_" + regime + (use_smote ? "_smote" : "") +
                                       "_s" + std::to_string(s) + ".bin"))
                                         .string(),
                                     proj.schema().hash());
                } else {
                  auto fitted = clf::fit_gbt(d, c.gbt, vseed);
                  proba = clf::predict_proba(fitted, dm_test);
                  if (artifacts)
                    clf::save_gbt(fitted,
                                  (fs::path(c.output_dir) / "models" /
                                   (vax + "_gbt_" + regime + (use_smote ? "_smote" : "") + "_s" +
                                    std::to_string(s) + ".bin"))
                                      .string(),
                                  proj.schema().hash());
                }
                row.per_sample.push_back(
                    metrics::weighted_prf(dm_test.y, clf::labels_at_half(proba)));
              } catch (const Error& e) {
                throw Error(std::string(e.what()) + " (vaccine=" + vax + ", regime=" + regime +
                            ", model=" + model + ", sample=" + std::to_string(s) + ")");
              }
            }
            std::vector<double> f1s, ps, rs;
            for (const auto& sc : row.per_sample) {
              f1s.push_back(sc.f1);
              ps.push_back(sc.precision);
              rs.push_back(sc.recall);
            }
            row.f1 = detail_harness::aggregate(f1s);
            row.precision = detail_harness::aggregate(ps);
            row.recall = detail_harness::aggregate(rs);
            rep.rows.push_back(std::move(row));
          }
        }
      }

      if (test.content_hash() != test_hash)
        throw Error("leakage guard tripped: test split mutated (vaccine=" + vax + ")");

      if (artifacts) {
        const std::string tag = vax + "_seed" + std::to_string(c.seed);
        trained_vae.model.save((fs::path(c.output_dir) / "models" / (tag + "_vae.bin")).string());
        trained_den.denoiser.save(
            (fs::path(c.output_dir) / "models" / (tag + "_denoiser.bin")).string(),
            proj.schema().hash(), c.schedule);
        for (std::size_t s = 0; s < synth.size(); ++s)
          write_csv_file(synth[s], (fs::path(c.output_dir) / "samples" /
                                    (tag + "_sample" + std::to_string(s) + ".csv"))
                                       .string());
        std::ofstream lg((fs::path(c.output_dir) / "logs" / (tag + "_train.log")).string());
        lg << "vae_epochs " << trained_vae.curve.total.size() << "\n";
        for (std::size_t i = 0; i < trained_vae.curve.total.size(); ++i)
          lg << "vae " << i << " " << trained_vae.curve.total[i] << " "
             << trained_vae.curve.recon[i] << " " << trained_vae.curve.kl[i] << "\n";
        for (std::size_t i = 0; i < trained_den.curve.size(); ++i)
          lg << "diffusion " << i << " " << trained_den.curve[i] << "\n";
      }
    } catch (const Error& e) {
      std::string msg = e.what();
      if (msg.find("vaccine=") == std::string::npos) msg += " (vaccine=" + vax + ")";
      throw Error(msg);
    }
  }

  std::sort(rep.rows.begin(), rep.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.vaccine, a.model, a.regime, a.smote) <
           std::tie(b.vaccine, b.model, b.regime, b.smote);
  });
  return rep;
}

// ------------------------------- report output -------------------------------

inline std::string provenance_line(const ExperimentReport& r) {
  std::ostringstream os;
  os << "# tabforge-report config=" << std::hex << std::setfill('0') << std::setw(16)
     << r.config_hash << std::dec << " seed=" << r.seed << " timestamp=" << r.timestamp;
  return os.str();
}

/// `format` is "text" (aligned tables) or "csv" (machine-readable; includes
/// the per-sample raw rows so aggregates can be recomputed).
inline std::string emit_report(const ExperimentReport& r, const std::string& format) {
  if (format == "csv") {
    std::ostringstream os;
    os.precision(17);
    os << provenance_line(r) << "\n";
    os << "result,vaccine,model,regime,smote,f1_mean,f1_sd,precision_mean,precision_sd,"
          "recall_mean,recall_sd\n";
    for (const auto& row : r.rows)
      os << "result," << row.vaccine << "," << row.model << "," << row.regime << ","
         << (row.smote ? "on" : "off") << "," << row.f1.mean << "," << row.f1.sd << ","
         << row.precision.mean << "," << row.precision.sd << "," << row.recall.mean << ","
         << row.recall.sd << "\n";
    for (const auto& row : r.rows)
      for (std::size_t s = 0; s < row.per_sample.size(); ++s)
        os << "raw," << row.vaccine << "," << row.model << "," << row.regime << ","
           << (row.smote ? "on" : "off") << "," << s << "," << row.per_sample[s].f1 << ","
           << row.per_sample[s].precision << "," << row.per_sample[s].recall << "\n";
    for (const auto& [vax, fid] : r.fidelity) {
      for (const auto& e : fid.columns)
        os << "density," << vax << "," << e.name << "," << e.mean << "," << e.sd << "\n";
      for (const auto& e : fid.pairs)
        os << "correlation," << vax << "," << e.name << "," << e.mean << "," << e.sd << "\n";
    }
    for (const auto& st : r.filter_report.stages)
      os << "filter," << st.rule << "," << st.rows_before << "," << st.rows_after << "\n";
    return os.str();
  }
  if (format != "text") throw ConfigError("emit_report: unknown format " + format);

  std::ostringstream os;
  os << provenance_line(r) << "\n\n";
  os << std::fixed << std::setprecision(4);
  // collect the model list in deterministic order
  std::vector<std::string> models;
  for (const auto& row : r.rows)
    if (std::find(models.begin(), models.end(), row.model) == models.end())
      models.push_back(row.model);
  std::sort(models.begin(), models.end());
  os << std::setw(8) << std::left << "vaccine" << std::setw(16) << "regime" << std::setw(7)
     << "smote";
  for (const auto& m : models)
    os << std::setw(18) << (m + " F1") << std::setw(18) << (m + " Precision") << std::setw(18)
       << (m + " Recall");
  os << "\n";
  // one text row per (vaccine, regime, smote)
  std::vector<std::tuple<std::string, std::string, bool>> keys;
  for (const auto& row : r.rows) {
    auto k = std::make_tuple(row.vaccine, row.regime, row.smote);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  auto stat_str = [](const Stat& s) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(4) << s.mean << "+-" << s.sd;
    return ss.str();
  };
  for (const auto& [vax, regime, smote] : keys) {
    os << std::setw(8) << std::left << vax << std::setw(16) << regime << std::setw(7)
       << (smote ? "on" : "off");
    for (const auto& m : models) {
      bool found = false;
      for (const auto& row : r.rows)
        if (row.vaccine == vax && row.regime == regime && row.smote == smote && row.model == m) {
          os << std::setw(18) << stat_str(row.f1) << std::setw(18) << stat_str(row.precision)
             << std::setw(18) << stat_str(row.recall);
          found = true;
        }
      if (!found) os << std::setw(54) << "-";
    }
    os << "\n";
  }
  os << "\n";
  for (const auto& [vax, fid] : r.fidelity) {
    os << "fidelity: " << vax << "\n" << metrics::format_fidelity_text(fid) << "\n";
  }
  if (!r.filter_report.stages.empty()) {
    os << "filters\n";
    for (const auto& st : r.filter_report.stages)
      os << "  " << std::setw(24) << std::left << st.rule << " " << st.rows_before << " -> "
         << st.rows_after << "\n";
  }
  return os.str();
}

/// Parse the CSV emission back into a report (per-sample raw rows included);
/// emit_report(parse_report_csv(s), "csv") == s.
inline ExperimentReport parse_report_csv(const std::string& text) {
  ExperimentReport r;
  std::istringstream is(text);
  std::string line;
  std::map<std::tuple<std::string, std::string, std::string, bool>, std::size_t> row_index;
  std::map<std::string, std::size_t> fid_index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# tabforge-report", 0) == 0) {
      std::istringstream hs(line);
      std::string tok;
      while (hs >> tok) {
        if (tok.rfind("config=", 0) == 0)
          r.config_hash = std::stoull(tok.substr(7), nullptr, 16);
        else if (tok.rfind("seed=", 0) == 0)
          r.seed = std::stoull(tok.substr(5));
        else if (tok.rfind("timestamp=", 0) == 0)
          r.timestamp = std::stoull(tok.substr(10));
      }
      continue;
    }
    if (line.rfind("result,vaccine", 0) == 0) continue;  // column header
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string part;
    while (std::getline(ls, part, ',')) f.push_back(part);
    if (f.empty()) continue;
    if (f[0] == "result" && f.size() == 11) {
      ResultRow row;
      row.vaccine = f[1];
      row.model = f[2];
      row.regime = f[3];
      row.smote = f[4] == "on";
      row.f1 = {std::stod(f[5]), std::stod(f[6])};
      row.precision = {std::stod(f[7]), std::stod(f[8])};
      row.recall = {std::stod(f[9]), std::stod(f[10])};
      row_index[{row.vaccine, row.model, row.regime, row.smote}] = r.rows.size();
      r.rows.push_back(std::move(row));
    } else if (f[0] == "raw" && f.size() == 9) {
      auto it = row_index.find({f[1], f[2], f[3], f[4] == "on"});
      if (it == row_index.end()) throw Error("parse_report_csv: raw row before result row");
      metrics::ClassifierScores sc;
      sc.f1 = std::stod(f[6]);
      sc.precision = std::stod(f[7]);
      sc.recall = std::stod(f[8]);
      r.rows[it->second].per_sample.push_back(sc);
    } else if ((f[0] == "density" || f[0] == "correlation") && f.size() == 5) {
      if (!fid_index.count(f[1])) {
        fid_index[f[1]] = r.fidelity.size();
        r.fidelity.emplace_back(f[1], metrics::FidelityReport{});
      }
      metrics::FidelityReport::Entry e;
      e.name = f[2];
      e.mean = std::stod(f[3]);
      e.sd = std::stod(f[4]);
      auto& fid = r.fidelity[fid_index[f[1]]].second;
      (f[0] == "density" ? fid.columns : fid.pairs).push_back(std::move(e));
    } else if (f[0] == "filter" && f.size() == 4) {
      r.filter_report.stages.push_back(
          {f[1], static_cast<std::size_t>(std::stoull(f[2])),
           static_cast<std::size_t>(std::stoull(f[3]))});
    } else {
      throw Error("parse_report_csv: unrecognized line: " + line);
    }
  }
  return r;
}

}  // namespace tabforge::harness
