// tabforge command-line interface.
//
// Every subcommand reads the same experiment config file (--config) and obeys
// --seed as an override, so a pipeline can be run end-to-end with `run` or as
// individual stages (simulate → preprocess → train-vae → train-diffusion →
// sample → fidelity / train-clf → evaluate → report) that exchange artifacts
// through the configured output directory.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tabforge/classifiers.hpp"
#include "tabforge/diffusion.hpp"
#include "tabforge/experiment.hpp"
#include "tabforge/metrics.hpp"
#include "tabforge/preprocess.hpp"
#include "tabforge/simulator.hpp"
#include "tabforge/table.hpp"
#include "tabforge/vae.hpp"

namespace fs = std::filesystem;
using namespace tabforge;
using harness::ExperimentConfig;

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed{0};
  bool seed_set{false};
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config_path, "Experiment config file");
  sub->add_option("--seed", o.seed, "Override experiment.seed")
      ->each([&o](const std::string&) { o.seed_set = true; });
}

ExperimentConfig load_config(const CommonOpts& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c = ExperimentConfig::from_map(cfg::parse_config_file(o.config_path));
  if (o.seed_set) c.seed = o.seed;
  c.validate();
  return c;
}

std::string require_output_dir(const ExperimentConfig& c) {
  if (c.output_dir.empty())
    throw ConfigError(
        "this subcommand writes artifacts; set experiment.output_dir or TABFORGE_OUTPUT_ROOT");
  for (const char* sub : {"models", "samples", "reports", "logs"})
    fs::create_directories(fs::path(c.output_dir) / sub);
  return c.output_dir;
}

/// Deterministic per-vaccine pipeline state, identical to what `run` derives.
struct VaccineContext {
  std::string vaccine;
  std::uint64_t vseed{0};
  MixedTable train, test;
  ScalerParams scaler;
  QuantileSet quantiles;
};

std::vector<std::string> resolve_vaccines(const ExperimentConfig& c, const MixedTable& t) {
  if (!c.vaccines.empty()) return c.vaccines;
  std::vector<std::string> out;
  for (const auto& col : t.schema().columns)
    if (col.kind == ColumnKind::OutcomeBinary) out.push_back(col.name);
  if (out.empty()) throw ConfigError("no outcome columns in source data");
  return out;
}

VaccineContext make_context(const ExperimentConfig& c, const MixedTable& table,
                            const std::string& vax) {
  VaccineContext ctx;
  ctx.vaccine = vax;
  ctx.vseed = fnv1a(vax, c.seed);
  std::vector<std::string> cols;
  for (const auto& col : table.schema().columns)
    if (col.kind != ColumnKind::OutcomeBinary) cols.push_back(col.name);
  cols.push_back(vax);
  auto proj = table.project(cols);
  auto split = split_indices(proj, c.split_fraction, ctx.vseed ^ 0x5017ull);
  ctx.train = proj.select(split.train);
  ctx.test = proj.select(split.test);
  ctx.scaler = fit_scaler(ctx.train);
  ctx.quantiles = QuantileSet::fit(ctx.train);
  return ctx;
}

std::string model_tag(const ExperimentConfig& c, const std::string& vax) {
  return vax + "_seed" + std::to_string(c.seed);
}

// ------------------------------- subcommands ---------------------------------

int cmd_simulate(const CommonOpts& o, std::size_t n_override, const std::string& out_path) {
  auto c = load_config(o);
  auto profile = c.sim_registry ? sim::registry_profile() : sim::SimulatorProfile{};
  const std::size_t n = n_override > 0 ? n_override : c.sim_rows;
  auto table = sim::simulate_registry(n, c.seed, profile);
  if (out_path.empty()) {
    write_csv(table, std::cout);
  } else {
    write_csv_file(table, out_path);
    std::cout << "wrote " << table.n_rows() << " rows to " << out_path << "\n";
  }
  return 0;
}

int cmd_preprocess(const CommonOpts& o, const std::string& out_path) {
  auto c = load_config(o);
  FilterReport rep;
  auto table = harness::load_source_table(c, &rep);
  std::cout << rep.to_text();
  std::cout << "rows," << table.n_rows() << "\n";
  if (!out_path.empty()) write_csv_file(table, out_path);
  return 0;
}

int cmd_train_vae(const CommonOpts& o) {
  auto c = load_config(o);
  const auto dir = require_output_dir(c);
  auto table = harness::load_source_table(c);
  for (const auto& vax : resolve_vaccines(c, table)) {
    auto ctx = make_context(c, table, vax);
    auto trained = vae::train_vae(ctx.quantiles.apply(ctx.train), c.vae, fnv1a("vae", ctx.vseed));
    const auto path = (fs::path(dir) / "models" / (model_tag(c, vax) + "_vae.bin")).string();
    trained.model.save(path);
    std::cout << vax << ": vae trained, " << trained.curve.total.size() << " epochs, final loss "
              << trained.curve.total.back() << ", saved " << path << "\n";
  }
  return 0;
}

int cmd_train_diffusion(const CommonOpts& o) {
  auto c = load_config(o);
  const auto dir = require_output_dir(c);
  auto table = harness::load_source_table(c);
  for (const auto& vax : resolve_vaccines(c, table)) {
    auto ctx = make_context(c, table, vax);
    const auto vae_path = (fs::path(dir) / "models" / (model_tag(c, vax) + "_vae.bin")).string();
    auto model = vae::VaeModel::load(vae_path, ctx.train.schema(), c.vae);
    auto latents = vae::encode_latents(model, ctx.quantiles.apply(ctx.train));
    auto trained =
        diffusion::train_denoiser(latents, c.schedule, c.denoiser, fnv1a("diffusion", ctx.vseed));
    const auto path = (fs::path(dir) / "models" / (model_tag(c, vax) + "_denoiser.bin")).string();
    trained.denoiser.save(path, ctx.train.schema().hash(), c.schedule);
    std::cout << vax << ": denoiser trained, final loss " << trained.curve.back() << ", saved "
              << path << "\n";
  }
  return 0;
}

int cmd_sample(const CommonOpts& o) {
  auto c = load_config(o);
  const auto dir = require_output_dir(c);
  auto table = harness::load_source_table(c);
  for (const auto& vax : resolve_vaccines(c, table)) {
    auto ctx = make_context(c, table, vax);
    const auto tag = model_tag(c, vax);
    auto model = vae::VaeModel::load((fs::path(dir) / "models" / (tag + "_vae.bin")).string(),
                                     ctx.train.schema(), c.vae);
    auto [den, sched] = diffusion::Denoiser::load(
        (fs::path(dir) / "models" / (tag + "_denoiser.bin")).string(), ctx.train.schema().hash());
    for (std::size_t s = 0; s < c.synthetic_samples; ++s) {
      auto synth = diffusion::synthesize_table(model, den, sched, ctx.quantiles,
                                               ctx.train.n_rows(), c.sample_steps,
                                               fnv1a("sample" + std::to_string(s), ctx.vseed));
      const auto path =
          (fs::path(dir) / "samples" / (tag + "_sample" + std::to_string(s) + ".csv")).string();
      write_csv_file(synth, path);
      std::cout << vax << ": wrote " << synth.n_rows() << " rows to " << path << "\n";
    }
  }
  return 0;
}

int cmd_fidelity(const CommonOpts& o) {
  auto c = load_config(o);
  const auto dir = require_output_dir(c);
  auto table = harness::load_source_table(c);
  for (const auto& vax : resolve_vaccines(c, table)) {
    auto ctx = make_context(c, table, vax);
    const auto tag = model_tag(c, vax);
    std::vector<MixedTable> synth;
    for (std::size_t s = 0; s < c.synthetic_samples; ++s) {
      const auto path =
          (fs::path(dir) / "samples" / (tag + "_sample" + std::to_string(s) + ".csv")).string();
      IngestLog log;
      synth.push_back(ingest_csv_file(path, ctx.train.schema(), log));
    }
    auto fid = metrics::fidelity_report(ctx.train, synth);
    std::cout << "fidelity: " << vax << "\n" << metrics::format_fidelity_text(fid);
    std::ofstream out((fs::path(dir) / "reports" / (tag + "_fidelity.csv")).string());
    out << metrics::format_fidelity_csv(fid);
  }
  return 0;
}

int cmd_train_clf(const CommonOpts& o) {
  auto c = load_config(o);
  const auto dir = require_output_dir(c);
  auto table = harness::load_source_table(c);
  const std::vector<bool> smote_variants =
      c.smote == "both" ? std::vector<bool>{false, true} : std::vector<bool>{c.smote == "on"};
  for (const auto& vax : resolve_vaccines(c, table)) {
    auto ctx = make_context(c, table, vax);
    auto dm = clf::design_matrix(apply_scaler(ctx.train, ctx.scaler), vax);
    for (const auto& model : c.models) {
      for (bool use_smote : smote_variants) {
        auto d = use_smote ? clf::smote_oversample(dm, fnv1a("smote0", ctx.vseed)).data : dm;
        const auto path = (fs::path(dir) / "models" /
                           (vax + "_" + model + "_real" + (use_smote ? "_smote" : "") + "_s0.bin"))
                              .string();
        if (model == "logreg")
          clf::save_logreg(clf::fit_logreg(d, c.logreg, ctx.vseed), path,
                           ctx.train.schema().hash());
        else
          clf::save_gbt(clf::fit_gbt(d, c.gbt, ctx.vseed), path, ctx.train.schema().hash());
        std::cout << vax << ": trained " << model << (use_smote ? " (smote)" : "") << ", saved "
                  << path << "\n";
      }
    }
  }
  return 0;
}

int cmd_evaluate(const CommonOpts& o) {
  auto c = load_config(o);
  const auto dir = require_output_dir(c);
  auto table = harness::load_source_table(c);
  const std::vector<bool> smote_variants =
      c.smote == "both" ? std::vector<bool>{false, true} : std::vector<bool>{c.smote == "on"};
  std::cout << "vaccine,model,smote,f1,precision,recall\n";
  for (const auto& vax : resolve_vaccines(c, table)) {
    auto ctx = make_context(c, table, vax);
    auto dm_test = clf::design_matrix(apply_scaler(ctx.test, ctx.scaler), vax);
    for (const auto& model : c.models) {
      for (bool use_smote : smote_variants) {
        const auto path = (fs::path(dir) / "models" /
                           (vax + "_" + model + "_real" + (use_smote ? "_smote" : "") + "_s0.bin"))
                              .string();
        std::vector<double> proba;
        if (model == "logreg")
          proba = clf::predict_proba(clf::load_logreg(path, ctx.train.schema().hash()), dm_test);
        else
          proba = clf::predict_proba(clf::load_gbt(path, ctx.train.schema().hash()), dm_test);
        auto sc = metrics::weighted_prf(dm_test.y, clf::labels_at_half(proba));
        std::ostringstream line;
        line.precision(6);
        line << vax << "," << model << "," << (use_smote ? "on" : "off") << "," << sc.f1 << ","
             << sc.precision << "," << sc.recall << "\n";
        std::cout << line.str();
      }
    }
  }
  return 0;
}

int cmd_run(const CommonOpts& o) {
  auto c = load_config(o);
  auto rep = harness::run_experiment(c, &std::clog);
  const auto text = harness::emit_report(rep, "text");
  std::cout << text;
  if (!c.output_dir.empty()) {
    const auto dir = require_output_dir(c);
    const auto base = "report_seed" + std::to_string(c.seed);
    std::ofstream((fs::path(dir) / "reports" / (base + ".txt")).string()) << text;
    std::ofstream((fs::path(dir) / "reports" / (base + ".csv")).string())
        << harness::emit_report(rep, "csv");
    std::cout << "report written to " << (fs::path(dir) / "reports" / (base + ".csv")).string()
              << "\n";
  }
  return 0;
}

int cmd_report(const std::string& in_path) {
  std::ifstream in(in_path);
  if (!in) throw ConfigError("cannot open report file: " + in_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::cout << harness::emit_report(harness::parse_report_csv(buf.str()), "text");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabforge: synthetic tabular vaccination data pipeline"};
  app.require_subcommand(1);

  CommonOpts o;
  std::size_t sim_n = 0;
  std::string out_path, report_in;

  auto* s_sim = app.add_subcommand("simulate", "Emit a simulated registry CSV");
  add_common(s_sim, o);
  s_sim->add_option("--n", sim_n, "Row count (default: config sim_rows)");
  s_sim->add_option("--out", out_path, "Output CSV path (default: stdout)");

  auto* s_pre = app.add_subcommand("preprocess", "Apply filter rules, print the stage report");
  add_common(s_pre, o);
  s_pre->add_option("--out", out_path, "Write the filtered table as CSV");

  auto* s_vae = app.add_subcommand("train-vae", "Train the tabular VAE per vaccine");
  add_common(s_vae, o);
  auto* s_diff = app.add_subcommand("train-diffusion", "Train the latent denoiser per vaccine");
  add_common(s_diff, o);
  auto* s_sam = app.add_subcommand("sample", "Draw synthetic tables from trained models");
  add_common(s_sam, o);
  auto* s_fid = app.add_subcommand("fidelity", "Score synthetic samples against the real split");
  add_common(s_fid, o);
  auto* s_clf = app.add_subcommand("train-clf", "Train classifiers on the real training split");
  add_common(s_clf, o);
  auto* s_eval = app.add_subcommand("evaluate", "Evaluate saved classifiers on the test split");
  add_common(s_eval, o);
  auto* s_run = app.add_subcommand("run", "Full experiment: generate, train, evaluate, report");
  add_common(s_run, o);
  auto* s_rep = app.add_subcommand("report", "Render a CSV report as text");
  s_rep->add_option("--in", report_in, "Report CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (s_sim->parsed()) return cmd_simulate(o, sim_n, out_path);
    if (s_pre->parsed()) return cmd_preprocess(o, out_path);
    if (s_vae->parsed()) return cmd_train_vae(o);
    if (s_diff->parsed()) return cmd_train_diffusion(o);
    if (s_sam->parsed()) return cmd_sample(o);
    if (s_fid->parsed()) return cmd_fidelity(o);
    if (s_clf->parsed()) return cmd_train_clf(o);
    if (s_eval->parsed()) return cmd_evaluate(o);
    if (s_run->parsed()) return cmd_run(o);
    if (s_rep->parsed()) return cmd_report(report_in);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
