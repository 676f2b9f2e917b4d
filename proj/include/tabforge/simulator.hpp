#pragma once

// Registry simulator: a stand-in for the private clinic registry, generating
// mixed-type rows whose marginals follow a configurable profile and which can
// plant rule violations for filter testing. Every emitted table is synthetic.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tabforge/common.hpp"
#include "tabforge/table.hpp"

namespace tabforge::sim {

struct VaccineSpec {
  std::string name;
  double positive_rate;
};

struct SimulatorProfile {
  // marginals
  double female_frac{0.491};
  std::vector<std::pair<std::string, double>> clinics{
      {"Ewaso-Ngiro", 0.496}, {"Aitong", 0.220}, {"Talek", 0.152}, {"Mara-Rianta", 0.132}};
  // in-region villages, grouped by clinic index, with within-clinic weights
  std::vector<std::pair<std::string, std::pair<std::size_t, double>>> villages{
      {"Nkareta", {0, 0.40}},   {"Olopito", {0, 0.35}},  {"Siyiapei", {0, 0.25}},
      {"Aitong-Town", {1, 0.5}}, {"Mpuai", {1, 0.3}},     {"Olchoro", {1, 0.2}},
      {"Talek-Town", {2, 0.6}},  {"Sekenani", {2, 0.4}},
      {"Mara-Rianta-Town", {3, 0.55}}, {"Olkiombo", {3, 0.45}}};
  double age_mean{3.3}, age_sd{2.1}, age_min{0.0}, age_max{8.0};
  double first_visit_mean{24.9};  // right-skewed; see sampler
  // outcome model coefficients on standardized covariates
  double w_first_visit{-1.5}, w_age{0.8}, w_gender{0.3}, w_clinic{0.2};
  std::vector<VaccineSpec> vaccines{
      {"BCG", 0.956},  {"POLIO", 0.521}, {"OPV1", 0.786}, {"OPV2", 0.685}, {"OPV3", 0.581},
      {"IPV", 0.536},  {"DPT1", 0.844},  {"DPT2", 0.737}, {"DPT3", 0.634}, {"PCV1", 0.843},
      {"PCV2", 0.737}, {"PCV3", 0.631},  {"ROTA1", 0.696}, {"ROTA2", 0.580}, {"VITA", 0.389},
      {"MR1", 0.378},  {"MR2", 0.137}};
  // planted violations (absolute row counts, disjoint; each trips exactly one
  // filter rule)
  std::size_t planted_out_of_region{0};
  std::size_t planted_over_age{0};
  std::size_t planted_negative_first_visit{0};
  std::size_t planted_rare_village_rows{0};

  /// Keep only the named vaccine (the per-vaccine pipelines model one outcome).
  SimulatorProfile with_vaccine(const std::string& name) const {
    SimulatorProfile p = *this;
    p.vaccines.clear();
    for (const auto& v : vaccines)
      if (v.name == name) p.vaccines.push_back(v);
    if (p.vaccines.empty()) throw Error("unknown vaccine: " + name);
    return p;
  }

  std::vector<std::string> in_region_villages() const {
    std::vector<std::string> out;
    for (const auto& v : villages) out.push_back(v.first);
    return out;
  }
};

/// Profile that reproduces the staged preprocessing narrative: 9718 raw rows
/// shrink through the four filter rules to about 6913.
inline SimulatorProfile registry_profile() {
  SimulatorProfile p;
  p.planted_out_of_region = 2201;   // 9718 -> 7517
  p.planted_over_age = 9;           // 7517 -> 7508
  p.planted_negative_first_visit = 189;  // 7508 -> 7319
  p.planted_rare_village_rows = 406;     // 7319 -> 6913
  return p;
}

inline TableSchema simulator_schema(const SimulatorProfile& p, bool with_violation_villages) {
  TableSchema s;
  s.columns.push_back({"gender", ColumnKind::Categorical, {"Female", "Male"}});
  Column village{"village", ColumnKind::Categorical, {}};
  village.categories = p.in_region_villages();
  if (with_violation_villages) {
    if (p.planted_out_of_region > 0)
      for (int i = 0; i < 3; ++i) village.categories.push_back("OutOfRegion-" + std::to_string(i));
    if (p.planted_rare_village_rows > 0) {
      const std::size_t n_rare = (p.planted_rare_village_rows + 3) / 4;
      for (std::size_t i = 0; i < n_rare; ++i)
        village.categories.push_back("Rare-" + std::to_string(i));
    }
  }
  s.columns.push_back(std::move(village));
  Column clinic{"clinic", ColumnKind::Categorical, {}};
  for (const auto& c : p.clinics) clinic.categories.push_back(c.first);
  s.columns.push_back(std::move(clinic));
  s.columns.push_back({"age", ColumnKind::Numeric, {}});
  s.columns.push_back({"first_visit_day", ColumnKind::Numeric, {}});
  for (const auto& v : p.vaccines) s.columns.push_back({v.name, ColumnKind::OutcomeBinary, {}});
  return s;
}

namespace detail_sim {

inline std::size_t pick_weighted(Rng& rng, const std::vector<double>& w) {
  double total = 0;
  for (double x : w) total += x;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u <= 0) return i;
  }
  return w.size() - 1;
}

inline double trunc_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  for (int tries = 0; tries < 1000; ++tries) {
    const double x = rng.normal(mean, sd);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

// mean near 25, sd large, mass near zero: mixture of an early-visit spike and
// an exponential tail
inline double first_visit_sample(Rng& rng) {
  if (rng.uniform() < 0.55) return std::floor(rng.uniform(0.0, 15.0));
  double x = -55.0 * std::log(1.0 - rng.uniform());
  return std::floor(std::min(x, 700.0));
}

}  // namespace detail_sim

/// Generate a simulated registry table. Deterministic under seed. Planted
/// violation rows are appended with covariates drawn from the same model so
/// each trips only its own filter rule.
inline MixedTable simulate_registry(std::size_t n, std::uint64_t seed, const SimulatorProfile& p) {
  if (n < 200) throw Error("simulate_registry: n must be >= 200");
  const std::size_t planted = p.planted_out_of_region + p.planted_over_age +
                              p.planted_negative_first_visit + p.planted_rare_village_rows;
  if (planted >= n) throw Error("simulate_registry: planted violations exceed n");
  const bool viol = planted > 0;
  TableSchema schema = simulator_schema(p, viol);
  MixedTable table(schema);
  Rng rng(seed);

  const int gcol = schema.index_of("gender"), vcol = schema.index_of("village"),
            ccol = schema.index_of("clinic"), acol = schema.index_of("age"),
            fcol = schema.index_of("first_visit_day");

  std::vector<double> clinic_w;
  for (const auto& c : p.clinics) clinic_w.push_back(c.second);

  const std::size_t n_clean = n - planted;

  // covariates first, so the outcome intercepts can be calibrated against the
  // realized sample rather than the nominal distribution
  struct Cov {
    std::size_t gender, village, clinic;
    double age, fvd;
  };
  std::vector<Cov> rows;
  rows.reserve(n);
  auto draw_cov = [&]() {
    Cov c;
    c.clinic = detail_sim::pick_weighted(rng, clinic_w);
    std::vector<double> vw;
    std::vector<std::size_t> vidx;
    for (std::size_t v = 0; v < p.villages.size(); ++v)
      if (p.villages[v].second.first == c.clinic) {
        vidx.push_back(v);
        vw.push_back(p.villages[v].second.second);
      }
    c.village = vidx[detail_sim::pick_weighted(rng, vw)];
    c.gender = rng.uniform() < p.female_frac ? 0 : 1;
    c.age = detail_sim::trunc_normal(rng, p.age_mean, p.age_sd, p.age_min, p.age_max);
    c.fvd = detail_sim::first_visit_sample(rng);
    return c;
  };
  for (std::size_t i = 0; i < n_clean; ++i) rows.push_back(draw_cov());

  // violation rows: same covariate model with one field overridden
  const std::size_t n_in_region = p.in_region_villages().size();
  std::size_t rare_base = n_in_region + (p.planted_out_of_region > 0 ? 3 : 0);
  for (std::size_t i = 0; i < p.planted_out_of_region; ++i) {
    Cov c = draw_cov();
    c.village = n_in_region + rng.index(3);
    rows.push_back(c);
  }
  for (std::size_t i = 0; i < p.planted_over_age; ++i) {
    Cov c = draw_cov();
    c.age = rng.uniform(p.age_max + 0.2, p.age_max + 4.0);
    rows.push_back(c);
  }
  for (std::size_t i = 0; i < p.planted_negative_first_visit; ++i) {
    Cov c = draw_cov();
    c.fvd = -std::floor(rng.uniform(1.0, 60.0));
    rows.push_back(c);
  }
  for (std::size_t i = 0; i < p.planted_rare_village_rows; ++i) {
    Cov c = draw_cov();
    c.village = rare_base + i / 4;  // at most 4 rows per rare village
    rows.push_back(c);
  }

  // standardized covariates for the outcome model
  double am = 0, fm = 0;
  for (const auto& c : rows) {
    am += c.age;
    fm += c.fvd;
  }
  am /= static_cast<double>(rows.size());
  fm /= static_cast<double>(rows.size());
  double av = 0, fv = 0;
  for (const auto& c : rows) {
    av += (c.age - am) * (c.age - am);
    fv += (c.fvd - fm) * (c.fvd - fm);
  }
  const double asd = std::sqrt(av / static_cast<double>(rows.size()));
  const double fsd = std::sqrt(fv / static_cast<double>(rows.size()));

  std::vector<std::vector<double>> logits(rows.size());
  std::vector<double> base(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = rows[i];
    base[i] = p.w_age * (c.age - am) / asd + p.w_first_visit * (c.fvd - fm) / fsd +
              p.w_gender * (c.gender == 0 ? 1.0 : -1.0) +
              p.w_clinic * (c.clinic == 0 ? 1.0 : -0.5);
  }

  // bisect each vaccine's intercept so the expected positive rate hits target
  std::vector<double> intercepts(p.vaccines.size());
  for (std::size_t v = 0; v < p.vaccines.size(); ++v) {
    double lo = -12, hi = 12;
    for (int it = 0; it < 60; ++it) {
      const double b0 = 0.5 * (lo + hi);
      double mean_p = 0;
      for (double b : base) mean_p += sigmoid(b0 + b);
      mean_p /= static_cast<double>(base.size());
      (mean_p < p.vaccines[v].positive_rate ? lo : hi) = b0;
    }
    intercepts[v] = 0.5 * (lo + hi);
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = rows[i];
    std::vector<double> row(schema.size(), 0.0);
    row[gcol] = static_cast<double>(c.gender);
    row[vcol] = static_cast<double>(c.village);
    row[ccol] = static_cast<double>(c.clinic);
    row[acol] = c.age;
    row[fcol] = c.fvd;
    for (std::size_t v = 0; v < p.vaccines.size(); ++v) {
      const double prob = sigmoid(intercepts[v] + base[i]);
      row[5 + v] = rng.uniform() < prob ? 1.0 : 0.0;
    }
    table.add_row(std::move(row));
  }
  return table;
}

}  // namespace tabforge::sim
