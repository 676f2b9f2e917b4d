#pragma once

// Predictive metrics (class-weighted precision/recall/F1) and synthetic-data
// fidelity metrics: KS complement for numeric columns, TVD complement for
// categorical columns, Pearson pair score for numeric pairs, and contingency
// similarity for categorical (and quantile-binned mixed) pairs.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tabforge/common.hpp"
#include "tabforge/table.hpp"

namespace tabforge::metrics {

struct EmptyColumnError : Error {
  using Error::Error;
};
struct LengthMismatchError : Error {
  using Error::Error;
};

// --------------------------- predictive metrics ------------------------------

struct ClassifierScores {
  double precision{0.0}, recall{0.0}, f1{0.0};
};

/// Class-weighted precision/recall/F1 with weights = class support / n.
/// Zero-division convention: an undefined per-class score contributes 0.
inline ClassifierScores weighted_prf(const std::vector<int>& y_true,
                                     const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size()) throw LengthMismatchError("weighted_prf: length mismatch");
  if (y_true.empty()) throw LengthMismatchError("weighted_prf: empty labels");
  const double n = static_cast<double>(y_true.size());
  std::map<int, double> support, tp, fp, fn;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    support[y_true[i]] += 1.0;
    if (y_pred[i] == y_true[i])
      tp[y_true[i]] += 1.0;
    else {
      fp[y_pred[i]] += 1.0;
      fn[y_true[i]] += 1.0;
    }
  }
  ClassifierScores s;
  for (const auto& [cls, sup] : support) {
    const double tpc = tp[cls], fpc = fp[cls], fnc = fn[cls];
    const double prec = tpc + fpc > 0 ? tpc / (tpc + fpc) : 0.0;
    const double rec = tpc + fnc > 0 ? tpc / (tpc + fnc) : 0.0;
    const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    const double w = sup / n;
    s.precision += w * prec;
    s.recall += w * rec;
    s.f1 += w * f1;
  }
  return s;
}

// ---------------------------- fidelity metrics -------------------------------

/// 1 - sup_x |F_real(x) - F_syn(x)| over right-continuous empirical CDFs,
/// evaluated at every pooled sample point.
inline double ks_complement(const std::vector<double>& real_col,
                            const std::vector<double>& syn_col) {
  if (real_col.empty() || syn_col.empty()) throw EmptyColumnError("ks_complement: empty column");
  auto a = real_col, b = syn_col;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto cdf = [](const std::vector<double>& v, double x) {
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) /
           static_cast<double>(v.size());
  };
  double sup = 0;
  for (const auto* v : {&a, &b})
    for (double x : *v) sup = std::max(sup, std::abs(cdf(a, x) - cdf(b, x)));
  return 1.0 - sup;
}

/// 1 - total variation distance between the two category distributions.
inline double tvd_complement(const std::vector<double>& real_col,
                             const std::vector<double>& syn_col) {
  if (real_col.empty() || syn_col.empty()) throw EmptyColumnError("tvd_complement: empty column");
  std::map<long long, double> pr, ps;
  for (double v : real_col) pr[static_cast<long long>(v)] += 1.0 / static_cast<double>(real_col.size());
  for (double v : syn_col) ps[static_cast<long long>(v)] += 1.0 / static_cast<double>(syn_col.size());
  double tvd = 0;
  for (const auto& [c, p] : pr) tvd += std::abs(p - (ps.count(c) ? ps.at(c) : 0.0));
  for (const auto& [c, p] : ps)
    if (!pr.count(c)) tvd += p;
  return 1.0 - 0.5 * tvd;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw LengthMismatchError("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw ConstantColumnError("pearson: constant column");
  return sxy / std::sqrt(sxx * syy);
}

/// 1 - |rho_real - rho_syn| / 2 (the max possible discrepancy is 2).
inline double pearson_pair_score(const std::vector<double>& real_x,
                                 const std::vector<double>& real_y,
                                 const std::vector<double>& syn_x,
                                 const std::vector<double>& syn_y) {
  return 1.0 - std::abs(pearson(real_x, real_y) - pearson(syn_x, syn_y)) / 2.0;
}

/// 1 - half the L1 distance between the joint contingency distributions.
inline double contingency_similarity(const std::vector<double>& real_x,
                                     const std::vector<double>& real_y,
                                     const std::vector<double>& syn_x,
                                     const std::vector<double>& syn_y) {
  if (real_x.empty() || syn_x.empty()) throw EmptyColumnError("contingency_similarity: empty");
  if (real_x.size() != real_y.size() || syn_x.size() != syn_y.size())
    throw LengthMismatchError("contingency_similarity: length mismatch");
  std::map<std::pair<long long, long long>, double> pr, ps;
  for (std::size_t i = 0; i < real_x.size(); ++i)
    pr[{static_cast<long long>(real_x[i]), static_cast<long long>(real_y[i])}] +=
        1.0 / static_cast<double>(real_x.size());
  for (std::size_t i = 0; i < syn_x.size(); ++i)
    ps[{static_cast<long long>(syn_x[i]), static_cast<long long>(syn_y[i])}] +=
        1.0 / static_cast<double>(syn_x.size());
  double l1 = 0;
  for (const auto& [c, p] : pr) l1 += std::abs(p - (ps.count(c) ? ps.at(c) : 0.0));
  for (const auto& [c, p] : ps)
    if (!pr.count(c)) l1 += p;
  return 1.0 - 0.5 * l1;
}

/// Equal-frequency bin edges (deciles by default) from a reference sample;
/// used to discretize the numeric side of mixed column pairs.
inline std::vector<double> quantile_bin_edges(const std::vector<double>& reference,
                                              std::size_t bins = 10) {
  if (reference.empty()) throw EmptyColumnError("quantile_bin_edges: empty reference");
  auto sorted = reference;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < bins; ++k) {
    const double pos = static_cast<double>(k) / static_cast<double>(bins) *
                       static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    const double e = i + 1 < sorted.size() ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
                                           : sorted[i];
    edges.push_back(e);
  }
  return edges;
}

inline std::vector<double> apply_bins(const std::vector<double>& values,
                                      const std::vector<double>& edges) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<double>(std::upper_bound(edges.begin(), edges.end(), values[i]) -
                                 edges.begin());
  return out;
}

// ------------------------------ fidelity report ------------------------------

struct FidelityReport {
  struct Entry {
    std::string name;  // column name or "a|b" pair
    double mean{0.0}, sd{0.0};
  };
  std::vector<Entry> columns;
  std::vector<Entry> pairs;

  double column_mean() const {
    double s = 0;
    for (const auto& e : columns) s += e.mean;
    return columns.empty() ? 0.0 : s / static_cast<double>(columns.size());
  }
  double pair_mean() const {
    double s = 0;
    for (const auto& e : pairs) s += e.mean;
    return pairs.empty() ? 0.0 : s / static_cast<double>(pairs.size());
  }
};

namespace detail_metrics {

inline bool is_numeric(const Column& c) { return c.kind == ColumnKind::Numeric; }

inline FidelityReport::Entry aggregate(std::string name, const std::vector<double>& scores) {
  FidelityReport::Entry e;
  e.name = std::move(name);
  for (double s : scores) e.mean += s;
  e.mean /= static_cast<double>(scores.size());
  for (double s : scores) e.sd += (s - e.mean) * (s - e.mean);
  e.sd = std::sqrt(e.sd / static_cast<double>(scores.size()));
  return e;
}

}  // namespace detail_metrics

/// Column-wise density scores (KS complement for numerics, TVD complement for
/// categoricals) and pairwise correlation scores (Pearson pair score for
/// numeric pairs, contingency similarity otherwise, numerics decile-binned on
/// the real column for mixed pairs), aggregated as mean +- sd over samples.
inline FidelityReport fidelity_report(const MixedTable& real,
                                      const std::vector<MixedTable>& syn_samples) {
  if (syn_samples.empty()) throw Error("fidelity_report: no synthetic samples");
  for (const auto& s : syn_samples)
    if (s.schema().hash() != real.schema().hash())
      throw SchemaMismatchError("fidelity_report: schema mismatch");
  const auto& schema = real.schema();
  const std::size_t C = schema.size();
  FidelityReport rep;

  for (std::size_t j = 0; j < C; ++j) {
    std::vector<double> scores;
    const auto rc = real.column(j);
    for (const auto& s : syn_samples) {
      const auto sc = s.column(j);
      scores.push_back(detail_metrics::is_numeric(schema.columns[j]) ? ks_complement(rc, sc)
                                                                     : tvd_complement(rc, sc));
    }
    rep.columns.push_back(detail_metrics::aggregate(schema.columns[j].name, scores));
  }

  for (std::size_t a = 0; a < C; ++a) {
    for (std::size_t b = a + 1; b < C; ++b) {
      const bool na = detail_metrics::is_numeric(schema.columns[a]);
      const bool nb = detail_metrics::is_numeric(schema.columns[b]);
      const auto ra = real.column(a), rb = real.column(b);
      std::vector<double> scores;
      if (na && nb) {
        for (const auto& s : syn_samples)
          scores.push_back(pearson_pair_score(ra, rb, s.column(a), s.column(b)));
      } else if (!na && !nb) {
        for (const auto& s : syn_samples)
          scores.push_back(contingency_similarity(ra, rb, s.column(a), s.column(b)));
      } else {
        // mixed: decile-bin the numeric side on the real column's distribution
        const auto edges = quantile_bin_edges(na ? ra : rb);
        const auto bra = na ? apply_bins(ra, edges) : ra;
        const auto brb = nb ? apply_bins(rb, edges) : rb;
        for (const auto& s : syn_samples) {
          const auto bsa = na ? apply_bins(s.column(a), edges) : s.column(a);
          const auto bsb = nb ? apply_bins(s.column(b), edges) : s.column(b);
          scores.push_back(contingency_similarity(bra, brb, bsa, bsb));
        }
      }
      rep.pairs.push_back(detail_metrics::aggregate(
          schema.columns[a].name + "|" + schema.columns[b].name, scores));
    }
  }
  return rep;
}

/// Aligned plain-text rendering of a fidelity report.
inline std::string format_fidelity_text(const FidelityReport& rep) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "column-wise density\n";
  for (const auto& e : rep.columns)
    os << "  " << std::setw(28) << std::left << e.name << " " << e.mean << " +- " << e.sd << "\n";
  os << "  " << std::setw(28) << std::left << "(mean)" << " " << rep.column_mean() << "\n";
  os << "pairwise correlation\n";
  for (const auto& e : rep.pairs)
    os << "  " << std::setw(28) << std::left << e.name << " " << e.mean << " +- " << e.sd << "\n";
  os << "  " << std::setw(28) << std::left << "(mean)" << " " << rep.pair_mean() << "\n";
  return os.str();
}

/// Machine-readable rows: metric,name,mean,sd
inline std::string format_fidelity_csv(const FidelityReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,name,mean,sd\n";
  for (const auto& e : rep.columns)
    os << "density," << e.name << "," << e.mean << "," << e.sd << "\n";
  for (const auto& e : rep.pairs)
    os << "correlation," << e.name << "," << e.mean << "," << e.sd << "\n";
  return os.str();
}

}  // namespace tabforge::metrics
