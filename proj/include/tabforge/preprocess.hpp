#pragma once

// Registry preprocessing: the four filter rules, standardization, rank-based
// quantile transforms for numeric columns, and the category-stable 80/20 split.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tabforge/common.hpp"
#include "tabforge/table.hpp"

namespace tabforge {

class UnsplittableCategoryError : public Error {
 public:
  explicit UnsplittableCategoryError(const std::string& msg)
      : Error("unsplittable category: " + msg) {}
};

// ------------------------------- filters ------------------------------------

struct FilterConfig {
  std::vector<std::string> village_allow_list;  // empty list disables rule (a)
  double max_age{8.0};
  std::size_t min_village_count{5};
  std::string village_column{"village"};
  std::string age_column{"age"};
  std::string first_visit_column{"first_visit_day"};
};

struct FilterStage {
  std::string rule;
  std::size_t rows_before{0};
  std::size_t rows_after{0};
};

struct FilterReport {
  std::vector<FilterStage> stages;

  std::string to_text() const {
    std::ostringstream os;
    os << "stage,rule,rows_before,rows_after\n";
    for (std::size_t i = 0; i < stages.size(); ++i)
      os << i + 1 << ',' << stages[i].rule << ',' << stages[i].rows_before << ','
         << stages[i].rows_after << '\n';
    return os.str();
  }
};

/// Applies, in order: village allow-list, age cap (strictly greater than
/// max_age excluded), first visit before birth (negative day offset), and the
/// rare-village rule (villages with fewer than min_village_count rows).
inline MixedTable apply_filters(const MixedTable& t, const FilterConfig& cfg, FilterReport& report) {
  const auto& schema = t.schema();
  const int vcol = schema.index_of(cfg.village_column);
  const int acol = schema.index_of(cfg.age_column);
  const int fcol = schema.index_of(cfg.first_visit_column);
  if (vcol < 0 || acol < 0 || fcol < 0)
    throw SchemaMismatchError("filter columns not present in schema");

  std::vector<std::size_t> keep(t.n_rows());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;

  auto run_stage = [&](const std::string& rule, auto pred) {
    FilterStage st;
    st.rule = rule;
    st.rows_before = keep.size();
    std::vector<std::size_t> next;
    next.reserve(keep.size());
    for (auto i : keep)
      if (pred(i)) next.push_back(i);
    keep = std::move(next);
    st.rows_after = keep.size();
    report.stages.push_back(st);
  };

  std::set<std::size_t> allowed;
  if (!cfg.village_allow_list.empty()) {
    for (const auto& v : cfg.village_allow_list) {
      const int idx = schema.category_index(static_cast<std::size_t>(vcol), v);
      if (idx >= 0) allowed.insert(static_cast<std::size_t>(idx));
    }
  } else {
    for (std::size_t c = 0; c < schema.columns[vcol].categories.size(); ++c) allowed.insert(c);
  }
  run_stage("village_allow_list",
            [&](std::size_t i) { return allowed.count(static_cast<std::size_t>(t.cell(i, vcol))) > 0; });
  run_stage("age_cap", [&](std::size_t i) { return t.cell(i, acol) <= cfg.max_age; });
  run_stage("first_visit_before_birth", [&](std::size_t i) { return t.cell(i, fcol) >= 0.0; });

  std::map<std::size_t, std::size_t> vcount;
  for (auto i : keep) ++vcount[static_cast<std::size_t>(t.cell(i, vcol))];
  run_stage("rare_village", [&](std::size_t i) {
    return vcount[static_cast<std::size_t>(t.cell(i, vcol))] >= cfg.min_village_count;
  });

  return t.select(keep);
}

// -------------------------------- scaler ------------------------------------

/// Per-numeric-column standardization parameters fitted on the training split
/// (population standard deviation, matching the usual library convention).
struct ScalerParams {
  std::vector<int> columns;  // schema indices of numeric columns
  std::vector<double> mean, sd;
};

inline ScalerParams fit_scaler(const MixedTable& train) {
  ScalerParams p;
  const auto& schema = train.schema();
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema.columns[j].kind != ColumnKind::Numeric) continue;
    double m = 0;
    for (std::size_t i = 0; i < train.n_rows(); ++i) m += train.cell(i, j);
    m /= static_cast<double>(train.n_rows());
    double v = 0;
    for (std::size_t i = 0; i < train.n_rows(); ++i) {
      const double d = train.cell(i, j) - m;
      v += d * d;
    }
    v /= static_cast<double>(train.n_rows());
    if (v <= 0.0) throw ConstantColumnError(schema.columns[j].name);
    p.columns.push_back(static_cast<int>(j));
    p.mean.push_back(m);
    p.sd.push_back(std::sqrt(v));
  }
  return p;
}

inline MixedTable apply_scaler(const MixedTable& t, const ScalerParams& p, bool inverse = false) {
  MixedTable out(t.schema());
  for (std::size_t i = 0; i < t.n_rows(); ++i) {
    auto row = t.row(i);
    for (std::size_t k = 0; k < p.columns.size(); ++k) {
      auto j = static_cast<std::size_t>(p.columns[k]);
      row[j] = inverse ? row[j] * p.sd[k] + p.mean[k] : (row[j] - p.mean[k]) / p.sd[k];
    }
    out.add_row(std::move(row));
  }
  return out;
}

// --------------------------- quantile transform ------------------------------

/// Rank-based map of one numeric column to a standard normal, with the inverse
/// interpolating back into the training empirical distribution.
class QuantileTransform {
 public:
  QuantileTransform() = default;

  explicit QuantileTransform(std::vector<double> train_values) : sorted_(std::move(train_values)) {
    if (sorted_.empty()) throw Error("quantile transform: empty column");
    std::sort(sorted_.begin(), sorted_.end());
  }

  double forward(double x) const {
    const auto n = static_cast<double>(sorted_.size());
    const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    const auto hi = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    double p = (static_cast<double>(lo + hi) / 2.0 + 0.5) / (n + 1.0);
    p = std::clamp(p, 1.0 / (4.0 * n + 4.0), 1.0 - 1.0 / (4.0 * n + 4.0));
    return norm_ppf(p);
  }

  double inverse(double z) const {
    const auto n = sorted_.size();
    const double p = norm_cdf(z);
    const double pos = p * (static_cast<double>(n) + 1.0) - 0.5;  // inverse of forward's rank map
    if (pos <= 0.0) return sorted_.front();
    if (pos >= static_cast<double>(n - 1)) return sorted_.back();
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return sorted_[i] * (1.0 - frac) + sorted_[i + 1] * frac;
  }

  const std::vector<double>& sorted_train() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

/// One transform per numeric column, fitted on the training split.
struct QuantileSet {
  std::vector<int> columns;
  std::vector<QuantileTransform> transforms;

  static QuantileSet fit(const MixedTable& train) {
    QuantileSet q;
    const auto& schema = train.schema();
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (schema.columns[j].kind != ColumnKind::Numeric) continue;
      q.columns.push_back(static_cast<int>(j));
      q.transforms.emplace_back(train.column(j));
    }
    return q;
  }

  MixedTable apply(const MixedTable& t, bool inverse = false) const {
    MixedTable out(t.schema());
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
      auto row = t.row(i);
      for (std::size_t k = 0; k < columns.size(); ++k) {
        auto j = static_cast<std::size_t>(columns[k]);
        row[j] = inverse ? transforms[k].inverse(row[j]) : transforms[k].forward(row[j]);
      }
      out.add_row(std::move(row));
    }
    return out;
  }
};

// --------------------------------- split -------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train, test;
};

/// Random partition with a repair pass that guarantees every category of every
/// categorical column appears on both sides. Deterministic under seed.
inline SplitIndices split_indices(const MixedTable& t, double train_frac, std::uint64_t seed) {
  if (t.n_rows() == 0) throw Error("split: empty table");
  const auto& schema = t.schema();

  // categories with fewer than 2 rows cannot straddle the split
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema.columns[j].kind != ColumnKind::Categorical) continue;
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t i = 0; i < t.n_rows(); ++i) ++counts[static_cast<std::size_t>(t.cell(i, j))];
    for (const auto& [cat, cnt] : counts)
      if (cnt < 2)
        throw UnsplittableCategoryError("column '" + schema.columns[j].name + "' category '" +
                                        schema.columns[j].categories[cat] + "' has " +
                                        std::to_string(cnt) + " row(s)");
  }

  std::vector<std::size_t> order(t.n_rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  auto k = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(t.n_rows())));
  k = std::clamp<std::size_t>(k, 1, t.n_rows() - 1);

  std::vector<int> side(t.n_rows(), 0);  // 0 = train, 1 = test
  for (std::size_t i = k; i < order.size(); ++i) side[order[i]] = 1;

  std::vector<std::size_t> cat_cols;
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (schema.columns[j].kind == ColumnKind::Categorical) cat_cols.push_back(j);

  auto count_on = [&](std::size_t col, std::size_t cat, int s) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < t.n_rows(); ++i)
      if (side[i] == s && static_cast<std::size_t>(t.cell(i, col)) == cat) ++c;
    return c;
  };

  // repair: for any (column, category) absent from one side, move one row over
  // and balance sizes by moving back a row whose categories all stay covered
  for (int pass = 0; pass < 8; ++pass) {
    bool moved = false;
    for (auto col : cat_cols) {
      const std::size_t ncats = schema.columns[col].categories.size();
      for (std::size_t cat = 0; cat < ncats; ++cat) {
        if (count_on(col, cat, 0) + count_on(col, cat, 1) == 0) continue;  // category unused
        for (int missing : {0, 1}) {
          if (count_on(col, cat, missing) > 0) continue;
          const int donor = 1 - missing;
          // take a row of this category from the donor side
          std::size_t take = t.n_rows();
          for (std::size_t i = 0; i < t.n_rows(); ++i)
            if (side[i] == donor && static_cast<std::size_t>(t.cell(i, col)) == cat &&
                [&] {
                  for (auto c2 : cat_cols)
                    if (count_on(c2, static_cast<std::size_t>(t.cell(i, c2)), donor) < 2) return false;
                  return true;
                }()) {
              take = i;
              break;
            }
          if (take == t.n_rows()) continue;  // no safe donor this pass
          side[take] = missing;
          // rebalance with any safe row from the now-larger side
          for (std::size_t i = 0; i < t.n_rows(); ++i) {
            if (i == take || side[i] != missing) continue;
            bool safe = true;
            for (auto c2 : cat_cols)
              if (count_on(c2, static_cast<std::size_t>(t.cell(i, c2)), missing) < 2) {
                safe = false;
                break;
              }
            if (safe) {
              side[i] = donor;
              break;
            }
          }
          moved = true;
        }
      }
    }
    if (!moved) break;
  }

  SplitIndices out;
  for (std::size_t i = 0; i < t.n_rows(); ++i) (side[i] == 0 ? out.train : out.test).push_back(i);
  return out;
}

inline std::pair<MixedTable, MixedTable> split(const MixedTable& t, double train_frac, std::uint64_t seed) {
  auto idx = split_indices(t, train_frac, seed);
  return {t.select(idx.train), t.select(idx.test)};
}

}  // namespace tabforge
