#pragma once

// Outcome classifiers: L2-regularized logistic regression (library-default
// semantics: C=1, i.e. ridge strength 1/n on the mean log-loss), second-order
// gradient-boosted trees (exact greedy splits, 100 trees, depth 6, eta=0.3,
// lambda=1), SMOTE minority oversampling, and gain-based feature importance.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tabforge/common.hpp"
#include "tabforge/serialize.hpp"
#include "tabforge/table.hpp"

namespace tabforge::clf {

struct SingleClassError : Error {
  using Error::Error;
};

// ------------------------------ design matrix --------------------------------

/// Row-major n x p feature matrix with 0/1 labels. Categorical (and binary
/// outcome) predictors are one-hot encoded with no reference category dropped;
/// numeric predictors pass through as-is (scale them upstream).
struct DesignMatrix {
  std::size_t n{0}, p{0};
  std::vector<double> x;  // n * p, row-major
  std::vector<int> y;
  std::vector<std::string> feature_names;

  double at(std::size_t i, std::size_t j) const { return x[i * p + j]; }
  std::vector<double> row(std::size_t i) const {
    return {x.begin() + static_cast<long>(i * p), x.begin() + static_cast<long>((i + 1) * p)};
  }

  bool both_classes() const {
    bool pos = false, neg = false;
    for (int v : y) (v ? pos : neg) = true;
    return pos && neg;
  }
};

/// Build a design matrix from a table, predicting `outcome_col`; all other
/// columns become features.
inline DesignMatrix design_matrix(const MixedTable& t, const std::string& outcome_col) {
  const auto& schema = t.schema();
  const std::size_t oc = schema.index_of(outcome_col);
  if (schema.columns[oc].kind != ColumnKind::OutcomeBinary)
    throw SchemaMismatchError("design_matrix: " + outcome_col + " is not a binary outcome");
  DesignMatrix d;
  d.n = t.n_rows();
  struct Enc {
    std::size_t col, width;  // width 0 = numeric passthrough
  };
  std::vector<Enc> encs;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (j == oc) continue;
    const auto& c = schema.columns[j];
    if (c.kind == ColumnKind::Numeric) {
      encs.push_back({j, 0});
      d.feature_names.push_back(c.name);
    } else {
      const std::size_t w = c.kind == ColumnKind::Categorical ? c.categories.size() : 2;
      encs.push_back({j, w});
      for (std::size_t k = 0; k < w; ++k) {
        const std::string cat =
            c.kind == ColumnKind::Categorical ? c.categories[k] : (k == 0 ? "0" : "1");
        d.feature_names.push_back(c.name + "=" + cat);
      }
    }
  }
  d.p = d.feature_names.size();
  d.x.assign(d.n * d.p, 0.0);
  d.y.resize(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    d.y[i] = t.cell(i, oc) != 0.0 ? 1 : 0;
    std::size_t col = 0;
    for (const auto& e : encs) {
      const double v = t.cell(i, e.col);
      if (!std::isfinite(v)) throw NonFiniteError("design_matrix row " + std::to_string(i));
      if (e.width == 0) {
        d.x[i * d.p + col] = v;
        ++col;
      } else {
        const auto k = static_cast<std::size_t>(v);
        if (k >= e.width) throw SchemaMismatchError("design_matrix: category index out of range");
        d.x[i * d.p + col + k] = 1.0;
        col += e.width;
      }
    }
  }
  return d;
}

// --------------------------- logistic regression -----------------------------

struct LogRegConfig {
  double C{1.0};  // inverse regularization; ridge strength is 1 / (n * C)
  std::size_t max_iters{5000};
  double tol{1e-6};  // gradient-norm stopping criterion
  double init_scale{0.0};  // nonzero: random initialization (convexity checks)
};

struct LogRegModel {
  std::vector<double> weights;
  double intercept{0.0};
  double lambda{0.0};
  bool converged{false};
  double grad_norm{0.0};
  double loss{0.0};
};

namespace detail_clf {

/// Solve A x = b (dense, in place) by Gaussian elimination with partial
/// pivoting; A is p x p row-major.
inline std::vector<double> solve_dense(std::vector<double> A, std::vector<double> b) {
  const std::size_t p = b.size();
  for (std::size_t k = 0; k < p; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < p; ++i)
      if (std::abs(A[i * p + k]) > std::abs(A[piv * p + k])) piv = i;
    if (std::abs(A[piv * p + k]) < 1e-300) throw Error("solve_dense: singular system");
    if (piv != k) {
      for (std::size_t j = 0; j < p; ++j) std::swap(A[k * p + j], A[piv * p + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < p; ++i) {
      const double f = A[i * p + k] / A[k * p + k];
      for (std::size_t j = k; j < p; ++j) A[i * p + j] -= f * A[k * p + j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(p);
  for (std::size_t ik = p; ik-- > 0;) {
    double s = b[ik];
    for (std::size_t j = ik + 1; j < p; ++j) s -= A[ik * p + j] * x[j];
    x[ik] = s / A[ik * p + ik];
  }
  return x;
}

inline double logreg_loss(const DesignMatrix& d, const std::vector<double>& w, double b,
                          double lambda) {
  double loss = 0;
  for (std::size_t i = 0; i < d.n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d.p; ++j) z += d.at(i, j) * w[j];
    // log(1 + exp(-margin)) computed stably
    const double margin = (d.y[i] ? z : -z);
    loss += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  }
  loss /= static_cast<double>(d.n);
  double reg = 0;
  for (double v : w) reg += v * v;
  return loss + 0.5 * lambda * reg;
}

}  // namespace detail_clf

/// Full-batch Newton (IRLS) with step halving on the ridge-penalized mean
/// log-loss; the intercept is unpenalized. Deterministic given (config, seed).
inline LogRegModel fit_logreg(const DesignMatrix& d, const LogRegConfig& cfg = {},
                              std::uint64_t seed = 0) {
  if (d.n < 2) throw Error("fit_logreg: need at least 2 rows");
  if (!d.both_classes()) throw SingleClassError("fit_logreg: single-class labels");
  const double lambda = 1.0 / (static_cast<double>(d.n) * cfg.C);
  const std::size_t q = d.p + 1;  // weights + intercept
  std::vector<double> theta(q, 0.0);
  if (cfg.init_scale != 0.0) {
    Rng rng(seed ^ 0x10e9ull);
    for (auto& v : theta) v = rng.normal() * cfg.init_scale;
  }
  auto loss_of = [&](const std::vector<double>& th) {
    std::vector<double> w(th.begin(), th.begin() + static_cast<long>(d.p));
    return detail_clf::logreg_loss(d, w, th[d.p], lambda);
  };
  LogRegModel m;
  m.lambda = lambda;
  double cur = loss_of(theta);
  std::vector<double> grad(q), hess(q * q), pvec(d.n);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < d.n; ++i) {
      double z = theta[d.p];
      for (std::size_t j = 0; j < d.p; ++j) z += d.at(i, j) * theta[j];
      const double pr = sigmoid(z);
      pvec[i] = pr;
      const double g = (pr - static_cast<double>(d.y[i])) / static_cast<double>(d.n);
      const double h = std::max(pr * (1.0 - pr), 1e-10) / static_cast<double>(d.n);
      for (std::size_t j = 0; j < q; ++j) {
        const double xj = j < d.p ? d.at(i, j) : 1.0;
        grad[j] += g * xj;
        for (std::size_t k2 = j; k2 < q; ++k2) {
          const double xk = k2 < d.p ? d.at(i, k2) : 1.0;
          hess[j * q + k2] += h * xj * xk;
        }
      }
    }
    for (std::size_t j = 0; j < d.p; ++j) {
      grad[j] += lambda * theta[j];
      hess[j * q + j] += lambda;
    }
    hess[d.p * q + d.p] += 1e-12;  // keep the intercept block nonsingular
    for (std::size_t j = 0; j < q; ++j)
      for (std::size_t k2 = 0; k2 < j; ++k2) hess[j * q + k2] = hess[k2 * q + j];
    double gn = 0;
    for (double g : grad) gn += g * g;
    gn = std::sqrt(gn);
    m.grad_norm = gn;
    if (gn <= cfg.tol) {
      m.converged = true;
      break;
    }
    auto step = detail_clf::solve_dense(hess, grad);
    double alpha = 1.0;
    for (int half = 0; half < 60; ++half) {
      std::vector<double> cand(q);
      for (std::size_t j = 0; j < q; ++j) cand[j] = theta[j] - alpha * step[j];
      const double cl = loss_of(cand);
      if (cl <= cur + 1e-15) {
        theta = std::move(cand);
        cur = cl;
        break;
      }
      alpha *= 0.5;
    }
  }
  m.weights.assign(theta.begin(), theta.begin() + static_cast<long>(d.p));
  m.intercept = theta[d.p];
  m.loss = cur;
  for (double v : m.weights)
    if (!std::isfinite(v)) throw NonFiniteError("fit_logreg weights");
  return m;
}

inline std::vector<double> predict_proba(const LogRegModel& m, const DesignMatrix& d) {
  if (m.weights.size() != d.p) throw ShapeMismatchError("predict_proba: feature count mismatch");
  std::vector<double> out(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    double z = m.intercept;
    for (std::size_t j = 0; j < d.p; ++j) z += d.at(i, j) * m.weights[j];
    out[i] = sigmoid(z);
  }
  return out;
}

/// Labels at a 0.5 threshold; a probability of exactly 0.5 classifies positive.
inline std::vector<int> labels_at_half(const std::vector<double>& proba) {
  std::vector<int> out(proba.size());
  for (std::size_t i = 0; i < proba.size(); ++i) out[i] = proba[i] >= 0.5 ? 1 : 0;
  return out;
}

// ------------------------- gradient-boosted trees ----------------------------

struct GbtConfig {
  std::size_t n_trees{100};
  std::size_t max_depth{6};
  double eta{0.3};
  double lambda_reg{1.0};
};

struct TreeNode {
  bool leaf{true};
  std::size_t feature{0};
  double threshold{0.0};
  int left{-1}, right{-1};
  double weight{0.0};  // leaf value (pre-eta)
  double gain{0.0};    // split gain (internal nodes)
};

struct Tree {
  std::vector<TreeNode> nodes;  // node 0 is the root

  double value(const double* row) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].leaf) {
      const auto& nd = nodes[static_cast<std::size_t>(i)];
      i = row[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(i)].weight;
  }
};

struct GbtModel {
  GbtConfig cfg;
  double base_score{0.0};  // logit space
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
  std::vector<double> train_loss;  // mean log-loss after each tree
};

namespace detail_clf {

struct SplitChoice {
  bool found{false};
  std::size_t feature{0};
  double threshold{0.0};
  double gain{0.0};
};

inline double leaf_obj(double G, double H, double lambda) { return G * G / (H + lambda); }

/// Exact greedy best split over all features for the given row subset.
inline SplitChoice best_split(const DesignMatrix& d, const std::vector<std::size_t>& rows,
                              const std::vector<double>& g, const std::vector<double>& h,
                              double lambda, bool impure) {
  double Gp = 0, Hp = 0;
  for (auto i : rows) {
    Gp += g[i];
    Hp += h[i];
  }
  const double parent = leaf_obj(Gp, Hp, lambda);
  SplitChoice best;
  std::vector<std::pair<double, std::size_t>> vals(rows.size());
  for (std::size_t f = 0; f < d.p; ++f) {
    for (std::size_t k = 0; k < rows.size(); ++k) vals[k] = {d.at(rows[k], f), rows[k]};
    std::sort(vals.begin(), vals.end());
    double GL = 0, HL = 0;
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      GL += g[vals[k].second];
      HL += h[vals[k].second];
      if (vals[k].first == vals[k + 1].first) continue;
      const double gain =
          0.5 * (leaf_obj(GL, HL, lambda) + leaf_obj(Gp - GL, Hp - HL, lambda) - parent);
      // accept strictly positive gains; for impure nodes also accept exact
      // zero-gain ties so symmetric targets (e.g. XOR) remain representable
      const bool ok = gain > best.gain + 1e-12 ||
                      (!best.found && impure && gain > -1e-12);
      if (ok) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (vals[k].first + vals[k + 1].first);
        best.gain = std::max(gain, 0.0);
      }
    }
  }
  return best;
}

inline int grow_tree(Tree& tree, const DesignMatrix& d, std::vector<std::size_t> rows,
                     const std::vector<double>& g, const std::vector<double>& h, double lambda,
                     std::size_t depth, std::size_t max_depth) {
  const auto idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  double G = 0, H = 0;
  bool pos = false, neg = false;
  for (auto i : rows) {
    G += g[i];
    H += h[i];
    (g[i] > 0 ? pos : neg) = true;
  }
  tree.nodes[static_cast<std::size_t>(idx)].weight = -G / (H + lambda);
  if (depth >= max_depth || rows.size() < 2) return idx;
  auto sp = best_split(d, rows, g, h, lambda, pos && neg);
  if (!sp.found) return idx;
  std::vector<std::size_t> lrows, rrows;
  for (auto i : rows) (d.at(i, sp.feature) < sp.threshold ? lrows : rrows).push_back(i);
  if (lrows.empty() || rrows.empty()) return idx;
  rows.clear();
  rows.shrink_to_fit();
  const int l = grow_tree(tree, d, std::move(lrows), g, h, lambda, depth + 1, max_depth);
  const int r = grow_tree(tree, d, std::move(rrows), g, h, lambda, depth + 1, max_depth);
  auto& nd = tree.nodes[static_cast<std::size_t>(idx)];
  nd.leaf = false;
  nd.feature = sp.feature;
  nd.threshold = sp.threshold;
  nd.gain = sp.gain;
  nd.left = l;
  nd.right = r;
  return idx;
}

}  // namespace detail_clf

/// Second-order boosting on the logistic loss: g = p - y, h = p(1 - p), exact
/// greedy splits, leaf weight -G/(H + lambda). Deterministic (no subsampling;
/// the seed parameter is reserved for stochastic variants).
inline GbtModel fit_gbt(const DesignMatrix& d, const GbtConfig& cfg = {}, std::uint64_t = 0) {
  if (d.n < 2) throw Error("fit_gbt: need at least 2 rows");
  if (!d.both_classes()) throw SingleClassError("fit_gbt: single-class labels");
  GbtModel m;
  m.cfg = cfg;
  m.feature_names = d.feature_names;
  std::vector<double> F(d.n, m.base_score), g(d.n), h(d.n);
  for (std::size_t tix = 0; tix < cfg.n_trees; ++tix) {
    for (std::size_t i = 0; i < d.n; ++i) {
      const double p = sigmoid(F[i]);
      g[i] = p - static_cast<double>(d.y[i]);
      h[i] = std::max(p * (1.0 - p), 1e-16);
    }
    Tree tree;
    std::vector<std::size_t> rows(d.n);
    std::iota(rows.begin(), rows.end(), 0);
    detail_clf::grow_tree(tree, d, std::move(rows), g, h, cfg.lambda_reg, 0, cfg.max_depth);
    for (std::size_t i = 0; i < d.n; ++i) F[i] += cfg.eta * tree.value(&d.x[i * d.p]);
    m.trees.push_back(std::move(tree));
    double loss = 0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const double margin = d.y[i] ? F[i] : -F[i];
      loss += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    }
    m.train_loss.push_back(loss / static_cast<double>(d.n));
  }
  return m;
}

inline std::vector<double> predict_proba(const GbtModel& m, const DesignMatrix& d) {
  if (!m.trees.empty() && !m.feature_names.empty() && m.feature_names.size() != d.p)
    throw ShapeMismatchError("predict_proba: feature count mismatch");
  std::vector<double> out(d.n);
  for (std::size_t i = 0; i < d.n; ++i) {
    double F = m.base_score;
    for (const auto& t : m.trees) F += m.cfg.eta * t.value(&d.x[i * d.p]);
    out[i] = sigmoid(F);
  }
  return out;
}

/// Gain-based importance summed over all splits, normalized to total 1
/// (all-zero when no split exists).
inline std::map<std::string, double> feature_importance(const GbtModel& m) {
  std::map<std::string, double> imp;
  for (const auto& name : m.feature_names) imp[name] = 0.0;
  double total = 0;
  for (const auto& t : m.trees)
    for (const auto& nd : t.nodes)
      if (!nd.leaf) {
        imp[m.feature_names[nd.feature]] += nd.gain;
        total += nd.gain;
      }
  if (total > 0)
    for (auto& [k, v] : imp) v /= total;
  return imp;
}

/// Human-readable dump, one node per line, for audit.
inline std::string dump_trees(const GbtModel& m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    os << "tree " << t << "\n";
    for (std::size_t i = 0; i < m.trees[t].nodes.size(); ++i) {
      const auto& nd = m.trees[t].nodes[i];
      os << "  node " << i << ": ";
      if (nd.leaf)
        os << "leaf weight=" << nd.weight << "\n";
      else
        os << "split " << m.feature_names[nd.feature] << " < " << nd.threshold
           << " gain=" << nd.gain << " left=" << nd.left << " right=" << nd.right << "\n";
    }
  }
  return os.str();
}

// ------------------------------ serialization --------------------------------

inline void save_logreg(const LogRegModel& m, const std::string& path, std::uint64_t schema_hash) {
  io::Container c;
  c.schema_hash = schema_hash;
  c.meta = {m.intercept, m.lambda, m.converged ? 1.0 : 0.0};
  c.blocks["weights"] = io::Block{{m.weights.size()}, m.weights};
  c.save(path);
}

inline LogRegModel load_logreg(const std::string& path, std::uint64_t schema_hash) {
  auto c = io::Container::load(path, schema_hash);
  LogRegModel m;
  m.intercept = c.meta.at(0);
  m.lambda = c.meta.at(1);
  m.converged = c.meta.at(2) != 0.0;
  m.weights = c.blocks.at("weights").data;
  return m;
}

inline void save_gbt(const GbtModel& m, const std::string& path, std::uint64_t schema_hash) {
  io::Container c;
  c.schema_hash = schema_hash;
  c.meta = {m.base_score,       m.cfg.eta,
            m.cfg.lambda_reg,   static_cast<double>(m.cfg.n_trees),
            static_cast<double>(m.cfg.max_depth)};
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    const auto& nodes = m.trees[t].nodes;
    std::vector<double> flat;
    flat.reserve(nodes.size() * 7);
    for (const auto& nd : nodes) {
      flat.push_back(nd.leaf ? 1.0 : 0.0);
      flat.push_back(static_cast<double>(nd.feature));
      flat.push_back(nd.threshold);
      flat.push_back(static_cast<double>(nd.left));
      flat.push_back(static_cast<double>(nd.right));
      flat.push_back(nd.weight);
      flat.push_back(nd.gain);
    }
    c.blocks["tree" + std::to_string(t)] = io::Block{{nodes.size(), 7}, std::move(flat)};
  }
  // feature names stored as fnv hashes are lossy; keep names in a side block
  std::string joined;
  for (const auto& n : m.feature_names) joined += n + "\n";
  std::vector<double> bytes(joined.begin(), joined.end());
  c.blocks["feature_names"] = io::Block{{bytes.size()}, std::move(bytes)};
  c.save(path);
}

inline GbtModel load_gbt(const std::string& path, std::uint64_t schema_hash) {
  auto c = io::Container::load(path, schema_hash);
  GbtModel m;
  m.base_score = c.meta.at(0);
  m.cfg.eta = c.meta.at(1);
  m.cfg.lambda_reg = c.meta.at(2);
  m.cfg.n_trees = static_cast<std::size_t>(c.meta.at(3));
  m.cfg.max_depth = static_cast<std::size_t>(c.meta.at(4));
  for (std::size_t t = 0;; ++t) {
    auto it = c.blocks.find("tree" + std::to_string(t));
    if (it == c.blocks.end()) break;
    Tree tree;
    const auto& flat = it->second.data;
    for (std::size_t i = 0; i + 7 <= flat.size(); i += 7) {
      TreeNode nd;
      nd.leaf = flat[i] != 0.0;
      nd.feature = static_cast<std::size_t>(flat[i + 1]);
      nd.threshold = flat[i + 2];
      nd.left = static_cast<int>(flat[i + 3]);
      nd.right = static_cast<int>(flat[i + 4]);
      nd.weight = flat[i + 5];
      nd.gain = flat[i + 6];
      tree.nodes.push_back(nd);
    }
    m.trees.push_back(std::move(tree));
  }
  if (auto it = c.blocks.find("feature_names"); it != c.blocks.end()) {
    std::string joined;
    for (double b : it->second.data) joined.push_back(static_cast<char>(b));
    std::istringstream is(joined);
    std::string line;
    while (std::getline(is, line)) m.feature_names.push_back(line);
  }
  return m;
}

// ---------------------------------- SMOTE ------------------------------------

struct SmoteResult {
  DesignMatrix data;
  bool duplication_fallback{false};  // minority < 2: plain duplication used
};

/// Oversample the minority class to the majority count: synthetic rows are
/// x_i + u (x_nn - x_i) with u ~ U(0,1) and x_nn one of the k=5 nearest
/// minority neighbors (Euclidean). Original rows are preserved verbatim.
inline SmoteResult smote_oversample(const DesignMatrix& d, std::uint64_t seed, std::size_t k = 5) {
  if (!d.both_classes()) throw SingleClassError("smote_oversample: single-class labels");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < d.n; ++i) (d.y[i] ? pos : neg).push_back(i);
  SmoteResult r;
  r.data = d;
  const bool pos_minor = pos.size() < neg.size();
  const auto& minority = pos_minor ? pos : neg;
  const auto& majority = pos_minor ? neg : pos;
  const std::size_t need = majority.size() - minority.size();
  if (need == 0) return r;
  Rng rng(seed ^ 0x5307eull);
  const int label = pos_minor ? 1 : 0;

  auto append_row = [&](const std::vector<double>& row) {
    r.data.x.insert(r.data.x.end(), row.begin(), row.end());
    r.data.y.push_back(label);
    ++r.data.n;
  };

  if (minority.size() < 2) {
    r.duplication_fallback = true;
    for (std::size_t s = 0; s < need; ++s) append_row(d.row(minority[0]));
    return r;
  }
  const std::size_t kk = std::min(k, minority.size() - 1);
  // k nearest minority neighbors of each minority row
  std::vector<std::vector<std::size_t>> nns(minority.size());
  for (std::size_t a = 0; a < minority.size(); ++a) {
    std::vector<std::pair<double, std::size_t>> ds;
    for (std::size_t b = 0; b < minority.size(); ++b) {
      if (a == b) continue;
      double dist = 0;
      for (std::size_t j = 0; j < d.p; ++j) {
        const double dv = d.at(minority[a], j) - d.at(minority[b], j);
        dist += dv * dv;
      }
      ds.emplace_back(dist, b);
    }
    std::sort(ds.begin(), ds.end());
    for (std::size_t q = 0; q < kk; ++q) nns[a].push_back(ds[q].second);
  }
  for (std::size_t s = 0; s < need; ++s) {
    const std::size_t a = rng.index(minority.size());
    const std::size_t b = nns[a][rng.index(kk)];
    const double u = rng.uniform();
    auto xa = d.row(minority[a]);
    auto xb = d.row(minority[b]);
    for (std::size_t j = 0; j < d.p; ++j) xa[j] += u * (xb[j] - xa[j]);
    append_row(xa);
  }
  return r;
}

}  // namespace tabforge::clf
