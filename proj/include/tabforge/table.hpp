#pragma once

// Mixed-type table model: typed schema, row storage, schema-file and CSV I/O.
// Numeric cells are reals, categorical cells are indices into the schema's
// category list, outcome cells are 0/1.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tabforge/common.hpp"

namespace tabforge {

enum class ColumnKind { Numeric, Categorical, OutcomeBinary };

inline const char* kind_name(ColumnKind k) {
  switch (k) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::OutcomeBinary: return "outcome";
  }
  return "?";
}

struct Column {
  std::string name;
  ColumnKind kind{ColumnKind::Numeric};
  std::vector<std::string> categories;  // categorical only
};

struct TableSchema {
  std::vector<Column> columns;

  std::size_t size() const { return columns.size(); }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int category_index(std::size_t col, const std::string& value) const {
    const auto& cats = columns[col].categories;
    auto it = std::find(cats.begin(), cats.end(), value);
    return it == cats.end() ? -1 : static_cast<int>(it - cats.begin());
  }

  void validate() const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      for (std::size_t j = i + 1; j < columns.size(); ++j)
        if (columns[i].name == columns[j].name)
          throw SchemaMismatchError("duplicate column name '" + columns[i].name + "'");
      if (columns[i].kind == ColumnKind::Categorical && columns[i].categories.size() < 2)
        throw SchemaMismatchError("categorical column '" + columns[i].name + "' needs >= 2 categories");
    }
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& c : columns) {
      h = fnv1a(c.name, h);
      h = fnv1a(kind_name(c.kind), h);
      for (const auto& cat : c.categories) h = fnv1a(cat, h);
    }
    return h;
  }
};

class MixedTable {
 public:
  MixedTable() = default;
  explicit MixedTable(TableSchema schema) : schema_(std::move(schema)) { schema_.validate(); }

  const TableSchema& schema() const { return schema_; }
  std::size_t n_rows() const { return rows_.size(); }
  std::size_t n_cols() const { return schema_.size(); }

  const std::vector<double>& row(std::size_t i) const { return rows_[i]; }
  double cell(std::size_t i, std::size_t j) const { return rows_[i][j]; }

  void add_row(std::vector<double> row) {
    if (row.size() != schema_.size()) throw SchemaMismatchError("row width != schema width");
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto& col = schema_.columns[j];
      if (col.kind == ColumnKind::Categorical) {
        const auto idx = static_cast<long>(row[j]);
        if (idx < 0 || idx >= static_cast<long>(col.categories.size()))
          throw SchemaMismatchError("category index out of range in column '" + col.name + "'");
      } else if (col.kind == ColumnKind::OutcomeBinary) {
        if (row[j] != 0.0 && row[j] != 1.0)
          throw SchemaMismatchError("outcome column '" + col.name + "' must be 0 or 1");
      } else if (!std::isfinite(row[j])) {
        throw SchemaMismatchError("non-finite numeric cell in column '" + col.name + "'");
      }
    }
    rows_.push_back(std::move(row));
  }

  /// Column j as a dense vector.
  std::vector<double> column(std::size_t j) const {
    std::vector<double> v(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i) v[i] = rows_[i][j];
    return v;
  }

  MixedTable select(const std::vector<std::size_t>& row_indices) const {
    MixedTable t(schema_);
    t.rows_.reserve(row_indices.size());
    for (auto i : row_indices) t.rows_.push_back(rows_[i]);
    return t;
  }

  /// Column projection by name (order as given).
  MixedTable project(const std::vector<std::string>& names) const {
    TableSchema s;
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
      idx.push_back(schema_.index_of(n));
      s.columns.push_back(schema_.columns[idx.back()]);
    }
    MixedTable t(std::move(s));
    t.rows_.reserve(rows_.size());
    for (const auto& r : rows_) {
      std::vector<double> nr(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) nr[j] = r[idx[j]];
      t.rows_.push_back(std::move(nr));
    }
    return t;
  }

  /// Narrow every categorical column to the categories actually present,
  /// remapping stored indices (needed after filtering empties out categories).
  MixedTable drop_unused_categories() const {
    TableSchema s = schema_;
    std::vector<std::vector<long>> remap(schema_.size());
    for (std::size_t j = 0; j < schema_.size(); ++j) {
      const auto& col = schema_.columns[j];
      if (col.kind != ColumnKind::Categorical) continue;
      std::vector<bool> seen(col.categories.size(), false);
      for (const auto& r : rows_) seen[static_cast<std::size_t>(r[j])] = true;
      std::vector<std::string> kept;
      remap[j].assign(col.categories.size(), -1);
      for (std::size_t k = 0; k < col.categories.size(); ++k)
        if (seen[k]) {
          remap[j][k] = static_cast<long>(kept.size());
          kept.push_back(col.categories[k]);
        }
      s.columns[j].categories = std::move(kept);
    }
    MixedTable t(std::move(s));
    t.rows_.reserve(rows_.size());
    for (const auto& r : rows_) {
      auto nr = r;
      for (std::size_t j = 0; j < nr.size(); ++j)
        if (!remap[j].empty()) nr[j] = static_cast<double>(remap[j][static_cast<std::size_t>(nr[j])]);
      t.rows_.push_back(std::move(nr));
    }
    return t;
  }

  /// Order-insensitive content hash (used by the leakage guard).
  std::uint64_t content_hash() const {
    std::uint64_t h = schema_.hash();
    std::vector<std::uint64_t> row_hashes;
    row_hashes.reserve(rows_.size());
    for (const auto& r : rows_) row_hashes.push_back(fnv1a(r.data(), r.size() * sizeof(double)));
    std::sort(row_hashes.begin(), row_hashes.end());
    for (auto rh : row_hashes) h = fnv1a(&rh, sizeof(rh), h);
    return h;
  }

 private:
  TableSchema schema_;
  std::vector<std::vector<double>> rows_;
};

// ------------------------------ schema file ---------------------------------
// One column per line:  column <name> <numeric|categorical|outcome> [c1,c2,...]

inline TableSchema load_schema(std::istream& in) {
  TableSchema s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag, name, kind;
    ls >> tag >> name >> kind;
    if (tag != "column") throw SchemaMismatchError("schema line must start with 'column': " + line);
    Column c;
    c.name = name;
    if (kind == "numeric") {
      c.kind = ColumnKind::Numeric;
    } else if (kind == "categorical") {
      c.kind = ColumnKind::Categorical;
      std::string cats;
      ls >> cats;
      std::istringstream cs(cats);
      std::string cat;
      while (std::getline(cs, cat, ',')) c.categories.push_back(cat);
    } else if (kind == "outcome") {
      c.kind = ColumnKind::OutcomeBinary;
    } else {
      throw SchemaMismatchError("unknown column kind '" + kind + "'");
    }
    s.columns.push_back(std::move(c));
  }
  s.validate();
  return s;
}

inline TableSchema load_schema_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open schema file: " + path);
  return load_schema(f);
}

inline void save_schema(const TableSchema& s, std::ostream& out) {
  for (const auto& c : s.columns) {
    out << "column " << c.name << ' ' << kind_name(c.kind);
    if (c.kind == ColumnKind::Categorical) {
      out << ' ';
      for (std::size_t i = 0; i < c.categories.size(); ++i) out << (i ? "," : "") << c.categories[i];
    }
    out << '\n';
  }
}

// --------------------------------- CSV --------------------------------------

struct IngestLog {
  std::size_t parsed{0};
  std::size_t dropped_missing{0};
  std::size_t dropped_unparseable{0};
  std::vector<std::string> messages;  // one entry per rejected row
};

namespace detail_csv {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace detail_csv

/// Read a delimited registry file against a schema. Predictor cells that are
/// empty cause the row to be dropped and logged; outcome (vaccine date)
/// columns are binarized: any nonempty cell -> 1, empty -> 0. More than half
/// the data rows failing to parse is treated as a schema mismatch.
inline MixedTable ingest_csv(std::istream& in, const TableSchema& schema, IngestLog& log) {
  std::string header;
  if (!std::getline(in, header)) throw SchemaMismatchError("empty file");
  auto names = detail_csv::split_csv_line(header);
  std::vector<int> col_of_field(names.size(), -1);
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t f = 0; f < names.size(); ++f) {
    const int c = schema.index_of(detail_csv::trim(names[f]));
    col_of_field[f] = c;
    if (c >= 0) seen[c] = true;
  }
  for (std::size_t c = 0; c < schema.size(); ++c)
    if (!seen[c]) throw SchemaMismatchError("header missing column '" + schema.columns[c].name + "'");

  MixedTable table(schema);
  std::string line;
  std::size_t lineno = 1, total = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ++total;
    auto fields = detail_csv::split_csv_line(line);
    std::vector<double> row(schema.size(), 0.0);
    bool drop_missing = false, drop_bad = false;
    std::string why;
    for (std::size_t f = 0; f < fields.size() && !drop_missing && !drop_bad; ++f) {
      const int c = col_of_field[f];
      if (c < 0) continue;
      const auto& col = schema.columns[c];
      const std::string v = detail_csv::trim(fields[f]);
      switch (col.kind) {
        case ColumnKind::OutcomeBinary:
          // date present (or an explicit 1) -> vaccinated; empty or 0 -> not
          row[c] = (v.empty() || v == "0") ? 0.0 : 1.0;
          break;
        case ColumnKind::Numeric: {
          if (v.empty()) {
            drop_missing = true;
            why = "missing value in '" + col.name + "'";
            break;
          }
          try {
            std::size_t pos = 0;
            row[c] = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
          } catch (const std::exception&) {
            drop_bad = true;
            why = "unparseable numeric '" + v + "' in '" + col.name + "'";
          }
          break;
        }
        case ColumnKind::Categorical: {
          if (v.empty()) {
            drop_missing = true;
            why = "missing value in '" + col.name + "'";
            break;
          }
          const int idx = schema.category_index(static_cast<std::size_t>(c), v);
          if (idx < 0) {
            drop_bad = true;
            why = "unknown category '" + v + "' in '" + col.name + "'";
          } else {
            row[c] = idx;
          }
          break;
        }
      }
    }
    if (fields.size() < names.size()) {
      drop_bad = true;
      why = "short row";
    }
    if (drop_missing) {
      ++log.dropped_missing;
      log.messages.push_back("line " + std::to_string(lineno) + ": " + why);
    } else if (drop_bad) {
      ++log.dropped_unparseable;
      log.messages.push_back("line " + std::to_string(lineno) + ": " + why);
    } else {
      table.add_row(std::move(row));
      ++log.parsed;
    }
  }
  if (total == 0) throw SchemaMismatchError("file has a header but no data rows");
  if (log.dropped_unparseable * 2 > total)
    throw SchemaMismatchError("more than half of the rows failed to parse");
  return table;
}

inline MixedTable ingest_csv_file(const std::string& path, const TableSchema& schema, IngestLog& log) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open: " + path);
  return ingest_csv(f, schema, log);
}

inline void write_csv(const MixedTable& t, std::ostream& out) {
  const auto& s = t.schema();
  for (std::size_t j = 0; j < s.size(); ++j) out << (j ? "," : "") << s.columns[j].name;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < t.n_rows(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j) out << ',';
      const auto& col = s.columns[j];
      if (col.kind == ColumnKind::Categorical)
        out << col.categories[static_cast<std::size_t>(t.cell(i, j))];
      else if (col.kind == ColumnKind::OutcomeBinary)
        out << static_cast<int>(t.cell(i, j));
      else
        out << t.cell(i, j);
    }
    out << '\n';
  }
}

inline void write_csv_file(const MixedTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open for write: " + path);
  write_csv(t, f);
}

}  // namespace tabforge
