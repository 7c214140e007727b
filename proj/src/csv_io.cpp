#include "grcox/csv_io.hpp"

#include "grcox/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace grcox {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string row_tag(std::size_t row) { return "row " + std::to_string(row + 1); }

double parse_number(const std::string& s, std::size_t row, const std::string& col) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) {
    throw SchemaError(row_tag(row) + ", column '" + col + "': not a number ('" + s + "')");
  }
  return v;
}

bool blank(const std::string& s) { return s.find_first_not_of(' ') == std::string::npos; }

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  throw SchemaError("CSV has no column '" + name + "'");
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw SchemaError(row_tag(t.rows.size()) + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw SchemaError("CSV is empty");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return read_csv(in);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CohortColumns CohortColumns::defaults(Eigen::Index p, Eigen::Index q) {
  CohortColumns c;
  c.id = "id";
  for (Eigen::Index j = 0; j < p; ++j) {
    c.x_star.push_back("x_star_" + std::to_string(j + 1));
    c.x_true.push_back("x_" + std::to_string(j + 1));
  }
  for (Eigen::Index j = 0; j < q; ++j) c.z.push_back("z_" + std::to_string(j + 1));
  c.u_star = "u_star";
  c.delta_star = "delta_star";
  c.u_true = "u";
  c.delta_true = "delta";
  c.r = "r";
  c.pi = "pi";
  return c;
}

CohortFile read_cohort(const CsvTable& table, const CohortColumns& columns) {
  if (columns.x_star.empty()) throw SchemaError("column map: x_star needs at least one column");
  if (columns.u_star.empty() || columns.delta_star.empty()) {
    throw SchemaError("column map: u_star and delta_star are required");
  }
  const bool truth = !columns.x_true.empty() || !columns.u_true.empty() || !columns.delta_true.empty();
  if (truth && (columns.x_true.size() != columns.x_star.size() || columns.u_true.empty() ||
                columns.delta_true.empty())) {
    throw SchemaError("column map: x_true must parallel x_star and u/delta truth columns must both be given");
  }

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto p = static_cast<Eigen::Index>(columns.x_star.size());
  const auto q = static_cast<Eigen::Index>(columns.z.size());
  auto idx = [&](const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    for (const auto& s : names) out.push_back(table.column(s));
    return out;
  };
  const auto xs = idx(columns.x_star);
  const auto zs = idx(columns.z);
  const auto xt = idx(columns.x_true);
  const std::size_t us = table.column(columns.u_star);
  const std::size_t ds = table.column(columns.delta_star);
  auto optional_column = [&](bool present, const std::string& name) { return present ? table.column(name) : kNone; };
  const std::size_t ut = optional_column(truth, columns.u_true);
  const std::size_t dt = optional_column(truth, columns.delta_true);
  const std::size_t rc = optional_column(!columns.r.empty(), columns.r);
  const std::size_t pc = optional_column(!columns.pi.empty(), columns.pi);
  const std::size_t ic = optional_column(!columns.id.empty(), columns.id);

  CohortFile f;
  Cohort& c = f.cohort;
  c.x_star.resize(n, p);
  c.z.resize(n, q);
  c.u_star.resize(n);
  c.delta_star.resize(n);
  if (truth) {
    c.x_true = Matrix::Constant(n, p, std::nan(""));
    c.u_true = Vector::Constant(n, std::nan(""));
    c.delta_true = Vector::Constant(n, std::nan(""));
  }
  if (rc != kNone) f.r = Eigen::VectorXi::Zero(n);
  if (pc != kNone) f.pi = Vector::Zero(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    const auto& cells = table.rows[row];
    auto num = [&](std::size_t col) { return parse_number(cells[col], row, table.header[col]); };
    f.ids.push_back(ic != kNone ? cells[ic] : std::to_string(i + 1));
    for (Eigen::Index j = 0; j < p; ++j) c.x_star(i, j) = num(xs[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < q; ++j) c.z(i, j) = num(zs[static_cast<std::size_t>(j)]);
    c.u_star[i] = num(us);
    c.delta_star[i] = num(ds);
    if (c.delta_star[i] != 0.0 && c.delta_star[i] != 1.0) {
      throw SchemaError(row_tag(row) + ": " + columns.delta_star + " must be 0 or 1");
    }
    if (c.u_star[i] < 0.0) throw SchemaError(row_tag(row) + ": " + columns.u_star + " must be >= 0");

    int r = -1;
    if (rc != kNone) {
      const double v = num(rc);
      if (v != 0.0 && v != 1.0) throw SchemaError(row_tag(row) + ": " + columns.r + " must be 0 or 1");
      r = static_cast<int>(v);
      (*f.r)[i] = r;
    }
    if (pc != kNone) {
      const double v = num(pc);
      if (!(v > 0.0 && v <= 1.0)) throw SchemaError(row_tag(row) + ": " + columns.pi + " must lie in (0, 1]");
      (*f.pi)[i] = v;
    }
    if (!truth) continue;
    std::vector<std::size_t> cols = xt;
    cols.push_back(ut);
    cols.push_back(dt);
    bool any_blank = false;
    for (auto col : cols) any_blank = any_blank || blank(cells[col]);
    if (any_blank) {
      if (r == 1) throw SchemaError(row_tag(row) + ": validated row lacks truth columns");
      // Partial truth on an unvalidated row is treated as missing altogether.
      continue;
    }
    for (Eigen::Index j = 0; j < p; ++j) (*c.x_true)(i, j) = num(xt[static_cast<std::size_t>(j)]);
    (*c.u_true)[i] = num(ut);
    (*c.delta_true)[i] = num(dt);
  }
  c.validate();
  return f;
}

void write_cohort(std::ostream& out, const Cohort& cohort, const CohortColumns& columns, const TwoPhaseSample* sample) {
  const Eigen::Index n = cohort.size();
  if (static_cast<Eigen::Index>(columns.x_star.size()) != cohort.p() ||
      static_cast<Eigen::Index>(columns.z.size()) != cohort.q()) {
    throw DimensionError("write_cohort: column map does not match the cohort");
  }
  const bool truth = cohort.has_truth() && !columns.u_true.empty();
  const bool with_sample = sample != nullptr && !columns.r.empty() && !columns.pi.empty();
  if (with_sample && sample->size() != n) throw DimensionError("write_cohort: sample length differs");

  std::vector<std::string> head;
  if (!columns.id.empty()) head.push_back(columns.id);
  head.insert(head.end(), columns.x_star.begin(), columns.x_star.end());
  head.insert(head.end(), columns.z.begin(), columns.z.end());
  head.push_back(columns.u_star);
  head.push_back(columns.delta_star);
  if (truth) {
    head.insert(head.end(), columns.x_true.begin(), columns.x_true.end());
    head.push_back(columns.u_true);
    head.push_back(columns.delta_true);
  }
  if (with_sample) {
    head.push_back(columns.r);
    head.push_back(columns.pi);
  }
  for (std::size_t j = 0; j < head.size(); ++j) out << (j ? "," : "") << head[j];
  out << '\n';

  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::string> cells;
    if (!columns.id.empty()) cells.push_back(std::to_string(i + 1));
    for (Eigen::Index j = 0; j < cohort.p(); ++j) cells.push_back(format_double(cohort.x_star(i, j)));
    for (Eigen::Index j = 0; j < cohort.q(); ++j) cells.push_back(format_double(cohort.z(i, j)));
    cells.push_back(format_double(cohort.u_star[i]));
    cells.push_back(format_double(cohort.delta_star[i]));
    if (truth) {
      for (Eigen::Index j = 0; j < cohort.p(); ++j) cells.push_back(format_double((*cohort.x_true)(i, j)));
      cells.push_back(format_double((*cohort.u_true)[i]));
      cells.push_back(format_double((*cohort.delta_true)[i]));
    }
    if (with_sample) {
      cells.push_back(std::to_string(sample->r[i]));
      cells.push_back(format_double(sample->pi[i]));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) out << (j ? "," : "") << cells[j];
    out << '\n';
  }
}

}  // namespace grcox
