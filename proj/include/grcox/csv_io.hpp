#pragma once

#include "grcox/cohort.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace grcox {

/// Plain comma-separated table. Fields may be double-quoted; the first line is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Throws SchemaError naming the column when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// 17 significant digits; NaN becomes an empty field.
std::string format_double(double v);

/// Explicit mapping from cohort roles to CSV column names. Empty names mean "not present".
struct CohortColumns {
  std::string id;
  std::vector<std::string> x_star;
  std::vector<std::string> z;
  std::string u_star;
  std::string delta_star;
  std::vector<std::string> x_true;
  std::string u_true;
  std::string delta_true;
  std::string r;
  std::string pi;

  /// id, x_star_1.., z_1.., u_star, delta_star, x_1.., u, delta, r, pi.
  static CohortColumns defaults(Eigen::Index p, Eigen::Index q);
};

struct CohortFile {
  Cohort cohort;
  std::vector<std::string> ids;  // 1-based row numbers when no id column is mapped
  std::optional<Eigen::VectorXi> r;
  std::optional<Vector> pi;
};

/// Reads a cohort. Truth cells may be empty only where r = 0; pi must lie in (0, 1].
/// Errors name the 1-based data row.
CohortFile read_cohort(const CsvTable& table, const CohortColumns& columns);

/// Writes every mapped column present in the cohort (and r/pi when a sample is given).
void write_cohort(std::ostream& out, const Cohort& cohort, const CohortColumns& columns,
                  const TwoPhaseSample* sample = nullptr);

}  // namespace grcox
