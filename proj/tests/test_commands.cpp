#include <doctest.h>

#include "grcox/commands.hpp"
#include "grcox/csv_io.hpp"
#include "helpers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace grcox;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.json";
  write_text(p, body);
  return p;
}

const char* kSmall = R"({"seed": 11, "replicates": 3, "n_subjects": 400, "n_validated": 100,
  "imputations": 2, "fcs_iterations": 2, "methods": ["True", "HT", "GRN", "GRMIS"],
  "grid": {"scenario": [3], "censoring": [0.5]}})";

const char* kMap = R"({"id": "id", "x_star": "x_star_1", "z": "z_1", "u_star": "u_star",
  "delta_star": "delta_star", "x": "x_1", "u": "u", "delta": "delta", "r": "r")";

double field(const CsvTable& t, std::size_t row, const std::string& col) {
  return std::stod(t.rows[row][t.column(col)]);
}

// Row of a per-method table whose method column matches.
std::size_t row_of(const CsvTable& t, const std::string& method, const std::string& extra_col = {},
                   const std::string& extra = {}) {
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][t.column("method")] != method) continue;
    if (!extra_col.empty() && t.rows[i][t.column(extra_col)] != extra) continue;
    return i;
  }
  FAIL("no row for " << method);
  return 0;
}

}  // namespace

TEST_CASE("simulate writes deterministic tables") {
  const fs::path dir = testing::scratch("simulate");
  const fs::path cfg = write_config(dir, kSmall);
  std::ostringstream log;
  SimulateOptions o;
  o.config = cfg.string();
  o.out_dir = (dir / "a").string();
  o.threads = 1;
  REQUIRE(cmd_simulate(o, log) == 0);
  o.out_dir = (dir / "b").string();
  o.threads = 3;
  REQUIRE(cmd_simulate(o, log) == 0);
  for (const char* f : {"metrics.csv", "misclassification.csv", "replicates.csv"}) {
    CAPTURE(f);
    CHECK(testing::slurp(dir / "a" / f) == testing::slurp(dir / "b" / f));
  }
  const CsvTable m = read_csv_file((dir / "a" / "metrics.csv").string());
  CHECK(m.rows.size() == 4);
  CHECK(field(m, row_of(m, "HT"), "re") == 1.0);
  const Json manifest = read_json_file((dir / "a" / "manifest.json").string());
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["cells"].size() == 1);
  CHECK(manifest["config"]["replicates"] == 3);
}

TEST_CASE("a single replicate leaves ESE undefined and says so") {
  const fs::path dir = testing::scratch("single");
  const fs::path cfg = write_config(dir, R"({"seed": 2, "replicates": 20, "n_subjects": 300, "n_validated": 90,
    "methods": ["HT", "GRN"]})");
  std::ostringstream log;
  SimulateOptions o;
  o.config = cfg.string();
  o.out_dir = dir.string();
  o.threads = 1;
  o.replicates = 1;
  REQUIRE(cmd_simulate(o, log) == 0);
  const CsvTable m = read_csv_file((dir / "metrics.csv").string());
  CHECK(m.rows[row_of(m, "HT")][m.column("ese")].empty());
  CHECK(m.rows[row_of(m, "GRN")][m.column("re")].empty());
  const std::string manifest = testing::slurp(dir / "manifest.json");
  CHECK(manifest.find("ESE undefined") != std::string::npos);
  CHECK(read_json_file((dir / "manifest.json").string())["config"]["replicates"] == 1);
  CHECK(read_csv_file((dir / "replicates.csv").string()).rows.size() == 2);
}

TEST_CASE("exported replicate re-analyzes to the same estimates") {
  const fs::path dir = testing::scratch("export");
  const fs::path cfg = write_config(dir, kSmall);
  std::ostringstream log;
  SimulateOptions o;
  o.config = cfg.string();
  o.out_dir = dir.string();
  o.threads = 1;
  o.export_replicate = 1;
  REQUIRE(cmd_simulate(o, log) == 0);
  const fs::path cohort = dir / "cohort_cell1_rep1.csv";
  REQUIRE(fs::exists(cohort));
  write_text(dir / "map.json", std::string(kMap) + "}");

  AnalyzeOptions a;
  a.data = cohort.string();
  a.map = (dir / "map.json").string();
  a.methods = {"True", "HT", "GRN", "GRMIS"};
  a.pi_column = "pi";
  a.seed = 11;
  a.replicate = 1;
  a.out_dir = (dir / "analysis").string();
  a.m_count = 2;
  a.l_count = 2;
  REQUIRE(cmd_analyze(a, log) == 0);

  const CsvTable reps = read_csv_file((dir / "replicates.csv").string());
  const CsvTable est = read_csv_file((dir / "analysis" / "estimates.csv").string());
  for (const auto& m : a.methods) {
    CAPTURE(m);
    const double sim = field(reps, row_of(reps, m, "replicate", "1"), "beta_x");
    const double got = field(est, row_of(est, m, "covariate", "x_star_1"), "beta");
    CHECK(std::abs(sim - got) < 1e-12);
  }

  SUBCASE("with a declared design the same draw is reproduced") {
    write_text(dir / "srs.json", R"({"kind": "SRS", "n": 100})");
    AnalyzeOptions d = a;
    d.pi_column.reset();
    d.design = (dir / "srs.json").string();
    d.out_dir = (dir / "designed").string();
    REQUIRE(cmd_analyze(d, log) == 0);
    CHECK(testing::slurp(dir / "designed" / "estimates.csv") == testing::slurp(dir / "analysis" / "estimates.csv"));
    CHECK(fs::exists(dir / "designed" / "sample.csv"));
  }
}

TEST_CASE("analyze on a fully validated cohort and with scaled covariates") {
  const fs::path dir = testing::scratch("analyze");
  const Cohort c = testing::simulated_cohort(300, 3, 6);
  const TwoPhaseSample all = testing::census(300);
  {
    std::ofstream out(dir / "full.csv", std::ios::binary);
    write_cohort(out, c, export_columns(), &all);
  }
  write_text(dir / "map.json", std::string(kMap) + R"(, "scale": [100, 1]})");
  std::ostringstream log;
  AnalyzeOptions a;
  a.data = (dir / "full.csv").string();
  a.map = (dir / "map.json").string();
  a.methods = {"True", "HT", "GRN"};
  a.pi_column = "pi";
  a.seed = 1;
  a.out_dir = dir.string();
  REQUIRE(cmd_analyze(a, log) == 0);
  const CsvTable est = read_csv_file((dir / "estimates.csv").string());
  const double truth = field(est, row_of(est, "True"), "beta");
  for (const char* m : {"HT", "GRN"}) {
    const std::size_t i = row_of(est, m);
    CHECK(std::abs(field(est, i, "beta") - truth) < 1e-8);
    CHECK(field(est, i, "scale") == 100.0);
    CHECK(field(est, i, "hr") == doctest::Approx(std::exp(100 * field(est, i, "beta"))).epsilon(1e-12));
    CHECK(field(est, i, "ci_lower") < field(est, i, "hr"));
  }

  SUBCASE("invalid input maps to exit code 2") {
    AnalyzeOptions both = a;
    both.design = (dir / "map.json").string();
    CHECK(cmd_analyze(both, log) == 2);
    AnalyzeOptions unknown = a;
    unknown.methods = {"HT", "BOGUS"};
    CHECK(cmd_analyze(unknown, log) == 2);
    write_text(dir / "badmap.json", R"({"x_star": "x_star_1", "u_star": "u_star", "delta_star": "delta_star"})");
    AnalyzeOptions notruth = a;
    notruth.map = (dir / "badmap.json").string();
    CHECK(cmd_analyze(notruth, log) == 2);
  }
}

TEST_CASE("design command") {
  const fs::path dir = testing::scratch("design");
  {
    std::ofstream out(dir / "cohort.csv");
    out << "id,xs,zz,t,d\n";
    int id = 0;
    for (int h = 0; h < 8; ++h) {
      for (int k = 0; k < 100; ++k) {
        out << ++id << ',' << 0.5 + h % 4 + 0.004 * k << ",0," << 1 + k << ',' << (h >= 4 ? 1 : 0) << '\n';
      }
    }
  }
  const std::string cols = R"("columns": {"id": "id", "x_star": "xs", "z": "zz", "u_star": "t", "delta_star": "d"})";
  write_text(dir / "sccb.json", std::string(R"({"kind": "SCCB", "n": 680, "cutpoints": [1, 2, 3], )") + cols + "}");
  std::ostringstream log;
  DesignOptions o;
  o.data = (dir / "cohort.csv").string();
  o.spec = (dir / "sccb.json").string();
  o.seed = 5;
  o.out = (dir / "sample.csv").string();
  REQUIRE(cmd_design(o, log) == 0);
  const Json m = read_json_file((dir / "sample.csv.manifest.json").string());
  REQUIRE(m["design"]["strata"].size() == 8);
  for (const auto& s : m["design"]["strata"]) CHECK(s["sampled"] == 85);
  const std::string first = testing::slurp(dir / "sample.csv");
  REQUIRE(cmd_design(o, log) == 0);
  CHECK(testing::slurp(dir / "sample.csv") == first);

  // 248 cases among 1595 subjects.
  {
    std::ofstream out(dir / "cc.csv");
    out << "id,xs,zz,t,d\n";
    for (int i = 0; i < 1595; ++i) out << i + 1 << ",0.1,0," << 1 + i % 7 << ',' << (i < 248 ? 1 : 0) << '\n';
  }
  write_text(dir / "cc.json", std::string(R"({"kind": "CC", "n": 340, )") + cols + "}");
  o.data = (dir / "cc.csv").string();
  o.spec = (dir / "cc.json").string();
  o.out = (dir / "cc_sample.csv").string();
  REQUIRE(cmd_design(o, log) == 0);
  const CsvTable s = read_csv_file(o.out);
  int controls = 0, cases = 0;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    if (field(s, i, "r") != 1.0) continue;
    (i < 248 ? cases : controls) += 1;
  }
  CHECK(cases == 248);
  CHECK(controls == 92);

  write_text(dir / "nocols.json", R"({"kind": "SRS", "n": 10})");
  o.spec = (dir / "nocols.json").string();
  CHECK(cmd_design(o, log) == 2);
}

TEST_CASE("diagnose exports four channels") {
  const fs::path dir = testing::scratch("diagnose");
  const fs::path cfg = write_config(dir, R"({"seed": 4, "n_subjects": 500, "n_validated": 100,
    "methods": ["HT"], "grid": {"censoring": [0.9]}})");
  std::ostringstream log;
  DiagnoseOptions o;
  o.config = cfg.string();
  o.out = (dir / "pairs.csv").string();
  REQUIRE(cmd_diagnose(o, log) == 0);
  const CsvTable t = read_csv_file(o.out);
  CHECK(t.rows.size() == 4 * 500);
  CHECK(t.rows.front()[0] == "X");
  CHECK(t.rows.back()[0] == "all");
  const std::string first = testing::slurp(o.out);
  REQUIRE(cmd_diagnose(o, log) == 0);
  CHECK(testing::slurp(o.out) == first);
  const Json m = read_json_file(o.out + ".manifest.json");
  CHECK(m["r_squared_x"]["Delta"].get<double>() < m["r_squared_x"]["X"].get<double>());

  const fs::path exact = write_config(dir, R"({"seed": 4, "n_subjects": 300, "n_validated": 60, "no_error": true,
    "methods": ["HT"]})");
  o.config = exact.string();
  REQUIRE(cmd_diagnose(o, log) == 0);
  const CsvTable e = read_csv_file(o.out);
  for (std::size_t i = 0; i < e.rows.size(); ++i) {
    CHECK(e.rows[i][2] == e.rows[i][3]);
    CHECK(e.rows[i][4] == e.rows[i][5]);
  }
}

TEST_CASE("simulate rejects bad configs with exit code 2") {
  const fs::path dir = testing::scratch("badcfg");
  std::ostringstream log;
  SimulateOptions o;
  o.out_dir = dir.string();
  o.config = write_config(dir, R"({"methods": ["GRN"], "grid": {"censoring": [1.5]}})").string();
  CHECK(cmd_simulate(o, log) == 2);
  CHECK(log.str().find("/grid/censoring/0") != std::string::npos);
  write_text(dir / "broken.json", "{not json");
  o.config = (dir / "broken.json").string();
  CHECK(cmd_simulate(o, log) == 2);
}
