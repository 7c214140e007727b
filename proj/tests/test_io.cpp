#include <doctest.h>

#include "grcox/config.hpp"
#include "grcox/csv_io.hpp"
#include "grcox/errors.hpp"
#include "helpers.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>

using namespace grcox;

namespace {

bool mentions(const std::vector<std::string>& issues, const std::string& path) {
  for (const auto& i : issues) {
    if (i.rfind(path + ":", 0) == 0) return true;
  }
  return false;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

Json minimal_config() {
  return Json::parse(R"({"seed": 3, "replicates": 4, "methods": ["HT", "GRN"]})");
}

}  // namespace

TEST_CASE("cohort CSV round trip is bit-exact") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd(0.0, 1e3);
  Cohort c = testing::simulated_cohort(200, 3, 21);
  for (Eigen::Index i = 0; i < 200; ++i) {
    c.x_star(i, 0) = nd(gen) * 1e-7;
    c.z(i, 0) = nd(gen);
  }
  TwoPhaseSample s = testing::census(200);
  for (Eigen::Index i = 0; i < 200; i += 3) {
    s.r[i] = 0;
    s.pi[i] = 0.1 + 0.8 * static_cast<double>(i) / 200.0;
  }
  const CohortColumns cols = CohortColumns::defaults(1, 1);
  std::stringstream ss;
  write_cohort(ss, c, cols, &s);
  const CohortFile f = read_cohort(read_csv(ss), cols);
  CHECK(f.cohort.x_star == c.x_star);
  CHECK(f.cohort.z == c.z);
  CHECK(f.cohort.u_star == c.u_star);
  CHECK(f.cohort.delta_star == c.delta_star);
  CHECK(*f.cohort.x_true == *c.x_true);
  CHECK(*f.cohort.u_true == *c.u_true);
  CHECK(*f.r == s.r);
  CHECK(*f.pi == s.pi);
  CHECK(f.ids.front() == "1");
  CHECK(f.ids.back() == "200");

  CHECK(format_double(std::nan("")).empty());
  CHECK(std::stod(format_double(0.1)) == 0.1);
}

TEST_CASE("cohort CSV errors name the row") {
  CohortColumns cols = CohortColumns::defaults(1, 1);
  const std::string head = "id,x_star_1,z_1,u_star,delta_star,x_1,u,delta,r,pi\n";
  auto read = [&](const std::string& body) {
    std::istringstream in(head + body);
    return read_cohort(read_csv(in), cols);
  };
  const std::string ok = "1,0.5,1,2.0,1,0.5,2.0,1,1,0.5\n";
  CHECK_NOTHROW(read(ok));
  CHECK_NOTHROW(read(ok + "2,0.5,1,2.0,0,,,,0,0.5\n"));
  CHECK(error_text([&] { read(ok + "2,0.5,1,2.0,0,,,,1,0.5\n"); }).find("row 2") != std::string::npos);
  CHECK(error_text([&] { read(ok + ok + "3,0.5,1,2.0,0,0.1,1,0,0,1.5\n"); }).find("row 3") != std::string::npos);
  CHECK(error_text([&] { read("1,0.5,1,2.0,2,0.5,2.0,1,1,0.5\n"); }).find("row 1") != std::string::npos);
  CHECK(error_text([&] { read("1,abc,1,2.0,1,0.5,2.0,1,1,0.5\n"); }).find("x_star_1") != std::string::npos);
  CHECK_THROWS_AS(read("1,0.5,1\n"), SchemaError);
  cols.u_star = "missing";
  CHECK_THROWS_AS(read(ok), SchemaError);
}

TEST_CASE("config validation reports JSON paths") {
  Json bad = minimal_config();
  bad["grid"] = Json::parse(R"({"censoring": [0.5, 1.2], "scenario": [4], "design": [{"kind": "XYZ"}]})");
  bad["methods"] = Json::parse(R"(["GRN", "NOPE"])");
  bad["extra"] = 1;
  const auto issues = config_issues(bad);
  CHECK(mentions(issues, "/grid/censoring/1"));
  CHECK(mentions(issues, "/grid/scenario/0"));
  CHECK(mentions(issues, "/grid/design/0/kind"));
  CHECK(mentions(issues, "/methods/1"));
  CHECK(mentions(issues, "/methods"));
  CHECK(mentions(issues, "/extra"));
  CHECK_FALSE(mentions(issues, "/grid/censoring/0"));
  const std::string msg = error_text([&] { parse_simulation_config(bad); });
  CHECK(msg.find("/grid/censoring/1") != std::string::npos);
  CHECK_THROWS_AS(parse_simulation_config(Json::array()), SchemaError);
  CHECK(config_issues(minimal_config()).empty());
}

TEST_CASE("config expansion and profiles") {
  Json cfg = minimal_config();
  cfg["grid"] = Json::parse(R"({"scenario": [1, 2], "censoring": [0.5, 0.9], "beta_x": [0, 0.4],
                                "design": [{"kind": "SRS"}, {"kind": "CC", "n": 300}]})");
  const SimulationPlan plan = parse_simulation_config(cfg);
  REQUIRE(plan.cells.size() == 16);
  CHECK(plan.cells[0].error_scenario == 1);
  CHECK(plan.cells[15].error_scenario == 2);
  CHECK(plan.cells[1].design.kind == DesignKind::CC);
  CHECK(plan.cells[1].n_validated == 300);
  CHECK(plan.cells[2].beta_x == 0.4);
  CHECK(plan.cells[4].censor_rate == 0.9);
  CHECK(plan.cells[0].replicates == 4);
  CHECK(plan.echo["grid"]["design"][1]["kind"] == "CC");

  const SimulationPlan paper = parse_simulation_config(cfg, std::string("paper"));
  CHECK(paper.profile == "paper");
  CHECK(paper.cells[0].replicates == 2000);
  CHECK(paper.cells[0].m_count == 50);
  CHECK(paper.cells[0].l_count == 500);
  CHECK_THROWS_AS(parse_simulation_config(cfg, std::string("lab")), SchemaError);
}

TEST_CASE("shipped presets parse") {
  for (const char* name : {"table1_desk", "table1_grid", "table2_desk", "table3_desk", "table4_desk", "tableS6_desk",
                           "figure1"}) {
    CAPTURE(name);
    const Json j = read_json_file(std::string(GRCOX_PRESETS_DIR) + "/" + name + ".json");
    CHECK(config_issues(j).empty());
  }
}

TEST_CASE("environment overrides") {
  ::setenv("GRCOX_THREADS", "3", 1);
  CHECK(env_threads() == 3);
  ::setenv("GRCOX_THREADS", "zero", 1);
  CHECK_THROWS_AS(env_threads(), SchemaError);
  ::unsetenv("GRCOX_THREADS");
  CHECK_FALSE(env_threads().has_value());
  ::setenv("GRCOX_OUT_DIR", "/tmp/somewhere", 1);
  CHECK(env_out_dir() == std::string("/tmp/somewhere"));
  ::unsetenv("GRCOX_OUT_DIR");
  CHECK_FALSE(env_out_dir().has_value());
}
