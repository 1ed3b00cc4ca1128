#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dhsplan/compare.hpp"
#include "dhsplan/errors.hpp"

using namespace dhsplan;

namespace {

NetworkModel single_pipe() { return load_network(DHSPLAN_TEST_DATA "/single_pipe.json"); }
NetworkModel micro() { return load_network(DHSPLAN_DATA "/micro_y.json"); }

NetworkModel lossless_pipe() {
  NetworkModel net = single_pipe();
  net.pipes[0].heat_transfer_coeff = 0.0;
  return net;
}

std::string read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);)
    out.push_back(line);
  return out;
}

// header row plus the first two fields of every data row
std::string layout(const std::string &csv) {
  std::string out;
  const auto lines = lines_of(csv);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (i == 1) {
      out += lines[i] + "\n";
      continue;
    }
    const auto a = lines[i].find(',');
    const auto b = lines[i].find(',', a + 1);
    out += lines[i].substr(0, b) + "\n";
  }
  return out;
}

} // namespace

TEST_CASE("FNV-1a reference vectors") {
  CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a("foobar")) == "85944171f73967e8");
}

TEST_CASE("number formatting") {
  CHECK(format_number(std::nullopt) == "");
  CHECK(format_number(std::nan("")) == "");
  CHECK(format_number(1.5) == "1.5");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(1.0 / 3.0) == "0.3333333333");
}

TEST_CASE("lossless single pipe: every variant agrees") {
  const NetworkModel net = lossless_pipe();
  const ComparisonReport r = compare_variants(net, std::vector<int>{1}, {}, "lossless");
  REQUIRE(r.rows.size() == 6);
  for (const auto &row : r.rows) {
    CAPTURE(row.name);
    CHECK(row.status == RowStatus::Ok);
    REQUIRE(row.objective);
    CHECK(*row.objective == doctest::Approx(30.0 * 0.3).epsilon(1e-6));
  }
  CHECK(*r.rows[0].gap_pct == 0.0);
  CHECK(r.audits.size() == 6);
}

TEST_CASE("report column layouts match the golden files") {
  const ComparisonReport r = compare_variants(lossless_pipe(), std::vector<int>{1}, {}, "lossless");
  CHECK(layout(comparison_csv(r)) ==
        read_file(DHSPLAN_TEST_DATA "/golden/lossless.comparison.layout"));
  CHECK(layout(audit_csv(r)) == read_file(DHSPLAN_TEST_DATA "/golden/lossless.audit.layout"));
  const auto head = lines_of(comparison_csv(r)).at(0);
  CHECK(head.rfind("# dhsplan " + std::string(version()) + " config " + r.config_hash, 0) == 0);

  const nlohmann::json j = comparison_json(r);
  for (const char *key : {"version", "config_hash", "instance", "hours", "rows", "repair",
                          "tightening", "energy_closure"})
    CHECK(j.contains(key));
  CHECK(j.at("rows").size() == 6);
  CHECK(j.at("rows").at(0).at("variant") == "Base(Global)");
}

TEST_CASE("skipping the global rows leaves gaps unavailable") {
  CompareConfig c;
  c.skip_global = true;
  const ComparisonReport r = compare_variants(micro(), std::vector<int>{1, 2}, c, "micro");
  CHECK(r.rows[0].status == RowStatus::Skipped);
  CHECK(r.rows[1].status == RowStatus::Skipped);
  for (const auto &row : r.rows) {
    CHECK_FALSE(row.gap_pct);
    if (row.objective)
      CHECK(row.note.find("gap unavailable") != std::string::npos);
  }
  CHECK(r.rows[3].status == RowStatus::Ok);
}

TEST_CASE("limited global runs are annotated, not dropped") {
  CompareConfig c;
  c.global.node_limit = 1;
  const ComparisonReport r = compare_variants(micro(), all_hours(micro()), c, "micro");
  REQUIRE(r.rows.size() == 6);
  bool annotated = false;
  for (int i : {0, 1}) {
    const auto &row = r.rows[static_cast<std::size_t>(i)];
    if (row.status == RowStatus::Limit || row.status == RowStatus::Failed) {
      annotated = true;
      CHECK_FALSE(row.note.empty());
    }
  }
  CHECK(annotated);
  const std::string csv = comparison_csv(r);
  CHECK(csv.find("Base(Global),") != std::string::npos);
}

TEST_CASE("empty hour selection is rejected") {
  CHECK_THROWS_AS(compare_variants(micro(), std::vector<int>{}, {}, "x"), ValidationError);
}

TEST_CASE("reports are reproducible and the hash tracks inputs") {
  const NetworkModel net = micro();
  const std::vector<int> hours{1, 2, 3};
  const ComparisonReport a = compare_variants(net, hours, {}, "micro");
  const ComparisonReport b = compare_variants(net, hours, {}, "micro");
  CHECK(comparison_csv(a) == comparison_csv(b));
  CHECK(comparison_json(a).dump() == comparison_json(b).dump());
  CHECK(audit_csv(a) == audit_csv(b));
  CHECK(schedule_csv(a) == schedule_csv(b));

  // relaxation error shrinks from dropping the terms to envelopes to tightened envelopes
  CHECK(*a.rows[2].max_violation_pct >= *a.rows[3].max_violation_pct);
  CHECK(*a.rows[3].max_violation_pct > *a.rows[4].max_violation_pct);
  CHECK(*a.rows[2].avg_violation_pct >= *a.rows[3].avg_violation_pct);
  CHECK(*a.rows[3].avg_violation_pct > *a.rows[4].avg_violation_pct);

  CompareConfig other;
  other.tightening.delta = 0.02;
  CHECK(config_hash(config_json(other), hours, net) != a.config_hash);
  CHECK(config_hash(config_json({}), std::vector<int>{1, 2}, net) != a.config_hash);
  NetworkModel changed = net;
  changed.pipes[0].length += 1.0;
  CHECK(config_hash(config_json({}), hours, changed) != a.config_hash);
  CHECK(config_hash(config_json({}), hours, net) == a.config_hash);
}

TEST_CASE("solution files round-trip") {
  const NetworkModel net = single_pipe();
  const ProblemInstance inst = build(net, Variant::McCormick, std::vector<int>{1});
  SolutionFile s;
  s.version = "v";
  s.config_hash = "h";
  s.variant = "mccormick";
  s.status = "Optimal";
  s.hours = {1};
  s.objective = 1.25;
  for (std::size_t j = 0; j < inst.num_vars(); ++j)
    s.values.emplace_back(inst.vars.name(static_cast<int>(j)), 0.5 + static_cast<double>(j));
  const SolutionFile back = parse_solution(to_json(s).dump());
  CHECK(back.variant == "mccormick");
  CHECK(back.objective == s.objective);
  const auto x = solution_vector(back, inst);
  for (std::size_t j = 0; j < x.size(); ++j)
    CHECK(x[j] == 0.5 + static_cast<double>(j));

  SolutionFile missing = s;
  missing.values.pop_back();
  CHECK_THROWS_AS(solution_vector(missing, inst), DimensionMismatch);
  SolutionFile extra = s;
  extra.values.emplace_back("m_pipe[zz,1]", 1.0);
  CHECK_THROWS_AS(solution_vector(extra, inst), DimensionMismatch);
  CHECK_THROWS_AS(parse_solution("{\"version\": 1"), ParseError);
  CHECK_THROWS_AS(parse_solution("{\"version\": \"v\"}"), ParseError);
}

TEST_CASE("schedule series per unit and hour") {
  const NetworkModel net = micro();
  const std::vector<int> hours{3, 4};
  const ProblemInstance inst = build(net, Variant::McCormick, hours);
  const QpSolution s = solve_qp(to_qp(inst));
  REQUIRE(s.status == QpStatus::Optimal);
  const std::vector<double> x(s.x.data(), s.x.data() + s.x.size());
  const auto lines = lines_of(schedule_csv(inst, x, "h"));
  REQUIRE(lines.size() == 2 + 2 * 2);
  CHECK(lines[1] == "unit,hour,p_mw,h_mw");
  CHECK(lines[2].rfind("hb1,3,,", 0) == 0); // boilers have no electric output
  // heat rows of hour 3 cover the load plus the linear pipe losses
  double heat = 0.0, expect = 0.0;
  for (std::size_t i = 2; i < lines.size(); ++i)
    if (lines[i].find(",3,") != std::string::npos)
      heat += std::stod(lines[i].substr(lines[i].rfind(',') + 1));
  for (const auto &n : net.heat_nodes)
    expect += n.heat_load[2];
  for (const auto &p : net.pipes)
    expect += p.loss_factor() *
              x[static_cast<std::size_t>(inst.vars.index({VarKind::tau_tilde_node, p.from, 3}))];
  CHECK(heat == doctest::Approx(expect).epsilon(1e-8));
  CHECK_THROWS_AS(schedule_csv(inst, std::vector<double>(3), "h"), DimensionMismatch);
}

TEST_CASE("iteration log layout") {
  TighteningConfig c;
  c.repair = false;
  const TighteningResult t = tighten(micro(), std::vector<int>{1}, c);
  const auto lines = lines_of(iterations_csv(t, "abc"));
  REQUIRE(lines.size() == t.iterations.size() + 2);
  CHECK(lines[0] == "# dhsplan " + std::string(version()) + " config abc");
  CHECK(lines[1] == "n,objective,max_violation,avg_violation,seconds");
  CHECK(lines[2].rfind("1,", 0) == 0);
}
