#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dhsplan/cli.hpp"

using namespace dhsplan;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "dhsplan");
  std::vector<char *> argv;
  for (auto &a : args)
    argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh_dir(const std::string &name) {
  const fs::path d = fs::temp_directory_path() / ("dhsplan_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::string kPipe = DHSPLAN_TEST_DATA "/single_pipe.json";
const std::string kMicro = DHSPLAN_DATA "/micro_y.json";

} // namespace

TEST_CASE("solve a convex variant writes solution, duals and violations") {
  const fs::path d = fresh_dir("convex");
  CHECK(run({"solve", "--network", kMicro, "--hours", "1..3", "--variant", "mccormick",
             "--output-dir", d.string()}) == 0);
  for (const char *f : {"solution.json", "duals.csv", "violations.csv", "schedule.csv"})
    CHECK(fs::exists(d / f));
  const auto j = nlohmann::json::parse(slurp(d / "solution.json"));
  CHECK(j.at("variant") == "mccormick");
  CHECK(slurp(d / "duals.csv").find("network,id,hour,price") != std::string::npos);

  // the solution passes its own audit only loosely: McCormick points are not physical
  CHECK(run({"check", "--solution", (d / "solution.json").string(), "--network", kMicro,
             "--tolerance", "1e-12"}) == 4);
}

TEST_CASE("dropping the bilinear rows fails the default check") {
  const fs::path d = fresh_dir("rb");
  CHECK(run({"solve", "--network", kMicro, "--hours", "1..2", "--variant", "remove-bilinear",
             "--output-dir", d.string()}) == 0);
  CHECK(run({"check", "--solution", (d / "solution.json").string(), "--network", kMicro}) == 4);
}

TEST_CASE("global solve and check round trip") {
  const fs::path d = fresh_dir("global");
  CHECK(run({"solve", "--network", kPipe, "--variant", "reformulated", "--output-dir",
             d.string(), "--node-log", (d / "nodes.csv").string()}) == 0);
  CHECK(fs::exists(d / "nodes.csv"));
  CHECK(run({"check", "--solution", (d / "solution.json").string(), "--network", kPipe}) == 0);
}

TEST_CASE("tightening exit codes follow convergence") {
  const fs::path d = fresh_dir("tight");
  CHECK(run({"solve", "--network", kMicro, "--hours", "2..2", "--variant", "tightening",
             "--output-dir", d.string()}) == 0);
  for (const char *f : {"iterations.csv", "solution.json", "violations.csv", "repaired.json"})
    CHECK(fs::exists(d / f));
  CHECK(run({"check", "--solution", (d / "repaired.json").string(), "--network", kMicro}) == 0);

  const fs::path e = fresh_dir("tight_budget");
  CHECK(run({"solve", "--network", kMicro, "--hours", "2..2", "--variant", "tightening",
             "--max-iters", "1", "--no-repair", "--output-dir", e.string()}) == 3);
  CHECK_FALSE(fs::exists(e / "repaired.json"));
}

TEST_CASE("infeasible instances exit with 2") {
  const fs::path d = fresh_dir("infeasible");
  auto j = nlohmann::json::parse(slurp(kPipe));
  j["loads"]["l"] = {50.0}; // the boiler tops out at 10 MW
  const fs::path net = d / "overloaded.json";
  std::ofstream(net) << j.dump();
  CHECK(run({"solve", "--network", net.string(), "--variant", "mccormick", "--output-dir",
             d.string()}) == 2);
  CHECK(run({"solve", "--network", net.string(), "--variant", "tightening", "--output-dir",
             d.string()}) == 2);
}

TEST_CASE("bad input exits with 1") {
  const fs::path d = fresh_dir("bad");
  const fs::path broken = d / "broken.json";
  std::ofstream(broken) << "{\"meta\": ";
  CHECK(run({"solve", "--network", broken.string(), "--output-dir", d.string()}) == 1);
  CHECK(run({"solve", "--network", kPipe, "--hours", "3..1", "--output-dir", d.string()}) == 1);
  CHECK(run({"solve", "--network", kPipe, "--hours", "0..1", "--output-dir", d.string()}) == 1);
  CHECK(run({"solve", "--network", kPipe, "--variant", "tightening", "--eps", "geom:2,0.5",
             "--output-dir", d.string()}) == 1);
  CHECK(run({"solve", "--network", kPipe, "--variant", "nonsense", "--output-dir",
             d.string()}) == 1);
  CHECK(run({"compare", "--network", kPipe, "--skip", "mccormick", "--output-dir",
             d.string()}) == 1);
  CHECK(run({"solve", "--network", (d / "missing.json").string()}) == 1);
  CHECK(run({"check", "--solution", broken.string(), "--network", kPipe}) == 1);
}

TEST_CASE("compare writes every report and reruns byte-identically") {
  const fs::path a = fresh_dir("cmp_a"), b = fresh_dir("cmp_b");
  CHECK(run({"compare", "--network", kMicro, "--hours", "1..4", "--output-dir", a.string()}) ==
        0);
  CHECK(run({"compare", "--network", kMicro, "--hours", "1..4", "--output-dir", b.string()}) ==
        0);
  for (const char *f : {"micro_y.comparison.csv", "micro_y.comparison.json", "micro_y.audit.csv",
                        "micro_y.schedule.csv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(fs::exists(a / "micro_y.timing.csv"));
}

TEST_CASE("output directory comes from the environment when not given") {
  const fs::path d = fresh_dir("env");
  ::setenv("DHSPLAN_OUTPUT_DIR", d.string().c_str(), 1);
  const int code = run({"solve", "--network", kPipe, "--variant", "constant-flow"});
  ::unsetenv("DHSPLAN_OUTPUT_DIR");
  CHECK(code == 0);
  CHECK(fs::exists(d / "solution.json"));
}

TEST_CASE("compare with a node limit of one flags the global rows") {
  const fs::path d = fresh_dir("limit");
  CHECK(run({"compare", "--network", kMicro, "--node-limit", "1", "--output-dir", d.string(),
             "--name", "lim"}) == 3);
  const std::string csv = slurp(d / "lim.comparison.csv");
  CHECK((csv.find(",limit,") != std::string::npos || csv.find(",failed,") != std::string::npos));
}
