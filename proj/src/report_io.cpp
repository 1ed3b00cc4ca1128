#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "dhsplan/compare.hpp"
#include "dhsplan/errors.hpp"

namespace dhsplan {

namespace {

using nlohmann::json;

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos)
    return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"')
      out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string hours_text(const std::vector<int> &hours) {
  bool contiguous = !hours.empty();
  for (std::size_t i = 1; i < hours.size(); ++i)
    contiguous = contiguous && hours[i] == hours[i - 1] + 1;
  if (contiguous)
    return std::to_string(hours.front()) + ".." + std::to_string(hours.back());
  std::string out;
  for (int h : hours)
    out += (out.empty() ? "" : " ") + std::to_string(h);
  return out;
}

std::string header_line(const ComparisonReport &r) {
  return "# dhsplan " + r.version + " config " + r.config_hash + " instance " + r.instance_name +
         " hours " + hours_text(r.hours) + "\n";
}

json opt(std::optional<double> v) {
  if (!v || !std::isfinite(*v))
    return nullptr;
  return *v;
}

const RepairResult *repair_of(const ComparisonReport &r) {
  return r.tightening && r.tightening->repaired ? &*r.tightening->repaired : nullptr;
}

} // namespace

std::string format_number(std::optional<double> v) {
  if (!v || !std::isfinite(*v))
    return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", *v == 0.0 ? 0.0 : *v);
  return buf;
}

std::string comparison_csv(const ComparisonReport &report) {
  std::string out = header_line(report);
  out += "variant,status,objective,gap_pct,max_violation_pct,avg_violation_pct,"
         "repaired_objective,repair_method,note\n";
  const RepairResult *rep = repair_of(report);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const VariantRow &row = report.rows[i];
    const bool tightening = row.name == "TighteningMcCormick";
    out += csv_field(row.name) + "," + std::string(to_string(row.status)) + "," +
           format_number(row.objective) + "," + format_number(row.gap_pct) + "," +
           format_number(row.max_violation_pct) + "," + format_number(row.avg_violation_pct) +
           "," + (tightening && rep ? format_number(rep->objective) : "") + "," +
           (tightening && rep ? rep->method : "") + "," + csv_field(row.note) + "\n";
  }
  return out;
}

nlohmann::json comparison_json(const ComparisonReport &report) {
  json rows = json::array();
  for (const auto &row : report.rows)
    rows.push_back({{"variant", row.name},
                    {"status", to_string(row.status)},
                    {"objective", opt(row.objective)},
                    {"gap_pct", opt(row.gap_pct)},
                    {"max_violation_pct", opt(row.max_violation_pct)},
                    {"avg_violation_pct", opt(row.avg_violation_pct)},
                    {"hour_objectives", row.hour_objectives},
                    {"note", row.note}});

  json repair = nullptr;
  json tightening = nullptr;
  if (report.tightening) {
    const TighteningResult &t = *report.tightening;
    if (const RepairResult *rep = repair_of(report))
      repair = {{"objective", rep->objective},
                {"method", rep->method},
                {"hour_objectives", hourly_objectives(rep->x, t.instance)}};
    json its = json::array();
    for (const auto &it : t.iterations)
      its.push_back({{"n", it.n},
                     {"objective", it.objective},
                     {"max_violation", it.max_violation},
                     {"avg_violation", it.avg_violation}});
    json per_hour = json::array();
    for (const auto &h : t.hours)
      per_hour.push_back({{"hour", h.hour},
                          {"status", to_string(h.status)},
                          {"iterations", h.iterations.size()}});
    tightening = {{"status", to_string(t.status)}, {"iterations", its}, {"hours", per_hour}};
  }

  json closure = json::array();
  for (std::size_t i = 0; i < report.rows.size() && i < report.audits.size(); ++i) {
    json hours = json::array();
    for (const auto &h : report.audits[i].hours)
      hours.push_back({{"hour", h.hour},
                       {"production", h.production},
                       {"load", h.load},
                       {"linear_losses", h.linear_losses},
                       {"exact_losses", h.exact_losses},
                       {"closure_linear", h.closure_linear},
                       {"closure_exact", h.closure_exact}});
    closure.push_back({{"variant", report.rows[i].name}, {"hours", hours}});
  }

  return {{"version", report.version},
          {"config_hash", report.config_hash},
          {"instance", report.instance_name},
          {"hours", report.hours},
          {"rows", rows},
          {"repair", repair},
          {"tightening", tightening},
          {"energy_closure", closure}};
}

std::string audit_csv(const ComparisonReport &report) {
  std::string out = header_line(report);
  out += "variant,pipe,hour,m,loss_ratio,tau_upstream,taylor_outlet,exact_outlet,"
         "carried_outlet,discrepancy_abs,discrepancy_rel,premise_flag\n";
  for (std::size_t i = 0; i < report.rows.size() && i < report.audits.size(); ++i)
    for (const auto &a : report.audits[i].pipes)
      out += csv_field(report.rows[i].name) + "," + csv_field(a.pipe) + "," +
             std::to_string(a.hour) + "," + format_number(a.m) + "," +
             format_number(a.loss_ratio) + "," + format_number(a.tau_upstream) + "," +
             format_number(a.taylor_outlet) + "," + format_number(a.exact_outlet) + "," +
             format_number(a.carried_outlet) + "," + format_number(a.discrepancy_abs) + "," +
             format_number(a.discrepancy_rel) + "," + (a.premise_violated ? "1" : "0") + "\n";
  return out;
}

namespace {

struct Dispatch {
  std::optional<double> p, h;
};

// (unit, hour) in column order of the instance
std::map<std::pair<std::string, int>, Dispatch> dispatch_of(const ProblemInstance &inst,
                                                           std::span<const double> x) {
  std::map<std::pair<std::string, int>, Dispatch> out;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const VarKey &k = inst.vars.key(static_cast<int>(j));
    if (k.kind == VarKind::p_chp || k.kind == VarKind::p_tu)
      out[{k.id, k.hour}].p = x[j];
    else if (k.kind == VarKind::h_chp || k.kind == VarKind::h_hb)
      out[{k.id, k.hour}].h = x[j];
  }
  return out;
}

std::string dispatch_lines(const ProblemInstance &inst, std::span<const double> x,
                           const std::string &prefix) {
  std::string out;
  for (const auto &[key, d] : dispatch_of(inst, x))
    out += prefix + csv_field(key.first) + "," + std::to_string(key.second) + "," +
           format_number(d.p) + "," + format_number(d.h) + "\n";
  return out;
}

} // namespace

std::string schedule_csv(const ComparisonReport &report) {
  std::string out = header_line(report);
  out += "variant,unit,hour,p_mw,h_mw\n";
  for (const auto &row : report.rows)
    if (row.x.size() == row.instance.num_vars() && !row.x.empty())
      out += dispatch_lines(row.instance, row.x, csv_field(row.name) + ",");
  return out;
}

std::string schedule_csv(const ProblemInstance &instance, std::span<const double> x,
                         std::string_view hash) {
  if (x.size() != instance.num_vars())
    throw DimensionMismatch("schedule_csv: x has " + std::to_string(x.size()) +
                            " entries, instance " + std::to_string(instance.num_vars()));
  std::string out = "# dhsplan " + std::string(version()) + " config " + std::string(hash) + "\n";
  out += "unit,hour,p_mw,h_mw\n";
  return out + dispatch_lines(instance, x, "");
}

std::string timing_csv(const ComparisonReport &report) {
  std::string out = header_line(report);
  out += "variant,status,seconds\n";
  for (const auto &row : report.rows)
    out += csv_field(row.name) + "," + std::string(to_string(row.status)) + "," +
           format_number(row.seconds) + "\n";
  return out;
}

void write_comparison_files(const ComparisonReport &report, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = report.instance_name;
  write_text_file(dir / (stem + ".comparison.csv"), comparison_csv(report));
  write_text_file(dir / (stem + ".comparison.json"), comparison_json(report).dump(2) + "\n");
  write_text_file(dir / (stem + ".audit.csv"), audit_csv(report));
  write_text_file(dir / (stem + ".schedule.csv"), schedule_csv(report));
  write_text_file(dir / (stem + ".timing.csv"), timing_csv(report));
}

std::string iterations_csv(const TighteningResult &result, std::string_view hash) {
  std::string out = "# dhsplan " + std::string(version()) + " config " + std::string(hash) + "\n";
  out += "n,objective,max_violation,avg_violation,seconds\n";
  for (const auto &it : result.iterations)
    out += std::to_string(it.n) + "," + format_number(it.objective) + "," +
           format_number(it.max_violation) + "," + format_number(it.avg_violation) + "," +
           format_number(it.seconds) + "\n";
  return out;
}

nlohmann::json to_json(const SolutionFile &s) {
  json values = json::object();
  for (const auto &[name, v] : s.values)
    values[name] = v;
  return {{"version", s.version},   {"config_hash", s.config_hash}, {"variant", s.variant},
          {"status", s.status},     {"hours", s.hours},             {"objective", opt(s.objective)},
          {"variables", values}};
}

SolutionFile parse_solution(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ParseError(std::string("solution file: ") + e.what());
  }
  try {
    SolutionFile s;
    s.version = doc.at("version").get<std::string>();
    s.config_hash = doc.at("config_hash").get<std::string>();
    s.variant = doc.at("variant").get<std::string>();
    s.status = doc.at("status").get<std::string>();
    s.hours = doc.at("hours").get<std::vector<int>>();
    if (!doc.at("objective").is_null())
      s.objective = doc.at("objective").get<double>();
    for (const auto &[name, v] : doc.at("variables").items())
      s.values.emplace_back(name, v.get<double>());
    return s;
  } catch (const json::exception &e) {
    throw ParseError(std::string("solution file: ") + e.what());
  }
}

std::vector<double> solution_vector(const SolutionFile &s, const ProblemInstance &instance) {
  std::map<std::string, double> by_name(s.values.begin(), s.values.end());
  std::vector<double> x(instance.num_vars());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const std::string name = instance.vars.name(static_cast<int>(j));
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DimensionMismatch("solution lacks variable " + name);
    x[j] = it->second;
  }
  if (by_name.size() != x.size())
    throw DimensionMismatch("solution has " + std::to_string(by_name.size()) +
                            " variables, network expects " + std::to_string(x.size()));
  return x;
}

void write_text_file(const std::filesystem::path &path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw Error("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f)
    throw Error("write failed: " + path.string());
}

} // namespace dhsplan
