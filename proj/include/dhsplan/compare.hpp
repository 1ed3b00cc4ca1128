#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dhsplan/analysis.hpp"
#include "dhsplan/formulation.hpp"
#include "dhsplan/global_bilinear.hpp"
#include "dhsplan/network.hpp"
#include "dhsplan/qp.hpp"
#include "dhsplan/tightening.hpp"

namespace dhsplan {

std::string_view version();

std::uint64_t fnv1a(std::string_view bytes);

/// 16 hex digits.
std::string hex64(std::uint64_t v);

struct CompareConfig {
  GlobalConfig global;
  TighteningConfig tightening;
  QpConfig qp;
  bool skip_global = false;
  int workers = 1; // variants run concurrently
  double premise_threshold = 0.1;
};

/// Canonical JSON of everything that affects results (timing limits included).
nlohmann::json config_json(const CompareConfig &config);

/// FNV-1a over the canonical config, hours, and network.
std::string config_hash(const nlohmann::json &config, std::span<const int> hours,
                        const NetworkModel &model);

enum class RowStatus { Ok, Limit, Failed, Skipped };

std::string_view to_string(RowStatus s);

struct VariantRow {
  std::string name; // "Base(Global)", "McCormick", ...
  RowStatus status = RowStatus::Skipped;
  std::string note;
  std::optional<double> objective;
  std::optional<double> gap_pct; // |obj - ref| / |ref| * 100 against Base(Global)
  std::optional<double> max_violation_pct;
  std::optional<double> avg_violation_pct;
  std::vector<double> hour_objectives;
  double seconds = 0.0;
  ProblemInstance instance;
  std::vector<double> x;
};

struct ComparisonReport {
  std::string instance_name;
  std::vector<int> hours;
  std::string version;
  std::string config_hash;
  std::vector<VariantRow> rows; // fixed order, always six
  std::optional<TighteningResult> tightening;
  std::vector<PhysicsAudit> audits; // one per row; empty audit when the row has no point
};

/// Runs every variant on the same instance. Failures are recorded in the row.
/// Throws ValidationError for an empty hour selection.
ComparisonReport compare_variants(const NetworkModel &model, std::span<const int> hours,
                                  const CompareConfig &config, std::string instance_name);

// ---- report files ----

/// "%.10g"; empty for absent or non-finite values.
std::string format_number(std::optional<double> v);

std::string comparison_csv(const ComparisonReport &report);
nlohmann::json comparison_json(const ComparisonReport &report);
std::string audit_csv(const ComparisonReport &report);
std::string timing_csv(const ComparisonReport &report);

/// Per-unit dispatch of every row with a point: variant,unit,hour,p_mw,h_mw.
/// p_mw is empty for boilers, h_mw for thermal units.
std::string schedule_csv(const ComparisonReport &report);

/// Same series for one solution: unit,hour,p_mw,h_mw
std::string schedule_csv(const ProblemInstance &instance, std::span<const double> x,
                         std::string_view hash);

/// <dir>/<instance>.comparison.csv, .comparison.json, .audit.csv, .schedule.csv,
/// .timing.csv
void write_comparison_files(const ComparisonReport &report, const std::filesystem::path &dir);

/// n, objective, max_violation, avg_violation, seconds
std::string iterations_csv(const TighteningResult &result, std::string_view hash);

struct SolutionFile {
  std::string version;
  std::string config_hash;
  std::string variant;
  std::string status;
  std::vector<int> hours;
  std::optional<double> objective;
  std::vector<std::pair<std::string, double>> values; // semantic name -> value
};

nlohmann::json to_json(const SolutionFile &s);

/// Throws ParseError for malformed text or structure.
SolutionFile parse_solution(std::string_view text);

/// Values ordered like `instance`'s columns. Throws DimensionMismatch when the
/// names do not match the instance exactly.
std::vector<double> solution_vector(const SolutionFile &s, const ProblemInstance &instance);

void write_text_file(const std::filesystem::path &path, std::string_view text);

} // namespace dhsplan
