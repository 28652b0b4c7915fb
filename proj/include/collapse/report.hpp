#pragma once

// Report documents and their JSON, text and CSV-grid renderings. JSON keys
// come out sorted, so identical inputs give byte-identical files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "collapse/scenarios.hpp"

namespace collapse {

inline constexpr int kReportSchemaVersion = 1;

std::string_view tool_version();

struct ReportDocument {
  /// "scenarios run", "check", "measure" or "regress".
  std::string command;
  /// Scenario name, config path or study name.
  std::string subject;
  std::uint64_t seed = 0;
  std::map<std::string, double> parameters;
  /// Free-form run settings worth recording (grid choice, quadrature, ...).
  std::map<std::string, std::string> settings;
  std::vector<CheckRecord> checks;
  /// Wall time; only filled when timing was asked for, since it would
  /// otherwise break byte-reproducibility.
  std::optional<double> elapsed_seconds;

  /// Same rule as ScenarioReport::overall.
  CheckStatus overall() const;
};

ReportDocument make_report(const ScenarioReport& scenario);

std::string render_json(const ReportDocument& report);
/// Check table followed by one probe table per check that carries probes;
/// unavailable probes are shown as "UNAVAILABLE" with a dash for deviation.
std::string render_text(const ReportDocument& report);

/// Columns x,y,w,conditional_avg,marginal,gap,residual; empty cells for
/// absent values.
std::string render_grid_csv(const CollapsibilityVerdict& verdict);
/// The grid of the first check that carries a verdict; header only if none.
std::string render_grid_csv(const ReportDocument& report);

/// Writes through a temporary file in the same directory and renames it
/// into place. Throws IoError.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// A relative path is placed under $COLLAPSE_OUTPUT_DIR when that is set.
std::filesystem::path resolve_output_path(const std::filesystem::path& path);

}  // namespace collapse
