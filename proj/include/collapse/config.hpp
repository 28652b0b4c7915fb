#pragma once

// Declarative model configs in a TOML-shaped subset:
//
//   schema_version = 1
//
//   [model]
//   name = "log-linear poisson"
//   y_kind = "count"                 # continuous | count | binary
//   x_min = 0.0                      # optional x-domain bounds
//
//   [model.covariate]                # parameters are expressions in x
//   family = "gamma"                 # normal uniform gamma poisson
//   rate = "x"                       # negative-binomial bernoulli degenerate
//   shape = "x"
//
//   [model.response]                 # parameters are expressions in x and w
//   family = "poisson"               # the families above, or "density"
//   mean = "exp(0.1 + 0.3*x) * w"
//
//   [check]
//   measure = "led"                  # edf mdi led ddf mdi-binary
//   mode = "simple"                  # average | simple
//   x_points = [0.5, 1.0, 2.0]
//   w_points = [0.5, 1.0, 2.0]
//
//   [output]
//   format = "json"                  # text | json | csv
//   path = "report.json"
//
// The schema is closed: an unknown table or key, a wrong value type or a
// missing required key is a ConfigError naming the line.
//
// Family parameters: normal (mean, sd), uniform (lower, upper), gamma (rate,
// shape), poisson (mean), negative-binomial (size, prob), bernoulli (prob),
// degenerate (value; covariate only). A "density" response takes `density`
// in (y, x, w) and optionally `mean` in (x, w) and `y_lower`/`y_upper` in
// (x, w). Any response may list `w_breakpoints`, expressions in (y, x) for the
// w values at which y crosses a support edge; mixtures split their
// w-integral there. One that fails to evaluate at a point is skipped.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "collapse/collapsibility.hpp"
#include "collapse/expression.hpp"
#include "collapse/measures.hpp"

namespace collapse {

inline constexpr int kConfigSchemaVersion = 1;

/// A parsed TOML-subset document: tables of key/value pairs. Values are
/// strings, numbers, booleans, or single-type arrays of numbers or strings.
struct TomlValue {
  std::variant<std::string, double, bool, std::vector<double>, std::vector<std::string>> data;
  int line = 0;
};

struct TomlDocument {
  /// Keyed by the dotted table name; top-level keys live under "".
  std::map<std::string, std::map<std::string, TomlValue>> tables;
  std::map<std::string, int> table_lines;
};

/// Throws ConfigError with a line number on malformed input or a duplicate
/// key or table.
TomlDocument parse_toml(std::string_view text);

struct FamilySpec {
  std::string family;
  /// Parameter name to expression.
  std::map<std::string, Expression> parameters;
  /// Response only: w values (expressions in y and x) where y meets a
  /// support edge, so the mixture integrand jumps there.
  std::vector<Expression> breakpoints;
};

struct ModelSection {
  std::string name = "config";
  YKind y_kind = YKind::Continuous;
  std::optional<double> x_min;
  std::optional<double> x_max;
  FamilySpec covariate;
  FamilySpec response;
};

enum class CheckMode { Average, Simple };

std::string_view to_string(CheckMode mode);

struct CheckSection {
  MeasureKind measure = MeasureKind::EDF;
  CheckMode mode = CheckMode::Average;
  GridSpec grid;
  bool probes = true;
  bool reversal = true;
  QuadratureMethod quadrature = QuadratureMethod::AdaptiveSubdivision;
  int threads = 0;
};

enum class OutputFormat { Text, Json, Csv };

std::string_view to_string(OutputFormat format);

struct OutputSection {
  OutputFormat format = OutputFormat::Text;
  std::optional<std::string> path;
};

struct ConfigDocument {
  int schema_version = kConfigSchemaVersion;
  ModelSection model;
  /// Absent when the config only declares a model (enough for `measure`).
  std::optional<CheckSection> check;
  OutputSection output;
};

/// Parses and validates against the closed schema; every failure is a
/// ConfigError.
ConfigDocument parse_config(std::string_view text);
ConfigDocument load_config(const std::filesystem::path& path);

/// Builds the model the config declares. Throws ConfigError when an
/// expression mentions a variable its slot does not provide.
ConditionalModel build_model(const ModelSection& section);

/// Every key the schema accepts, as "table.key" ("" table for top-level).
std::vector<std::string> config_schema_keys();

}  // namespace collapse
