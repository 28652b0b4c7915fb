#include "collapse/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

#include "collapse/errors.hpp"
#include "json.hpp"

#ifndef COLLAPSE_VERSION
#define COLLAPSE_VERSION "0.0.0"
#endif

namespace collapse {
namespace {

using json = nlohmann::json;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class T>
json optional_number(const std::optional<T>& v) {
  return v ? number(static_cast<double>(*v)) : json(nullptr);
}

json estimate(const EstimatedReal& e) {
  return {{"value", number(e.value)}, {"err_estimate", number(e.err_estimate)}, {"evaluations", e.evaluations}};
}

json point_json(const PointRecord& p) {
  return {{"x", number(p.x)},
          {"y", optional_number(p.y)},
          {"w", optional_number(p.w)},
          {"conditional", estimate(p.conditional)},
          {"marginal", estimate(p.marginal)},
          {"gap", number(p.gap)},
          {"tolerance", number(p.tolerance)},
          {"within", p.within},
          {"excluded_mass", number(p.excluded_mass)},
          {"residual", p.residual ? number(*p.residual) : json(nullptr)},
          {"failure", p.failure ? json(*p.failure) : json(nullptr)}};
}

json probe_json(const ConditionProbe& p) {
  json implies = json::array();
  for (MeasureKind m : p.implies) implies.push_back(std::string(to_string(m)));
  const bool unavailable = p.status == ProbeStatus::Unavailable;
  return {{"name", p.name},
          {"description", p.description},
          {"status", std::string(to_string(p.status))},
          {"deviation", unavailable ? json(nullptr) : number(p.deviation)},
          {"tolerance", number(p.tolerance)},
          {"implies", implies},
          {"note", p.note}};
}

json probes_json(const std::vector<ConditionProbe>& probes) {
  json out = json::array();
  for (const auto& p : probes) out.push_back(probe_json(p));
  return out;
}

json reversal_json(const ReversalReport& r) {
  json evidence = json::array();
  for (const auto& p : r.evidence) evidence.push_back(point_json(p));
  return {{"reversal", r.reversal}, {"conditional_sign", r.conditional_sign}, {"evidence", evidence}};
}

json verdict_json(const CollapsibilityVerdict& v) {
  json points = json::array();
  for (const auto& p : v.points) points.push_back(point_json(p));
  return {{"measure", std::string(to_string(v.measure))},
          {"check", v.check},
          {"classification", std::string(to_string(v.classification))},
          {"max_gap", number(v.max_gap)},
          {"points", points},
          {"reversal", v.reversal ? reversal_json(*v.reversal) : json(nullptr)},
          {"probes", probes_json(v.probes)}};
}

json fit_json(const FitResult& f) {
  json coefficients = json::array();
  json errors = json::array();
  for (double c : f.coefficients) coefficients.push_back(number(c));
  for (double s : f.std_errors) errors.push_back(number(s));
  return {{"coefficients", coefficients},
          {"std_errors", errors},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"log_likelihood", number(f.log_likelihood)},
          {"score_norm", number(f.score_norm)},
          {"theta", optional_number(f.theta)}};
}

json regression_json(const BetaVerdict& b) {
  json conditional = json::array();
  for (const auto& f : b.conditional) conditional.push_back(fit_json(f));
  json points = json::array();
  for (const auto& p : b.points) {
    points.push_back({{"x", number(p.x)},
                      {"conditional", number(p.conditional)},
                      {"marginal", number(p.marginal)},
                      {"gap", number(p.gap)},
                      {"tolerance", number(p.tolerance)},
                      {"within", p.within}});
  }
  json levels = json::array();
  for (double l : b.levels) levels.push_back(number(l));
  return {{"spec", b.spec_name},
          {"family", std::string(to_string(b.family))},
          {"n", b.n},
          {"seed", b.seed},
          {"classification", std::string(to_string(b.classification))},
          {"marginal", fit_json(b.marginal)},
          {"conditional", conditional},
          {"levels", levels},
          {"points", points},
          {"unconditional_average", optional_number(b.unconditional_average)},
          {"reversal", b.reversal}};
}

json check_json(const CheckRecord& c) {
  return {{"name", c.name},
          {"description", c.description},
          {"origin", std::string(to_string(c.origin))},
          {"expected", c.expected},
          {"status", std::string(to_string(c.status))},
          {"observed", number(c.observed)},
          {"reference", number(c.reference)},
          {"gap", number(c.gap)},
          {"tolerance", number(c.tolerance)},
          {"note", c.note},
          {"verdict", c.verdict ? verdict_json(*c.verdict) : json(nullptr)},
          {"probes", probes_json(c.probes)},
          {"reversal", c.reversal ? reversal_json(*c.reversal) : json(nullptr)},
          {"regression", c.regression ? regression_json(*c.regression) : json(nullptr)}};
}

std::string fixed(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::string cell(std::optional<double> v) {
  if (!v || std::isnan(*v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

}  // namespace

std::string_view tool_version() { return COLLAPSE_VERSION; }

CheckStatus ReportDocument::overall() const {
  bool indeterminate = false;
  for (const auto& c : checks) {
    if (c.status == CheckStatus::Fail) return CheckStatus::Fail;
    indeterminate = indeterminate || c.status == CheckStatus::Indeterminate;
  }
  return indeterminate ? CheckStatus::Indeterminate : CheckStatus::Pass;
}

ReportDocument make_report(const ScenarioReport& scenario) {
  ReportDocument r;
  r.command = "scenarios run";
  r.subject = scenario.scenario;
  r.seed = scenario.seed;
  r.parameters = scenario.parameters;
  r.checks = scenario.checks;
  return r;
}

std::string render_json(const ReportDocument& report) {
  json checks = json::array();
  for (const auto& c : report.checks) checks.push_back(check_json(c));
  json parameters = json::object();
  for (const auto& [k, v] : report.parameters) parameters[k] = number(v);
  json settings = json::object();
  for (const auto& [k, v] : report.settings) settings[k] = v;
  const json doc = {{"schema_version", kReportSchemaVersion},
                    {"tool", {{"name", "collapse"}, {"version", std::string(tool_version())}}},
                    {"command", report.command},
                    {"subject", report.subject},
                    {"seed", report.seed},
                    {"parameters", parameters},
                    {"settings", settings},
                    {"checks", checks},
                    {"overall", std::string(to_string(report.overall()))},
                    {"timing", report.elapsed_seconds
                                   ? json{{"elapsed_seconds", *report.elapsed_seconds}}
                                   : json(nullptr)}};
  return doc.dump(2) + "\n";
}

std::string render_text(const ReportDocument& report) {
  std::ostringstream out;
  out << report.command << " " << report.subject << "  (seed " << report.seed << ", collapse "
      << tool_version() << ")\n";
  for (const auto& [k, v] : report.parameters) out << "  " << k << " = " << fixed(v) << "\n";
  for (const auto& [k, v] : report.settings) out << "  " << k << ": " << v << "\n";
  out << "\n";
  out << std::left << std::setw(30) << "check" << std::setw(15) << "status" << std::setw(14) << "observed"
      << std::setw(14) << "reference" << std::setw(12) << "gap" << std::setw(12) << "tolerance"
      << "note\n";
  for (const auto& c : report.checks) {
    out << std::left << std::setw(30) << c.name << std::setw(15) << to_string(c.status) << std::setw(14)
        << fixed(c.observed) << std::setw(14) << fixed(c.reference) << std::setw(12) << fixed(c.gap)
        << std::setw(12) << fixed(c.tolerance) << c.note << "\n";
  }
  for (const auto& c : report.checks) {
    const auto& probes = !c.probes.empty() ? c.probes
                         : c.verdict      ? c.verdict->probes
                                          : c.probes;
    if (probes.empty()) continue;
    out << "\nprobes for " << c.name << "\n";
    out << std::left << std::setw(36) << "  condition" << std::setw(14) << "status" << std::setw(14) << "deviation"
        << std::setw(12) << "tolerance" << "implies\n";
    for (const auto& p : probes) {
      std::string implies;
      for (MeasureKind m : p.implies) implies += (implies.empty() ? "" : ",") + std::string(to_string(m));
      const bool unavailable = p.status == ProbeStatus::Unavailable;
      out << "  " << std::left << std::setw(34) << p.name << std::setw(14)
          << (unavailable ? std::string("UNAVAILABLE") : std::string(to_string(p.status))) << std::setw(14)
          << (unavailable ? std::string("-") : fixed(p.deviation)) << std::setw(12) << fixed(p.tolerance)
          << implies << (p.note.empty() ? "" : "  (" + p.note + ")") << "\n";
    }
  }
  out << "\noverall: " << to_string(report.overall()) << "\n";
  if (report.elapsed_seconds) out << "elapsed: " << fixed(*report.elapsed_seconds) << " s\n";
  return out.str();
}

std::string render_grid_csv(const CollapsibilityVerdict& verdict) {
  std::string out = "x,y,w,conditional_avg,marginal,gap,residual\n";
  for (const auto& p : verdict.points) {
    const bool failed = p.failure.has_value();
    out += cell(p.x) + "," + cell(p.y) + "," + cell(p.w) + "," +
           (failed ? "" : cell(p.conditional.value)) + "," + (failed ? "" : cell(p.marginal.value)) + "," +
           (failed ? "" : cell(p.gap)) + "," + cell(p.residual) + "\n";
  }
  return out;
}

std::string render_grid_csv(const ReportDocument& report) {
  for (const auto& c : report.checks) {
    if (c.verdict) return render_grid_csv(*c.verdict);
  }
  return render_grid_csv(CollapsibilityVerdict{});
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::IoError, "no such directory '" + dir.string() + "'");
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw Error(ErrorKind::IoError, "write to '" + tmp.string() + "' failed");
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::IoError, "cannot move report into '" + path.string() + "'");
  }
}

std::filesystem::path resolve_output_path(const std::filesystem::path& path) {
  const char* dir = std::getenv("COLLAPSE_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0' || path.is_absolute()) return path;
  return std::filesystem::path(dir) / path;
}

}  // namespace collapse
