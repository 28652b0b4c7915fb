#include "collapse/cli.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "collapse/config.hpp"
#include "collapse/regression.hpp"
#include "collapse/report.hpp"
#include "detail.hpp"

namespace collapse {
namespace {

using Clock = std::chrono::steady_clock;

struct Outputs {
  std::optional<std::string> json;
  std::optional<std::string> csv;
  bool timing = false;
};

void add_outputs(CLI::App* cmd, Outputs& o, bool csv = true) {
  cmd->add_option("--json", o.json, "write the JSON report here");
  if (csv) cmd->add_option("--csv", o.csv, "write the grid as CSV here");
  cmd->add_flag("--timing", o.timing, "record wall time in the report");
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Files first, then either the full table or a one-line summary on stdout.
void emit(const ReportDocument& report, const Outputs& o, std::ostream& out) {
  if (o.json) write_atomic(resolve_output_path(*o.json), render_json(report));
  if (o.csv) write_atomic(resolve_output_path(*o.csv), render_grid_csv(report));
  if (!o.json && !o.csv) {
    out << render_text(report);
  } else {
    out << report.command << " " << report.subject << ": " << to_string(report.overall()) << "\n";
  }
}

std::vector<double> parse_point(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string piece;
  while (std::getline(in, piece, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(piece, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != piece.size() || !std::isfinite(v)) {
      throw Error(ErrorKind::UsageError, "--at expects numbers separated by commas, got '" + text + "'");
    }
    values.push_back(v);
  }
  return values;
}

CheckStatus status_for(Classification c, CheckMode mode) {
  switch (c) {
    case Classification::SimpleCollapsible: return CheckStatus::Pass;
    case Classification::AverageCollapsible:
      return mode == CheckMode::Average ? CheckStatus::Pass : CheckStatus::Fail;
    case Classification::NotCollapsible: return CheckStatus::Fail;
    case Classification::Indeterminate: return CheckStatus::Indeterminate;
  }
  return CheckStatus::Indeterminate;
}

std::string format_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// ---- subcommands ----------------------------------------------------------

int scenarios_list(std::ostream& out) {
  for (const auto& s : catalog()) {
    out << s.name << "  [" << to_string(s.kind) << (s.stochastic ? ", stochastic" : "") << "]  "
        << s.description << "\n";
  }
  return kExitPass;
}

struct ScenarioArgs {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::string> params;
  std::string quadrature = "adaptive";
  int threads = 0;
  int jobs = 0;
  Outputs outputs;
};

RunOptions run_options(const ScenarioArgs& a) {
  RunOptions o;
  o.seed = a.seed;
  o.threads = a.threads;
  if (a.quadrature == "gauss-hermite") {
    o.quadrature = QuadratureMethod::GaussHermite;
  } else if (a.quadrature != "adaptive") {
    throw Error(ErrorKind::UsageError, "--quadrature must be adaptive or gauss-hermite");
  }
  for (const auto& p : a.params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::UsageError, "--param expects name=value, got '" + p + "'");
    const auto v = parse_point(p.substr(eq + 1));
    if (v.size() != 1) throw Error(ErrorKind::UsageError, "--param expects one value, got '" + p + "'");
    o.parameters[p.substr(0, eq)] = v.front();
  }
  return o;
}

int scenarios_run(const ScenarioArgs& a, std::ostream& out) {
  const RunOptions options = run_options(a);
  std::vector<std::string> names;
  if (a.name == "all") {
    if (a.outputs.json || a.outputs.csv) {
      throw Error(ErrorKind::UsageError, "--json and --csv take a single scenario, not 'all'");
    }
    for (const auto& s : catalog()) names.push_back(s.name);
  } else {
    names.push_back(find_scenario(a.name).name);
  }

  struct Outcome {
    std::optional<ReportDocument> report;
    std::optional<ErrorKind> error;
    std::string message;
  };
  std::vector<Outcome> outcomes(names.size());
  // scenarios run side by side; everything is printed afterwards, in catalog order
  detail::parallel_for(names.size(), names.size() == 1 ? 1 : a.jobs, [&](std::size_t i) {
    const auto start = Clock::now();
    try {
      ReportDocument r = make_report(run_scenario(names[i], options));
      if (options.quadrature) r.settings["quadrature"] = "gauss-hermite";
      if (a.outputs.timing) r.elapsed_seconds = seconds_since(start);
      outcomes[i].report = std::move(r);
    } catch (const Error& e) {
      outcomes[i].error = e.kind();
      outcomes[i].message = e.what();
    }
  });

  int worst = kExitPass;
  auto rank = [](int code) { return code == kExitPass ? 0 : code == kExitNumerical ? 1 : code == kExitCheckFailed ? 2 : 3; };
  for (std::size_t i = 0; i < names.size(); ++i) {
    int code = 0;
    if (outcomes[i].report) {
      emit(*outcomes[i].report, a.outputs, out);
      code = exit_code(outcomes[i].report->overall());
    } else {
      if (names.size() == 1) throw Error(*outcomes[i].error, outcomes[i].message);
      out << names[i] << ": error: " << outcomes[i].message << "\n";
      code = exit_code(*outcomes[i].error);
    }
    if (names.size() > 1) out << "\n";
    if (rank(code) > rank(worst)) worst = code;
  }
  return worst;
}

struct CheckArgs {
  std::string config;
  Outputs outputs;
};

int check(const CheckArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  const ConfigDocument doc = load_config(a.config);
  if (!doc.check) throw Error(ErrorKind::ConfigError, a.config + ": no [check] table");
  const CheckSection& c = *doc.check;
  const ConditionalModel model = build_model(doc.model);
  validate_model(model, c.grid.x_points);

  EvalConfig cfg;
  cfg.quadrature.method = c.quadrature;
  const CheckOptions options{c.reversal, c.probes, c.threads};
  CollapsibilityVerdict v = c.mode == CheckMode::Simple ? check_simple(c.measure, model, c.grid, cfg, options)
                                                        : check_average(c.measure, model, c.grid, cfg, options);

  CheckRecord r;
  r.name = std::string(to_string(c.measure)) + "_" + std::string(to_string(c.mode));
  r.description = "config check of " + std::string(to_string(c.measure)) + " collapsibility";
  r.origin = Origin::Oracle;
  r.expected = c.mode == CheckMode::Simple ? "simple-collapsible" : "average-collapsible";
  r.status = status_for(v.classification, c.mode);
  for (const auto& p : v.points) {
    if (p.failure || !(std::isnan(r.gap) || p.gap > r.gap)) continue;
    r.observed = p.marginal.value;
    r.reference = p.conditional.value;
    r.gap = p.gap;
    r.tolerance = p.tolerance;
  }
  r.note = "classification " + std::string(to_string(v.classification));
  r.probes = v.probes;
  r.reversal = v.reversal;
  r.verdict = std::move(v);

  ReportDocument report;
  report.command = "check";
  report.subject = a.config;
  report.checks.push_back(std::move(r));
  report.settings["model"] = doc.model.name;
  report.settings["measure"] = std::string(to_string(c.measure));
  report.settings["mode"] = std::string(to_string(c.mode));
  report.settings["quadrature"] = c.quadrature == QuadratureMethod::GaussHermite ? "gauss-hermite" : "adaptive";
  if (a.outputs.timing) report.elapsed_seconds = seconds_since(start);

  Outputs o = a.outputs;
  if (!o.json && !o.csv) {
    const auto& sink = doc.output;
    if (sink.format == OutputFormat::Json && sink.path) o.json = sink.path;
    if (sink.format == OutputFormat::Csv && sink.path) o.csv = sink.path;
    if (sink.format == OutputFormat::Text && sink.path) {
      write_atomic(resolve_output_path(*sink.path), render_text(report));
      out << "check " << a.config << ": " << to_string(report.overall()) << "\n";
      return exit_code(report.overall());
    }
    if (!sink.path && sink.format == OutputFormat::Json) {
      out << render_json(report);
      return exit_code(report.overall());
    }
    if (!sink.path && sink.format == OutputFormat::Csv) {
      out << render_grid_csv(report);
      return exit_code(report.overall());
    }
  }
  emit(report, o, out);
  return exit_code(report.overall());
}

struct MeasureArgs {
  std::string config;
  std::string at;
  std::optional<std::string> measure;
  Outputs outputs;
};

int measure(const MeasureArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  const ConfigDocument doc = load_config(a.config);
  MeasureKind kind;
  if (a.measure) {
    try {
      kind = measure_from_string(*a.measure);
    } catch (const Error&) {
      throw Error(ErrorKind::UsageError, "unknown measure '" + *a.measure + "'");
    }
  } else if (doc.check) {
    kind = doc.check->measure;
  } else {
    throw Error(ErrorKind::UsageError, "give --measure or a [check] measure in the config");
  }
  const auto values = parse_point(a.at);
  const std::size_t base = needs_y(kind) ? 2 : 1;
  if (values.size() != base && values.size() != base + 1) {
    throw Error(ErrorKind::UsageError, std::string(to_string(kind)) + " takes --at " +
                                           (needs_y(kind) ? "x,y[,w]" : "x[,w]"));
  }
  MeasurePoint point;
  point.x = values[0];
  if (needs_y(kind)) point.y = values[1];
  if (values.size() == base + 1) point.w = values.back();

  const ConditionalModel model = build_model(doc.model);
  validate_model(model, std::vector<double>{point.x});
  EvalConfig cfg;
  if (doc.check) cfg.quadrature.method = doc.check->quadrature;
  const EstimatedReal value = evaluate_measure(kind, model, point, cfg);

  CheckRecord r;
  r.name = std::string(to_string(kind)) + (point.w ? "_conditional" : "_marginal");
  r.description = "value of the measure at one point";
  r.origin = Origin::Oracle;
  r.expected = "reported";
  r.status = CheckStatus::Reported;
  r.observed = value.value;
  r.tolerance = value.err_estimate;
  r.note = "x=" + format_number(point.x) + (point.y ? ", y=" + format_number(*point.y) : "") +
           (point.w ? ", w=" + format_number(*point.w) : "") + "; err " + format_number(value.err_estimate);

  ReportDocument report;
  report.command = "measure";
  report.subject = a.config;
  report.settings["model"] = doc.model.name;
  report.settings["measure"] = std::string(to_string(kind));
  report.checks.push_back(std::move(r));
  if (a.outputs.timing) report.elapsed_seconds = seconds_since(start);
  if (a.outputs.json) {
    write_atomic(resolve_output_path(*a.outputs.json), render_json(report));
  }
  out << to_string(kind) << "(" << report.checks.front().note.substr(0, report.checks.front().note.find(';'))
      << ") = " << format_number(value.value) << "  (err " << format_number(value.err_estimate) << ")\n";
  return kExitPass;
}

struct RegressArgs {
  std::string family;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  double beta = 0.3;
  double gamma = 0.0;
  double theta = 2.0;
  std::string covariate = "normal";
  Outputs outputs;
};

int regress(const RegressArgs& a, std::ostream& out) {
  const auto start = Clock::now();
  RegressionSpec spec;
  try {
    spec.family = regression_family_from_string(a.family);
  } catch (const Error&) {
    throw Error(ErrorKind::UsageError, "unknown family '" + a.family + "'");
  }
  spec.name = a.family + "_" + a.covariate;
  spec.alpha = a.alpha;
  spec.beta = a.beta;
  spec.theta = a.theta;
  if (a.covariate == "normal") {
    spec.gamma = a.gamma;
    spec.covariate = CovariateLaw::normal([](double x) { return x; }, [](double) { return 1.0; });
  } else if (a.covariate == "coin") {
    // W in {0, 1} shifts the intercept by gamma and leaves the slope alone
    spec.covariate = DiscreteCovariate{{0.0, 1.0}, [](double) { return std::vector<double>{0.5, 0.5}; }};
    spec.alpha_by_level = {a.alpha, a.alpha + a.gamma};
    spec.beta_by_level = {a.beta, a.beta};
  } else {
    throw Error(ErrorKind::UsageError, "--covariate must be normal or coin");
  }
  const std::vector<double> probes{0.0, 1.0, 2.0};
  spec.validate(probes);
  BetaVerdict b = check_beta_collapsibility(spec, a.n, Family::uniform(0.0, 2.0), Seed{a.seed}, probes);

  CheckRecord r;
  r.name = "beta_collapsibility";
  r.description = "slope on x with and without W";
  r.origin = Origin::Oracle;
  r.expected = "average-collapsible";
  r.status = status_for(b.classification, CheckMode::Average);
  for (const auto& p : b.points) {
    if (std::isnan(r.gap) || p.gap > r.gap) {
      r.gap = p.gap;
      r.tolerance = p.tolerance;
      r.observed = p.marginal;
      r.reference = p.conditional;
    }
  }
  r.note = "classification " + std::string(to_string(b.classification)) + (b.reversal ? "; reversal" : "");
  r.regression = std::move(b);

  ReportDocument report;
  report.command = "regress";
  report.subject = spec.name;
  report.seed = a.seed;
  report.parameters = {{"alpha", a.alpha}, {"beta", a.beta}, {"gamma", a.gamma}, {"n", static_cast<double>(a.n)}};
  if (spec.family == RegressionFamily::NegBin) report.parameters["theta"] = a.theta;
  report.settings["family"] = std::string(to_string(spec.family));
  report.settings["covariate"] = a.covariate;
  report.settings["x_law"] = "uniform(0, 2)";
  report.checks.push_back(std::move(r));
  if (a.outputs.timing) report.elapsed_seconds = seconds_since(start);
  emit(report, a.outputs, out);
  return exit_code(report.overall());
}

}  // namespace

int exit_code(CheckStatus status) {
  switch (status) {
    case CheckStatus::Pass:
    case CheckStatus::Reported: return kExitPass;
    case CheckStatus::Fail: return kExitCheckFailed;
    case CheckStatus::Indeterminate: return kExitNumerical;
  }
  return kExitNumerical;
}

int exit_code(ErrorKind kind) { return is_numerical(kind) ? kExitNumerical : kExitUsage; }

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Collapsibility of association measures", "collapse"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));

  auto* scenarios = app.add_subcommand("scenarios", "list or run catalog scenarios");
  scenarios->require_subcommand(1);
  scenarios->add_subcommand("list", "list the catalog");
  ScenarioArgs sa;
  auto* run = scenarios->add_subcommand("run", "run one scenario, or all of them");
  run->add_option("name", sa.name, "scenario name or 'all'")->required();
  run->add_option("--seed", sa.seed, "seed for stochastic checks (default 0)");
  run->add_option("--param", sa.params, "override a scenario parameter, name=value");
  run->add_option("--quadrature", sa.quadrature, "adaptive or gauss-hermite");
  run->add_option("--threads", sa.threads, "threads per grid (0 = all cores)");
  run->add_option("--jobs", sa.jobs, "scenarios in flight for 'all' (0 = all cores)");
  add_outputs(run, sa.outputs);

  CheckArgs ca;
  auto* chk = app.add_subcommand("check", "collapsibility check of a config-declared model");
  chk->add_option("--config", ca.config, "model config")->required();
  add_outputs(chk, ca.outputs);

  MeasureArgs ma;
  auto* meas = app.add_subcommand("measure", "evaluate a measure at one point");
  meas->add_option("--config", ma.config, "model config")->required();
  meas->add_option("--at", ma.at, "x[,y][,w]; y only for mdi and ddf")->required();
  meas->add_option("--measure", ma.measure, "edf, mdi, led, ddf or mdi-binary");
  add_outputs(meas, ma.outputs, false);

  RegressArgs ra;
  auto* reg = app.add_subcommand("regress", "simulate a regression study and compare slopes");
  reg->add_option("--family", ra.family, "linear, logistic, poisson or negbin")->required();
  reg->add_option("--n", ra.n, "records to simulate")->required()->check(CLI::PositiveNumber);
  reg->add_option("--seed", ra.seed, "simulation seed")->required();
  reg->add_option("--gamma", ra.gamma, "coefficient of W (default 0)");
  reg->add_option("--theta", ra.theta, "NB dispersion (default 2)");
  reg->add_option("--alpha", ra.alpha, "intercept (default 0.1)");
  reg->add_option("--beta", ra.beta, "slope on x (default 0.3)");
  reg->add_option("--covariate", ra.covariate, "normal (W|x ~ N(x,1)) or coin (W in {0,1})");
  add_outputs(reg, ra.outputs);

  std::vector<const char*> argv{"collapse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (scenarios->parsed()) {
      if (run->parsed()) return scenarios_run(sa, out);
      return scenarios_list(out);
    }
    if (chk->parsed()) return check(ca, out);
    if (meas->parsed()) return measure(ma, out);
    return regress(ra, out);
  } catch (const Error& e) {
    err << "collapse: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "collapse: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace collapse
