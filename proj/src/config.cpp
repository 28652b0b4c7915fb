#include "collapse/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "collapse/errors.hpp"

namespace collapse {
namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error(ErrorKind::ConfigError, "line " + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool bare_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

// Drops a trailing comment, leaving '#' inside strings alone.
std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (s[i] == '#' && !quoted) {
      return s.substr(0, i);
    }
  }
  return s;
}

int bracket_depth(std::string_view s) {
  int depth = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (!quoted && s[i] == '[') {
      ++depth;
    } else if (!quoted && s[i] == ']') {
      --depth;
    }
  }
  return depth;
}

class ValueReader {
 public:
  ValueReader(std::string_view text, int line) : s_(text), line_(line) {}

  TomlValue read_all() {
    TomlValue v{read(), line_};
    skip_space();
    if (pos_ != s_.size()) fail(line_, "unexpected text after value: '" + std::string(s_.substr(pos_)) + "'");
    return v;
  }

 private:
  using Scalar = std::variant<std::string, double, bool>;

  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  decltype(TomlValue::data) read() {
    skip_space();
    if (pos_ >= s_.size()) fail(line_, "missing value");
    if (s_[pos_] == '[') return read_array();
    Scalar v = read_scalar();
    if (auto* p = std::get_if<std::string>(&v)) return *p;
    if (auto* p = std::get_if<double>(&v)) return *p;
    return std::get<bool>(v);
  }

  decltype(TomlValue::data) read_array() {
    ++pos_;
    std::vector<double> numbers;
    std::vector<std::string> strings;
    for (;;) {
      skip_space();
      if (pos_ >= s_.size()) fail(line_, "unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        break;
      }
      Scalar v = read_scalar();
      if (auto* d = std::get_if<double>(&v)) {
        numbers.push_back(*d);
      } else if (auto* str = std::get_if<std::string>(&v)) {
        strings.push_back(*str);
      } else {
        fail(line_, "arrays hold numbers or strings");
      }
      if (!numbers.empty() && !strings.empty()) fail(line_, "array mixes numbers and strings");
      skip_space();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
      } else if (pos_ >= s_.size() || s_[pos_] != ']') {
        fail(line_, "expected ',' or ']' in array");
      }
    }
    if (!strings.empty()) return strings;
    return numbers;
  }

  Scalar read_scalar() {
    skip_space();
    if (s_[pos_] == '"') return read_string();
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[end]))) {
      ++end;
    }
    const std::string_view token = s_.substr(pos_, end - pos_);
    pos_ = end;
    if (token == "true") return true;
    if (token == "false") return false;
    if (token == "inf" || token == "+inf") return INFINITY;
    if (token == "-inf") return -INFINITY;
    double value = 0.0;
    std::string_view digits = token;
    if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (token.empty() || ec != std::errc() || ptr != digits.data() + digits.size() || !std::isfinite(value)) {
      fail(line_, "cannot read value '" + std::string(token) + "'");
    }
    return value;
  }

  std::string read_string() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        switch (s_[pos_++]) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: fail(line_, "unsupported escape in string");
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail(line_, "unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  int line_;
  std::size_t pos_ = 0;
};

// ---- schema ---------------------------------------------------------------

const std::map<std::string, std::vector<std::string>>& family_parameters() {
  static const std::map<std::string, std::vector<std::string>> table{
      {"normal", {"mean", "sd"}},
      {"uniform", {"lower", "upper"}},
      {"gamma", {"rate", "shape"}},
      {"poisson", {"mean"}},
      {"negative-binomial", {"size", "prob"}},
      {"bernoulli", {"prob"}},
      {"tempered-normal", {"center", "lambda"}},
      {"degenerate", {"value"}},
      {"density", {"density", "mean", "y_lower", "y_upper"}},
  };
  return table;
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> tables = [] {
    std::set<std::string> family_keys{"family"};
    for (const auto& [name, params] : family_parameters()) family_keys.insert(params.begin(), params.end());
    return std::map<std::string, std::set<std::string>>{
        {"", {"schema_version"}},
        {"model", {"name", "y_kind", "x_min", "x_max"}},
        {"model.covariate", family_keys},
        {"model.response", [&] {
           auto keys = family_keys;
           keys.insert("w_breakpoints");
           return keys;
         }()},
        {"check",
         {"measure", "mode", "x_points", "y_points", "w_points", "tol_abs", "tol_rel", "probes", "reversal",
          "quadrature", "threads"}},
        {"output", {"format", "path"}},
    };
  }();
  return tables;
}

std::string joined(const std::set<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

std::string table_label(const std::string& t) { return t.empty() ? "top level" : "[" + t + "]"; }

class Section {
 public:
  Section(const TomlDocument& doc, const std::string& name) : name_(name) {
    if (auto it = doc.tables.find(name); it != doc.tables.end()) entries_ = &it->second;
    if (auto it = doc.table_lines.find(name); it != doc.table_lines.end()) line_ = it->second;
  }

  bool present() const { return entries_ != nullptr; }
  int line() const { return line_; }

  const TomlValue* find(const std::string& key) const {
    if (!entries_) return nullptr;
    auto it = entries_->find(key);
    return it == entries_->end() ? nullptr : &it->second;
  }

  template <class T>
  std::optional<T> get(const std::string& key, const char* type_name) const {
    const TomlValue* v = find(key);
    if (!v) return std::nullopt;
    if (const T* p = std::get_if<T>(&v->data)) return *p;
    fail(v->line, "'" + key + "' in " + table_label(name_) + " must be " + type_name);
  }

  template <class T>
  T required(const std::string& key, const char* type_name) const {
    auto v = get<T>(key, type_name);
    if (!v) fail(line_, "missing required key '" + key + "' in " + table_label(name_));
    return *v;
  }

  int integer(const std::string& key, int fallback) const {
    auto v = get<double>(key, "a number");
    if (!v) return fallback;
    if (std::floor(*v) != *v || std::abs(*v) > 1e6) fail(find(key)->line, "'" + key + "' must be an integer");
    return static_cast<int>(*v);
  }

 private:
  std::string name_;
  const std::map<std::string, TomlValue>* entries_ = nullptr;
  int line_ = 0;
};

Expression expression_value(const Section& s, const std::string& key, const std::vector<Variable>& allowed) {
  const TomlValue* v = s.find(key);
  Expression e = Expression::number(0.0);
  if (const double* d = std::get_if<double>(&v->data)) {
    e = Expression::number(*d);
  } else if (const std::string* text = std::get_if<std::string>(&v->data)) {
    try {
      e = Expression::parse(*text);
    } catch (const Error& err) {
      fail(v->line, "'" + key + "': " + err.what());
    }
  } else {
    fail(v->line, "'" + key + "' must be an expression string or a number");
  }
  for (Variable var : {Variable::X, Variable::Y, Variable::W, Variable::W1, Variable::W2}) {
    if (e.mentions(var) && std::find(allowed.begin(), allowed.end(), var) == allowed.end()) {
      fail(v->line, "'" + key + "' may not mention " + std::string(to_string(var)));
    }
  }
  return e;
}

FamilySpec family_section(const TomlDocument& doc, const std::string& table, bool covariate) {
  const Section s(doc, table);
  if (!s.present()) fail(0, "missing table [" + table + "]");
  FamilySpec spec;
  spec.family = s.required<std::string>("family", "a string");
  const auto& families = family_parameters();
  auto it = families.find(spec.family);
  const bool allowed = it != families.end() && (covariate ? spec.family != "density" : spec.family != "degenerate");
  if (!allowed) fail(s.find("family")->line, "unknown " + std::string(covariate ? "covariate" : "response") +
                                                   " family '" + spec.family + "'");
  const std::set<std::string> params(it->second.begin(), it->second.end());
  for (const auto& key : schema().at(table)) {
    if (key == "family" || key == "w_breakpoints" || !s.find(key)) continue;
    if (!params.count(key)) {
      fail(s.find(key)->line, "'" + key + "' is not a parameter of " + spec.family + " (expected " + joined(params) + ")");
    }
    const bool is_density = key == "density";
    const std::vector<Variable> vars = covariate    ? std::vector<Variable>{Variable::X}
                                       : is_density ? std::vector<Variable>{Variable::Y, Variable::X, Variable::W}
                                                    : std::vector<Variable>{Variable::X, Variable::W};
    spec.parameters.emplace(key, expression_value(s, key, vars));
  }
  if (const TomlValue* v = s.find("w_breakpoints")) {
    const auto* texts = std::get_if<std::vector<std::string>>(&v->data);
    const auto* numbers = std::get_if<std::vector<double>>(&v->data);
    if (!texts && !(numbers && numbers->empty())) fail(v->line, "'w_breakpoints' must be an array of expression strings");
    for (const auto& text : texts ? *texts : std::vector<std::string>{}) {
      Expression e = Expression::number(0.0);
      try {
        e = Expression::parse(text);
      } catch (const Error& err) {
        fail(v->line, "'w_breakpoints': " + std::string(err.what()));
      }
      for (Variable var : {Variable::W, Variable::W1, Variable::W2}) {
        if (e.mentions(var)) fail(v->line, "'w_breakpoints' may mention y and x only");
      }
      spec.breakpoints.push_back(std::move(e));
    }
  }
  const bool optional_params = spec.family == "density";
  for (const auto& p : it->second) {
    if (optional_params && p != "density") continue;
    if (!spec.parameters.count(p)) fail(s.line(), "[" + table + "] " + spec.family + " needs '" + p + "'");
  }
  return spec;
}

Bindings bindings_at(double x, std::optional<double> w = std::nullopt, std::optional<double> y = std::nullopt) {
  Bindings b;
  b.x = x;
  b.w = w;
  b.y = y;
  return b;
}

std::vector<double> points(const Section& s, const std::string& key) {
  auto v = s.get<std::vector<double>>(key, "an array of numbers");
  return v ? *v : std::vector<double>{};
}

}  // namespace

std::string_view to_string(CheckMode mode) { return mode == CheckMode::Simple ? "simple" : "average"; }

std::string_view to_string(OutputFormat format) {
  switch (format) {
    case OutputFormat::Text: return "text";
    case OutputFormat::Json: return "json";
    case OutputFormat::Csv: return "csv";
  }
  return "unknown";
}

TomlDocument parse_toml(std::string_view text) {
  TomlDocument doc;
  doc.tables[""];
  doc.table_lines[""] = 1;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const int start_line = line_no;
    std::string line(trim(strip_comment(raw)));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.size() < 3 || line.back() != ']' || line[1] == '[') fail(line_no, "malformed table header");
      const std::string name(trim(std::string_view(line).substr(1, line.size() - 2)));
      const bool ok = !name.empty() && name.front() != '.' && name.back() != '.' &&
                      name.find("..") == std::string::npos &&
                      std::all_of(name.begin(), name.end(), [](char c) { return bare_char(c) || c == '.'; });
      if (!ok) fail(line_no, "malformed table name '" + name + "'");
      if (doc.table_lines.count(name)) fail(line_no, "table [" + name + "] declared twice");
      doc.tables[name];
      doc.table_lines[name] = line_no;
      current = name;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    const std::string key(trim(std::string_view(line).substr(0, eq)));
    if (key.empty() || !std::all_of(key.begin(), key.end(), bare_char)) fail(line_no, "malformed key '" + key + "'");
    std::string value(trim(std::string_view(line).substr(eq + 1)));
    while (bracket_depth(value) > 0 && std::getline(in, raw)) {
      ++line_no;
      value += " ";
      value += trim(strip_comment(raw));
    }
    auto& table = doc.tables[current];
    if (table.count(key)) fail(start_line, "duplicate key '" + key + "'");
    table.emplace(key, ValueReader(value, start_line).read_all());
  }
  return doc;
}

ConfigDocument parse_config(std::string_view text) {
  const TomlDocument doc = parse_toml(text);
  const auto& tables = schema();
  for (const auto& [name, entries] : doc.tables) {
    auto allowed = tables.find(name);
    if (allowed == tables.end()) {
      fail(doc.table_lines.at(name), "unknown table [" + name + "]");
    }
    for (const auto& [key, value] : entries) {
      if (!allowed->second.count(key)) {
        fail(value.line, "unknown key '" + key + "' in " + table_label(name) + " (expected one of: " +
                             joined(allowed->second) + ")");
      }
    }
  }

  ConfigDocument cfg;
  const Section top(doc, "");
  const auto version = top.get<double>("schema_version", "a number");
  if (!version) fail(1, "missing schema_version");
  if (*version != kConfigSchemaVersion) {
    fail(top.find("schema_version")->line, "unsupported schema_version (this build reads " +
                                               std::to_string(kConfigSchemaVersion) + ")");
  }

  const Section model(doc, "model");
  if (!model.present()) fail(0, "missing table [model]");
  if (auto name = model.get<std::string>("name", "a string")) cfg.model.name = *name;
  if (auto kind = model.get<std::string>("y_kind", "a string")) {
    if (*kind == "continuous") {
      cfg.model.y_kind = YKind::Continuous;
    } else if (*kind == "count") {
      cfg.model.y_kind = YKind::Count;
    } else if (*kind == "binary") {
      cfg.model.y_kind = YKind::Binary;
    } else {
      fail(model.find("y_kind")->line, "y_kind must be continuous, count or binary");
    }
  }
  cfg.model.x_min = model.get<double>("x_min", "a number");
  cfg.model.x_max = model.get<double>("x_max", "a number");
  if (cfg.model.x_min && cfg.model.x_max && !(*cfg.model.x_min < *cfg.model.x_max)) {
    fail(model.line(), "x_min must be below x_max");
  }
  cfg.model.covariate = family_section(doc, "model.covariate", true);
  cfg.model.response = family_section(doc, "model.response", false);

  const Section check(doc, "check");
  if (check.present()) {
    CheckSection c;
    const auto measure = check.required<std::string>("measure", "a string");
    try {
      c.measure = measure_from_string(measure);
    } catch (const Error&) {
      fail(check.find("measure")->line, "unknown measure '" + measure + "'");
    }
    if (auto mode = check.get<std::string>("mode", "a string")) {
      if (*mode == "average") {
        c.mode = CheckMode::Average;
      } else if (*mode == "simple") {
        c.mode = CheckMode::Simple;
      } else {
        fail(check.find("mode")->line, "mode must be average or simple");
      }
    }
    c.grid.x_points = points(check, "x_points");
    c.grid.y_points = points(check, "y_points");
    c.grid.w_points = points(check, "w_points");
    if (auto t = check.get<double>("tol_abs", "a number")) c.grid.tol_abs = *t;
    if (auto t = check.get<double>("tol_rel", "a number")) c.grid.tol_rel = *t;
    if (c.grid.x_points.empty()) fail(check.line(), "[check] needs a non-empty x_points");
    if (needs_y(c.measure) && c.grid.y_points.empty()) fail(check.line(), measure + " needs y_points");
    if (c.mode == CheckMode::Simple && c.grid.w_points.empty()) fail(check.line(), "mode simple needs w_points");
    try {
      c.grid.validate();
    } catch (const Error& e) {
      fail(check.line(), e.what());
    }
    if (auto b = check.get<bool>("probes", "true or false")) c.probes = *b;
    if (auto b = check.get<bool>("reversal", "true or false")) c.reversal = *b;
    if (auto q = check.get<std::string>("quadrature", "a string")) {
      if (*q == "adaptive") {
        c.quadrature = QuadratureMethod::AdaptiveSubdivision;
      } else if (*q == "gauss-hermite") {
        c.quadrature = QuadratureMethod::GaussHermite;
      } else {
        fail(check.find("quadrature")->line, "quadrature must be adaptive or gauss-hermite");
      }
    }
    c.threads = check.integer("threads", 0);
    if (c.threads < 0) fail(check.find("threads")->line, "threads must be non-negative");
    cfg.check = std::move(c);
  }

  const Section output(doc, "output");
  if (auto format = output.get<std::string>("format", "a string")) {
    if (*format == "text") {
      cfg.output.format = OutputFormat::Text;
    } else if (*format == "json") {
      cfg.output.format = OutputFormat::Json;
    } else if (*format == "csv") {
      cfg.output.format = OutputFormat::Csv;
    } else {
      fail(output.find("format")->line, "format must be text, json or csv");
    }
  }
  cfg.output.path = output.get<std::string>("path", "a string");
  return cfg;
}

ConfigDocument load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const Error& e) {
    // drop the "ConfigError: " prefix the inner error already carries
    const std::string what = e.what();
    const auto colon = what.find(": ");
    throw Error(ErrorKind::ConfigError, path.string() + ": " + (colon == std::string::npos ? what : what.substr(colon + 2)));
  }
}

ConditionalModel build_model(const ModelSection& section) {
  ConditionalModel m;
  m.name = section.name;
  m.y_kind = section.y_kind;
  m.x_domain = {section.x_min.value_or(-kInf), section.x_max.value_or(kInf)};

  const auto& cov = section.covariate;
  auto in_x = [](const Expression& e) { return [e](double x) { return e.evaluate(bindings_at(x)); }; };
  if (cov.family == "normal") {
    m.covariate = CovariateLaw::normal(in_x(cov.parameters.at("mean")), in_x(cov.parameters.at("sd")));
  } else if (cov.family == "degenerate") {
    m.covariate = CovariateLaw::degenerate(in_x(cov.parameters.at("value")));
  } else {
    const FamilyTag tag = family_from_string(cov.family);
    std::vector<Expression> params;
    for (const auto& name : family_parameters().at(cov.family)) params.push_back(cov.parameters.at(name));
    m.covariate = CovariateLaw::from_family([tag, params](double x) {
      Family f{tag, {}};
      for (const auto& p : params) f.params.push_back(p.evaluate(bindings_at(x)));
      return f;
    });
  }

  const auto& resp = section.response;
  auto in_xw = [](const Expression& e) {
    return [e](double x, double w) { return e.evaluate(bindings_at(x, w)); };
  };
  if (resp.family == "density") {
    const Expression density = resp.parameters.at("density");
    m.density_yxw = [density](double y, double x, double w) {
      return density.evaluate(bindings_at(x, w, y));
    };
    if (auto it = resp.parameters.find("mean"); it != resp.parameters.end()) m.mean_yxw = in_xw(it->second);
    const auto lower = resp.parameters.find("y_lower");
    const auto upper = resp.parameters.find("y_upper");
    if (lower != resp.parameters.end() || upper != resp.parameters.end()) {
      std::optional<Expression> lo, hi;
      if (lower != resp.parameters.end()) lo = lower->second;
      if (upper != resp.parameters.end()) hi = upper->second;
      m.y_support.bounds = [lo, hi](double x, double w) {
        const Bindings b = bindings_at(x, w);
        return Interval{lo ? lo->evaluate(b) : -kInf, hi ? hi->evaluate(b) : kInf};
      };
      m.y_support.parametric = true;
      // a bound free of w bounds the marginal too
      const bool lo_fixed = !lo || !lo->mentions(Variable::W);
      const bool hi_fixed = !hi || !hi->mentions(Variable::W);
      if ((lo && lo_fixed) || (hi && hi_fixed)) {
        m.marginal_y_support = [lo, hi, lo_fixed, hi_fixed](double x) {
          const Bindings b = bindings_at(x);
          return Interval{lo && lo_fixed ? lo->evaluate(b) : -kInf, hi && hi_fixed ? hi->evaluate(b) : kInf};
        };
      }
    }
  } else {
    const FamilyTag tag = family_from_string(resp.family);
    std::vector<Expression> params;
    for (const auto& name : family_parameters().at(resp.family)) params.push_back(resp.parameters.at(name));
    m.set_y_family([tag, params](double x, double w) {
      Family f{tag, {}};
      for (const auto& p : params) f.params.push_back(p.evaluate(bindings_at(x, w)));
      return f;
    });
  }
  if (!resp.breakpoints.empty()) {
    m.y_support.w_breakpoints = [points = resp.breakpoints](double y, double x) {
      std::vector<double> out;
      for (const auto& e : points) {
        // a breakpoint that does not exist at this (y, x) is simply absent
        try {
          out.push_back(e.evaluate(bindings_at(x, std::nullopt, y)));
        } catch (const Error&) {
        }
      }
      std::sort(out.begin(), out.end());
      return out;
    };
  }
  return m;
}

std::vector<std::string> config_schema_keys() {
  std::vector<std::string> out;
  for (const auto& [table, keys] : schema()) {
    for (const auto& k : keys) out.push_back(table.empty() ? k : table + "." + k);
  }
  return out;
}

}  // namespace collapse
