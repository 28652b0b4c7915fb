#include <cmath>
#include <filesystem>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "collapse/config.hpp"
#include "collapse/errors.hpp"
#include "collapse/models.hpp"
#include "doctest.h"

using namespace collapse;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(COLLAPSE_SOURCE_DIR) / "configs";

const std::string kFull = R"(schema_version = 1

[model]
name = "full"
y_kind = "continuous"
x_min = 0.1
x_max = 5

[model.covariate]
family = "normal"
mean = "x"
sd = 1

[model.response]
family = "normal"
mean = "x * w"
sd = "1 + 0*x"

[check]
measure = "edf"
mode = "average"
x_points = [0.5, 1.0]
y_points = [0.1]
w_points = [0.0, 1.0]
tol_abs = 1e-5
tol_rel = 1e-4
probes = false
reversal = true
quadrature = "adaptive"
threads = 1

[output]
format = "json"
path = "out.json"
)";

ErrorKind kind_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("config was accepted: " << text);
  return ErrorKind::InvalidParams;
}

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  REQUIRE(at != std::string::npos);
  return text.replace(at, from.size(), to);
}

// Single-edit misspellings of a key.
std::set<std::string> misspellings(const std::string& key) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    out.insert(key.substr(0, i) + key.substr(i + 1));
    out.insert(key.substr(0, i) + key[i] + key.substr(i));
    if (i + 1 < key.size()) {
      std::string s = key;
      std::swap(s[i], s[i + 1]);
      out.insert(s);
    }
    std::string upper = key;
    upper[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(upper[i])));
    out.insert(upper);
  }
  out.insert(key + "s");
  out.insert("_" + key);
  out.erase(key);
  out.erase("");
  return out;
}

}  // namespace

TEST_CASE("toml subset: values, comments and multi-line arrays") {
  const auto doc = parse_toml(R"(top = 3   # comment
[a.b]
s = "say \"hi\" # not a comment"
t = true
f = false
n = -2.5e-3
i = inf
arr = [1, 2,
       3.5]   # trailing
strs = ["x", "y"]
empty = []
)");
  CHECK(std::get<double>(doc.tables.at("").at("top").data) == 3.0);
  const auto& t = doc.tables.at("a.b");
  CHECK(std::get<std::string>(t.at("s").data) == "say \"hi\" # not a comment");
  CHECK(std::get<bool>(t.at("t").data));
  CHECK_FALSE(std::get<bool>(t.at("f").data));
  CHECK(std::get<double>(t.at("n").data) == -2.5e-3);
  CHECK(std::isinf(std::get<double>(t.at("i").data)));
  CHECK(std::get<std::vector<double>>(t.at("arr").data) == std::vector<double>{1.0, 2.0, 3.5});
  CHECK(t.at("arr").line == 8);
  CHECK(std::get<std::vector<std::string>>(t.at("strs").data) == std::vector<std::string>{"x", "y"});
  CHECK(std::get<std::vector<double>>(t.at("empty").data).empty());
}

TEST_CASE("toml subset: malformed input names the line") {
  auto message = [](const std::string& text) {
    try {
      parse_toml(text);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConfigError);
      return std::string(e.what());
    }
    FAIL("accepted: " << text);
    return std::string();
  };
  CHECK(message("a = 1\na = 2").find("line 2") != std::string::npos);
  CHECK(message("[t]\n[t]").find("line 2") != std::string::npos);
  CHECK(message("a = \"open").find("unterminated") != std::string::npos);
  CHECK(message("a = [1, \"x\"]").find("mixes") != std::string::npos);
  CHECK(message("a = 1 2").find("line 1") != std::string::npos);
  CHECK(message("just words").find("key = value") != std::string::npos);
  CHECK(message("[[t]]").find("table") != std::string::npos);
  CHECK(message("a = 1e999").find("cannot read") != std::string::npos);
  const auto open_array = message("a = [1, 2");
  CHECK((open_array.find("unterminated") != std::string::npos || open_array.find("']'") != std::string::npos));
}

TEST_CASE("the full example parses into every section") {
  const auto cfg = parse_config(kFull);
  CHECK(cfg.schema_version == 1);
  CHECK(cfg.model.name == "full");
  CHECK(cfg.model.x_min == 0.1);
  CHECK(cfg.model.covariate.family == "normal");
  CHECK(cfg.model.response.parameters.at("mean").print() == "x*w");
  REQUIRE(cfg.check);
  CHECK(cfg.check->measure == MeasureKind::EDF);
  CHECK(cfg.check->mode == CheckMode::Average);
  CHECK(cfg.check->grid.x_points == std::vector<double>{0.5, 1.0});
  CHECK_FALSE(cfg.check->probes);
  CHECK(cfg.check->threads == 1);
  CHECK(cfg.output.format == OutputFormat::Json);
  CHECK(cfg.output.path == "out.json");
}

TEST_CASE("every shipped config parses") {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".toml") continue;
    INFO(entry.path());
    const auto cfg = load_config(entry.path());
    CHECK_NOTHROW(build_model(cfg.model));
    ++seen;
  }
  CHECK(seen >= 4);
}

TEST_CASE("misspelled keys and tables are rejected") {
  // every key of the full example, misspelled every single-edit way
  std::istringstream lines(kFull);
  std::string line;
  int mutations = 0;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    if (key == "schema_version") continue;
    for (const auto& typo : misspellings(key)) {
      const std::string text = replace_once(kFull, "\n" + line + "\n", "\n" + typo + line.substr(eq) + "\n");
      INFO("key " << key << " -> " << typo);
      CHECK(kind_of(text) == ErrorKind::ConfigError);
      ++mutations;
    }
  }
  for (const std::string table : {"model", "model.covariate", "model.response", "check", "output"}) {
    for (const auto& typo : misspellings(table)) {
      INFO("table " << table << " -> " << typo);
      CHECK(kind_of(replace_once(kFull, "[" + table + "]", "[" + typo + "]")) == ErrorKind::ConfigError);
      ++mutations;
    }
  }
  for (const auto& typo : misspellings("schema_version")) {
    CHECK(kind_of(replace_once(kFull, "schema_version", typo)) == ErrorKind::ConfigError);
    ++mutations;
  }
  CHECK(mutations > 500);
  // the schema list itself is what the error message offers
  CHECK(config_schema_keys().size() > 30);
}

TEST_CASE("schema violations are config errors") {
  CHECK(kind_of(replace_once(kFull, "schema_version = 1", "schema_version = 2")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "schema_version = 1", "")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "x_points = [0.5, 1.0]", "x_points = \"0.5\"")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "probes = false", "probes = 0")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "threads = 1", "threads = 1.5")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "measure = \"edf\"", "measure = \"edt\"")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "mode = \"average\"", "mode = \"mean\"")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "format = \"json\"", "format = \"yaml\"")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "y_kind = \"continuous\"", "y_kind = \"real\"")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "x_max = 5", "x_max = 0")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "tol_abs = 1e-5", "tol_abs = -1")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "x_points = [0.5, 1.0]", "x_points = []")) == ErrorKind::ConfigError);
  // mdi needs y points
  CHECK(kind_of(replace_once(replace_once(kFull, "measure = \"edf\"", "measure = \"mdi\""), "y_points = [0.1]",
                             "")) == ErrorKind::ConfigError);
  // simple needs w points
  CHECK(kind_of(replace_once(replace_once(kFull, "mode = \"average\"", "mode = \"simple\""),
                             "w_points = [0.0, 1.0]", "")) == ErrorKind::ConfigError);
}

TEST_CASE("family sections are checked against their parameters") {
  // parameter of another family
  CHECK(kind_of(replace_once(kFull, "sd = 1\n", "rate = 1\n")) == ErrorKind::ConfigError);
  // missing parameter
  CHECK(kind_of(replace_once(kFull, "sd = \"1 + 0*x\"", "")) == ErrorKind::ConfigError);
  // unknown family, and families in the wrong slot
  CHECK(kind_of(replace_once(kFull, "family = \"normal\"\nmean = \"x\"", "family = \"cauchy\"\nmean = \"x\"")) ==
        ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "family = \"normal\"\nmean = \"x * w\"\nsd = \"1 + 0*x\"",
                             "family = \"degenerate\"\nvalue = \"x\"")) == ErrorKind::ConfigError);
  // covariate expressions see x only, response expressions x and w
  CHECK(kind_of(replace_once(kFull, "mean = \"x\"", "mean = \"x + w\"")) == ErrorKind::ConfigError);
  CHECK(kind_of(replace_once(kFull, "mean = \"x * w\"", "mean = \"x * y\"")) == ErrorKind::ConfigError);
  // expression syntax errors surface as config errors with the line
  try {
    parse_config(replace_once(kFull, "mean = \"x * w\"", "mean = \"x ** w\""));
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find("line 16") != std::string::npos);
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("random corruption never escapes as anything but a config error") {
  std::mt19937_64 rng(20261017);
  const std::string alphabet = "[]=\"#,.\n abcxyzw019-_^()";
  int rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::string text = kFull;
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) {
      const std::size_t at = rng() % text.size();
      const char c = alphabet[rng() % alphabet.size()];
      switch (rng() % 3) {
        case 0: text.erase(at, 1); break;
        case 1: text.insert(at, 1, c); break;
        default: text[at] = c; break;
      }
    }
    try {
      parse_config(text);
    } catch (const Error& e) {
      INFO(text);
      CHECK(e.kind() == ErrorKind::ConfigError);
      ++rejected;
    }
  }
  CHECK(rejected > 1000);
}

TEST_CASE("config models agree with the built-in ones") {
  const EvalConfig cfg;
  {
    const auto m = build_model(load_config(kConfigs / "poisson_gamma.toml").model);
    const auto ref = models::poisson_gamma(0.1, 0.3);
    for (double x : {0.5, 1.0, 2.0}) {
      for (long k : {0L, 1L, 3L, 10L}) {
        CHECK(marginal_pmf(m, k, x, cfg).value == doctest::Approx(marginal_pmf(ref, k, x, cfg).value).epsilon(1e-10));
      }
      CHECK(led(m, x, std::nullopt, cfg).value == doctest::Approx(0.3).epsilon(1e-6));
    }
  }
  {
    const auto m = build_model(load_config(kConfigs / "uniform_normal.toml").model);
    for (double x : {0.5, 1.0, 2.0}) {
      CHECK(marginal_mean(m, x, cfg).value == doctest::Approx(0.5 * (x * x + 1.0)).epsilon(1e-9));
    }
  }
  {
    const auto m = build_model(load_config(kConfigs / "power_density.toml").model);
    const auto ref = models::power_density();
    for (double x : {1.0, 1.5}) {
      for (double y : {0.01, 0.02}) {
        CHECK(mdi(m, y, x, std::nullopt, cfg).value ==
              doctest::Approx(mdi(ref, y, x, std::nullopt, cfg).value).epsilon(1e-9));
      }
    }
    CHECK(marginal_density(m, 0.05, 1.0, cfg).value ==
          doctest::Approx(marginal_density(ref, 0.05, 1.0, cfg).value).epsilon(1e-10));
  }
}

TEST_CASE("expressions are evaluated lazily, with typed errors") {
  auto text = replace_once(kFull, "mean = \"x * w\"", "mean = \"log(x - 1)\"");
  const auto cfg = parse_config(text);
  const auto m = build_model(cfg.model);
  CHECK(m.mean_yxw(2.0, 0.0) == doctest::Approx(0.0));
  try {
    m.mean_yxw(0.5, 0.0);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EvaluationError);
  }
  CHECK(m.x_domain.lower == 0.1);
  CHECK(m.x_domain.upper == 5.0);
}

TEST_CASE("missing files are config errors") {
  try {
    load_config(kConfigs / "does_not_exist.toml");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find("does_not_exist.toml") != std::string::npos);
  }
}
