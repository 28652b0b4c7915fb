#include "collapse/expression.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "collapse/errors.hpp"
#include "collapse/numerics.hpp"

namespace collapse {
namespace {

using Kind = Expression::Kind;
using Node = Expression::Node;
using NodePtr = Expression::NodePtr;

struct FunctionInfo {
  Function function;
  std::string_view name;
  std::size_t min_args;
  std::size_t max_args;
};

constexpr std::size_t kVariadic = std::numeric_limits<std::size_t>::max();

constexpr FunctionInfo kFunctions[] = {
    {Function::Exp, "exp", 1, 1},         {Function::Log, "log", 1, 1},
    {Function::Sqrt, "sqrt", 1, 1},       {Function::Abs, "abs", 1, 1},
    {Function::NormPdf, "normpdf", 1, 1}, {Function::NormCdf, "normcdf", 1, 1},
    {Function::Pow, "pow", 2, 2},         {Function::Min, "min", 2, kVariadic},
    {Function::Max, "max", 2, kVariadic},
};

constexpr std::pair<Variable, std::string_view> kVariables[] = {
    {Variable::X, "x"}, {Variable::Y, "y"}, {Variable::W, "w"},
    {Variable::W1, "w1"}, {Variable::W2, "w2"},
};

const FunctionInfo& info(Function f) {
  for (const auto& fi : kFunctions) {
    if (fi.function == f) return fi;
  }
  throw Error(ErrorKind::InvalidParams, "unknown function");
}

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End };

struct Token {
  Tok type;
  std::size_t offset;
  std::string_view text;
  double number = 0.0;
};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r')) {
      ++pos_;
    }
    const std::size_t start = pos_;
    if (pos_ >= text_.size()) return {Tok::End, start, {}};
    const char c = text_[pos_];
    if (is_digit(c) || (c == '.' && pos_ + 1 < text_.size() && is_digit(text_[pos_ + 1]))) {
      return number(start);
    }
    if (is_ident_start(c)) {
      while (pos_ < text_.size() && (is_ident_start(text_[pos_]) || is_digit(text_[pos_]))) ++pos_;
      return {Tok::Ident, start, text_.substr(start, pos_ - start)};
    }
    ++pos_;
    switch (c) {
      case '+': return {Tok::Plus, start, "+"};
      case '-': return {Tok::Minus, start, "-"};
      case '*':
        if (pos_ < text_.size() && text_[pos_] == '*') {
          throw ParseError(ErrorKind::SyntaxError, start, "'**' is not an operator (use '^')");
        }
        return {Tok::Star, start, "*"};
      case '/': return {Tok::Slash, start, "/"};
      case '^': return {Tok::Caret, start, "^"};
      case '(': return {Tok::LParen, start, "("};
      case ')': return {Tok::RParen, start, ")"};
      case ',': return {Tok::Comma, start, ","};
      default:
        throw ParseError(ErrorKind::SyntaxError, start,
                         std::string("unexpected character '") + c + "'");
    }
  }

 private:
  Token number(std::size_t start) {
    while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && is_digit(text_[look])) {
        pos_ = look;
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
      }
    }
    const std::string_view lexeme = text_.substr(start, pos_ - start);
    double value = 0.0;
    // from_chars rejects a leading '.', so parse "0" + lexeme in that case
    std::string buffer;
    std::string_view digits = lexeme;
    if (lexeme.front() == '.') {
      buffer = "0" + std::string(lexeme);
      digits = buffer;
    }
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || !std::isfinite(value)) {
      throw ParseError(ErrorKind::SyntaxError, start,
                       "malformed number '" + std::string(lexeme) + "'");
    }
    return {Tok::Number, start, lexeme, value};
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

NodePtr make(Kind kind, std::vector<NodePtr> children = {}) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->children = std::move(children);
  return n;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  NodePtr parse() {
    NodePtr e = expr();
    if (current_.type != Tok::End) fail_unexpected();
    return e;
  }

 private:
  void advance() { current_ = lexer_.next(); }

  [[noreturn]] void fail_unexpected() {
    if (current_.type == Tok::End) {
      throw ParseError(ErrorKind::SyntaxError, current_.offset, "unexpected end of input");
    }
    throw ParseError(ErrorKind::SyntaxError, current_.offset,
                     "unexpected '" + std::string(current_.text) + "'");
  }

  void expect(Tok type) {
    if (current_.type != type) fail_unexpected();
    advance();
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (current_.type == Tok::Plus || current_.type == Tok::Minus) {
      const Kind k = current_.type == Tok::Plus ? Kind::Add : Kind::Subtract;
      advance();
      lhs = make(k, {lhs, term()});
    }
    return lhs;
  }

  NodePtr term() {
    NodePtr lhs = unary();
    while (current_.type == Tok::Star || current_.type == Tok::Slash) {
      const Kind k = current_.type == Tok::Star ? Kind::Multiply : Kind::Divide;
      advance();
      lhs = make(k, {lhs, unary()});
    }
    return lhs;
  }

  NodePtr unary() {
    if (current_.type == Tok::Minus) {
      advance();
      return make(Kind::Negate, {unary()});
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (current_.type == Tok::Caret) {
      advance();
      return make(Kind::Power, {base, unary()});
    }
    return base;
  }

  NodePtr atom() {
    const Token tok = current_;
    switch (tok.type) {
      case Tok::Number: {
        advance();
        auto n = std::make_shared<Node>();
        n->kind = Kind::Number;
        n->number = tok.number;
        return n;
      }
      case Tok::LParen: {
        advance();
        NodePtr inner = expr();
        expect(Tok::RParen);
        return inner;
      }
      case Tok::Ident:
        advance();
        if (current_.type == Tok::LParen) return call(tok);
        for (const auto& [var, name] : kVariables) {
          if (tok.text == name) {
            auto n = std::make_shared<Node>();
            n->kind = Kind::Var;
            n->variable = var;
            return n;
          }
        }
        throw ParseError(ErrorKind::UnknownIdentifier, tok.offset,
                         "unknown variable '" + std::string(tok.text) + "'");
      default:
        fail_unexpected();
    }
  }

  NodePtr call(const Token& name) {
    const FunctionInfo* fi = nullptr;
    for (const auto& candidate : kFunctions) {
      if (candidate.name == name.text) fi = &candidate;
    }
    if (fi == nullptr) {
      throw ParseError(ErrorKind::UnknownIdentifier, name.offset,
                       "unknown function '" + std::string(name.text) + "'");
    }
    expect(Tok::LParen);
    std::vector<NodePtr> args{expr()};
    while (current_.type == Tok::Comma) {
      advance();
      args.push_back(expr());
    }
    expect(Tok::RParen);
    if (args.size() < fi->min_args || args.size() > fi->max_args) {
      std::string wanted = fi->max_args == kVariadic ? "at least " + std::to_string(fi->min_args)
                                                     : std::to_string(fi->min_args);
      throw ParseError(ErrorKind::ArityMismatch, name.offset,
                       std::string(fi->name) + " takes " + wanted + " argument(s), got " +
                           std::to_string(args.size()));
    }
    auto n = make(Kind::Call, std::move(args));
    std::const_pointer_cast<Node>(n)->function = fi->function;
    return n;
  }

  Lexer lexer_;
  Token current_{Tok::End, 0, {}};
};

// Binding strength used by the printer; higher binds tighter.
int precedence(const Node& n) {
  switch (n.kind) {
    case Kind::Add:
    case Kind::Subtract: return 1;
    case Kind::Multiply:
    case Kind::Divide: return 2;
    case Kind::Negate: return 3;
    case Kind::Power: return 4;
    default: return 5;
  }
}

void print_number(double v, std::string& out) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

void print_node(const Node& n, std::string& out);

void print_wrapped(const Node& n, bool parens, std::string& out) {
  if (parens) out += '(';
  print_node(n, out);
  if (parens) out += ')';
}

void print_node(const Node& n, std::string& out) {
  switch (n.kind) {
    case Kind::Number:
      print_number(n.number, out);
      return;
    case Kind::Var:
      out += to_string(n.variable);
      return;
    case Kind::Negate:
      out += '-';
      print_wrapped(*n.children[0], precedence(*n.children[0]) < 3, out);
      return;
    case Kind::Power:
      print_wrapped(*n.children[0], precedence(*n.children[0]) < 5, out);
      out += '^';
      print_wrapped(*n.children[1], precedence(*n.children[1]) < 3, out);
      return;
    case Kind::Add:
    case Kind::Subtract:
    case Kind::Multiply:
    case Kind::Divide: {
      const int p = precedence(n);
      print_wrapped(*n.children[0], precedence(*n.children[0]) < p, out);
      out += n.kind == Kind::Add        ? " + "
             : n.kind == Kind::Subtract ? " - "
             : n.kind == Kind::Multiply ? "*"
                                        : "/";
      print_wrapped(*n.children[1], precedence(*n.children[1]) <= p, out);
      return;
    }
    case Kind::Call:
      out += to_string(n.function);
      out += '(';
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i > 0) out += ", ";
        print_node(*n.children[i], out);
      }
      out += ')';
      return;
  }
}

[[noreturn]] void eval_error(const std::string& what) {
  throw Error(ErrorKind::EvaluationError, what);
}

double eval_node(const Node& n, const Bindings& b) {
  switch (n.kind) {
    case Kind::Number:
      return n.number;
    case Kind::Var: {
      auto v = b.get(n.variable);
      if (!v) eval_error("variable '" + std::string(to_string(n.variable)) + "' is not bound");
      return *v;
    }
    case Kind::Negate:
      return -eval_node(*n.children[0], b);
    case Kind::Add:
      return eval_node(*n.children[0], b) + eval_node(*n.children[1], b);
    case Kind::Subtract:
      return eval_node(*n.children[0], b) - eval_node(*n.children[1], b);
    case Kind::Multiply:
      return eval_node(*n.children[0], b) * eval_node(*n.children[1], b);
    case Kind::Divide: {
      const double d = eval_node(*n.children[1], b);
      if (d == 0.0) eval_error("division by zero");
      return eval_node(*n.children[0], b) / d;
    }
    case Kind::Power: {
      const double base = eval_node(*n.children[0], b);
      const double e = eval_node(*n.children[1], b);
      if (base < 0.0 && e != std::floor(e)) eval_error("negative base with fractional exponent");
      if (base == 0.0 && e < 0.0) eval_error("zero raised to a negative power");
      return std::pow(base, e);
    }
    case Kind::Call: {
      std::vector<double> args;
      args.reserve(n.children.size());
      for (const auto& c : n.children) args.push_back(eval_node(*c, b));
      switch (n.function) {
        case Function::Exp: return std::exp(args[0]);
        case Function::Log:
          if (!(args[0] > 0.0)) eval_error("log of a non-positive value");
          return std::log(args[0]);
        case Function::Sqrt:
          if (args[0] < 0.0) eval_error("sqrt of a negative value");
          return std::sqrt(args[0]);
        case Function::Abs: return std::abs(args[0]);
        case Function::NormPdf: return normal_pdf(args[0]);
        case Function::NormCdf: return normal_cdf(args[0]);
        case Function::Pow:
          if (args[0] < 0.0 && args[1] != std::floor(args[1])) {
            eval_error("negative base with fractional exponent");
          }
          if (args[0] == 0.0 && args[1] < 0.0) eval_error("zero raised to a negative power");
          return std::pow(args[0], args[1]);
        case Function::Min: {
          double m = args[0];
          for (double a : args) m = std::min(m, a);
          return m;
        }
        case Function::Max: {
          double m = args[0];
          for (double a : args) m = std::max(m, a);
          return m;
        }
      }
      break;
    }
  }
  eval_error("malformed expression");
}

bool mentions_node(const Node& n, Variable v) {
  if (n.kind == Kind::Var) return n.variable == v;
  for (const auto& c : n.children) {
    if (mentions_node(*c, v)) return true;
  }
  return false;
}

bool equal_nodes(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case Kind::Number:
      if (!(a.number == b.number) || std::signbit(a.number) != std::signbit(b.number)) return false;
      break;
    case Kind::Var:
      if (a.variable != b.variable) return false;
      break;
    case Kind::Call:
      if (a.function != b.function) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!equal_nodes(*a.children[i], *b.children[i])) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Variable v) {
  for (const auto& [var, name] : kVariables) {
    if (var == v) return name;
  }
  return "?";
}

std::string_view to_string(Function f) { return info(f).name; }

std::optional<double> Bindings::get(Variable v) const {
  switch (v) {
    case Variable::X: return x;
    case Variable::Y: return y;
    case Variable::W: return w;
    case Variable::W1: return w1;
    case Variable::W2: return w2;
  }
  return std::nullopt;
}

Expression Expression::parse(std::string_view text) { return Expression(Parser(text).parse()); }

Expression Expression::number(double value) {
  if (!std::isfinite(value)) throw Error(ErrorKind::InvalidParams, "literal must be finite");
  // the grammar has no negative literals
  if (std::signbit(value)) return negate(number(-value));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Number;
  n->number = value;
  return Expression(n);
}

Expression Expression::variable(Variable v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Var;
  n->variable = v;
  return Expression(n);
}

Expression Expression::negate(Expression operand) {
  return Expression(make(Kind::Negate, {operand.root_}));
}

Expression Expression::binary(Kind kind, Expression lhs, Expression rhs) {
  switch (kind) {
    case Kind::Add:
    case Kind::Subtract:
    case Kind::Multiply:
    case Kind::Divide:
    case Kind::Power:
      return Expression(make(kind, {lhs.root_, rhs.root_}));
    default:
      throw Error(ErrorKind::InvalidParams, "not a binary operator");
  }
}

Expression Expression::call(Function f, std::vector<Expression> args) {
  const auto& fi = info(f);
  if (args.size() < fi.min_args || args.size() > fi.max_args) {
    throw Error(ErrorKind::ArityMismatch, std::string(fi.name) + ": wrong number of arguments");
  }
  std::vector<NodePtr> children;
  for (auto& a : args) children.push_back(a.root_);
  auto n = std::make_shared<Node>();
  n->kind = Kind::Call;
  n->function = f;
  n->children = std::move(children);
  return Expression(n);
}

std::string Expression::print() const {
  std::string out;
  print_node(*root_, out);
  return out;
}

double Expression::evaluate(const Bindings& bindings) const {
  const double v = eval_node(*root_, bindings);
  if (!std::isfinite(v)) eval_error("'" + print() + "' evaluated to a non-finite value");
  return v;
}

bool Expression::mentions(Variable v) const { return mentions_node(*root_, v); }

bool operator==(const Expression& a, const Expression& b) { return equal_nodes(*a.root_, *b.root_); }

}  // namespace collapse
