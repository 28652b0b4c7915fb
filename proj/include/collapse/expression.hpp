#pragma once

// A small arithmetic language for model parameters, e.g.
// "exp(0.1 + 0.3*x + 0.2*w)" or "x^2 + (w - x)^2".
//
//   expr  := term (('+' | '-') term)*
//   term  := unary (('*' | '/') unary)*
//   unary := '-' unary | power
//   power := atom ('^' unary)?
//   atom  := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//
// '^' binds tighter than unary minus and associates to the right, so
// "-x^2" is -(x^2) and "2^-1" is 0.5. Variables: x, y, w, w1, w2.
// Functions: exp log sqrt abs normpdf normcdf (one argument), pow (two),
// min max (two or more).

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace collapse {

enum class Variable { X, Y, W, W1, W2 };

std::string_view to_string(Variable v);

enum class Function { Exp, Log, Sqrt, Abs, NormPdf, NormCdf, Pow, Min, Max };

std::string_view to_string(Function f);

/// Values for the variables an expression may mention. Reading an unset
/// variable is an EvaluationError.
struct Bindings {
  std::optional<double> x, y, w, w1, w2;

  std::optional<double> get(Variable v) const;
};

class Expression {
 public:
  enum class Kind { Number, Var, Negate, Add, Subtract, Multiply, Divide, Power, Call };

  struct Node {
    Kind kind = Kind::Number;
    double number = 0.0;
    Variable variable = Variable::X;
    Function function = Function::Exp;
    std::vector<std::shared_ptr<const Node>> children;
  };
  using NodePtr = std::shared_ptr<const Node>;

  /// Throws ParseError with kind SyntaxError, UnknownIdentifier or
  /// ArityMismatch.
  static Expression parse(std::string_view text);

  static Expression number(double value);
  static Expression variable(Variable v);
  static Expression negate(Expression operand);
  static Expression binary(Kind kind, Expression lhs, Expression rhs);
  static Expression call(Function f, std::vector<Expression> args);

  /// Canonical text with the fewest parentheses that parse back to the same
  /// tree.
  std::string print() const;

  /// Throws Error(EvaluationError) on an unbound variable, a domain error
  /// (log of a non-positive value, sqrt of a negative one, division by
  /// zero) or a non-finite result.
  double evaluate(const Bindings& bindings) const;

  bool mentions(Variable v) const;

  const Node& root() const { return *root_; }

  friend bool operator==(const Expression& a, const Expression& b);

 private:
  explicit Expression(NodePtr root) : root_(std::move(root)) {}
  NodePtr root_;
};

}  // namespace collapse
