// Tiny expression language for defining maps [0,1]^d -> R^m on the command
// line.  A function is a semicolon-separated list of scalar components over
// variables x1..x16, with +, -, *, /, integer ^, parentheses, and the
// functions sin, cos, exp, log, sqrt.
//
// Expressions are parsed once into a flat node arena and evaluated either on
// plain doubles or on forward-mode dual numbers, so values and Jacobians come
// from the same code path.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "map.hpp"

namespace critset {

inline constexpr int kMaxVars = 16;

// Value plus gradient with respect to the first `n` variables.
struct Dual {
  double v = 0.0;
  int n = 0;
  std::array<double, kMaxVars> g{};

  Dual() = default;
  Dual(double value) : v(value) {}
  static Dual variable(double value, int index, int nvars) {
    Dual d(value);
    d.n = nvars;
    d.g[index] = 1.0;
    return d;
  }
};

inline Dual operator+(const Dual& a, const Dual& b) {
  Dual r(a.v + b.v);
  r.n = std::max(a.n, b.n);
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] + b.g[i];
  return r;
}

inline Dual operator-(const Dual& a, const Dual& b) {
  Dual r(a.v - b.v);
  r.n = std::max(a.n, b.n);
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] - b.g[i];
  return r;
}

inline Dual operator-(const Dual& a) {
  Dual r(-a.v);
  r.n = a.n;
  for (int i = 0; i < r.n; ++i) r.g[i] = -a.g[i];
  return r;
}

inline Dual operator*(const Dual& a, const Dual& b) {
  Dual r(a.v * b.v);
  r.n = std::max(a.n, b.n);
  for (int i = 0; i < r.n; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
  return r;
}

inline Dual operator/(const Dual& a, const Dual& b) {
  if (b.v == 0.0) throw eval_error("division by zero");
  Dual r(a.v / b.v);
  r.n = std::max(a.n, b.n);
  const double inv2 = 1.0 / (b.v * b.v);
  for (int i = 0; i < r.n; ++i) r.g[i] = (a.g[i] * b.v - a.v * b.g[i]) * inv2;
  return r;
}

// Chain rule helper: f(a) with value fv and derivative fd at a.v.
inline Dual dual_chain(const Dual& a, double fv, double fd) {
  Dual r(fv);
  r.n = a.n;
  for (int i = 0; i < r.n; ++i) r.g[i] = fd * a.g[i];
  return r;
}

inline double t_sin(double x) { return std::sin(x); }
inline double t_cos(double x) { return std::cos(x); }
inline double t_exp(double x) { return std::exp(x); }
inline Dual t_sin(const Dual& a) { return dual_chain(a, std::sin(a.v), std::cos(a.v)); }
inline Dual t_cos(const Dual& a) { return dual_chain(a, std::cos(a.v), -std::sin(a.v)); }
inline Dual t_exp(const Dual& a) { const double e = std::exp(a.v); return dual_chain(a, e, e); }

inline double t_log(double x) {
  if (x <= 0.0) throw eval_error("log of a nonpositive value");
  return std::log(x);
}
inline Dual t_log(const Dual& a) {
  if (a.v <= 0.0) throw eval_error("log of a nonpositive value");
  return dual_chain(a, std::log(a.v), 1.0 / a.v);
}

inline double t_sqrt(double x) {
  if (x < 0.0) throw eval_error("sqrt of a negative value");
  return std::sqrt(x);
}
inline Dual t_sqrt(const Dual& a) {
  // The derivative blows up at 0, so the dual path needs a strictly
  // positive argument.
  if (a.v <= 0.0) throw eval_error("sqrt of a nonpositive value is not differentiable");
  const double s = std::sqrt(a.v);
  return dual_chain(a, s, 0.5 / s);
}

inline double t_pow(double x, int e) {
  if (e < 0 && x == 0.0) throw eval_error("zero raised to a negative power");
  return int_pow(x, e);
}
inline Dual t_pow(const Dual& a, int e) {
  if (e == 0) return Dual(1.0);
  if (e < 0 && a.v == 0.0) throw eval_error("zero raised to a negative power");
  const double fv = int_pow(a.v, e);
  // d/dx x^e = e x^(e-1); at x = 0 with e >= 2 this is 0, with e = 1 it is 1.
  double fd;
  if (a.v == 0.0) {
    fd = (e == 1) ? 1.0 : 0.0;
  } else {
    fd = static_cast<double>(e) * fv / a.v;
  }
  return dual_chain(a, fv, fd);
}

namespace detail {

enum class NodeKind { Num, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Log, Sqrt };

struct Node {
  NodeKind kind;
  double num = 0.0;  // Num
  int var = 0;       // Var, 1-based
  int lhs = -1;
  int rhs = -1;
  int exponent = 0;  // Pow
};

struct Expr {
  std::vector<Node> nodes;
  int root = -1;
  int max_var = 0;  // highest variable index referenced
};

template <class T>
T eval_node(const std::vector<Node>& nodes, int idx, const std::vector<T>& xs) {
  const Node& n = nodes[idx];
  switch (n.kind) {
    case NodeKind::Num: return T(n.num);
    case NodeKind::Var: return xs[static_cast<std::size_t>(n.var) - 1];
    case NodeKind::Add: return eval_node(nodes, n.lhs, xs) + eval_node(nodes, n.rhs, xs);
    case NodeKind::Sub: return eval_node(nodes, n.lhs, xs) - eval_node(nodes, n.rhs, xs);
    case NodeKind::Mul: return eval_node(nodes, n.lhs, xs) * eval_node(nodes, n.rhs, xs);
    case NodeKind::Div: return eval_node(nodes, n.lhs, xs) / eval_node(nodes, n.rhs, xs);
    case NodeKind::Neg: return -eval_node(nodes, n.lhs, xs);
    case NodeKind::Pow: return t_pow(eval_node(nodes, n.lhs, xs), n.exponent);
    case NodeKind::Sin: return t_sin(eval_node(nodes, n.lhs, xs));
    case NodeKind::Cos: return t_cos(eval_node(nodes, n.lhs, xs));
    case NodeKind::Exp: return t_exp(eval_node(nodes, n.lhs, xs));
    case NodeKind::Log: return t_log(eval_node(nodes, n.lhs, xs));
    case NodeKind::Sqrt: return t_sqrt(eval_node(nodes, n.lhs, xs));
  }
  throw internal_error("eval_node: bad node kind");
}

struct Token {
  enum Kind { Num, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Semi, End } kind;
  double num = 0.0;
  std::string_view text;
  std::size_t pos = 0;
};

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.'))
        ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          ++k;
          while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
          j = k;
        }
      }
      t.kind = Token::Num;
      t.text = src.substr(i, j - i);
      double value = 0.0;
      const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
      if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size())
        throw parse_error("malformed number '" + std::string(t.text) + "'", i);
      t.num = value;
      i = j;
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      t.kind = Token::Ident;
      t.text = src.substr(i, j - i);
      i = j;
    } else {
      switch (c) {
        case '+': t.kind = Token::Plus; break;
        case '-': t.kind = Token::Minus; break;
        case '*': t.kind = Token::Star; break;
        case '/': t.kind = Token::Slash; break;
        case '^': t.kind = Token::Caret; break;
        case '(': t.kind = Token::LParen; break;
        case ')': t.kind = Token::RParen; break;
        case ';': t.kind = Token::Semi; break;
        default:
          throw parse_error(std::string("unexpected character '") + c + "'", i);
      }
      t.text = src.substr(i, 1);
      ++i;
    }
    out.push_back(t);
  }
  Token end;
  end.kind = Token::End;
  end.pos = src.size();
  out.push_back(end);
  return out;
}

// Recursive-descent parser over the token stream.  Offsets in errors refer to
// the full source string, so multi-component sources report global positions.
class Parser {
 public:
  Parser(const std::vector<Token>& toks, std::size_t start) : toks_(toks), i_(start) {}

  Expr parse_component() {
    expr_ = Expr{};
    expr_.root = parse_expr();
    return std::move(expr_);
  }

  std::size_t position() const { return i_; }
  const Token& peek() const { return toks_[i_]; }

 private:
  const Token& next() { return toks_[i_++]; }

  int add(Node n) {
    expr_.nodes.push_back(n);
    return static_cast<int>(expr_.nodes.size()) - 1;
  }

  int parse_expr() {
    bool negate = false;
    if (peek().kind == Token::Minus) {
      next();
      negate = true;
    }
    int lhs = parse_term();
    if (negate) {
      Node n;
      n.kind = NodeKind::Neg;
      n.lhs = lhs;
      lhs = add(n);
    }
    while (peek().kind == Token::Plus || peek().kind == Token::Minus) {
      const bool plus = next().kind == Token::Plus;
      const int rhs = parse_term();
      Node n;
      n.kind = plus ? NodeKind::Add : NodeKind::Sub;
      n.lhs = lhs;
      n.rhs = rhs;
      lhs = add(n);
    }
    return lhs;
  }

  int parse_term() {
    int lhs = parse_factor();
    while (peek().kind == Token::Star || peek().kind == Token::Slash) {
      const bool mul = next().kind == Token::Star;
      const int rhs = parse_factor();
      Node n;
      n.kind = mul ? NodeKind::Mul : NodeKind::Div;
      n.lhs = lhs;
      n.rhs = rhs;
      lhs = add(n);
    }
    return lhs;
  }

  int parse_factor() {
    const int base = parse_base();
    if (peek().kind != Token::Caret) return base;
    next();
    int sign = 1;
    if (peek().kind == Token::Minus || peek().kind == Token::Plus) {
      if (next().kind == Token::Minus) sign = -1;
    }
    const Token& t = peek();
    if (t.kind != Token::Num) throw parse_error("expected an integer exponent", t.pos);
    for (char c : t.text)
      if (!std::isdigit(static_cast<unsigned char>(c)))
        throw parse_error("exponent must be an integer", t.pos);
    if (t.text.size() > 4) throw parse_error("exponent out of range", t.pos);
    next();
    Node n;
    n.kind = NodeKind::Pow;
    n.lhs = base;
    n.exponent = sign * static_cast<int>(t.num);
    return add(n);
  }

  int parse_base() {
    const Token& t = peek();
    switch (t.kind) {
      case Token::Num: {
        next();
        Node n;
        n.kind = NodeKind::Num;
        n.num = t.num;
        return add(n);
      }
      case Token::Ident:
        return parse_ident();
      case Token::LParen: {
        next();
        const int inner = parse_expr();
        if (peek().kind != Token::RParen) throw parse_error("expected ')'", peek().pos);
        next();
        return inner;
      }
      default:
        throw parse_error("expected a number, variable, or function", t.pos);
    }
  }

  int parse_ident() {
    const Token t = next();
    const std::string_view name = t.text;
    if (name.size() >= 2 && name[0] == 'x' &&
        std::all_of(name.begin() + 1, name.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      int idx = 0;
      std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (idx < 1) throw parse_error("variable index must be at least 1", t.pos);
      if (idx > kMaxVars)
        throw parse_error("variable index exceeds the limit of " + std::to_string(kMaxVars),
                          t.pos);
      expr_.max_var = std::max(expr_.max_var, idx);
      Node n;
      n.kind = NodeKind::Var;
      n.var = idx;
      return add(n);
    }
    NodeKind kind;
    if (name == "sin") kind = NodeKind::Sin;
    else if (name == "cos") kind = NodeKind::Cos;
    else if (name == "exp") kind = NodeKind::Exp;
    else if (name == "log") kind = NodeKind::Log;
    else if (name == "sqrt") kind = NodeKind::Sqrt;
    else throw parse_error("unknown identifier '" + std::string(name) + "'", t.pos);
    if (peek().kind != Token::LParen) throw parse_error("expected '(' after function name", peek().pos);
    next();
    const int arg = parse_expr();
    if (peek().kind != Token::RParen) throw parse_error("expected ')'", peek().pos);
    next();
    Node n;
    n.kind = kind;
    n.lhs = arg;
    return add(n);
  }

  const std::vector<Token>& toks_;
  std::size_t i_;
  Expr expr_;
};

inline std::vector<Expr> parse_components(std::string_view src) {
  const std::vector<Token> toks = lex(src);
  std::vector<Expr> comps;
  std::size_t i = 0;
  for (;;) {
    Parser p(toks, i);
    comps.push_back(p.parse_component());
    i = p.position();
    if (toks[i].kind == Token::Semi) {
      ++i;
      continue;
    }
    if (toks[i].kind == Token::End) break;
    throw parse_error("unexpected token '" + std::string(toks[i].text) + "'", toks[i].pos);
  }
  return comps;
}

}  // namespace detail

// A map [0,1]^d -> R^m defined by m semicolon-separated expressions.
class FunctionDef final : public C1Map {
 public:
  FunctionDef(std::string source, int dim_in)
      : source_(std::move(source)), dim_in_(dim_in) {
    if (dim_in_ < 1 || dim_in_ > kMaxVars)
      throw config_error("domain dimension must be between 1 and " + std::to_string(kMaxVars));
    components_ = detail::parse_components(source_);
    for (std::size_t c = 0; c < components_.size(); ++c) {
      if (components_[c].max_var > dim_in_)
        throw config_error("component " + std::to_string(c + 1) + " references x" +
                           std::to_string(components_[c].max_var) +
                           " but the domain dimension is " + std::to_string(dim_in_));
    }
  }

  const std::string& source() const { return source_; }
  int dim_in() const override { return dim_in_; }
  int dim_out() const override { return static_cast<int>(components_.size()); }

  Vec value(const Vec& x) const override {
    const Vec xc = checked_point(x);
    Vec out(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) {
      try {
        out[c] = detail::eval_node<double>(components_[c].nodes, components_[c].root, xc);
      } catch (const eval_error& e) {
        throw eval_error("component " + std::to_string(c + 1) + ": " + e.what());
      }
    }
    return out;
  }

  Mat jacobian(const Vec& x) const override { return value_and_jacobian(x).second; }

  std::pair<Vec, Mat> value_and_jacobian(const Vec& x) const override {
    const Vec xc = checked_point(x);
    std::vector<Dual> xs(xc.size());
    for (std::size_t i = 0; i < xc.size(); ++i)
      xs[i] = Dual::variable(xc[i], static_cast<int>(i), dim_in_);
    Vec val(components_.size());
    Mat jac(static_cast<int>(components_.size()), dim_in_);
    for (std::size_t c = 0; c < components_.size(); ++c) {
      Dual d;
      try {
        d = detail::eval_node<Dual>(components_[c].nodes, components_[c].root, xs);
      } catch (const eval_error& e) {
        throw eval_error("component " + std::to_string(c + 1) + ": " + e.what());
      }
      val[c] = d.v;
      for (int j = 0; j < dim_in_; ++j) jac(static_cast<int>(c), j) = d.g[j];
    }
    return {std::move(val), std::move(jac)};
  }

 private:
  // Points are required to lie in the closed unit cube up to a small slack,
  // then clamped so downstream math sees exact bounds.
  Vec checked_point(const Vec& x) const {
    if (static_cast<int>(x.size()) != dim_in_)
      throw eval_error("point dimension " + std::to_string(x.size()) +
                       " does not match the domain dimension " + std::to_string(dim_in_));
    constexpr double slack = 1e-9;
    Vec xc(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] >= -slack && x[i] <= 1.0 + slack))
        throw eval_error("coordinate " + std::to_string(i + 1) + " = " + std::to_string(x[i]) +
                         " lies outside the unit cube");
      xc[i] = std::min(1.0, std::max(0.0, x[i]));
    }
    return xc;
  }

  std::string source_;
  int dim_in_;
  std::vector<detail::Expr> components_;
};

}  // namespace critset
