#include "casewright/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>

#include "casewright/error.hpp"

namespace casewright {

namespace {

enum class Tok {
  end,
  ident,
  number,
  string,
  lparen,
  rparen,
  slash,
  dot,
  eq,
  ne,
  lt,
  le,
  gt,
  ge,
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0;
  std::size_t pos = 0;
};

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.pos = pos_;
      if (pos_ >= text_.size()) {
        out.push_back(t);
        return out;
      }
      char c = text_[pos_];
      if (ident_start(c)) {
        std::size_t start = pos_;
        while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
        t.kind = Tok::ident;
        t.text = std::string(text_.substr(start, pos_ - start));
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && pos_ + 1 < text_.size() &&
                  std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
        lex_number(t);
      } else if (c == '"') {
        lex_string(t);
      } else {
        lex_punct(t);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  void lex_number(Token& t) {
    std::size_t start = pos_;
    if (text_[pos_] == '-') ++pos_;
    while (pos_ < text_.size() &&
           std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      std::size_t digits = pos_;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      }
      if (digits == pos_) {
        throw ParseError(ErrorCode::syntax_error, "digit expected after '.'",
                         pos_);
      }
    }
    t.kind = Tok::number;
    t.text = std::string(text_.substr(start, pos_ - start));
    t.number = std::stod(t.text);
  }

  void lex_string(Token& t) {
    ++pos_;
    std::string value;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) break;
        char esc = text_[pos_++];
        if (esc != '"' && esc != '\\') {
          throw ParseError(ErrorCode::syntax_error,
                           std::string("unknown escape \\") + esc, pos_ - 2);
        }
        value.push_back(esc);
      } else {
        value.push_back(c);
      }
    }
    if (pos_ >= text_.size()) {
      throw ParseError(ErrorCode::syntax_error, "unterminated string", t.pos);
    }
    ++pos_;
    t.kind = Tok::string;
    t.text = std::move(value);
  }

  void lex_punct(Token& t) {
    char c = text_[pos_];
    char n = pos_ + 1 < text_.size() ? text_[pos_ + 1] : '\0';
    auto one = [&](Tok k) {
      t.kind = k;
      pos_ += 1;
    };
    auto two = [&](Tok k) {
      t.kind = k;
      pos_ += 2;
    };
    switch (c) {
      case '(': return one(Tok::lparen);
      case ')': return one(Tok::rparen);
      case '/': return one(Tok::slash);
      case '.': return one(Tok::dot);
      case '=': return one(Tok::eq);
      case '!':
        if (n == '=') return two(Tok::ne);
        break;
      case '<':
        if (n == '=') return two(Tok::le);
        return one(Tok::lt);
      case '>':
        if (n == '=') return two(Tok::ge);
        return one(Tok::gt);
      default:
        break;
    }
    throw ParseError(ErrorCode::syntax_error,
                     std::string("unexpected character '") + c + "'", pos_);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

bool is_keyword(const std::string& s) {
  return s == "and" || s == "or" || s == "not" || s == "true" ||
         s == "false" || s == "exists" || s == "count";
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  ExprNode parse() {
    ExprNode n = parse_or();
    if (peek().kind != Tok::end) fail("unexpected trailing input");
    return n;
  }

 private:
  const Token& peek() const { return toks_[i_]; }
  const Token& next() { return toks_[i_++]; }
  bool at_keyword(const char* kw) const {
    return peek().kind == Tok::ident && peek().text == kw;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(ErrorCode::syntax_error, what, peek().pos);
  }
  void expect(Tok k, const char* what) {
    if (peek().kind != k) fail(std::string("expected ") + what);
    ++i_;
  }

  ExprNode binary(ExprOp op, ExprNode lhs, ExprNode rhs, std::size_t pos) {
    ExprNode n;
    n.op = op;
    n.position = pos;
    n.operands.push_back(std::move(lhs));
    n.operands.push_back(std::move(rhs));
    return n;
  }

  ExprNode parse_or() {
    ExprNode lhs = parse_and();
    while (at_keyword("or")) {
      std::size_t pos = next().pos;
      lhs = binary(ExprOp::logical_or, std::move(lhs), parse_and(), pos);
    }
    return lhs;
  }

  ExprNode parse_and() {
    ExprNode lhs = parse_not();
    while (at_keyword("and")) {
      std::size_t pos = next().pos;
      lhs = binary(ExprOp::logical_and, std::move(lhs), parse_not(), pos);
    }
    return lhs;
  }

  ExprNode parse_not() {
    if (at_keyword("not")) {
      ExprNode n;
      n.op = ExprOp::logical_not;
      n.position = next().pos;
      n.operands.push_back(parse_not());
      return n;
    }
    return parse_comparison();
  }

  ExprNode parse_comparison() {
    ExprNode lhs = parse_primary();
    std::optional<ExprOp> op;
    switch (peek().kind) {
      case Tok::eq: op = ExprOp::eq; break;
      case Tok::ne: op = ExprOp::ne; break;
      case Tok::lt: op = ExprOp::lt; break;
      case Tok::le: op = ExprOp::le; break;
      case Tok::gt: op = ExprOp::gt; break;
      case Tok::ge: op = ExprOp::ge; break;
      default: break;
    }
    if (!op) return lhs;
    std::size_t pos = next().pos;
    return binary(*op, std::move(lhs), parse_primary(), pos);
  }

  CaseFileRef parse_ref() {
    CaseFileRef ref;
    if (peek().kind != Tok::ident || is_keyword(peek().text)) {
      fail("expected case file path");
    }
    ref.path = next().text;
    while (peek().kind == Tok::slash) {
      ++i_;
      if (peek().kind != Tok::ident) fail("expected path segment");
      ref.path += "/" + next().text;
    }
    while (peek().kind == Tok::dot) {
      ++i_;
      if (peek().kind != Tok::ident) fail("expected member name");
      ref.fields.push_back(next().text);
    }
    return ref;
  }

  ExprNode parse_primary() {
    const Token& t = peek();
    ExprNode n;
    n.position = t.pos;
    switch (t.kind) {
      case Tok::number:
        n.op = ExprOp::literal;
        n.literal = t.number;
        ++i_;
        return n;
      case Tok::string:
        n.op = ExprOp::literal;
        n.literal = t.text;
        ++i_;
        return n;
      case Tok::lparen: {
        ++i_;
        ExprNode inner = parse_or();
        expect(Tok::rparen, "')'");
        return inner;
      }
      case Tok::ident:
        if (t.text == "true" || t.text == "false") {
          n.op = ExprOp::literal;
          n.literal = (t.text == "true");
          ++i_;
          return n;
        }
        if (t.text == "exists" || t.text == "count") {
          n.op = t.text == "exists" ? ExprOp::exists : ExprOp::count;
          ++i_;
          expect(Tok::lparen, "'('");
          n.ref = parse_ref();
          expect(Tok::rparen, "')'");
          return n;
        }
        n.op = ExprOp::ref;
        n.ref = parse_ref();
        return n;
      default:
        fail("expected expression");
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
};

enum class Type { boolean, number, text, dynamic };

const char* type_name(Type t) {
  switch (t) {
    case Type::boolean: return "boolean";
    case Type::number: return "number";
    case Type::text: return "text";
    case Type::dynamic: return "case-file value";
  }
  return "?";
}

bool is_comparison(ExprOp op) {
  return op == ExprOp::eq || op == ExprOp::ne || op == ExprOp::lt ||
         op == ExprOp::le || op == ExprOp::gt || op == ExprOp::ge;
}

Type type_check(const ExprNode& n) {
  auto fail = [&](const std::string& what) -> Type {
    throw ParseError(ErrorCode::type_mismatch, what, n.position);
  };
  switch (n.op) {
    case ExprOp::literal:
      if (std::holds_alternative<bool>(n.literal)) return Type::boolean;
      if (std::holds_alternative<double>(n.literal)) return Type::number;
      return Type::text;
    case ExprOp::ref:
      return Type::dynamic;
    case ExprOp::exists:
      return Type::boolean;
    case ExprOp::count:
      return Type::number;
    case ExprOp::logical_and:
    case ExprOp::logical_or:
    case ExprOp::logical_not:
      for (const auto& o : n.operands) {
        Type t = type_check(o);
        if (t != Type::boolean && t != Type::dynamic) {
          return fail(std::string("boolean operand expected, got ") +
                      type_name(t));
        }
      }
      return Type::boolean;
    default:
      break;
  }
  Type lhs = type_check(n.operands[0]);
  Type rhs = type_check(n.operands[1]);
  if (lhs != Type::dynamic && rhs != Type::dynamic && lhs != rhs) {
    return fail(std::string("cannot compare ") + type_name(lhs) + " with " +
                type_name(rhs));
  }
  bool ordered = n.op != ExprOp::eq && n.op != ExprOp::ne;
  if (ordered && (lhs == Type::boolean || rhs == Type::boolean)) {
    return fail("booleans only support = and !=");
  }
  return Type::boolean;
}

int precedence(const ExprNode& n) {
  switch (n.op) {
    case ExprOp::logical_or: return 1;
    case ExprOp::logical_and: return 2;
    case ExprOp::logical_not: return 3;
    default: return is_comparison(n.op) ? 4 : 5;
  }
}

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

const char* op_text(ExprOp op) {
  switch (op) {
    case ExprOp::eq: return "=";
    case ExprOp::ne: return "!=";
    case ExprOp::lt: return "<";
    case ExprOp::le: return "<=";
    case ExprOp::gt: return ">";
    case ExprOp::ge: return ">=";
    case ExprOp::logical_and: return "and";
    case ExprOp::logical_or: return "or";
    default: return "?";
  }
}

std::string print(const ExprNode& n);

std::string print_operand(const ExprNode& n, int min_prec) {
  std::string s = print(n);
  return precedence(n) < min_prec ? "(" + s + ")" : s;
}

std::string print(const ExprNode& n) {
  switch (n.op) {
    case ExprOp::literal:
      if (const bool* b = std::get_if<bool>(&n.literal)) {
        return *b ? "true" : "false";
      }
      if (const double* d = std::get_if<double>(&n.literal)) {
        return format_number(*d);
      }
      return quote(std::get<std::string>(n.literal));
    case ExprOp::ref:
      return n.ref.to_string();
    case ExprOp::exists:
      return "exists(" + n.ref.to_string() + ")";
    case ExprOp::count:
      return "count(" + n.ref.to_string() + ")";
    case ExprOp::logical_not:
      return "not " + print_operand(n.operands[0], 3);
    case ExprOp::logical_and:
    case ExprOp::logical_or: {
      int p = precedence(n);
      return print_operand(n.operands[0], p) + " " + op_text(n.op) + " " +
             print_operand(n.operands[1], p + 1);
    }
    default:
      return print_operand(n.operands[0], 5) + " " + op_text(n.op) + " " +
             print_operand(n.operands[1], 5);
  }
}

// Evaluation --------------------------------------------------------------

const nlohmann::json* resolve(const CaseFileRef& ref, const CaseFileState& file) {
  const CaseFileEntry* e = file.find(ref.path);
  if (e == nullptr || !e->exists) return nullptr;
  const nlohmann::json* v = &e->value;
  for (const auto& f : ref.fields) {
    if (!v->is_object()) return nullptr;
    auto it = v->find(f);
    if (it == v->end()) return nullptr;
    v = &*it;
  }
  return v;
}

[[noreturn]] void runtime_fail(ErrorCode code, const std::string& what,
                               const ExprNode& n) {
  throw Error(code, what + " (at offset " + std::to_string(n.position) + ")");
}

Literal value_of(const ExprNode& n, const CaseFileState& file);

bool truth_of(const ExprNode& n, const CaseFileState& file) {
  switch (n.op) {
    case ExprOp::logical_and:
      return truth_of(n.operands[0], file) && truth_of(n.operands[1], file);
    case ExprOp::logical_or:
      return truth_of(n.operands[0], file) || truth_of(n.operands[1], file);
    case ExprOp::logical_not:
      return !truth_of(n.operands[0], file);
    case ExprOp::exists: {
      const auto* v = resolve(n.ref, file);
      return v != nullptr && (n.ref.fields.empty() || !v->is_null());
    }
    default:
      break;
  }
  if (is_comparison(n.op)) {
    Literal lhs = value_of(n.operands[0], file);
    Literal rhs = value_of(n.operands[1], file);
    if (lhs.index() != rhs.index()) {
      runtime_fail(ErrorCode::type_mismatch, "comparison of mismatched types",
                   n);
    }
    bool ordered = n.op != ExprOp::eq && n.op != ExprOp::ne;
    if (ordered && std::holds_alternative<bool>(lhs)) {
      runtime_fail(ErrorCode::type_mismatch, "ordering comparison on booleans",
                   n);
    }
    switch (n.op) {
      case ExprOp::eq: return lhs == rhs;
      case ExprOp::ne: return lhs != rhs;
      case ExprOp::lt: return lhs < rhs;
      case ExprOp::le: return lhs <= rhs;
      case ExprOp::gt: return lhs > rhs;
      default: return lhs >= rhs;
    }
  }
  Literal v = value_of(n, file);
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  runtime_fail(ErrorCode::type_mismatch, "boolean value expected", n);
}

Literal value_of(const ExprNode& n, const CaseFileState& file) {
  switch (n.op) {
    case ExprOp::literal:
      return n.literal;
    case ExprOp::ref: {
      const auto* v = resolve(n.ref, file);
      if (v == nullptr) {
        runtime_fail(ErrorCode::missing_reference,
                     "missing case file reference " + n.ref.to_string(), n);
      }
      if (v->is_boolean()) return v->get<bool>();
      if (v->is_number()) return v->get<double>();
      if (v->is_string()) return v->get<std::string>();
      runtime_fail(ErrorCode::type_mismatch,
                   n.ref.to_string() + " is not a number, text or boolean", n);
    }
    case ExprOp::count: {
      if (n.ref.fields.empty()) {
        const CaseFileEntry* e = file.find(n.ref.path);
        if (e == nullptr || !e->exists) {
          runtime_fail(ErrorCode::missing_reference,
                       "missing case file reference " + n.ref.path, n);
        }
        if (!e->container) {
          runtime_fail(ErrorCode::type_mismatch,
                       "count() needs a container: " + n.ref.path, n);
        }
        return static_cast<double>(e->children.size());
      }
      const auto* v = resolve(n.ref, file);
      if (v == nullptr) {
        runtime_fail(ErrorCode::missing_reference,
                     "missing case file reference " + n.ref.to_string(), n);
      }
      if (!v->is_array() && !v->is_object()) {
        runtime_fail(ErrorCode::type_mismatch,
                     "count() needs a list or object: " + n.ref.to_string(), n);
      }
      return static_cast<double>(v->size());
    }
    default:
      return truth_of(n, file);
  }
}

}  // namespace

std::string CaseFileRef::to_string() const {
  std::string s = path;
  for (const auto& f : fields) s += "." + f;
  return s;
}

std::string Expression::to_string() const { return print(*root_); }

Expression parse_expression(std::string_view text) {
  Parser parser(Lexer(text).run());
  auto root = std::make_shared<ExprNode>(parser.parse());
  Type t = type_check(*root);
  if (t != Type::boolean && t != Type::dynamic) {
    throw ParseError(ErrorCode::type_mismatch,
                     std::string("condition must be boolean, got ") +
                         type_name(t),
                     root->position);
  }
  return Expression(std::move(root), std::string(text));
}

bool evaluate_expression(const Expression& expr, const EvaluationContext& ctx) {
  return truth_of(expr.root(), ctx.file());
}

}  // namespace casewright
