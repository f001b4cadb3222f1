#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "casewright/case_file.hpp"

namespace casewright {

/// A reference into the case file: an item path plus optional member names
/// into its JSON value, written `report.outcome` or `input/email-1`.
struct CaseFileRef {
  std::string path;
  std::vector<std::string> fields;

  std::string to_string() const;
  friend bool operator==(const CaseFileRef&, const CaseFileRef&) = default;
};

using Literal = std::variant<bool, double, std::string>;

enum class ExprOp {
  literal,
  ref,
  exists,
  count,
  eq,
  ne,
  lt,
  le,
  gt,
  ge,
  logical_and,
  logical_or,
  logical_not,
};

struct ExprNode {
  ExprOp op = ExprOp::literal;
  Literal literal = false;
  CaseFileRef ref;
  std::vector<ExprNode> operands;
  std::size_t position = 0;

  bool operator==(const ExprNode& other) const {
    return op == other.op && literal == other.literal && ref == other.ref &&
           operands == other.operands;
  }
};

/// Read-only view of the case file an ifPart is evaluated against.
class EvaluationContext {
 public:
  explicit EvaluationContext(const CaseFileState& file) : file_(&file) {}
  const CaseFileState& file() const { return *file_; }

 private:
  const CaseFileState* file_;
};

/// An immutable, type-checked ifPart expression.
class Expression {
 public:
  const ExprNode& root() const { return *root_; }
  const std::string& source() const { return source_; }

  /// Canonical text; parses back to an identical tree.
  std::string to_string() const;

  bool operator==(const Expression& other) const {
    return root() == other.root();
  }

 private:
  friend Expression parse_expression(std::string_view text);
  Expression(std::shared_ptr<const ExprNode> root, std::string source)
      : root_(std::move(root)), source_(std::move(source)) {}

  std::shared_ptr<const ExprNode> root_;
  std::string source_;
};

/// Throws ParseError with SyntaxError or TypeMismatch.
Expression parse_expression(std::string_view text);

/// Throws Error with MissingReference or TypeMismatch.
bool evaluate_expression(const Expression& expr, const EvaluationContext& ctx);

}  // namespace casewright
