#include <gtest/gtest.h>

#include "casewright/error.hpp"
#include "casewright/expression.hpp"

using namespace casewright;
using nlohmann::json;

namespace {

CaseFileState file_with(std::initializer_list<std::pair<const char*, json>> values,
                        bool with_input = false) {
  CaseFileState f;
  f.declare("a", false);
  f.declare("b", false);
  f.declare("c", false);
  f.declare("input", true);
  for (const auto& [p, v] : values) f.apply(EventName::create, p, {{"value", v}});
  if (with_input) f.apply(EventName::create, "input", nullptr);
  return f;
}

bool eval(const std::string& text, const CaseFileState& f) {
  return evaluate_expression(parse_expression(text), EvaluationContext(f));
}

ErrorCode eval_error(const std::string& text, const CaseFileState& f) {
  try {
    eval(text, f);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::io_error;
}

}  // namespace

TEST(Expression, ParsesSpecExamples) {
  EXPECT_EQ(parse_expression("exists(input)").root().op, ExprOp::exists);
  const auto t = parse_expression("true");
  EXPECT_EQ(t.root().op, ExprOp::literal);
  EXPECT_EQ(t.root().literal, Literal(true));
  const auto conj = parse_expression("count(input) > 2 and exists(resolution)");
  EXPECT_EQ(conj.root().op, ExprOp::logical_and);
  EXPECT_EQ(conj.root().operands.at(0).op, ExprOp::gt);
}

TEST(Expression, PrettyPrintRoundTrip) {
  for (const char* text :
       {"count(input) > 2 and exists(resolution)", "not (a.x = 1 or b != \"q\\\"x\")",
        "a.outcome = \"refund\"", "exists(input/email-1) or false", "a <= 2.5 and not b >= -1",
        "(a = 1 or b = 2) and c = 3", "a = 1 or b = 2 and c = 3"}) {
    const auto e = parse_expression(text);
    const auto again = parse_expression(e.to_string());
    EXPECT_EQ(e, again) << text << " -> " << e.to_string();
    EXPECT_EQ(e.to_string(), again.to_string());
  }
}

TEST(Expression, SyntaxErrorsCarryPosition) {
  try {
    parse_expression("exists(input) and");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::syntax_error);
    EXPECT_GE(e.position(), 13u);
  }
  EXPECT_THROW(parse_expression("1 and true"), ParseError);
  EXPECT_THROW(parse_expression("a = "), ParseError);
  EXPECT_THROW(parse_expression("\"open"), ParseError);
}

TEST(Expression, ExistsAndCount) {
  EXPECT_TRUE(eval("exists(a)", file_with({{"a", 1}})));
  EXPECT_FALSE(eval("exists(a)", file_with({})));
  EXPECT_FALSE(eval("exists(nowhere)", file_with({})));
  auto f = file_with({}, true);
  EXPECT_FALSE(eval("count(input) > 0", f));
  f.apply(EventName::addChild, "input/one", nullptr);
  f.apply(EventName::addChild, "input/two", nullptr);
  EXPECT_TRUE(eval("count(input) = 2", f));
  EXPECT_TRUE(eval("exists(input/one)", f));
}

TEST(Expression, MissingReferenceIsAnErrorOutsideExists) {
  const auto f = file_with({});
  EXPECT_EQ(eval_error("a = 1", f), ErrorCode::missing_reference);
  EXPECT_EQ(eval_error("a.x = 1", file_with({{"a", json{{"y", 1}}}})),
            ErrorCode::missing_reference);
  EXPECT_EQ(eval_error("a > 1", file_with({{"a", "text"}})), ErrorCode::type_mismatch);
}

TEST(Expression, IsPure) {
  const auto f = file_with({{"a", 3}});
  const auto e = parse_expression("a > 2 and not exists(b)");
  const CaseFileState before = f;
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(evaluate_expression(e, EvaluationContext(f)));
  EXPECT_EQ(before, f);
}

// Leaves a, b, c each take one of: absent, 1, 2. For each valuation the
// reference result is computed directly in C++.
TEST(Expression, NestedTruthTableMatchesBruteForce) {
  const char* text = "(exists(a) and a = 1) or (exists(b) and not (exists(c) and c >= b))";
  const auto expr = parse_expression(text);
  int rows = 0;
  for (int va = 0; va < 3; ++va) {
    for (int vb = 0; vb < 3; ++vb) {
      for (int vc = 0; vc < 3; ++vc) {
        CaseFileState f;
        for (const char* p : {"a", "b", "c"}) f.declare(p, false);
        if (va) f.apply(EventName::create, "a", {{"value", va}});
        if (vb) f.apply(EventName::create, "b", {{"value", vb}});
        if (vc) f.apply(EventName::create, "c", {{"value", vc}});
        const bool want = (va && va == 1) || (vb && !(vc && vc >= vb));
        EXPECT_EQ(evaluate_expression(expr, EvaluationContext(f)), want)
            << "a=" << va << " b=" << vb << " c=" << vc;
        ++rows;
      }
    }
  }
  EXPECT_EQ(rows, 27);
}

TEST(Expression, DeletedItemNoLongerExists) {
  auto f = file_with({{"a", 1}});
  f.apply(EventName::delete_, "a", nullptr);
  EXPECT_FALSE(eval("exists(a)", f));
  f.apply(EventName::create, "a", {{"value", 2}});
  EXPECT_TRUE(eval("a = 2", f));
}
