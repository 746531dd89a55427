#include <gtest/gtest.h>

#include <algorithm>

#include "ta/pysyntax.h"

namespace ta::py {
namespace {

std::vector<NodeKind> kinds(const Module& m) {
  std::vector<NodeKind> out;
  for (const auto& n : m.nodes) out.push_back(n.kind);
  return out;
}

bool has(const Module& m, NodeKind k) {
  return std::any_of(m.nodes.begin(), m.nodes.end(), [k](const Node& n) { return n.kind == k; });
}

std::string span_text(std::string_view src, const Node& n) {
  return std::string(src.substr(n.begin, n.end - n.begin));
}

TEST(PySyntax, AssignmentSpans) {
  const std::string src = "x = a + b\n";
  auto m = parse(src);
  ASSERT_EQ(m.nodes.size(), 2u);
  EXPECT_EQ(m.nodes[1].kind, NodeKind::kAssign);
  EXPECT_EQ(span_text(src, m.nodes[1]), "x = a + b");
  EXPECT_EQ(m.nodes[0].kind, NodeKind::kBinOp);
  EXPECT_EQ(span_text(src, m.nodes[0]), "a + b");
}

TEST(PySyntax, FunctionWithBody) {
  const std::string src =
      "@cache\n"
      "def f(a, b=2, *args, c: int = 3, **kw) -> int:\n"
      "    if a > b and not c:\n"
      "        return a - b\n"
      "    elif a == b:\n"
      "        pass\n"
      "    else:\n"
      "        while True:\n"
      "            break\n"
      "    return b\n";
  auto m = parse(src);
  EXPECT_TRUE(has(m, NodeKind::kFunctionDef));
  EXPECT_TRUE(has(m, NodeKind::kBoolOp));
  EXPECT_TRUE(has(m, NodeKind::kCompare));
  EXPECT_TRUE(has(m, NodeKind::kWhile));
  EXPECT_EQ(std::count_if(m.nodes.begin(), m.nodes.end(),
                          [](const Node& n) { return n.kind == NodeKind::kIf; }),
            3);
  for (const auto& n : m.nodes) {
    if (n.kind == NodeKind::kFunctionDef) {
      EXPECT_EQ(n.begin, 0u);
      EXPECT_EQ(src[n.end - 1], ':');
    }
  }
}

TEST(PySyntax, StatementVariety) {
  const std::string src =
      "import os, sys as s\n"
      "from . import x\n"
      "from a.b import (c, d as e,)\n"
      "class A(B, metaclass=M):\n"
      "    y: int = 0\n"
      "    def g(self):\n"
      "        global q\n"
      "        self.y += 1; del self.z\n"
      "        assert self.y, 'msg'\n"
      "        raise ValueError('x') from None\n"
      "try:\n"
      "    pass\n"
      "except (KeyError, ValueError) as err:\n"
      "    pass\n"
      "finally:\n"
      "    pass\n"
      "with open('f') as fh, ctx():\n"
      "    data = [v * 2 for v in fh if v]\n"
      "for i, (j, k) in enumerate(pairs):\n"
      "    continue\n"
      "d = {k: v for k, v in items}\n"
      "s = {1, 2, *rest}\n"
      "t = lambda p, q=1: p if q else -p\n"
      "u = x[1:2, ::3][0]\n"
      "v = f(*a, **k, key=1)\n"
      "w = (yield)\n"
      "z = 2 ** -1\n"
      "print(f'{x}' \"y\" r'\\d')\n"
      "if (n := 10) > 5: print(n)\n"
      "a = b = c\n";
  auto m = parse(src);
  for (auto k : {NodeKind::kImport, NodeKind::kClassDef, NodeKind::kAnnAssign,
                 NodeKind::kAugAssign, NodeKind::kDelete, NodeKind::kAssert, NodeKind::kRaise,
                 NodeKind::kGlobal, NodeKind::kTry, NodeKind::kWith, NodeKind::kFor,
                 NodeKind::kContinue, NodeKind::kExpr}) {
    EXPECT_TRUE(has(m, k)) << to_string(k);
  }
}

TEST(PySyntax, ContinuationAndComments) {
  const std::string src =
      "# header\n"
      "total = (1 +\n"
      "         2)  # trailing\n"
      "\n"
      "value = 3 + \\\n"
      "    4\n"
      "text = '''a\n"
      "b'''\n";
  auto m = parse(src);
  EXPECT_EQ(std::count_if(m.nodes.begin(), m.nodes.end(),
                          [](const Node& n) { return n.kind == NodeKind::kAssign; }),
            3);
}

TEST(PySyntax, RejectsMalformed) {
  for (const char* bad : {"def f(:\n  return 1\n", "x = (1, 2\n", "if x\n    y = 1\n",
                          "x = 1\n  y = 2\n", "def f():\nreturn 1\n", "x = 'abc\n",
                          "return = 3\n", "a b\n", "if x:\n    pass\n  else:\n    pass\n",
                          "x = 1 +\n", "else:\n    pass\n", "try:\n    pass\n", "x = )\n"}) {
    std::string msg;
    EXPECT_FALSE(is_valid(bad, &msg)) << bad;
    EXPECT_FALSE(msg.empty());
  }
}

TEST(PySyntax, AcceptsEmptyAndBlank) {
  EXPECT_TRUE(is_valid(""));
  EXPECT_TRUE(is_valid("\n\n   \n# only a comment"));
  EXPECT_TRUE(parse("").nodes.empty());
}

TEST(PySyntax, NoTrailingNewline) {
  auto m = parse("def f():\n    return 1");
  EXPECT_EQ(kinds(m), (std::vector<NodeKind>{NodeKind::kFunctionDef, NodeKind::kReturn}));
}

TEST(PySyntax, ErrorCarriesOffset) {
  try {
    parse("x = 1\ny = )\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.offset(), 10u);
    EXPECT_EQ(e.code(), ErrorCode::kMalformedInput);
  }
}

}  // namespace
}  // namespace ta::py
