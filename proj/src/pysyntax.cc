#include "ta/pysyntax.h"

#include <algorithm>
#include <array>
#include <cctype>

namespace ta::py {

namespace {

enum class Tok { kName, kNumber, kString, kOp, kNewline, kIndent, kDedent, kEnd };

struct Token {
  Tok type;
  std::string_view text;
  std::size_t begin;
  std::size_t end;
};

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",     "True",  "and",    "as",     "assert", "async",  "await",
    "break", "class",    "continue", "def", "del",    "elif",   "else",   "except",
    "finally", "for",    "from",  "global", "if",     "import", "in",     "is",
    "lambda", "nonlocal", "not",  "or",     "pass",   "raise",  "return", "try",
    "while", "with",     "yield"};

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool string_prefix(std::string_view word) {
  if (word.size() > 2) return false;
  std::string lower;
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  static constexpr std::array<std::string_view, 9> kPrefixes = {"r",  "u",  "b",  "f", "br",
                                                                "rb", "fr", "rf", "ur"};
  return std::find(kPrefixes.begin(), kPrefixes.end(), lower) != kPrefixes.end();
}

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    const std::size_t n = src_.size();
    while (pos_ < n) {
      if (at_line_start_ && brackets_.empty()) {
        if (!handle_indentation()) break;
        continue;
      }
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < n && src_[pos_] != '\n') ++pos_;
      } else if (c == '\\') {
        std::size_t next = pos_ + 1;
        if (next < n && src_[next] == '\r') ++next;
        if (next >= n || src_[next] != '\n') throw SyntaxError(pos_, "stray backslash");
        pos_ = next + 1;
      } else if (c == '\n') {
        if (brackets_.empty()) {
          emit(Tok::kNewline, pos_, pos_ + 1);
          at_line_start_ = true;
        }
        ++pos_;
      } else if (ident_start(static_cast<unsigned char>(c))) {
        std::size_t b = pos_;
        while (pos_ < n && ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < n && (src_[pos_] == '\'' || src_[pos_] == '"') &&
            string_prefix(src_.substr(b, pos_ - b))) {
          string_literal(b);
        } else {
          emit(Tok::kName, b, pos_);
        }
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < n && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        number();
      } else if (c == '\'' || c == '"') {
        string_literal(pos_);
      } else {
        op();
      }
    }
    if (!brackets_.empty()) {
      throw SyntaxError(brackets_.back().second, "unclosed bracket");
    }
    if (!tokens_.empty() && tokens_.back().type != Tok::kNewline &&
        tokens_.back().type != Tok::kDedent) {
      emit(Tok::kNewline, n, n);
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(Tok::kDedent, n, n);
    }
    emit(Tok::kEnd, n, n);
    return std::move(tokens_);
  }

 private:
  void emit(Tok type, std::size_t b, std::size_t e) {
    tokens_.push_back({type, src_.substr(b, e - b), b, e});
  }

  // Returns false at end of input.
  bool handle_indentation() {
    const std::size_t n = src_.size();
    std::size_t col = 0;
    std::size_t p = pos_;
    while (p < n && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\f')) {
      col = src_[p] == '\t' ? (col / 8 + 1) * 8 : (src_[p] == ' ' ? col + 1 : 0);
      ++p;
    }
    if (p >= n) {
      pos_ = p;
      return false;
    }
    if (src_[p] == '\n' || src_[p] == '#' || src_[p] == '\r') {
      while (p < n && src_[p] != '\n') ++p;
      pos_ = p < n ? p + 1 : p;
      return true;
    }
    if (col > indents_.back()) {
      indents_.push_back(col);
      emit(Tok::kIndent, p, p);
    } else {
      while (col < indents_.back()) {
        indents_.pop_back();
        emit(Tok::kDedent, p, p);
      }
      if (col != indents_.back()) throw SyntaxError(p, "unindent does not match any outer level");
    }
    at_line_start_ = false;
    pos_ = p;
    return true;
  }

  void number() {
    const std::size_t n = src_.size();
    std::size_t b = pos_;
    while (pos_ < n) {
      char c = src_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
        ++pos_;
      } else if ((c == '+' || c == '-') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E') &&
                 !(src_[b] == '0' && pos_ > b + 1 && (src_[b + 1] == 'x' || src_[b + 1] == 'X'))) {
        ++pos_;
      } else {
        break;
      }
    }
    emit(Tok::kNumber, b, pos_);
  }

  void string_literal(std::size_t b) {
    const std::size_t n = src_.size();
    const char q = src_[pos_];
    const bool triple = pos_ + 2 < n && src_[pos_ + 1] == q && src_[pos_ + 2] == q;
    pos_ += triple ? 3 : 1;
    for (;;) {
      if (pos_ >= n) throw SyntaxError(b, "unterminated string literal");
      char c = src_[pos_];
      if (c == '\\') {
        pos_ += 2;
        continue;
      }
      if (!triple && c == '\n') throw SyntaxError(b, "unterminated string literal");
      if (c == q) {
        if (!triple) {
          ++pos_;
          break;
        }
        if (pos_ + 2 < n && src_[pos_ + 1] == q && src_[pos_ + 2] == q) {
          pos_ += 3;
          break;
        }
      }
      ++pos_;
    }
    emit(Tok::kString, b, pos_);
  }

  void op() {
    static constexpr std::array<std::string_view, 4> kThree = {"**=", "//=", ">>=", "<<="};
    static constexpr std::array<std::string_view, 1> kEllipsis = {"..."};
    static constexpr std::array<std::string_view, 20> kTwo = {
        "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "->", "+=",
        "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", ":=", "<>"};
    static constexpr std::string_view kOne = "+-*/%@&|^~<>()[]{},:.;=!";
    const std::size_t b = pos_;
    auto try_match = [&](auto& table) {
      for (auto s : table) {
        if (!s.empty() && src_.compare(pos_, s.size(), s) == 0) {
          pos_ += s.size();
          return true;
        }
      }
      return false;
    };
    if (!try_match(kThree) && !try_match(kEllipsis) && !try_match(kTwo)) {
      if (kOne.find(src_[pos_]) == std::string_view::npos || src_[pos_] == '!') {
        throw SyntaxError(pos_, std::string("unexpected character '") + src_[pos_] + "'");
      }
      ++pos_;
    }
    std::string_view text = src_.substr(b, pos_ - b);
    if (text == "(" || text == "[" || text == "{") {
      brackets_.emplace_back(text[0], b);
    } else if (text == ")" || text == "]" || text == "}") {
      const char open = text == ")" ? '(' : text == "]" ? '[' : '{';
      if (brackets_.empty() || brackets_.back().first != open) {
        throw SyntaxError(b, "unmatched '" + std::string(text) + "'");
      }
      brackets_.pop_back();
    }
    emit(Tok::kOp, b, pos_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  bool at_line_start_ = true;
  std::vector<std::size_t> indents_{0};
  std::vector<std::pair<char, std::size_t>> brackets_;
  std::vector<Token> tokens_;
};

struct Span {
  std::size_t b;
  std::size_t e;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Module run() {
    while (cur().type != Tok::kEnd) {
      if (cur().type == Tok::kNewline) {
        take();
        continue;
      }
      statement();
    }
    return std::move(module_);
  }

 private:
  // ---- token helpers ----
  const Token& cur() const { return toks_[i_]; }
  const Token& ahead(std::size_t k) const { return toks_[std::min(i_ + k, toks_.size() - 1)]; }
  bool is_op(std::string_view s) const { return cur().type == Tok::kOp && cur().text == s; }
  bool is_kw(std::string_view s) const { return cur().type == Tok::kName && cur().text == s; }
  bool is_type(Tok t) const { return cur().type == t; }

  const Token& take() {
    const Token& t = toks_[i_];
    last_end_ = t.end;
    if (i_ + 1 < toks_.size()) ++i_;
    return t;
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::string got = cur().type == Tok::kNewline  ? "newline"
                      : cur().type == Tok::kIndent ? "indent"
                      : cur().type == Tok::kDedent ? "dedent"
                      : cur().type == Tok::kEnd    ? "end of input"
                                                   : "'" + std::string(cur().text) + "'";
    throw SyntaxError(cur().begin, what + ", got " + got);
  }

  void expect_op(std::string_view s) {
    if (!is_op(s)) fail("expected '" + std::string(s) + "'");
    take();
  }
  void expect_kw(std::string_view s) {
    if (!is_kw(s)) fail("expected '" + std::string(s) + "'");
    take();
  }
  void expect_name() {
    if (cur().type != Tok::kName || is_keyword(cur().text)) fail("expected identifier");
    take();
  }
  void expect(Tok t, const char* what) {
    if (cur().type != t) fail(std::string("expected ") + what);
    take();
  }

  void add(NodeKind kind, std::size_t b, std::size_t e) { module_.nodes.push_back({kind, b, e}); }

  bool starts_expression() const {
    const Token& t = cur();
    switch (t.type) {
      case Tok::kNumber:
      case Tok::kString:
        return true;
      case Tok::kName:
        return !is_keyword(t.text) || t.text == "True" || t.text == "False" ||
               t.text == "None" || t.text == "lambda" || t.text == "not" || t.text == "await" ||
               t.text == "yield";
      case Tok::kOp:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" ||
               t.text == "+" || t.text == "~" || t.text == "..." || t.text == "*" ||
               t.text == "**";
      default:
        return false;
    }
  }

  // ---- statements ----
  void statement() {
    const std::size_t b = cur().begin;
    if (is_op("@")) {
      while (is_op("@")) {
        take();
        namedexpr_test();
        expect(Tok::kNewline, "newline after decorator");
      }
      if (is_kw("async")) take();
      if (is_kw("def")) return funcdef(b);
      if (is_kw("class")) return classdef(b);
      fail("expected def or class after decorator");
    }
    if (is_kw("async")) {
      take();
      if (is_kw("def")) return funcdef(b);
      if (is_kw("for")) return for_stmt(b);
      if (is_kw("with")) return with_stmt(b);
      fail("expected def, for or with after async");
    }
    if (is_kw("def")) return funcdef(b);
    if (is_kw("class")) return classdef(b);
    if (is_kw("if")) return if_stmt(b);
    if (is_kw("while")) return while_stmt(b);
    if (is_kw("for")) return for_stmt(b);
    if (is_kw("try")) return try_stmt(b);
    if (is_kw("with")) return with_stmt(b);
    if (is_kw("elif") || is_kw("else") || is_kw("except") || is_kw("finally")) {
      fail("clause without a matching statement");
    }
    if (is_type(Tok::kIndent)) fail("unexpected indent");
    simple_stmt();
  }

  void clause(NodeKind kind, std::size_t b) {
    expect_op(":");
    add(kind, b, last_end_);
    suite();
  }

  void suite() {
    if (is_type(Tok::kNewline)) {
      take();
      expect(Tok::kIndent, "an indented block");
      do {
        statement();
      } while (!is_type(Tok::kDedent) && !is_type(Tok::kEnd));
      expect(Tok::kDedent, "dedent");
    } else {
      simple_stmt();
    }
  }

  void funcdef(std::size_t b) {
    expect_kw("def");
    expect_name();
    expect_op("(");
    parameters(")", true);
    expect_op(")");
    if (is_op("->")) {
      take();
      test();
    }
    clause(NodeKind::kFunctionDef, b);
  }

  // Parameter list up to (not including) the closing token.
  void parameters(std::string_view close, bool annotations) {
    while (!is_op(close)) {
      if (is_op("/")) {
        take();
      } else if (is_op("*") || is_op("**")) {
        take();
        if (cur().type == Tok::kName) {
          expect_name();
          if (annotations && is_op(":")) {
            take();
            test();
          }
        }
      } else {
        expect_name();
        if (annotations && is_op(":")) {
          take();
          test();
        }
        if (is_op("=")) {
          take();
          test();
        }
      }
      if (!is_op(",")) break;
      take();
    }
  }

  void classdef(std::size_t b) {
    expect_kw("class");
    expect_name();
    if (is_op("(")) {
      take();
      arglist(")");
      expect_op(")");
    }
    clause(NodeKind::kClassDef, b);
  }

  void if_stmt(std::size_t b) {
    expect_kw("if");
    namedexpr_test();
    clause(NodeKind::kIf, b);
    while (is_kw("elif")) {
      std::size_t cb = cur().begin;
      take();
      namedexpr_test();
      clause(NodeKind::kIf, cb);
    }
    else_clause(NodeKind::kIf);
  }

  void else_clause(NodeKind kind) {
    if (is_kw("else")) {
      std::size_t cb = cur().begin;
      take();
      clause(kind, cb);
    }
  }

  void while_stmt(std::size_t b) {
    expect_kw("while");
    namedexpr_test();
    clause(NodeKind::kWhile, b);
    else_clause(NodeKind::kWhile);
  }

  void for_stmt(std::size_t b) {
    expect_kw("for");
    exprlist();
    expect_kw("in");
    testlist_star_expr();
    clause(NodeKind::kFor, b);
    else_clause(NodeKind::kFor);
  }

  void try_stmt(std::size_t b) {
    expect_kw("try");
    clause(NodeKind::kTry, b);
    int handlers = 0;
    while (is_kw("except")) {
      std::size_t cb = cur().begin;
      take();
      if (is_op("*")) take();
      if (!is_op(":")) {
        test();
        if (is_kw("as")) {
          take();
          expect_name();
        }
      }
      clause(NodeKind::kTry, cb);
      ++handlers;
    }
    if (handlers > 0) else_clause(NodeKind::kTry);
    if (is_kw("finally")) {
      std::size_t cb = cur().begin;
      take();
      clause(NodeKind::kTry, cb);
    } else if (handlers == 0) {
      fail("expected except or finally");
    }
  }

  void with_stmt(std::size_t b) {
    expect_kw("with");
    for (;;) {
      test();
      if (is_kw("as")) {
        take();
        binary(0);
      }
      if (!is_op(",")) break;
      take();
    }
    clause(NodeKind::kWith, b);
  }

  void simple_stmt() {
    small_stmt();
    while (is_op(";")) {
      take();
      if (is_type(Tok::kNewline)) break;
      small_stmt();
    }
    expect(Tok::kNewline, "end of statement");
  }

  void dotted_name() {
    expect_name();
    while (is_op(".")) {
      take();
      expect_name();
    }
  }

  void small_stmt() {
    const std::size_t b = cur().begin;
    if (is_kw("pass") || is_kw("break") || is_kw("continue")) {
      NodeKind kind = is_kw("pass") ? NodeKind::kPass
                      : is_kw("break") ? NodeKind::kBreak
                                       : NodeKind::kContinue;
      take();
      add(kind, b, last_end_);
    } else if (is_kw("return")) {
      take();
      if (starts_expression()) testlist_star_expr();
      add(NodeKind::kReturn, b, last_end_);
    } else if (is_kw("raise")) {
      take();
      if (starts_expression()) {
        test();
        if (is_kw("from")) {
          take();
          test();
        }
      }
      add(NodeKind::kRaise, b, last_end_);
    } else if (is_kw("global") || is_kw("nonlocal")) {
      take();
      expect_name();
      while (is_op(",")) {
        take();
        expect_name();
      }
      add(NodeKind::kGlobal, b, last_end_);
    } else if (is_kw("del")) {
      take();
      exprlist();
      add(NodeKind::kDelete, b, last_end_);
    } else if (is_kw("assert")) {
      take();
      test();
      if (is_op(",")) {
        take();
        test();
      }
      add(NodeKind::kAssert, b, last_end_);
    } else if (is_kw("import")) {
      take();
      for (;;) {
        dotted_name();
        if (is_kw("as")) {
          take();
          expect_name();
        }
        if (!is_op(",")) break;
        take();
      }
      add(NodeKind::kImport, b, last_end_);
    } else if (is_kw("from")) {
      take();
      bool relative = false;
      while (is_op(".") || is_op("...")) {
        take();
        relative = true;
      }
      if (!is_kw("import")) {
        dotted_name();
      } else if (!relative) {
        fail("expected module name");
      }
      expect_kw("import");
      if (is_op("*")) {
        take();
      } else {
        bool paren = is_op("(");
        if (paren) take();
        for (;;) {
          expect_name();
          if (is_kw("as")) {
            take();
            expect_name();
          }
          if (!is_op(",")) break;
          take();
          if (paren && is_op(")")) break;
        }
        if (paren) expect_op(")");
      }
      add(NodeKind::kImport, b, last_end_);
    } else if (is_kw("yield")) {
      yield_expr();
      add(NodeKind::kExpr, b, last_end_);
    } else {
      expr_stmt(b);
    }
  }

  static bool is_augassign(const Token& t) {
    static constexpr std::array<std::string_view, 13> kOps = {
        "+=", "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=", "<<=", "**="};
    return t.type == Tok::kOp && std::find(kOps.begin(), kOps.end(), t.text) != kOps.end();
  }

  void rhs() {
    if (is_kw("yield")) {
      yield_expr();
    } else {
      testlist_star_expr();
    }
  }

  void expr_stmt(std::size_t b) {
    if (!starts_expression()) fail("expected statement");
    testlist_star_expr();
    if (is_op(":")) {
      take();
      test();
      if (is_op("=")) {
        take();
        rhs();
      }
      add(NodeKind::kAnnAssign, b, last_end_);
    } else if (is_augassign(cur())) {
      take();
      rhs();
      add(NodeKind::kAugAssign, b, last_end_);
    } else if (is_op("=")) {
      while (is_op("=")) {
        take();
        rhs();
      }
      add(NodeKind::kAssign, b, last_end_);
    } else {
      add(NodeKind::kExpr, b, last_end_);
    }
  }

  // ---- expressions ----
  Span yield_expr() {
    std::size_t b = cur().begin;
    expect_kw("yield");
    if (is_kw("from")) {
      take();
      test();
    } else if (starts_expression()) {
      testlist_star_expr();
    }
    return {b, last_end_};
  }

  Span star_or_test() {
    if (is_op("*")) {
      std::size_t b = cur().begin;
      take();
      binary(0);
      return {b, last_end_};
    }
    return test();
  }

  Span testlist_star_expr() {
    Span s = star_or_test();
    while (is_op(",")) {
      take();
      if (!starts_expression() || is_kw("yield")) break;
      s.e = star_or_test().e;
    }
    return {s.b, last_end_};
  }

  Span exprlist() {
    std::size_t b = cur().begin;
    for (;;) {
      if (is_op("*")) take();
      binary(0);
      if (!is_op(",")) break;
      take();
      if (!starts_expression()) break;
    }
    return {b, last_end_};
  }

  Span namedexpr_test() {
    Span s = test();
    if (is_op(":=")) {
      take();
      s.e = test().e;
    }
    return s;
  }

  Span test() {
    if (is_kw("lambda")) return lambdef();
    Span s = or_test();
    if (is_kw("if")) {
      take();
      or_test();
      expect_kw("else");
      s.e = test().e;
    }
    return s;
  }

  Span lambdef() {
    std::size_t b = cur().begin;
    expect_kw("lambda");
    parameters(":", false);
    expect_op(":");
    test();
    return {b, last_end_};
  }

  Span or_test() { return bool_chain("or", &Parser::and_test); }
  Span and_test() { return bool_chain("and", &Parser::not_test); }

  Span bool_chain(std::string_view kw, Span (Parser::*next)()) {
    Span s = (this->*next)();
    if (!is_kw(kw)) return s;
    while (is_kw(kw)) {
      take();
      s.e = (this->*next)().e;
    }
    add(NodeKind::kBoolOp, s.b, s.e);
    return s;
  }

  Span not_test() {
    if (is_kw("not")) {
      std::size_t b = cur().begin;
      take();
      return {b, not_test().e};
    }
    return comparison();
  }

  bool at_comp_op() const {
    if (cur().type == Tok::kOp) {
      auto t = cur().text;
      return t == "<" || t == ">" || t == "==" || t == ">=" || t == "<=" || t == "!=" ||
             t == "<>";
    }
    if (is_kw("in") || is_kw("is")) return true;
    return is_kw("not") && ahead(1).type == Tok::kName && ahead(1).text == "in";
  }

  Span comparison() {
    Span s = binary(0);
    if (!at_comp_op()) return s;
    while (at_comp_op()) {
      if (is_kw("not")) take();
      bool is = is_kw("is");
      take();
      if (is && is_kw("not")) take();
      s.e = binary(0).e;
    }
    add(NodeKind::kCompare, s.b, s.e);
    return s;
  }

  bool at_level_op(int level) const {
    if (cur().type != Tok::kOp) return false;
    auto t = cur().text;
    switch (level) {
      case 0: return t == "|";
      case 1: return t == "^";
      case 2: return t == "&";
      case 3: return t == "<<" || t == ">>";
      case 4: return t == "+" || t == "-";
      case 5: return t == "*" || t == "/" || t == "//" || t == "%" || t == "@";
      default: return false;
    }
  }

  Span binary(int level) {
    if (level == 6) return factor();
    Span s = binary(level + 1);
    while (at_level_op(level)) {
      take();
      s.e = binary(level + 1).e;
      add(NodeKind::kBinOp, s.b, s.e);
    }
    return s;
  }

  Span factor() {
    if (is_op("+") || is_op("-") || is_op("~")) {
      std::size_t b = cur().begin;
      take();
      return {b, factor().e};
    }
    return power();
  }

  Span power() {
    std::size_t b = cur().begin;
    if (is_kw("await")) take();
    primary();
    Span s{b, last_end_};
    if (is_op("**")) {
      take();
      s.e = factor().e;
      add(NodeKind::kBinOp, s.b, s.e);
    }
    return s;
  }

  void primary() {
    atom();
    for (;;) {
      if (is_op("(")) {
        take();
        arglist(")");
        expect_op(")");
      } else if (is_op("[")) {
        take();
        subscriptlist();
        expect_op("]");
      } else if (is_op(".")) {
        take();
        if (cur().type != Tok::kName) fail("expected attribute name");
        take();
      } else {
        break;
      }
    }
  }

  bool at_comp_for() const {
    return is_kw("for") || (is_kw("async") && ahead(1).type == Tok::kName && ahead(1).text == "for");
  }

  void comp_for() {
    while (at_comp_for()) {
      if (is_kw("async")) take();
      expect_kw("for");
      exprlist();
      expect_kw("in");
      or_test();
      while (is_kw("if")) {
        take();
        or_test();
      }
    }
  }

  Span star_or_namedexpr() {
    if (is_op("*")) {
      std::size_t b = cur().begin;
      take();
      binary(0);
      return {b, last_end_};
    }
    return namedexpr_test();
  }

  // Items of a parenthesized or bracketed display, up to the closing token.
  void display(std::string_view close) {
    if (is_op(close)) return;
    star_or_namedexpr();
    if (at_comp_for()) {
      comp_for();
      return;
    }
    while (is_op(",")) {
      take();
      if (is_op(close)) break;
      star_or_namedexpr();
    }
  }

  void dict_or_set() {
    if (is_op("}")) return;
    auto item = [this] {
      if (is_op("**")) {
        take();
        binary(0);
        return;
      }
      star_or_namedexpr();
      if (is_op(":")) {
        take();
        test();
      }
    };
    item();
    if (at_comp_for()) {
      comp_for();
      return;
    }
    while (is_op(",")) {
      take();
      if (is_op("}")) break;
      item();
    }
  }

  void arglist(std::string_view close) {
    while (!is_op(close)) {
      if (is_op("*") || is_op("**")) {
        take();
        test();
      } else {
        test();
        if (is_op(":=")) {
          take();
          test();
        } else if (is_op("=")) {
          take();
          test();
        } else if (at_comp_for()) {
          comp_for();
        }
      }
      if (!is_op(",")) break;
      take();
    }
  }

  void subscriptlist() {
    for (;;) {
      if (is_op("*")) {
        take();
        binary(0);
      } else {
        if (!is_op(":")) namedexpr_test();
        if (is_op(":")) {
          take();
          if (!is_op(":") && !is_op(",") && !is_op("]")) test();
          if (is_op(":")) {
            take();
            if (!is_op(",") && !is_op("]")) test();
          }
        }
      }
      if (!is_op(",")) break;
      take();
      if (is_op("]")) break;
    }
  }

  void atom() {
    const Token& t = cur();
    switch (t.type) {
      case Tok::kNumber:
        take();
        return;
      case Tok::kString:
        while (is_type(Tok::kString)) take();
        return;
      case Tok::kName:
        if (is_keyword(t.text) && t.text != "True" && t.text != "False" && t.text != "None") {
          fail("expected expression");
        }
        take();
        return;
      case Tok::kOp:
        if (t.text == "(") {
          take();
          if (is_kw("yield")) {
            yield_expr();
          } else {
            display(")");
          }
          expect_op(")");
          return;
        }
        if (t.text == "[") {
          take();
          display("]");
          expect_op("]");
          return;
        }
        if (t.text == "{") {
          take();
          dict_or_set();
          expect_op("}");
          return;
        }
        if (t.text == "...") {
          take();
          return;
        }
        break;
      default:
        break;
    }
    fail("expected expression");
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  std::size_t last_end_ = 0;
  Module module_;
};

}  // namespace

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kFunctionDef: return "FunctionDef";
    case NodeKind::kClassDef: return "ClassDef";
    case NodeKind::kIf: return "If";
    case NodeKind::kFor: return "For";
    case NodeKind::kWhile: return "While";
    case NodeKind::kWith: return "With";
    case NodeKind::kTry: return "Try";
    case NodeKind::kReturn: return "Return";
    case NodeKind::kAssign: return "Assign";
    case NodeKind::kAugAssign: return "AugAssign";
    case NodeKind::kAnnAssign: return "AnnAssign";
    case NodeKind::kExpr: return "Expr";
    case NodeKind::kImport: return "Import";
    case NodeKind::kRaise: return "Raise";
    case NodeKind::kAssert: return "Assert";
    case NodeKind::kPass: return "Pass";
    case NodeKind::kBreak: return "Break";
    case NodeKind::kContinue: return "Continue";
    case NodeKind::kDelete: return "Delete";
    case NodeKind::kGlobal: return "Global";
    case NodeKind::kBinOp: return "BinOp";
    case NodeKind::kBoolOp: return "BoolOp";
    case NodeKind::kCompare: return "Compare";
  }
  return "Unknown";
}

bool is_statement(NodeKind kind) {
  return kind != NodeKind::kBinOp && kind != NodeKind::kBoolOp && kind != NodeKind::kCompare;
}

Module parse(std::string_view source) {
  Tokenizer tokenizer(source);
  Parser parser(tokenizer.run());
  return parser.run();
}

bool is_valid(std::string_view source, std::string* message) {
  try {
    parse(source);
    return true;
  } catch (const SyntaxError& e) {
    if (message) *message = e.what();
    return false;
  }
}

}  // namespace ta::py
