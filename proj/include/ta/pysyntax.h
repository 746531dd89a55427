#pragma once

// A statement-oriented Python subset: tokenizer plus recursive-descent parser
// that records the byte spans of statements and of the binary/boolean/compare
// expressions inside them. It validates structure (indentation, brackets,
// statement forms) and is not a full Python implementation: no match
// statements, no type-parameter syntax, f-string bodies are opaque.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ta/error.h"

namespace ta::py {

enum class NodeKind {
  // statements
  kFunctionDef,
  kClassDef,
  kIf,
  kFor,
  kWhile,
  kWith,
  kTry,
  kReturn,
  kAssign,
  kAugAssign,
  kAnnAssign,
  kExpr,
  kImport,
  kRaise,
  kAssert,
  kPass,
  kBreak,
  kContinue,
  kDelete,
  kGlobal,
  // expressions
  kBinOp,
  kBoolOp,
  kCompare,
};

std::string_view to_string(NodeKind kind);
bool is_statement(NodeKind kind);

// For simple statements the span covers the whole statement. For compound
// statements it covers one clause header, from the keyword (or first
// decorator) through the colon; bodies are separate nodes.
struct Node {
  NodeKind kind;
  std::size_t begin;
  std::size_t end;
};

struct Module {
  std::vector<Node> nodes;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& message)
      : Error(ErrorCode::kMalformedInput,
              "syntax error at byte " + std::to_string(offset) + ": " + message),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Throws SyntaxError.
Module parse(std::string_view source);

// Non-throwing check; fills *message on failure when given.
bool is_valid(std::string_view source, std::string* message = nullptr);

}  // namespace ta::py
