#pragma once

#include <string>
#include <string_view>

#include "lego/core/chain.hpp"
#include "lego/core/error.hpp"

namespace lego::core {

enum class ParseErrorCode {
  Malformed,
  UnknownSymbol,
  DuplicateLhs,
  MissingRoot,
  MultipleRoots,
  Branching,
  DanglingReference,
  Cycle,
};

std::string_view to_string(ParseErrorCode code);

class ParseError : public Error {
 public:
  ParseError(ParseErrorCode code, const std::string& detail);
  ParseErrorCode code() const { return code_; }

 private:
  ParseErrorCode code_;
};

/// "[BOS] a=+1; b=-a; [EOS]" with clauses in sentence order. The group
/// element is always written, so every clause is exactly five symbols.
std::string render_sentence(const Chain& chain);

/// Inverse of render_sentence. [BOS]/[EOS] are optional; whitespace between
/// symbols is ignored. Chain order is recovered by following the root.
Chain parse_sentence(std::string_view text, const GroupSpec& group);

}  // namespace lego::core
