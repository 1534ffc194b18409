#include "lego/core/sentence.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <vector>

namespace lego::core {

std::string_view to_string(ParseErrorCode code) {
  switch (code) {
    case ParseErrorCode::Malformed: return "malformed sentence";
    case ParseErrorCode::UnknownSymbol: return "unknown symbol";
    case ParseErrorCode::DuplicateLhs: return "duplicate lhs";
    case ParseErrorCode::MissingRoot: return "missing root";
    case ParseErrorCode::MultipleRoots: return "multiple roots";
    case ParseErrorCode::Branching: return "branching chain";
    case ParseErrorCode::DanglingReference: return "dangling reference";
    case ParseErrorCode::Cycle: return "cycle";
  }
  return "parse error";
}

ParseError::ParseError(ParseErrorCode code, const std::string& detail)
    : Error(std::string(to_string(code)) + ": " + detail), code_(code) {}

std::string render_sentence(const Chain& chain) {
  const GroupSpec group = GroupSpec::make(chain.group);
  std::string out = "[BOS]";
  for (const int pos : chain.sentence_order) {
    const Clause& c = chain.clauses.at(static_cast<std::size_t>(pos));
    out += ' ';
    out += c.lhs;
    out += '=';
    out += group.elements()[static_cast<std::size_t>(c.op)];
    if (c.rhs_is_root()) {
      out += group.values()[static_cast<std::size_t>(group.root())];
    } else {
      out += *c.rhs;
    }
    out += ';';
  }
  out += " [EOS]";
  return out;
}

namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }
  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }
  bool consume(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }
  bool at(std::string_view token) {
    skip_space();
    return text_.substr(pos_, token.size()) == token;
  }
  std::optional<char> letter() {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] >= 'a' && text_[pos_] <= 'z') {
      return text_[pos_++];
    }
    return std::nullopt;
  }
  std::string rest_preview() const {
    return std::string(text_.substr(pos_, 12));
  }
  std::size_t position() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string where(const Cursor& cur) {
  return "at offset " + std::to_string(cur.position()) + " ('" + cur.rest_preview() + "')";
}

}  // namespace

Chain parse_sentence(std::string_view text, const GroupSpec& group) {
  Cursor cur(text);
  cur.consume("[BOS]");

  // Longest element symbols first so that multi-character symbols win.
  std::vector<int> element_order(static_cast<std::size_t>(group.group_size()));
  for (int g = 0; g < group.group_size(); ++g) {
    element_order[static_cast<std::size_t>(g)] = g;
  }
  std::sort(element_order.begin(), element_order.end(), [&](int a, int b) {
    return group.elements()[static_cast<std::size_t>(a)].size() >
           group.elements()[static_cast<std::size_t>(b)].size();
  });
  const std::string& root_label = group.values()[static_cast<std::size_t>(group.root())];

  std::vector<Clause> surface;
  while (!cur.done() && !cur.at("[EOS]")) {
    Clause clause;
    const auto lhs = cur.letter();
    if (!lhs) {
      throw ParseError(ParseErrorCode::UnknownSymbol, "expected a variable " + where(cur));
    }
    clause.lhs = *lhs;
    if (!cur.consume("=")) {
      throw ParseError(ParseErrorCode::Malformed, "expected '=' " + where(cur));
    }
    int op = -1;
    for (const int g : element_order) {
      if (cur.consume(group.elements()[static_cast<std::size_t>(g)])) {
        op = g;
        break;
      }
    }
    if (op < 0) {
      throw ParseError(ParseErrorCode::UnknownSymbol, "expected a group element " + where(cur));
    }
    clause.op = op;
    if (!cur.consume(root_label)) {
      const auto rhs = cur.letter();
      if (!rhs) {
        throw ParseError(ParseErrorCode::UnknownSymbol,
                         "expected a variable or the root constant " + where(cur));
      }
      clause.rhs = *rhs;
    }
    if (!cur.consume(";")) {
      throw ParseError(ParseErrorCode::Malformed, "expected ';' " + where(cur));
    }
    surface.push_back(clause);
  }
  if (cur.consume("[EOS]") && !cur.done()) {
    throw ParseError(ParseErrorCode::Malformed, "text after [EOS] " + where(cur));
  }
  if (surface.empty()) {
    throw ParseError(ParseErrorCode::Malformed, "no clauses");
  }

  constexpr int kNone = -1;
  std::array<int, 256> defined{};
  defined.fill(kNone);
  int root_clause = kNone;
  for (std::size_t k = 0; k < surface.size(); ++k) {
    auto& slot = defined[static_cast<unsigned char>(surface[k].lhs)];
    if (slot != kNone) {
      throw ParseError(ParseErrorCode::DuplicateLhs,
                       std::string("variable '") + surface[k].lhs + "' assigned twice");
    }
    slot = static_cast<int>(k);
    if (surface[k].rhs_is_root()) {
      if (root_clause != kNone) {
        throw ParseError(ParseErrorCode::MultipleRoots, "more than one clause uses the root");
      }
      root_clause = static_cast<int>(k);
    }
  }
  if (root_clause == kNone) {
    throw ParseError(ParseErrorCode::MissingRoot, "no clause is anchored at the root constant");
  }

  Chain chain;
  chain.group = group.kind();
  chain.sentence_order.assign(surface.size(), kNone);
  int current = root_clause;
  while (current != kNone) {
    chain.sentence_order[static_cast<std::size_t>(current)] = chain.size();
    chain.clauses.push_back(surface[static_cast<std::size_t>(current)]);
    const char lhs = surface[static_cast<std::size_t>(current)].lhs;
    int next = kNone;
    for (std::size_t k = 0; k < surface.size(); ++k) {
      if (surface[k].rhs == lhs) {
        if (next != kNone) {
          throw ParseError(ParseErrorCode::Branching,
                           std::string("variable '") + lhs + "' feeds more than one clause");
        }
        next = static_cast<int>(k);
      }
    }
    current = next;
  }
  if (chain.clauses.size() != surface.size()) {
    for (const auto& c : surface) {
      if (!c.rhs_is_root() && defined[static_cast<unsigned char>(*c.rhs)] == kNone) {
        throw ParseError(ParseErrorCode::DanglingReference,
                         std::string("variable '") + *c.rhs + "' is never assigned");
      }
    }
    throw ParseError(ParseErrorCode::Cycle, "clauses unreachable from the root form a cycle");
  }
  chain.assignments = resolve_chain(chain);
  return chain;
}

}  // namespace lego::core
