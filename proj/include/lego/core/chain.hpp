#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lego/core/group.hpp"
#include "lego/core/random.hpp"

namespace lego::core {

inline constexpr int kAlphabetSize = 26;

/// One clause `lhs = op rhs`. An empty rhs means the root constant.
struct Clause {
  char lhs = 'a';
  int op = 0;
  std::optional<char> rhs;

  bool rhs_is_root() const { return !rhs.has_value(); }
  friend bool operator==(const Clause&, const Clause&) = default;
};

/// A single line-graph chain rooted at the group's root value.
///
/// `clauses` and `assignments` are in chain order (position 0 is adjacent to
/// the root). `sentence_order[k]` is the chain position of the k-th clause in
/// the rendered sentence.
struct Chain {
  GroupKind group = GroupKind::Z2;
  std::vector<Clause> clauses;
  std::vector<int> assignments;
  std::vector<int> sentence_order;

  int size() const { return static_cast<int>(clauses.size()); }
  /// Variable symbols in chain order.
  std::vector<char> variables() const;

  friend bool operator==(const Chain&, const Chain&) = default;
};

/// Samples a chain of n clauses: distinct variables, uniform labels, the
/// group elements forced by consecutive labels, and a uniform surface order.
Chain sample_chain(int n, const GroupSpec& group, Rng& rng);

/// Recomputes y_i = g_i(y_{i-1}) from the root, ignoring stored assignments.
/// Throws if the clause list is not a valid chain.
std::vector<int> resolve_chain(const Chain& chain);

/// Checks every structural Chain invariant, including stored assignments.
void validate_chain(const Chain& chain);

/// Value of the last chain variable from the parity of minus signs (Z2 only).
int shortcut_last_parity(const Chain& chain);

/// Number of distinct rendered sentences with n clauses over `group`
/// (saturates at the largest finite double).
double sentence_capacity(int n, const GroupSpec& group);

}  // namespace lego::core
