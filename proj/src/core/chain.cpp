#include "lego/core/chain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "lego/core/error.hpp"

namespace lego::core {

std::vector<char> Chain::variables() const {
  std::vector<char> out;
  out.reserve(clauses.size());
  for (const auto& c : clauses) {
    out.push_back(c.lhs);
  }
  return out;
}

Chain sample_chain(int n, const GroupSpec& group, Rng& rng) {
  if (n <= 0) {
    throw Error("empty chain");
  }
  if (n > kAlphabetSize) {
    throw Error("alphabet exhausted: " + std::to_string(n) + " variables requested");
  }
  std::array<char, kAlphabetSize> letters{};
  std::iota(letters.begin(), letters.end(), 'a');
  shuffle(std::span<char>(letters), rng);

  Chain chain;
  chain.group = group.kind();
  chain.clauses.reserve(static_cast<std::size_t>(n));
  chain.assignments.reserve(static_cast<std::size_t>(n));
  int previous = group.root();
  for (int i = 0; i < n; ++i) {
    const int label = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(group.set_size())));
    Clause clause;
    clause.lhs = letters[static_cast<std::size_t>(i)];
    clause.op = group.element_mapping(previous, label);
    if (i > 0) {
      clause.rhs = letters[static_cast<std::size_t>(i - 1)];
    }
    chain.clauses.push_back(clause);
    chain.assignments.push_back(label);
    previous = label;
  }
  chain.sentence_order.resize(static_cast<std::size_t>(n));
  std::iota(chain.sentence_order.begin(), chain.sentence_order.end(), 0);
  shuffle(std::span<int>(chain.sentence_order), rng);
  return chain;
}

std::vector<int> resolve_chain(const Chain& chain) {
  const GroupSpec group = GroupSpec::make(chain.group);
  std::array<bool, 256> seen{};
  std::vector<int> values;
  values.reserve(chain.clauses.size());
  int current = group.root();
  for (std::size_t i = 0; i < chain.clauses.size(); ++i) {
    const Clause& c = chain.clauses[i];
    if (c.lhs < 'a' || c.lhs > 'z') {
      throw Error("inconsistent chain: variable outside the alphabet");
    }
    if (seen[static_cast<unsigned char>(c.lhs)]) {
      throw Error("inconsistent chain: variable assigned twice");
    }
    seen[static_cast<unsigned char>(c.lhs)] = true;
    const bool expect_root = i == 0;
    if (expect_root != c.rhs_is_root() ||
        (!expect_root && *c.rhs != chain.clauses[i - 1].lhs)) {
      throw Error("inconsistent chain: clause " + std::to_string(i) +
                  " does not continue from its predecessor");
    }
    current = group.apply(c.op, current);
    values.push_back(current);
  }
  return values;
}

void validate_chain(const Chain& chain) {
  if (chain.clauses.empty()) {
    throw Error("empty chain");
  }
  const auto values = resolve_chain(chain);
  if (values != chain.assignments) {
    throw Error("inconsistent chain: stored assignments disagree with the clauses");
  }
  std::vector<int> order = chain.sentence_order;
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] != static_cast<int>(i)) {
      throw Error("inconsistent chain: sentence order is not a permutation");
    }
  }
  if (order.size() != chain.clauses.size()) {
    throw Error("inconsistent chain: sentence order has the wrong length");
  }
}

int shortcut_last_parity(const Chain& chain) {
  if (chain.group != GroupKind::Z2) {
    throw Error("parity shortcut undefined for non-abelian task");
  }
  const GroupSpec group = GroupSpec::z2();
  const int minus = group.element_index("-");
  int count = 0;
  for (const auto& c : chain.clauses) {
    count += c.op == minus ? 1 : 0;
  }
  return count % 2 == 0 ? group.value_index("1") : group.value_index("-1");
}

double sentence_capacity(int n, const GroupSpec& group) {
  if (n <= 0 || n > kAlphabetSize) {
    return 0.0;
  }
  // Ordered variable choice, labels, and surface order.
  double total = 1.0;
  for (int i = 0; i < n; ++i) {
    total *= static_cast<double>(kAlphabetSize - i);
    total *= static_cast<double>(group.set_size());
    total *= static_cast<double>(i + 1);
  }
  return std::isfinite(total) ? total : std::numeric_limits<double>::max();
}

}  // namespace lego::core
