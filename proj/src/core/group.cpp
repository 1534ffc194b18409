#include "lego/core/group.hpp"

#include <algorithm>

#include "lego/core/error.hpp"

namespace lego::core {

std::string_view to_string(GroupKind kind) {
  return kind == GroupKind::Z2 ? "z2" : "d3";
}

GroupKind parse_group_kind(std::string_view text) {
  if (text == "z2" || text == "Z2") {
    return GroupKind::Z2;
  }
  if (text == "d3" || text == "D3") {
    return GroupKind::D3;
  }
  throw Error("unknown group '" + std::string(text) + "' (expected z2 or d3)");
}

GroupSpec::GroupSpec(GroupKind kind, std::vector<std::string> elements,
                     std::vector<std::string> values, std::vector<int> table, int root,
                     int identity)
    : kind_(kind),
      elements_(std::move(elements)),
      values_(std::move(values)),
      table_(std::move(table)),
      root_(root),
      identity_(identity) {}

GroupSpec GroupSpec::z2() {
  // + keeps the sign, - flips it.
  return GroupSpec(GroupKind::Z2, {"+", "-"}, {"1", "-1"}, {0, 1, 1, 0}, 0, 0);
}

GroupSpec GroupSpec::d3() {
  // Index i < 3 is the rotation r_i, index 3 + i is the reflection s_i = r^i s.
  //   r_i r_j = r_{i+j}   r_i s_j = s_{i+j}   s_i r_j = s_{i-j}   s_i s_j = r_{i-j}
  std::vector<int> table(36);
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) {
      const int i = a % 3;
      const int j = b % 3;
      const bool a_refl = a >= 3;
      const bool b_refl = b >= 3;
      const int k = a_refl ? ((i - j) % 3 + 3) % 3 : (i + j) % 3;
      const bool refl = a_refl != b_refl;
      table[a * 6 + b] = (refl ? 3 : 0) + k;
    }
  }
  std::vector<std::string> names{"r0", "r1", "r2", "s0", "s1", "s2"};
  return GroupSpec(GroupKind::D3, names, names, std::move(table), 0, 0);
}

GroupSpec GroupSpec::make(GroupKind kind) {
  return kind == GroupKind::Z2 ? z2() : d3();
}

int GroupSpec::apply(int g, int x) const {
  if (g < 0 || g >= group_size() || x < 0 || x >= set_size()) {
    throw Error("apply_group: unknown element");
  }
  return table_[static_cast<std::size_t>(g * set_size() + x)];
}

std::string_view GroupSpec::apply(std::string_view g, std::string_view x) const {
  return values_[static_cast<std::size_t>(apply(element_index(g), value_index(x)))];
}

int GroupSpec::element_mapping(int from, int to) const {
  int found = -1;
  for (int g = 0; g < group_size(); ++g) {
    if (apply(g, from) == to) {
      if (found >= 0) {
        throw Error("group action is not regular: element choice is ambiguous");
      }
      found = g;
    }
  }
  if (found < 0) {
    throw Error("no group element maps the requested values");
  }
  return found;
}

int GroupSpec::element_index(std::string_view symbol) const {
  const auto it = std::find(elements_.begin(), elements_.end(), symbol);
  if (it == elements_.end()) {
    throw Error("unknown group element '" + std::string(symbol) + "'");
  }
  return static_cast<int>(it - elements_.begin());
}

int GroupSpec::value_index(std::string_view label) const {
  const auto it = std::find(values_.begin(), values_.end(), label);
  if (it == values_.end()) {
    throw Error("unknown set element '" + std::string(label) + "'");
  }
  return static_cast<int>(it - values_.begin());
}

bool GroupSpec::is_element(std::string_view symbol) const {
  return std::find(elements_.begin(), elements_.end(), symbol) != elements_.end();
}

bool GroupSpec::is_value(std::string_view label) const {
  return std::find(values_.begin(), values_.end(), label) != values_.end();
}

}  // namespace lego::core
