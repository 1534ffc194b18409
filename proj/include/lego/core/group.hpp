#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lego::core {

enum class GroupKind { Z2, D3 };

std::string_view to_string(GroupKind kind);
GroupKind parse_group_kind(std::string_view text);

/// A finite group acting on a finite set, stored as a dense action table.
///
/// Group elements and set elements are addressed by index. For Z2 the group
/// is {+, -} acting on {1, -1}; for D3 the group acts on itself by left
/// multiplication, with rotations r0,r1,r2 and reflections s0,s1,s2.
class GroupSpec {
 public:
  static GroupSpec z2();
  static GroupSpec d3();
  static GroupSpec make(GroupKind kind);

  GroupKind kind() const { return kind_; }
  int group_size() const { return static_cast<int>(elements_.size()); }
  int set_size() const { return static_cast<int>(values_.size()); }

  const std::vector<std::string>& elements() const { return elements_; }
  const std::vector<std::string>& values() const { return values_; }

  /// The set element every chain is rooted at.
  int root() const { return root_; }
  /// The group element acting as the identity.
  int identity() const { return identity_; }

  /// g(x) by table lookup; throws on an index outside the table.
  int apply(int g, int x) const;
  /// String form of apply; throws on unknown symbols.
  std::string_view apply(std::string_view g, std::string_view x) const;

  /// The unique g with g(from) == to; requires a regular action.
  int element_mapping(int from, int to) const;

  int element_index(std::string_view symbol) const;
  int value_index(std::string_view label) const;
  bool is_element(std::string_view symbol) const;
  bool is_value(std::string_view label) const;

 private:
  GroupSpec(GroupKind kind, std::vector<std::string> elements, std::vector<std::string> values,
            std::vector<int> table, int root, int identity);

  GroupKind kind_;
  std::vector<std::string> elements_;
  std::vector<std::string> values_;
  std::vector<int> table_;  // row-major [group_size][set_size]
  int root_;
  int identity_;
};

}  // namespace lego::core
