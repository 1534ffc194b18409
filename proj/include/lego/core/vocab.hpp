#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lego/core/chain.hpp"
#include "lego/core/group.hpp"

namespace lego::core {

/// Dense symbol <-> id map for one group.
///
/// Layout: [PAD] [BOS] [EOS] [CLS] [SEP] = ; <group elements> <root, if not
/// already a group element> a..z. Ids depend only on the group.
class Vocab {
 public:
  explicit Vocab(GroupSpec group);

  int size() const { return static_cast<int>(symbols_.size()); }
  int id(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;
  const std::string& symbol(int id) const;

  int pad() const { return pad_; }
  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int cls() const { return cls_; }
  int sep() const { return sep_; }

  const GroupSpec& group() const { return group_; }

 private:
  GroupSpec group_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
  int pad_, bos_, eos_, cls_, sep_;
};

/// Token ids of one sentence with chain-ordered anchors and labels.
struct TokenSequence {
  std::vector<int> ids;             // 5n + 2 ids
  std::vector<int> clause_anchors;  // position of each clause's lhs, chain order
  std::vector<int> labels;          // set-element index per chain position
  int n_tr = 0;

  int n() const { return static_cast<int>(labels.size()); }
};

inline constexpr int sequence_length(int n) { return 5 * n + 2; }

/// Tokenizes a chain in its surface order.
TokenSequence tokenize(const Chain& chain, const Vocab& vocab, int n_tr);
/// Parses `text` with the vocabulary's group, then tokenizes it.
TokenSequence tokenize(std::string_view text, const Vocab& vocab, int n_tr);

}  // namespace lego::core
