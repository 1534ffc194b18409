#include "lego/core/vocab.hpp"

#include "lego/core/error.hpp"
#include "lego/core/sentence.hpp"

namespace lego::core {

Vocab::Vocab(GroupSpec group) : group_(std::move(group)) {
  const auto add = [this](const std::string& s) {
    if (ids_.contains(s)) {
      return ids_.at(s);
    }
    const int id = static_cast<int>(symbols_.size());
    symbols_.push_back(s);
    ids_.emplace(s, id);
    return id;
  };
  pad_ = add("[PAD]");
  bos_ = add("[BOS]");
  eos_ = add("[EOS]");
  cls_ = add("[CLS]");
  sep_ = add("[SEP]");
  add("=");
  add(";");
  for (const auto& e : group_.elements()) {
    add(e);
  }
  add(group_.values()[static_cast<std::size_t>(group_.root())]);
  for (char c = 'a'; c <= 'z'; ++c) {
    add(std::string(1, c));
  }
}

int Vocab::id(std::string_view symbol) const {
  const auto it = ids_.find(std::string(symbol));
  if (it == ids_.end()) {
    throw Error("out-of-vocabulary symbol '" + std::string(symbol) + "'");
  }
  return it->second;
}

bool Vocab::contains(std::string_view symbol) const {
  return ids_.contains(std::string(symbol));
}

const std::string& Vocab::symbol(int id) const {
  if (id < 0 || id >= size()) {
    throw Error("token id " + std::to_string(id) + " outside the vocabulary");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

TokenSequence tokenize(const Chain& chain, const Vocab& vocab, int n_tr) {
  const int n = chain.size();
  if (n_tr < 1 || n_tr > n) {
    throw Error("n_tr must lie in [1, n]");
  }
  if (chain.group != vocab.group().kind()) {
    throw Error("chain group does not match the vocabulary");
  }
  const GroupSpec& group = vocab.group();
  TokenSequence seq;
  seq.ids.reserve(static_cast<std::size_t>(sequence_length(n)));
  seq.clause_anchors.assign(static_cast<std::size_t>(n), 0);
  seq.ids.push_back(vocab.bos());
  for (const int pos : chain.sentence_order) {
    const Clause& c = chain.clauses.at(static_cast<std::size_t>(pos));
    seq.clause_anchors[static_cast<std::size_t>(pos)] = static_cast<int>(seq.ids.size());
    seq.ids.push_back(vocab.id(std::string(1, c.lhs)));
    seq.ids.push_back(vocab.id("="));
    seq.ids.push_back(vocab.id(group.elements()[static_cast<std::size_t>(c.op)]));
    seq.ids.push_back(c.rhs_is_root()
                          ? vocab.id(group.values()[static_cast<std::size_t>(group.root())])
                          : vocab.id(std::string(1, *c.rhs)));
    seq.ids.push_back(vocab.id(";"));
  }
  seq.ids.push_back(vocab.eos());
  seq.labels = resolve_chain(chain);
  seq.n_tr = n_tr;
  return seq;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab, int n_tr) {
  return tokenize(parse_sentence(text, vocab.group()), vocab, n_tr);
}

}  // namespace lego::core
