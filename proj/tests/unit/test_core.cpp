#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lego/core/chain.hpp"
#include "lego/core/dataset.hpp"
#include "lego/core/group.hpp"
#include "lego/core/random.hpp"
#include "lego/core/sentence.hpp"
#include "lego/core/vocab.hpp"

using namespace lego;
using namespace lego::core;

namespace {

std::vector<std::string> labels_of(const Chain& c, const GroupSpec& g) {
  std::vector<std::string> out;
  for (const int y : resolve_chain(c)) out.push_back(g.values()[static_cast<std::size_t>(y)]);
  return out;
}

std::string chain_order(const Chain& c) {
  std::string s;
  for (const auto& cl : c.clauses) s.push_back(cl.lhs);
  return s;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ParseErrorCode parse_code(const std::string& text) {
  try {
    parse_sentence(text, GroupSpec::z2());
  } catch (const ParseError& e) {
    return e.code();
  }
  FAIL("expected a parse error for " << text);
  return ParseErrorCode::Malformed;
}

}  // namespace

TEST_CASE("z2 action is sign multiplication") {
  const auto g = GroupSpec::z2();
  CHECK(g.group_size() == 2);
  CHECK(g.set_size() == 2);
  CHECK(g.apply("-", "-1") == "1");
  CHECK(g.apply("-", "1") == "-1");
  CHECK(g.apply("+", "-1") == "-1");
  CHECK_THROWS_WITH(g.apply(5, 0), doctest::Contains("unknown element"));
  CHECK_THROWS(g.apply("*", "1"));
}

TEST_CASE("d3 acts on itself as a group") {
  const auto g = GroupSpec::d3();
  CHECK(g.group_size() == 6);
  CHECK(g.set_size() == 6);
  CHECK(g.elements()[static_cast<std::size_t>(g.identity())] == "r0");
  for (int x = 0; x < 6; ++x) CHECK(g.apply(g.identity(), x) == x);
  // non-abelian: some pair fails to commute
  bool commutes = true;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) commutes = commutes && g.apply(a, b) == g.apply(b, a);
  CHECK_FALSE(commutes);
  Rng rng = make_rng(11);
  for (int i = 0; i < 1000; ++i) {
    const int a = static_cast<int>(uniform_index(rng, 6));
    const int b = static_cast<int>(uniform_index(rng, 6));
    const int x = static_cast<int>(uniform_index(rng, 6));
    CHECK(g.apply(g.apply(a, b), x) == g.apply(a, g.apply(b, x)));
  }
  // each row of the table is a permutation and element_mapping inverts it
  for (int a = 0; a < 6; ++a) {
    std::set<int> seen;
    for (int x = 0; x < 6; ++x) {
      seen.insert(g.apply(a, x));
      CHECK(g.element_mapping(x, g.apply(a, x)) == a);
    }
    CHECK(seen.size() == 6);
  }
}

TEST_CASE("sample_chain invariants") {
  const auto g = GroupSpec::z2();
  Rng rng = make_rng(3);
  CHECK_THROWS_WITH(sample_chain(0, g, rng), doctest::Contains("empty chain"));
  CHECK_THROWS_WITH(sample_chain(27, g, rng), doctest::Contains("alphabet exhausted"));
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = sample_chain(1, g, rng);
    REQUIRE(c.size() == 1);
    CHECK(c.clauses[0].rhs_is_root());
    CHECK(c.assignments[0] == g.apply(c.clauses[0].op, g.root()));
  }
  for (int n : {2, 6, 12, 26}) {
    const auto c = sample_chain(n, g, rng);
    CHECK_NOTHROW(validate_chain(c));
    const auto vars = c.variables();
    CHECK(std::set<char>(vars.begin(), vars.end()).size() == static_cast<std::size_t>(n));
    for (int i = 1; i < n; ++i) CHECK(c.clauses[static_cast<std::size_t>(i)].rhs == c.clauses[static_cast<std::size_t>(i - 1)].lhs);
  }
}

TEST_CASE("sampled labels are uniform per position") {
  const auto g = GroupSpec::z2();
  constexpr int kSamples = 10000;
  constexpr int kN = 12;
  std::vector<int> plus(kN, 0);
  Rng rng = make_rng(2024);
  for (int s = 0; s < kSamples; ++s) {
    const auto c = sample_chain(kN, g, rng);
    for (int i = 0; i < kN; ++i) plus[static_cast<std::size_t>(i)] += c.assignments[static_cast<std::size_t>(i)] == 0;
  }
  const double sigma = std::sqrt(kSamples * 0.25);
  for (int i = 0; i < kN; ++i) CHECK(std::abs(plus[static_cast<std::size_t>(i)] - kSamples / 2.0) <= 3 * sigma);
}

TEST_CASE("resolve_chain on worked examples") {
  const auto g = GroupSpec::z2();
  CHECK(labels_of(parse_sentence("a=+1;", g), g) == std::vector<std::string>{"1"});
  const auto c = parse_sentence("[BOS] a=+1; b=-a; c=-b; d=+c; e=+d; f=-e; [EOS]", g);
  CHECK(labels_of(c, g) == std::vector<std::string>{"1", "-1", "1", "1", "1", "-1"});

  const auto full = parse_sentence(
      "a=+1; b=-a; c=-b; d=+c; e=+d; f=-e; g=-f; h=+g; i=+h; j=-i; k=-j; l=+k; m=+l; n=-m; "
      "o=+n; p=-o; q=-p; r=+q; s=+r; t=-s; u=+t; v=-u; w=-v; x=+w; y=+x; z=-y;",
      g);
  const auto ys = labels_of(full, g);
  REQUIRE(ys.size() == 26);
  CHECK(ys[static_cast<std::size_t>('o' - 'a')] == "-1");
}

TEST_CASE("parse recovers chain order by following the root") {
  const auto g = GroupSpec::z2();
  const auto c = parse_sentence("a=+1; b=-a; e=+b; d=-f; c=+d; f=+e;", g);
  CHECK(chain_order(c) == "abefdc");
  CHECK(labels_of(c, g) == std::vector<std::string>{"1", "-1", "-1", "-1", "1", "1"});
  // surface index of each chain-ordered clause
  CHECK(c.sentence_order.size() == 6);
}

TEST_CASE("resolve_chain matches exhaustive sign enumeration") {
  const auto g = GroupSpec::z2();
  for (int n = 1; n <= 6; ++n) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      Chain c;
      for (int i = 0; i < n; ++i) {
        Clause cl{static_cast<char>('a' + i), (mask >> i) & 1, std::nullopt};
        if (i > 0) cl.rhs = static_cast<char>('a' + i - 1);
        c.clauses.push_back(cl);
        c.sentence_order.push_back(i);
      }
      const auto ys = resolve_chain(c);
      int sign = 1;
      for (int i = 0; i < n; ++i) {
        if ((mask >> i) & 1) sign = -sign;
        CHECK(ys[static_cast<std::size_t>(i)] == (sign == 1 ? 0 : 1));
      }
    }
  }
}

TEST_CASE("parity shortcut") {
  const auto g = GroupSpec::z2();
  const auto c = parse_sentence("a=+1; d=-c; b=-a; c=+b;", g);
  CHECK(chain_order(c) == "abcd");
  CHECK(g.values()[static_cast<std::size_t>(shortcut_last_parity(c))] == "1");
  CHECK(shortcut_last_parity(parse_sentence("a=+1; b=+a; c=+b;", g)) == 0);
  Rng rng = make_rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto ch = sample_chain(12, g, rng);
    CHECK(shortcut_last_parity(ch) == resolve_chain(ch).back());
  }
  Rng rng3 = make_rng(6);
  CHECK_THROWS_WITH(shortcut_last_parity(sample_chain(3, GroupSpec::d3(), rng3)),
                    doctest::Contains("non-abelian"));
}

TEST_CASE("resolve_chain rejects broken links") {
  const auto g = GroupSpec::z2();
  auto c = parse_sentence("a=+1; b=-a; c=+b;", g);
  c.clauses[2].rhs = 'a';
  CHECK_THROWS_WITH(resolve_chain(c), doctest::Contains("inconsistent chain"));
}

TEST_CASE("render and round trip") {
  const auto g = GroupSpec::z2();
  CHECK(render_sentence(parse_sentence("a=+1;", g)) == "[BOS] a=+1; [EOS]");
  const std::string fig = "[BOS] j=-f; f=-b; y=+t; o=+e; d=+y; v=+d; h=-o; b=-i; i=+1; t=+l; e=-j; l=-h; [EOS]";
  CHECK(render_sentence(parse_sentence(fig, g)) == fig);
  Rng rng = make_rng(9);
  for (int i = 0; i < 10000; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 26));
    const auto c = sample_chain(n, i % 2 ? GroupSpec::d3() : GroupSpec::z2(), rng);
    const auto back = parse_sentence(render_sentence(c), i % 2 ? GroupSpec::d3() : GroupSpec::z2());
    REQUIRE(back == c);
  }
}

TEST_CASE("parse errors are distinct") {
  CHECK(parse_code("a=+1; a=-b;") == ParseErrorCode::DuplicateLhs);
  CHECK(parse_code("a=+1; b=*a;") == ParseErrorCode::UnknownSymbol);
  CHECK(parse_code("a=+b; b=-a;") == ParseErrorCode::MissingRoot);
  CHECK(parse_code("a=+1; b=-1;") == ParseErrorCode::MultipleRoots);
  CHECK(parse_code("a=+1; b=-a; c=+a;") == ParseErrorCode::Branching);
  CHECK(parse_code("a=+1; b=-a; c=+d;") == ParseErrorCode::DanglingReference);
  CHECK(parse_code("a=+1; b=-c; c=+b;") == ParseErrorCode::Cycle);
  CHECK(parse_code("a=+1 b=-a;") == ParseErrorCode::Malformed);
}

TEST_CASE("vocab is a dense stable bijection") {
  for (const auto& g : {GroupSpec::z2(), GroupSpec::d3()}) {
    const Vocab v(g);
    std::set<std::string> seen;
    for (int id = 0; id < v.size(); ++id) {
      CHECK(v.id(v.symbol(id)) == id);
      seen.insert(v.symbol(id));
    }
    CHECK(seen.size() == static_cast<std::size_t>(v.size()));
    CHECK(v.contains("[CLS]"));
    CHECK(v.contains("[SEP]"));
    CHECK(v.contains("z"));
    CHECK_THROWS_WITH(v.id("A"), doctest::Contains("out-of-vocabulary"));
    CHECK(Vocab(g).size() == v.size());
  }
}

TEST_CASE("tokenize layout") {
  const auto g = GroupSpec::z2();
  const Vocab v(g);
  const auto one = tokenize("[BOS] a=+1; [EOS]", v, 1);
  CHECK(one.ids.size() == 7);
  CHECK(one.ids.front() == v.bos());
  CHECK(one.ids.back() == v.eos());
  CHECK(one.clause_anchors == std::vector<int>{1});

  const auto t = tokenize("b=-a; d=-c; c=+b; a=+1;", v, 2);
  CHECK(t.ids.size() == 22);
  CHECK(t.clause_anchors[0] == 16);
  CHECK(t.ids[16] == v.id("a"));
  CHECK(t.clause_anchors == std::vector<int>{16, 1, 11, 6});
  CHECK(t.n_tr == 2);
  CHECK_THROWS(tokenize("a=+1;", v, 2));
  CHECK_THROWS(tokenize("a=+1;", v, 0));

  Rng rng = make_rng(1);
  const auto c = sample_chain(12, g, rng);
  const auto t12 = tokenize(c, v, 12);
  CHECK(t12.ids.size() == 62);
  CHECK(t12.labels == resolve_chain(c));
  for (const int a : t12.clause_anchors) {
    CHECK(a > 0);
    CHECK(a < 61);
  }
}

TEST_CASE("dataset generation") {
  DatasetSpec spec;
  spec.n = 12;
  CHECK(spec.train_size() == 120000);
  CHECK(spec.test_size() == 12000);

  spec.n = 4;
  spec.count_train = 300;
  spec.count_test = 50;
  spec.seed = 17;
  const auto a = generate_splits(spec);
  const auto b = generate_splits(spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train.size() == 300);
  CHECK(a.test.size() == 50);
  CHECK(count_overlap(a) == 0);
  spec.seed = 18;
  CHECK_FALSE(generate_splits(spec).train == a.train);

  for (const auto& r : a.train) {
    CHECK(parse_jsonl_line(to_jsonl_line(r)) == r);
  }
  const auto line = to_jsonl_line(a.train.front());
  CHECK(line.find("{\"n\":4,\"sentence\":") == 0);
  CHECK(line.find("\"chain_vars\"") < line.find("\"labels\""));
  CHECK(line.find("\"labels\"") < line.find("\"seed_index\""));

  const auto dir = std::filesystem::temp_directory_path() / "lego_core_test_ds";
  std::filesystem::remove_all(dir);
  spec.seed = 17;
  const auto f1 = generate_dataset(spec, dir / "one");
  const auto f2 = generate_dataset(spec, dir / "two");
  CHECK(read_file(f1.train) == read_file(f2.train));
  CHECK(read_file(f1.test) == read_file(f2.test));
  CHECK(read_jsonl(f1.train) == a.train);
  std::filesystem::remove_all(dir);

  DatasetSpec tiny;
  tiny.n = 1;
  tiny.count_train = 50;
  tiny.count_test = 10;
  CHECK(sentence_capacity(1, GroupSpec::z2()) == doctest::Approx(52));
  CHECK_THROWS_WITH(generate_splits(tiny), doctest::Contains("requested"));
}

TEST_CASE("d3 dataset records") {
  DatasetSpec spec;
  spec.n = 5;
  spec.group = GroupKind::D3;
  spec.count_train = 40;
  spec.count_test = 10;
  const auto s = generate_splits(spec);
  const Vocab v(GroupSpec::d3());
  for (const auto& r : s.train) {
    const auto c = record_to_chain(r, GroupSpec::d3());
    const auto t = tokenize(c, v, 5);
    CHECK(t.ids.size() == 27);
    for (const int y : t.labels) CHECK((y >= 0 && y < 6));
  }
}
