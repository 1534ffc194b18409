#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "lego/attn/structures.hpp"
#include "lego/core/error.hpp"
#include "lego/core/random.hpp"

using namespace lego;
using namespace lego::attn;

namespace {

void check_rows(const AttnMap& m, std::vector<std::vector<double>> rows) {
  REQUIRE(m.size == static_cast<int>(rows.size()));
  for (int r = 0; r < m.size; ++r)
    for (int c = 0; c < m.size; ++c) CHECK(m.at(r, c) == doctest::Approx(rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
}

void check_stochastic(const AttnMap& m) {
  for (int r = 0; r < m.size; ++r) {
    double s = 0;
    for (int c = 0; c < m.size; ++c) {
      CHECK(m.at(r, c) >= 0.0);
      s += m.at(r, c);
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

std::vector<int> random_ids(Rng& rng, int len, int vocab) {
  std::vector<int> ids(static_cast<std::size_t>(len));
  for (auto& v : ids) v = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(vocab)));
  return ids;
}

}  // namespace

TEST_CASE("association map") {
  const std::vector<int> ids{5, 7, 5};
  const auto m = build_association(ids);
  CHECK(m.kind == AttnKind::Association);
  check_rows(m, {{0.5, 0, 0.5}, {0, 1, 0}, {0.5, 0, 0.5}});
  const std::vector<int> distinct{1, 2, 3, 4};
  check_rows(build_association(distinct), {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});

  Rng rng = make_rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r = random_ids(rng, 1 + static_cast<int>(uniform_index(rng, 20)), 5);
    const auto a = build_association(r);
    check_stochastic(a);
    for (int i = 0; i < a.size; ++i)
      for (int j = 0; j < a.size; ++j) {
        CHECK((a.at(i, j) > 0) == (a.at(j, i) > 0));
        if (r[static_cast<std::size_t>(i)] == r[static_cast<std::size_t>(j)]) {
          for (int c = 0; c < a.size; ++c) CHECK(a.at(i, c) == a.at(j, c));
        }
      }
  }
}

TEST_CASE("broadcast maps") {
  const std::vector<int> cls_first{3, 1, 2, 1};
  check_rows(build_broadcast(cls_first, 3), {{1, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}});
  const std::vector<int> none{1, 2};
  check_rows(build_broadcast(none, 3, AttnKind::BroadcastSep), {{0.5, 0.5}, {0.5, 0.5}});
  const std::vector<int> two_sep{4, 1, 4};
  const auto m = build_broadcast(two_sep, 4, AttnKind::BroadcastSep);
  CHECK(m.kind == AttnKind::BroadcastSep);
  check_rows(m, {{0.5, 0, 0.5}, {0.5, 0, 0.5}, {0.5, 0, 0.5}});
}

TEST_CASE("manipulation target band") {
  const auto m9 = build_manipulation_target(9);
  const std::vector<double> interior{0, 0, 0.1, 0.2, 0.4, 0.2, 0.1, 0, 0};
  for (int c = 0; c < 9; ++c) CHECK(m9.at(4, c) == doctest::Approx(interior[static_cast<std::size_t>(c)]));
  check_rows(build_manipulation_target(1), {{1}});
  for (int T = 3; T <= 12; ++T) {
    const auto m = build_manipulation_target(T);
    check_stochastic(m);
    CHECK(m.at(0, 0) == doctest::Approx(4.0 / 7));
    CHECK(m.at(0, 1) == doctest::Approx(2.0 / 7));
    CHECK(m.at(0, 2) == doctest::Approx(1.0 / 7));
    for (int t = 3; t <= T - 3; ++t)
      for (int c = 1; c < T; ++c) CHECK(m.at(t, c) == doctest::Approx(m.at(t - 1, c - 1)));
  }
}

TEST_CASE("mimic association target") {
  const std::vector<int> ids{5, 7, 5};
  const double u = 1.0 / 3;
  check_rows(build_mimic_association_target(ids), {{0, 0, 1}, {u, u, u}, {1, 0, 0}});
  const std::vector<int> distinct{1, 2};
  check_rows(build_mimic_association_target(distinct), {{0.5, 0.5}, {0.5, 0.5}});

  Rng rng = make_rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = random_ids(rng, 1 + static_cast<int>(uniform_index(rng, 16)), 4);
    const auto a = build_association(r);
    const auto t = build_mimic_association_target(r);
    std::vector<double> stripped = a.values;
    for (int i = 0; i < a.size; ++i) stripped[static_cast<std::size_t>(i * a.size + i)] = 0;
    const auto renorm = row_normalize(stripped, a.size);
    for (std::size_t i = 0; i < renorm.size(); ++i) CHECK(t.values[i] == doctest::Approx(renorm[i]));
  }
}

TEST_CASE("row normalize") {
  const std::vector<double> a{2, 2};
  CHECK(row_normalize(a, 2) == std::vector<double>{0.5, 0.5});
  const std::vector<double> z{0, 0};
  CHECK(row_normalize(z, 2) == std::vector<double>{0.5, 0.5});
  const std::vector<double> v{1, 3, 0, 0, 5, 5};
  const auto once = row_normalize(v, 3);
  const auto twice = row_normalize(once, 3);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-15));
  const std::vector<double> neg{1, -1};
  CHECK_THROWS_WITH(row_normalize(neg, 2), doctest::Contains("negative"));
}

TEST_CASE("maps are permutation equivariant") {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 1 + static_cast<int>(uniform_index(rng, 14));
    auto ids = random_ids(rng, T, 6);
    ids[0] = 3;
    std::vector<int> perm(static_cast<std::size_t>(T));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(std::span<int>(perm), rng);
    std::vector<int> pid(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) pid[static_cast<std::size_t>(i)] = ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    for (int kind = 0; kind < 3; ++kind) {
      const auto build = [&](const std::vector<int>& x) {
        return kind == 0 ? build_association(x) : kind == 1 ? build_mimic_association_target(x) : build_broadcast(x, 3);
      };
      const auto a = build(ids);
      const auto b = build(pid);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) CHECK(b.at(i, j) == doctest::Approx(a.at(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])));
    }
  }
}

TEST_CASE("csv export and stacking") {
  const std::vector<int> ids{5, 7, 5};
  const auto m = build_association(ids);
  CHECK(to_csv(m.values, 3, 3) == "0.5,0,0.5\n0,1,0\n0.5,0,0.5\n");
  const std::vector<AttnMap> maps{m, build_manipulation_target(3)};
  const auto t = stack_maps<float>(maps);
  CHECK(t.shape() == ad::Shape{2, 3, 3});
  CHECK(t[9] == doctest::Approx(4.0 / 7));
  const std::vector<AttnMap> mixed{m, build_manipulation_target(4)};
  CHECK_THROWS(stack_maps<double>(mixed));
}
