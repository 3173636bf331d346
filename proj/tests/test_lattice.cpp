#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sectx/lattice.hpp"

using namespace sectx::lattice;

namespace {

// Membership-loop reference for flows_to, kept separate from the
// std::includes-based implementation.
bool flows_to_oracle(const Label& l1, const Label& l2) {
  for (const auto& p : l2.readers()) {
    if (!l1.readers().count(p)) return false;
  }
  for (const auto& p : l2.writers()) {
    if (!l1.writers().count(p)) return false;
  }
  return true;
}

const PrincipalSet kFour = {"a", "b", "c", "d"};
const PrincipalSet kThree = {"a", "b", "c"};

}  // namespace

TEST_CASE("label constructor rejects writers outside readers") {
  CHECK_THROWS_AS(Label({"a"}, {"b"}), std::invalid_argument);
  CHECK_NOTHROW(Label({"a", "b"}, {"b"}));
}

TEST_CASE("reader writer example: public flows to patient-only") {
  Label low({"patsy", "attacker"}, {"patsy", "attacker"});
  Label high({"patsy"}, {"patsy"});
  CHECK(flows_to(low, high));
  CHECK_FALSE(flows_to(high, low));
}

TEST_CASE("flows_to matches oracle and is a partial order, 4 principals") {
  auto labels = all_labels(kFour);
  CHECK(labels.size() == 81);  // (1 + 2)^4 reader-writer combinations
  for (const auto& l1 : labels) {
    CHECK(flows_to(l1, l1));
    for (const auto& l2 : labels) {
      CHECK(flows_to(l1, l2) == flows_to_oracle(l1, l2));
      if (flows_to(l1, l2) && flows_to(l2, l1)) CHECK(l1 == l2);
    }
  }
}

TEST_CASE("flows_to is transitive, 3 principals") {
  auto labels = all_labels(kThree);
  for (const auto& l1 : labels) {
    for (const auto& l2 : labels) {
      if (!flows_to(l1, l2)) continue;
      for (const auto& l3 : labels) {
        if (flows_to(l2, l3)) CHECK(flows_to(l1, l3));
      }
    }
  }
}

TEST_CASE("join is the least upper bound, meet the greatest lower bound") {
  auto labels = all_labels(kThree);
  for (const auto& l1 : labels) {
    for (const auto& l2 : labels) {
      Label j = join(l1, l2);
      CHECK(flows_to(l1, j));
      CHECK(flows_to(l2, j));
      Label m = meet(l1, l2);
      CHECK(flows_to(m, l1));
      CHECK(flows_to(m, l2));
      for (const auto& u : labels) {
        if (flows_to(l1, u) && flows_to(l2, u)) CHECK(flows_to(j, u));
        if (flows_to(u, l1) && flows_to(u, l2)) CHECK(flows_to(u, m));
      }
    }
  }
}

TEST_CASE("bottom and top bound the lattice") {
  auto labels = all_labels(kFour);
  Label bot = Label::bottom(kFour);
  Label top = Label::top();
  for (const auto& l : labels) {
    CHECK(flows_to(bot, l));
    CHECK(flows_to(l, top));
  }
}

TEST_CASE("join and meet are commutative, associative, idempotent") {
  auto labels = all_labels(kThree);
  for (const auto& l1 : labels) {
    CHECK(join(l1, l1) == l1);
    CHECK(meet(l1, l1) == l1);
    for (const auto& l2 : labels) {
      CHECK(join(l1, l2) == join(l2, l1));
      CHECK(meet(l1, l2) == meet(l2, l1));
    }
  }
}

TEST_CASE("conflict label is the union of readers and writers") {
  Label l({"bank", "gloria"}, {"bank"});
  CHECK(conflict_label_of(l) == ConflictLabel({"bank", "gloria"}));
  CHECK(conflict_label_of(Label::top()) == ConflictLabel(PrincipalSet{}));
}

TEST_CASE("stage order is strict superset first") {
  ConflictLabel wide({"patsy", "attacker"});
  ConflictLabel narrow({"patsy"});
  CHECK(stage_order(wide, narrow) == StageOrder::Before);
  CHECK(stage_order(narrow, wide) == StageOrder::After);
  CHECK(stage_order(wide, wide) == StageOrder::Same);
  CHECK(stage_order(ConflictLabel({"outel"}),
                    ConflictLabel({"bank", "gloria"})) ==
        StageOrder::Incomparable);
}

TEST_CASE("stage order agrees with subset relations exhaustively") {
  std::vector<Principal> ps = {"a", "b", "c"};
  std::vector<ConflictLabel> cls;
  for (unsigned bits = 0; bits < 8; ++bits) {
    PrincipalSet s;
    for (size_t i = 0; i < 3; ++i) {
      if (bits & (1u << i)) s.insert(ps[i]);
    }
    cls.emplace_back(s);
  }
  for (const auto& c1 : cls) {
    for (const auto& c2 : cls) {
      bool sub12 = true, sub21 = true;
      for (const auto& p : c1.principals()) sub12 &= c2.principals().count(p) > 0;
      for (const auto& p : c2.principals()) sub21 &= c1.principals().count(p) > 0;
      auto ord = stage_order(c1, c2);
      if (sub12 && sub21) {
        CHECK(ord == StageOrder::Same);
      } else if (sub21) {
        CHECK(ord == StageOrder::Before);
      } else if (sub12) {
        CHECK(ord == StageOrder::After);
      } else {
        CHECK(ord == StageOrder::Incomparable);
      }
    }
  }
}
