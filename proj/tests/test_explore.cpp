#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "sectx/explore.hpp"

using namespace sectx;
using namespace sectx::explore;
using netsim::ProtocolKind;

namespace {

std::shared_ptr<const scenario::Scenario> load(const std::string& name,
                                               const std::string& variant = "") {
  auto s = scenario::load_scenario(std::string(SCENARIO_DIR) + "/" + name +
                                   ".json");
  if (!variant.empty()) s = scenario::apply_variant(s, variant);
  return std::make_shared<const scenario::Scenario>(std::move(s));
}

}  // namespace

TEST_CASE("lock protocol on a two-transaction conflict explores cleanly") {
  Explorer ex(load("locks_pair"), ProtocolKind::Locks);
  ex.explore();
  REQUIRE(ex.txns().size() == 2);
  REQUIRE_FALSE(ex.terminals().empty());
  CHECK(ex.nodes().size() > 2);

  // Both serialization orders are reachable from the start.
  CHECK(ex.classify_valence(ex.root(), 0, 1) == Valence::Bivalent);

  // Terminals themselves are settled one way or the other.
  bool saw_first = false, saw_second = false;
  for (int t : ex.terminals()) {
    auto v = ex.classify_valence(t, 0, 1);
    CHECK(v != Valence::Bivalent);
    saw_first |= v == Valence::UnivalentFirst;
    saw_second |= v == Valence::UnivalentSecond;
  }
  CHECK(saw_first);
  CHECK(saw_second);

  auto nec = ex.check_necessary_conditions();
  for (const auto& v : nec.violations) MESSAGE(v);
  CHECK(nec.ok);

  auto dl = ex.check_deadlock_freedom();
  for (const auto& p : dl.problems) MESSAGE(p);
  CHECK(dl.deadlock_free);
}

TEST_CASE("staged commit on the hospital scenario explores cleanly") {
  Explorer ex(load("hospital_secure", "positive"), ProtocolKind::StagedCommit);
  ex.explore();
  REQUIRE(ex.txns().size() == 2);
  REQUIRE_FALSE(ex.terminals().empty());

  CHECK(ex.classify_valence(ex.root(), 0, 1) == Valence::Bivalent);

  // Every terminal commits both transactions even though stages can abort
  // and retry along the way.
  for (int t : ex.terminals()) {
    CHECK(ex.nodes()[t].world->all_committed());
  }

  auto nec = ex.check_necessary_conditions();
  for (const auto& v : nec.violations) MESSAGE(v);
  CHECK(nec.ok);

  auto dl = ex.check_deadlock_freedom();
  for (const auto& p : dl.problems) MESSAGE(p);
  CHECK(dl.deadlock_free);
}

TEST_CASE("pre-ordering all transactions breaks the necessary conditions") {
  Explorer ex(load("locks_pair"), ProtocolKind::BrokenPreorder);
  ex.explore();
  REQUIRE_FALSE(ex.terminals().empty());

  // The order is fixed before either transaction does anything, so the
  // root is already univalent and no decision event can satisfy the
  // ordering conditions.
  CHECK(ex.classify_valence(ex.root(), 0, 1) != Valence::Bivalent);

  auto nec = ex.check_necessary_conditions();
  CHECK_FALSE(nec.ok);
  CHECK_FALSE(nec.violations.empty());
}

TEST_CASE("state bounds abort the search instead of running away") {
  Options tight;
  tight.max_states = 10;
  Explorer ex(load("locks_pair"), ProtocolKind::Locks, tight);
  CHECK_THROWS_AS(ex.explore(), BoundExceeded);

  Options low_nie;
  low_nie.max_nies_per_txn = 2;
  Explorer ex2(load("hospital_secure", "positive"), ProtocolKind::StagedCommit,
               low_nie);
  CHECK_THROWS_AS(ex2.explore(), BoundExceeded);
}
