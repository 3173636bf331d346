#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "sectx/netsim.hpp"

using namespace sectx;
using namespace sectx::netsim;

namespace {

std::shared_ptr<const scenario::Scenario> load(const std::string& name,
                                               const std::string& variant = "") {
  auto s = scenario::load_scenario(std::string(SCENARIO_DIR) + "/" + name +
                                   ".json");
  if (!variant.empty()) s = scenario::apply_variant(s, variant);
  return std::make_shared<const scenario::Scenario>(std::move(s));
}

std::vector<model::Transaction> committed(const World& w) {
  std::vector<model::Transaction> out;
  for (auto& t : w.transactions()) {
    if (w.txns_.at(t.id).phase == TxnPhase::Committed) out.push_back(t);
  }
  return out;
}

void check_event_hosting(const World& w) {
  for (const auto& e : w.state().events()) {
    const auto* loc = w.scn().find_location(e.location);
    REQUIRE(loc != nullptr);
    CHECK_MESSAGE(lattice::flows_to(e.label, loc->label),
                  e.key, " label ", e.label.str(), " not hostable at ",
                  e.location);
  }
}

void check_committed_serializable(const World& w) {
  auto txns = committed(w);
  CHECK(model::is_serializable(w.state(), txns));
  CHECK(model::conflict_graph_acyclic(w.state(), txns));
}

}  // namespace

TEST_CASE("staged commit runs the hospital scenario to completion") {
  auto scn = load("hospital_secure", "positive");
  for (uint64_t seed = 1; seed <= 10; seed++) {
    World w(scn, ProtocolKind::StagedCommit, seed);
    REQUIRE(w.run_to_quiescence(default_max_steps()));
    CHECK(w.all_committed());
    CHECK(w.metrics().stages_precommitted.at("patsy") == 2);
    CHECK(w.metrics().stages_precommitted.at("attacker") == 1);
    CHECK(w.metrics().commits == 2);
    check_event_hosting(w);
    check_committed_serializable(w);
    for (const auto& t : committed(w)) {
      CHECK(model::is_transaction_secure(t, w.state()));
      std::vector<model::LocationId> locs;
      for (const auto& l : w.scn().locations) locs.push_back(l.id);
      CHECK(model::satisfies_relaxed_monotonicity(t, w.state(), locs));
    }
  }
}

TEST_CASE("same seed reproduces the exact trace") {
  auto scn = load("hospital_secure", "positive");
  World a(scn, ProtocolKind::StagedCommit, 7);
  World b(scn, ProtocolKind::StagedCommit, 7);
  REQUIRE(a.run_to_quiescence(default_max_steps()));
  REQUIRE(b.run_to_quiescence(default_max_steps()));
  CHECK(a.trace().dump() == b.trace().dump());
  CHECK(a.canonical_key() == b.canonical_key());
}

TEST_CASE("aborted attempts drop out of committed transactions") {
  auto scn = load("hospital_secure", "positive");
  bool saw_retry = false;
  for (uint64_t seed = 1; seed <= 200; seed++) {
    World w(scn, ProtocolKind::StagedCommit, seed);
    REQUIRE(w.run_to_quiescence(default_max_steps()));
    REQUIRE(w.all_committed());
    for (const auto& e : w.state().events()) {
      if (e.kind == model::EventKind::Abort) {
        saw_retry = true;
        CHECK(e.aborted);
      }
    }
    for (const auto& t : committed(w)) {
      for (model::EventId id : t.events) {
        CHECK_FALSE(w.state().event(id).aborted);
        CHECK(w.state().event(id).kind != model::EventKind::Abort);
      }
    }
  }
  // The corpus is small; if no seed ever produced a retry this test is not
  // exercising the interesting path and should be revisited.
  CHECK(saw_retry);
}

TEST_CASE("optimistic 2pc leaks the conflict only in the positive variant") {
  int positive_visible = 0;
  for (const char* variant : {"positive", "negative"}) {
    auto scn = load("hospital_insecure", variant);
    for (uint64_t seed = 1; seed <= 200; seed++) {
      World w(scn, ProtocolKind::TwoPhase, seed);
      REQUIRE(w.run_to_quiescence(default_max_steps()));
      check_event_hosting(w);
      check_committed_serializable(w);
      int visible = 0;
      for (const auto& e : w.state().events()) {
        if (e.kind == model::EventKind::Abort &&
            e.location == "attacker_node") {
          visible++;
        }
      }
      if (std::string(variant) == "negative") {
        CHECK(visible == 0);
      } else {
        positive_visible += visible;
      }
    }
  }
  CHECK(positive_visible > 0);
}

TEST_CASE("lock protocol keeps the single-holder invariant and serializes") {
  auto scn = load("locks_pair");
  for (uint64_t seed = 1; seed <= 50; seed++) {
    World w(scn, ProtocolKind::Locks, seed);
    int64_t steps = 0;
    while (w.step()) {
      REQUIRE(++steps < default_max_steps());
      for (const auto& [key, lk] : w.locks_) {
        CHECK(lk.reentry >= 0);
        // A reserved lock may briefly have a holder with no acquisition yet;
        // the converse never happens.
        if (lk.reentry > 0) CHECK(lk.holder.has_value());
      }
    }
    CHECK(w.all_committed());
    check_event_hosting(w);
    check_committed_serializable(w);
    auto y = w.fields_.at("store.y").value;
    CHECK((y == "1" || y == "2"));
    // Locks leave no residue once everything committed.
    for (const auto& [key, lk] : w.locks_) {
      CHECK_FALSE(lk.holder.has_value());
      CHECK(lk.waiters.empty());
    }
  }
}

TEST_CASE("happens-before edges always point forward in schedule order") {
  auto scn = load("hospital_secure", "positive");
  World w(scn, ProtocolKind::StagedCommit, 3);
  REQUIRE(w.run_to_quiescence(default_max_steps()));
  for (auto [from, to] : w.state().cover_edges()) {
    CHECK(from < to);
  }
}

TEST_CASE("broken pre-ordering decides before any transaction starts") {
  auto scn = load("locks_pair");
  for (uint64_t seed = 1; seed <= 20; seed++) {
    World w(scn, ProtocolKind::BrokenPreorder, seed);
    REQUIRE(w.run_to_quiescence(default_max_steps()));
    CHECK(w.all_committed());
    check_committed_serializable(w);
    REQUIRE(w.decide_event_ == 0);
    CHECK(w.state().event(0).kind == model::EventKind::Local);
    for (const auto& t : w.transactions()) {
      CHECK(w.state().happens_before(0, t.start));
    }
    // The fixed order actually holds: t2 does no work until t1's client-side
    // commit (its Start event alone may come earlier).
    model::EventId t1_commit = -1;
    for (model::EventId id : w.txns_.at("t1").events) {
      const auto& e = w.state().event(id);
      if (e.kind == model::EventKind::Commit && e.location == "alice_node") {
        t1_commit = id;
      }
    }
    REQUIRE(t1_commit >= 0);
    for (model::EventId id : w.txns_.at("t2").events) {
      if (w.state().event(id).kind != model::EventKind::Start) {
        CHECK(id > t1_commit);
      }
    }
  }
}

TEST_CASE("protocols refuse what they cannot schedule safely") {
  CHECK_THROWS_WITH_AS(World(load("hospital_secure"), ProtocolKind::Locks, 1),
                       doctest::Contains("parallel"), ProtocolRefusal);
  try {
    World w(load("hospital_insecure"), ProtocolKind::Locks, 1);
    FAIL("expected refusal");
  } catch (const ProtocolRefusal& e) {
    CHECK(e.kind == "NonMonotonicTransaction");
  }
  try {
    World w(load("hospital_insecure"), ProtocolKind::StagedCommit, 1);
    FAIL("expected refusal");
  } catch (const ProtocolRefusal& e) {
    CHECK(e.kind == "StagePlanMissing");
  }
}

TEST_CASE("empty scenario is quiescent immediately") {
  auto scn = load("minimal");
  World w(scn, ProtocolKind::StagedCommit, 1);
  CHECK(w.quiescent());
  CHECK(w.run_to_quiescence(10));
  CHECK(w.all_committed());
  CHECK(w.state().events().empty());
}

TEST_CASE("exploration closure reaches the same commits as timed runs") {
  auto scn = load("hospital_secure", "positive");
  World w(scn, ProtocolKind::StagedCommit, 0);
  w.explore_mode_ = true;
  int64_t fired = 0;
  for (;;) {
    auto nies = w.enabled_nies();
    if (nies.empty()) break;
    REQUIRE(++fired < 1000);
    w.fire_nie(nies.front());
    w.run_closure();
  }
  CHECK(w.quiescent());
  CHECK(w.all_committed());
  check_committed_serializable(w);
}

TEST_CASE("blog scenario commits under staged commit") {
  auto scn = load("blog");
  for (uint64_t seed = 1; seed <= 20; seed++) {
    World w(scn, ProtocolKind::StagedCommit, seed);
    REQUIRE(w.run_to_quiescence(default_max_steps()));
    CHECK(w.all_committed());
    check_event_hosting(w);
    check_committed_serializable(w);
  }
}
