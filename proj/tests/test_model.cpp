#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sectx/model.hpp"

using namespace sectx::model;
using sectx::lattice::Label;

namespace {

Label lab(const std::set<std::string>& rw) { return Label(rw, rw); }

Event ev(std::string key, std::string loc, Label label, EventKind kind,
         std::optional<FieldId> field = std::nullopt,
         std::optional<TxnId> txn = std::nullopt) {
  Event e;
  e.key = std::move(key);
  e.location = std::move(loc);
  e.label = std::move(label);
  e.kind = kind;
  e.field = std::move(field);
  e.txn = std::move(txn);
  return e;
}

// DFS over the predecessor lists, independent of the bitset bookkeeping.
bool reachable_oracle(const SystemState& s, EventId from, EventId to) {
  std::vector<EventId> stack = {to};
  std::set<EventId> seen;
  while (!stack.empty()) {
    EventId v = stack.back();
    stack.pop_back();
    for (EventId p : s.preds(v)) {
      if (p == from) return true;
      if (seen.insert(p).second) stack.push_back(p);
    }
  }
  return false;
}

}  // namespace

TEST_CASE("happens_before matches DFS oracle on random DAGs") {
  std::mt19937 rng(20240817);
  for (int iter = 0; iter < 300; ++iter) {
    SystemState s;
    const int n = 2 + static_cast<int>(rng() % 7);
    for (int i = 0; i < n; ++i) {
      std::vector<EventId> preds;
      for (int p = 0; p < i; ++p) {
        if (rng() % 3 == 0) preds.push_back(p);
      }
      s.add_event(ev("e" + std::to_string(i), "loc", Label::top(),
                     EventKind::Local),
                  preds);
    }
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        CHECK(s.happens_before(a, b) == reachable_oracle(s, a, b));
      }
    }
  }
}

TEST_CASE("edges must go from older to newer events") {
  SystemState s;
  s.add_event(ev("a", "l", Label::top(), EventKind::Local), {});
  s.add_event(ev("b", "l", Label::top(), EventKind::Local), {});
  CHECK_THROWS_AS(s.add_edge(1, 0), std::logic_error);
  CHECK_THROWS_AS(s.add_edge(0, 0), std::logic_error);
  CHECK_NOTHROW(s.add_edge(0, 1));
}

TEST_CASE("transaction order lifts through intermediaries") {
  // T1's write precedes T3's read, T3's write precedes T2's read; T1 and T2
  // share no direct edge but T1 must still come first.
  SystemState s;
  auto e0 = s.add_event(ev("t1.w", "l", Label::top(), EventKind::Write, "x",
                           "T1"), {});
  auto e1 = s.add_event(ev("t3.r", "l", Label::top(), EventKind::Read, "x",
                           "T3"), {e0});
  auto e2 = s.add_event(ev("t3.w", "l", Label::top(), EventKind::Write, "y",
                           "T3"), {e1});
  auto e3 = s.add_event(ev("t2.r", "l", Label::top(), EventKind::Read, "y",
                           "T2"), {e2});
  Transaction t1{"T1", e0, {e0}};
  Transaction t2{"T2", e3, {e3}};
  Transaction t3{"T3", e1, {e1, e2}};
  std::vector<Transaction> all = {t1, t2, t3};
  CHECK(transaction_precedes(s, t1, t3, all));
  CHECK(transaction_precedes(s, t3, t2, all));
  CHECK(transaction_precedes(s, t1, t2, all));
  CHECK_FALSE(transaction_precedes(s, t2, t1, all));
  CHECK(is_serializable(s, all));
}

TEST_CASE("read before precommit before write orders the transactions") {
  // One transaction reads a row, the scheduler precommits, another writes
  // it; the reader is serialized before the writer.
  SystemState s;
  auto r1 = s.add_event(ev("R.read", "store", Label::top(), EventKind::Read,
                           "row", "R"), {});
  auto p = s.add_event(ev("store.precommit", "store", Label::top(),
                          EventKind::Precommit, "row", std::nullopt), {r1});
  auto b1 = s.add_event(ev("B.write", "store", Label::top(), EventKind::Write,
                           "row", "B"), {p});
  Transaction tr{"R", r1, {r1}};
  Transaction tb{"B", b1, {b1}};
  CHECK(s.happens_before(r1, p));
  CHECK(s.happens_before(p, b1));
  CHECK(transaction_precedes(s, tr, tb));
  CHECK_FALSE(transaction_precedes(s, tb, tr));
}

TEST_CASE("mutual dependence is not serializable") {
  SystemState s;
  auto a0 = s.add_event(ev("a0", "l", Label::top(), EventKind::Write, "x",
                           "A"), {});
  auto b0 = s.add_event(ev("b0", "l", Label::top(), EventKind::Read, "x",
                           "B"), {a0});
  auto b1 = s.add_event(ev("b1", "l", Label::top(), EventKind::Write, "y",
                           "B"), {b0});
  auto a1 = s.add_event(ev("a1", "l", Label::top(), EventKind::Read, "y",
                           "A"), {b1});
  Transaction ta{"A", a0, {a0, a1}};
  Transaction tb{"B", b0, {b0, b1}};
  CHECK_FALSE(is_serializable(s, {ta, tb}));
}

TEST_CASE("transaction security follows label flow along hb") {
  std::set<std::string> pub = {"patsy", "attacker"};
  std::set<std::string> priv = {"patsy"};
  SystemState s;
  auto e0 = s.add_event(ev("pub", "l", lab(pub), EventKind::Read, "a", "T"),
                        {});
  auto e1 = s.add_event(ev("priv", "l", lab(priv), EventKind::Read, "h", "T"),
                        {e0});
  Transaction t{"T", e0, {e0, e1}};
  CHECK(is_transaction_secure(t, s));

  SystemState s2;
  auto f0 = s2.add_event(ev("priv", "l", lab(priv), EventKind::Read, "h", "T"),
                         {});
  auto f1 = s2.add_event(ev("pub", "l", lab(pub), EventKind::Read, "a", "T"),
                         {f0});
  Transaction t2{"T", f0, {f0, f1}};
  CHECK_FALSE(is_transaction_secure(t2, s2));
}

TEST_CASE("monotonic means secure and totally ordered") {
  std::set<std::string> p = {"patsy"};
  SystemState s;
  auto e0 = s.add_event(ev("a", "l", lab(p), EventKind::Read, "x", "T"), {});
  auto e1 = s.add_event(ev("b", "l", lab(p), EventKind::Read, "y", "T"), {e0});
  auto e2 = s.add_event(ev("c", "l", lab(p), EventKind::Read, "z", "T"), {});
  Transaction total{"T", e0, {e0, e1}};
  CHECK(is_monotonic(total, s));
  Transaction partial{"T", e0, {e0, e1, e2}};
  CHECK_FALSE(is_monotonic(partial, s));
}

TEST_CASE("relaxed monotonicity fails when visibility splits an antichain") {
  // Two hb chains on two locations; each location sees one chain, and the
  // chains are unordered against each other.
  std::set<std::string> p = {"dave"};
  SystemState s;
  auto r0 = s.add_event(ev("r0", "alice", lab(p), EventKind::Read, "x", "D"),
                        {});
  auto r1 = s.add_event(ev("r1", "bob", lab(p), EventKind::Read, "y", "D"),
                        {});
  auto r2 = s.add_event(ev("r2", "alice", lab(p), EventKind::Read, "z", "D"),
                        {r0});
  auto r3 = s.add_event(ev("r3", "bob", lab(p), EventKind::Read, "w", "D"),
                        {r1});
  Transaction d{"D", r0, {r0, r1, r2, r3}};
  CHECK(is_transaction_secure(d, s));
  CHECK_FALSE(is_monotonic(d, s));
  CHECK_FALSE(satisfies_relaxed_monotonicity(d, s, {"alice", "bob"}));

  // Ordering the chains front to back restores the split.
  SystemState s2;
  auto a0 = s2.add_event(ev("r0", "alice", lab(p), EventKind::Read, "x", "D"),
                         {});
  auto a2 = s2.add_event(ev("r2", "alice", lab(p), EventKind::Read, "z", "D"),
                         {a0});
  auto a1 = s2.add_event(ev("r1", "bob", lab(p), EventKind::Read, "y", "D"),
                         {a2});
  auto a3 = s2.add_event(ev("r3", "bob", lab(p), EventKind::Read, "w", "D"),
                         {a1});
  Transaction d2{"D", a0, {a0, a1, a2, a3}};
  CHECK(satisfies_relaxed_monotonicity(d2, s2, {"alice", "bob"}));
}

TEST_CASE("monotonic transactions always satisfy relaxed monotonicity") {
  std::mt19937 rng(7);
  std::vector<Label> pool = {lab({"p"}), lab({"p", "q"}), lab({"p", "q", "r"})};
  int monotonic_seen = 0;
  for (int iter = 0; iter < 400; ++iter) {
    SystemState s;
    const int n = 2 + static_cast<int>(rng() % 5);
    Transaction t{"T", 0, {}};
    for (int i = 0; i < n; ++i) {
      std::vector<EventId> preds;
      for (int p = 0; p < i; ++p) {
        if (rng() % 2 == 0) preds.push_back(p);
      }
      auto id = s.add_event(ev("e" + std::to_string(i),
                               rng() % 2 ? "locA" : "locB",
                               pool[rng() % pool.size()], EventKind::Read,
                               "f" + std::to_string(rng() % 2), "T"),
                            preds);
      t.events.insert(id);
    }
    if (is_monotonic(t, s)) {
      ++monotonic_seen;
      CHECK(satisfies_relaxed_monotonicity(t, s, {"locA", "locB"}));
    }
  }
  CHECK(monotonic_seen > 10);
}

TEST_CASE("visibility covers same-location and forwarded events") {
  std::set<std::string> p = {"p"};
  SystemState s;
  auto e0 = s.add_event(ev("remote", "b", lab(p), EventKind::Read, "x", "T"),
                        {});
  auto e1 = s.add_event(ev("local", "a", lab(p), EventKind::Read, "y", "T"),
                        {e0});
  auto e2 = s.add_event(ev("other", "b", lab(p), EventKind::Read, "z", "T"),
                        {});
  Transaction t{"T", e0, {e0, e1, e2}};
  CHECK(visible_to(t, e1, "a", s));
  CHECK(visible_to(t, e0, "a", s));  // flows into e1 at a
  CHECK_FALSE(visible_to(t, e2, "a", s));
}

TEST_CASE("event conflicts require a shared field and a write") {
  Event r = ev("r", "l", Label::top(), EventKind::Read, "x");
  Event w = ev("w", "l", Label::top(), EventKind::Write, "x");
  Event r2 = ev("r2", "l", Label::top(), EventKind::Read, "x");
  Event wy = ev("wy", "l", Label::top(), EventKind::Write, "y");
  CHECK(events_conflict(r, w));
  CHECK(events_conflict(w, w));
  CHECK_FALSE(events_conflict(r, r2));
  CHECK_FALSE(events_conflict(r, wy));
  Event la = ev("la", "l", Label::top(), EventKind::LockAcquire, "k1");
  Event lr = ev("lr", "l", Label::top(), EventKind::LockRelease, "k1");
  Event lb = ev("lb", "l", Label::top(), EventKind::LockAcquire, "k2");
  CHECK(events_conflict(la, lr));
  CHECK_FALSE(events_conflict(la, lb));
  CHECK_FALSE(events_conflict(la, w));
}

TEST_CASE("conflict graph oracle finds cycles and ignores aborted attempts") {
  SystemState s;
  auto a0 = s.add_event(ev("t1.r.x", "l", Label::top(), EventKind::Read, "x",
                           "T1"), {});
  s.add_event(ev("t2.w.x", "l", Label::top(), EventKind::Write, "x", "T2"),
              {});
  s.add_event(ev("t2.r.y", "l", Label::top(), EventKind::Read, "y", "T2"),
              {});
  auto a3 = s.add_event(ev("t1.w.y", "l", Label::top(), EventKind::Write, "y",
                           "T1"), {});
  Transaction t1{"T1", a0, {a0, a3}};
  Transaction t2{"T2", 1, {1, 2}};
  CHECK_FALSE(conflict_graph_acyclic(s, {t1, t2}));

  s.mutable_event(a3).aborted = true;
  CHECK(conflict_graph_acyclic(s, {t1, t2}));
}
