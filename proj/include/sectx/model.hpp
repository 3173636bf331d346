#ifndef SECTX_MODEL_HPP_
#define SECTX_MODEL_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sectx/lattice.hpp"

namespace sectx::model {

using lattice::Label;
using EventId = int;
using LocationId = std::string;
using FieldId = std::string;
using TxnId = std::string;

enum class EventKind {
  Start,
  Read,
  Write,
  Send,
  Receive,
  NetworkDelay,
  LockAcquire,
  LockRelease,
  Precommit,
  Commit,
  Abort,
  Local,
};

const char* kind_name(EventKind k);
bool is_nie(EventKind k);

struct Event {
  EventId id = -1;
  /// Structural identity, stable across interleavings of the same scenario
  /// (e.g. "t1.a0.read.addr.req.send"). Used for canonical state hashing.
  std::string key;
  LocationId location;
  Label label;
  EventKind kind = EventKind::Local;
  std::optional<FieldId> field;
  std::optional<TxnId> txn;
  /// Abort events carry the conflict label of the context that caused the
  /// abort; the confinement check compares it against receiving locations.
  std::optional<lattice::ConflictLabel> cl;
  /// True once the event's transaction attempt was aborted; aborted events
  /// stay in the trace but drop out of transaction event sets.
  bool aborted = false;
};

struct Location {
  LocationId id;
  Label label;
  /// Principals operating or acting through this node; used for the abort
  /// confinement check.
  lattice::PrincipalSet principals;

  bool operator==(const Location&) const = default;
};

/// Finite event set plus a happens-before DAG stored as covering edges.
/// Ancestor sets are maintained incrementally, so edges may only be added
/// from existing events to newer ones.
class SystemState {
 public:
  EventId add_event(Event e, const std::vector<EventId>& preds);
  void add_edge(EventId from, EventId to);

  const std::vector<Event>& events() const { return events_; }
  const Event& event(EventId id) const;
  Event& mutable_event(EventId id) { return events_.at(id); }
  size_t size() const { return events_.size(); }

  bool happens_before(EventId e1, EventId e2) const;
  const std::vector<EventId>& preds(EventId id) const { return preds_.at(id); }
  std::vector<std::pair<EventId, EventId>> cover_edges() const;

 private:
  std::vector<Event> events_;
  std::vector<std::vector<EventId>> preds_;
  // ancestors_[e] = bitset over event ids that happen before e.
  std::vector<std::vector<uint64_t>> ancestors_;
};

struct Transaction {
  TxnId id;
  EventId start = -1;
  std::set<EventId> events;
};

/// t1 happens before t2 after lifting hb through direct dependence and
/// closing transitively over `all` (chains through other transactions).
bool transaction_precedes(const SystemState& state, const Transaction& t1,
                          const Transaction& t2,
                          const std::vector<Transaction>& all = {});
bool directly_depends(const SystemState& state, const Transaction& t1,
                      const Transaction& t2);
bool is_serializable(const SystemState& state,
                     const std::vector<Transaction>& txns);
bool is_transaction_secure(const Transaction& t, const SystemState& state);
bool is_monotonic(const Transaction& t, const SystemState& state);
bool visible_to(const Transaction& t, EventId e, const LocationId& loc,
                const SystemState& state);
bool satisfies_relaxed_monotonicity(const Transaction& t,
                                    const SystemState& state,
                                    const std::vector<LocationId>& locations);

/// Structural conflict: reads and writes touching the same field where at
/// least one side writes. Lock events of one lock all conflict pairwise.
bool events_conflict(const Event& a, const Event& b);

/// Independent serializability oracle: builds the conflict graph over
/// committed transactions from per-field access order and searches for a
/// cycle. Kept free of transaction_precedes / happens_before.
bool conflict_graph_acyclic(const SystemState& state,
                            const std::vector<Transaction>& txns);

}  // namespace sectx::model

#endif  // SECTX_MODEL_HPP_
