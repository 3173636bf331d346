#include "sectx/model.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace sectx::model {

const char* kind_name(EventKind k) {
  switch (k) {
    case EventKind::Start: return "Start";
    case EventKind::Read: return "Read";
    case EventKind::Write: return "Write";
    case EventKind::Send: return "Send";
    case EventKind::Receive: return "Receive";
    case EventKind::NetworkDelay: return "NetworkDelay";
    case EventKind::LockAcquire: return "LockAcquire";
    case EventKind::LockRelease: return "LockRelease";
    case EventKind::Precommit: return "Precommit";
    case EventKind::Commit: return "Commit";
    case EventKind::Abort: return "Abort";
    case EventKind::Local: return "Local";
  }
  return "?";
}

bool is_nie(EventKind k) {
  return k == EventKind::Start || k == EventKind::NetworkDelay;
}

namespace {
void set_bit(std::vector<uint64_t>& bits, size_t i) {
  if (bits.size() <= i / 64) bits.resize(i / 64 + 1, 0);
  bits[i / 64] |= uint64_t{1} << (i % 64);
}
bool get_bit(const std::vector<uint64_t>& bits, size_t i) {
  return i / 64 < bits.size() && (bits[i / 64] >> (i % 64)) & 1;
}
void or_into(std::vector<uint64_t>& dst, const std::vector<uint64_t>& src) {
  if (dst.size() < src.size()) dst.resize(src.size(), 0);
  for (size_t i = 0; i < src.size(); ++i) dst[i] |= src[i];
}
}  // namespace

EventId SystemState::add_event(Event e, const std::vector<EventId>& preds) {
  const EventId id = static_cast<EventId>(events_.size());
  e.id = id;
  events_.push_back(std::move(e));
  preds_.emplace_back();
  ancestors_.emplace_back();
  for (EventId p : preds) add_edge(p, id);
  return id;
}

void SystemState::add_edge(EventId from, EventId to) {
  if (from < 0 || to < 0 || static_cast<size_t>(from) >= events_.size() ||
      static_cast<size_t>(to) >= events_.size()) {
    throw std::out_of_range("unknown event id in hb edge");
  }
  if (from >= to) {
    throw std::logic_error("hb edge would not respect schedule order: " +
                           events_[from].key + " -> " + events_[to].key);
  }
  auto& ps = preds_[to];
  if (std::find(ps.begin(), ps.end(), from) != ps.end()) return;
  ps.push_back(from);
  or_into(ancestors_[to], ancestors_[from]);
  set_bit(ancestors_[to], static_cast<size_t>(from));
}

const Event& SystemState::event(EventId id) const {
  if (id < 0 || static_cast<size_t>(id) >= events_.size()) {
    throw std::out_of_range("unknown event id");
  }
  return events_[id];
}

bool SystemState::happens_before(EventId e1, EventId e2) const {
  if (e1 < 0 || e2 < 0 || static_cast<size_t>(e1) >= events_.size() ||
      static_cast<size_t>(e2) >= events_.size()) {
    throw std::out_of_range("unknown event id");
  }
  return get_bit(ancestors_[e2], static_cast<size_t>(e1));
}

std::vector<std::pair<EventId, EventId>> SystemState::cover_edges() const {
  std::vector<std::pair<EventId, EventId>> out;
  for (size_t to = 0; to < preds_.size(); ++to) {
    for (EventId from : preds_[to]) {
      out.emplace_back(from, static_cast<EventId>(to));
    }
  }
  return out;
}

bool directly_depends(const SystemState& state, const Transaction& t1,
                      const Transaction& t2) {
  if (t1.id == t2.id) return false;
  for (EventId e1 : t1.events) {
    for (EventId e2 : t2.events) {
      if (state.happens_before(e1, e2)) return true;
    }
  }
  return false;
}

namespace {
// Direct-dependence matrix plus its Warshall closure.
std::vector<std::vector<bool>> closed_dependence(
    const SystemState& state, const std::vector<Transaction>& txns) {
  const size_t n = txns.size();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      if (i != j) adj[i][j] = directly_depends(state, txns[i], txns[j]);
  for (size_t k = 0; k < n; ++k)
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j)
        if (adj[i][k] && adj[k][j]) adj[i][j] = true;
  return adj;
}
}  // namespace

bool transaction_precedes(const SystemState& state, const Transaction& t1,
                          const Transaction& t2,
                          const std::vector<Transaction>& all) {
  std::vector<Transaction> txns = all;
  auto ensure = [&](const Transaction& t) {
    for (const auto& x : txns) {
      if (x.id == t.id) return;
    }
    txns.push_back(t);
  };
  ensure(t1);
  ensure(t2);
  size_t i1 = 0, i2 = 0;
  for (size_t i = 0; i < txns.size(); ++i) {
    if (txns[i].id == t1.id) i1 = i;
    if (txns[i].id == t2.id) i2 = i;
  }
  if (t1.id == t2.id) return false;
  return closed_dependence(state, txns)[i1][i2];
}

bool is_serializable(const SystemState& state,
                     const std::vector<Transaction>& txns) {
  auto adj = closed_dependence(state, txns);
  for (size_t i = 0; i < txns.size(); ++i) {
    if (adj[i][i]) return false;
  }
  return true;
}

bool is_transaction_secure(const Transaction& t, const SystemState& state) {
  for (EventId e1 : t.events) {
    for (EventId e2 : t.events) {
      if (e1 == e2) continue;
      if (state.happens_before(e1, e2) &&
          !lattice::flows_to(state.event(e1).label, state.event(e2).label)) {
        return false;
      }
    }
  }
  return true;
}

bool is_monotonic(const Transaction& t, const SystemState& state) {
  if (!is_transaction_secure(t, state)) return false;
  for (EventId e1 : t.events) {
    for (EventId e2 : t.events) {
      if (e1 < e2 && !state.happens_before(e1, e2) &&
          !state.happens_before(e2, e1)) {
        return false;
      }
    }
  }
  return true;
}

bool visible_to(const Transaction& t, EventId e, const LocationId& loc,
                const SystemState& state) {
  if (state.event(e).location == loc) return true;
  for (EventId other : t.events) {
    if (other != e && state.event(other).location == loc &&
        state.happens_before(e, other)) {
      return true;
    }
  }
  return false;
}

bool satisfies_relaxed_monotonicity(const Transaction& t,
                                    const SystemState& state,
                                    const std::vector<LocationId>& locations) {
  if (!is_transaction_secure(t, state)) return false;
  for (const auto& loc : locations) {
    for (EventId vis : t.events) {
      if (!visible_to(t, vis, loc, state)) continue;
      for (EventId invis : t.events) {
        if (visible_to(t, invis, loc, state)) continue;
        if (!state.happens_before(vis, invis)) return false;
      }
    }
  }
  return true;
}

bool events_conflict(const Event& a, const Event& b) {
  const bool a_lock =
      a.kind == EventKind::LockAcquire || a.kind == EventKind::LockRelease;
  const bool b_lock =
      b.kind == EventKind::LockAcquire || b.kind == EventKind::LockRelease;
  if (a_lock || b_lock) {
    return a_lock && b_lock && a.field && b.field && *a.field == *b.field;
  }
  const bool a_acc = a.kind == EventKind::Read || a.kind == EventKind::Write;
  const bool b_acc = b.kind == EventKind::Read || b.kind == EventKind::Write;
  if (!a_acc || !b_acc) return false;
  if (!a.field || !b.field || *a.field != *b.field) return false;
  return a.kind == EventKind::Write || b.kind == EventKind::Write;
}

bool conflict_graph_acyclic(const SystemState& state,
                            const std::vector<Transaction>& txns) {
  std::map<TxnId, size_t> index;
  for (size_t i = 0; i < txns.size(); ++i) index[txns[i].id] = i;

  // Per-field applied order; event ids follow schedule order by construction.
  std::map<FieldId, std::vector<const Event*>> by_field;
  for (const auto& e : state.events()) {
    if (e.aborted || !e.txn || !e.field) continue;
    if (e.kind != EventKind::Read && e.kind != EventKind::Write) continue;
    if (!index.count(*e.txn)) continue;
    by_field[*e.field].push_back(&e);
  }

  const size_t n = txns.size();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (auto& [field, accesses] : by_field) {
    for (size_t i = 0; i < accesses.size(); ++i) {
      for (size_t j = i + 1; j < accesses.size(); ++j) {
        const Event& a = *accesses[i];
        const Event& b = *accesses[j];
        if (*a.txn == *b.txn) continue;
        if (a.kind == EventKind::Read && b.kind == EventKind::Read) continue;
        adj[index[*a.txn]][index[*b.txn]] = true;
      }
    }
  }

  std::vector<int> color(n, 0);
  std::function<bool(size_t)> has_cycle = [&](size_t v) {
    color[v] = 1;
    for (size_t w = 0; w < n; ++w) {
      if (!adj[v][w]) continue;
      if (color[w] == 1) return true;
      if (color[w] == 0 && has_cycle(w)) return true;
    }
    color[v] = 2;
    return false;
  };
  for (size_t v = 0; v < n; ++v) {
    if (color[v] == 0 && has_cycle(v)) return false;
  }
  return true;
}

}  // namespace sectx::model
