#include "protocols_internal.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace sectx::protocols {

using lattice::ConflictLabel;
using lattice::Label;
using lattice::conflict_label_of;
using lattice::flows_to;
using namespace netsim;

namespace {

bool truthy(const std::string& v) {
  return !v.empty() && v != "false" && v != "0";
}

bool guards_ok(const TxnRuntime& t, const txdsl::StageAccess& acc) {
  for (const auto& g : acc.guards) {
    auto it = t.env.find(g);
    if (it == t.env.end() || !truthy(it->second)) return false;
  }
  return true;
}

std::string eval(const TxnRuntime& t, const txdsl::Expr& e) {
  if (!e.is_var) return e.text;
  auto it = t.env.find(e.text);
  return it == t.env.end() ? "" : it->second;
}

const scenario::FieldDef& field_def(World& w, const FieldId& id) {
  return *w.scn().find_field(id);
}

Label access_label(World& w, const txdsl::StageAccess& acc) {
  if (acc.kind == txdsl::Stmt::Kind::Print) return acc.pc;
  return field_def(w, acc.field).label;
}

/// Join of every access label; the level of the transaction's commit
/// decision under the baseline protocols.
Label decision_label(World& w, const TxnRuntime& t) {
  Label l = Label::bottom(w.scn().principals);
  for (const auto& acc : t.accesses) l = lattice::join(l, access_label(w, acc));
  return l;
}

ConflictLabel stage_cl(const TxnRuntime& t, int stage) {
  for (size_t i = 0; i < t.accesses.size(); i++) {
    if (t.stage_of_access[i] == stage) return t.accesses[i].cl.cl;
  }
  return ConflictLabel{};
}

int stage_first_access(const TxnRuntime& t, int stage) {
  for (size_t i = 0; i < t.accesses.size(); i++) {
    if (t.stage_of_access[i] == stage) return static_cast<int>(i);
  }
  return static_cast<int>(t.accesses.size());
}

std::vector<LocationId> stage_participants(const TxnRuntime& t, int stage) {
  std::vector<LocationId> out;
  for (size_t i = 0; i < t.accesses.size(); i++) {
    if (t.stage_of_access[i] != stage) continue;
    if (t.accesses[i].kind == txdsl::Stmt::Kind::Print) continue;
    if (std::find(out.begin(), out.end(), t.accesses[i].location) == out.end()) {
      out.push_back(t.accesses[i].location);
    }
  }
  return out;
}

void add_participant(TxnRuntime& t, const LocationId& loc) {
  if (std::find(t.participants.begin(), t.participants.end(), loc) ==
      t.participants.end()) {
    t.participants.push_back(loc);
  }
}

void queue_print(World& w, TxnRuntime& t, int index, EventId pred) {
  Action a;
  a.op = "print";
  a.txn = t.id;
  a.index = index;
  a.pred = pred;
  w.queue_action(t.client, std::move(a));
}

void advance(World& w, TxnRuntime& t);

// ---------------------------------------------------------------------------
// Optimistic two-phase commit. Reads and writes run without locks; prepare
// takes read/write locks no-wait and validates read versions. A failed vote
// aborts the whole transaction, and the abort notification carries the
// conflicting context's label to wherever the client happens to run.
// ---------------------------------------------------------------------------

void begin_prepare_2pc(World& w, TxnRuntime& t) {
  EventId pred = t.last_client_event;
  if (t.participants.empty()) {
    t.phase = TxnPhase::Committing;
    Action a;
    a.op = "2pc.commit_evt";
    a.txn = t.id;
    a.pred = pred;
    w.queue_action(t.client, std::move(a));
    return;
  }
  t.phase = TxnPhase::Preparing;
  t.votes_pending = static_cast<int>(t.participants.size());
  t.vote_failed = false;
  w.metrics_.prepare_round_trips[t.id]++;
  Label l = decision_label(w, t);
  for (const auto& p : t.participants) {
    Payload pl;
    pl.op = "2pc.prep";
    pl.txn = t.id;
    w.queue_send(t.client, p, l, std::move(pl), pred);
  }
}

void advance_2pc(World& w, TxnRuntime& t) {
  while (t.next_access < static_cast<int>(t.accesses.size())) {
    const auto& acc = t.accesses[t.next_access];
    if (!guards_ok(t, acc)) {
      t.next_access++;
      continue;
    }
    if (acc.kind == txdsl::Stmt::Kind::Print) {
      queue_print(w, t, t.next_access, t.last_client_event);
      return;
    }
    Payload p;
    p.op = acc.kind == txdsl::Stmt::Kind::Read ? "2pc.read" : "2pc.write";
    p.txn = t.id;
    p.index = t.next_access;
    p.field = acc.field;
    if (acc.kind == txdsl::Stmt::Kind::Write) p.value = eval(t, acc.value);
    p.ctx = conflict_label_of(acc.pc);
    add_participant(t, acc.location);
    w.queue_send(t.client, acc.location, access_label(w, acc), std::move(p),
                 t.last_client_event);
    return;
  }
  begin_prepare_2pc(w, t);
}

void decide_2pc(World& w, TxnRuntime& t, EventId pred) {
  Label l = decision_label(w, t);
  if (!t.vote_failed) {
    t.phase = TxnPhase::Committing;
    for (const auto& p : t.participants) {
      Payload pl;
      pl.op = "2pc.commit";
      pl.txn = t.id;
      w.queue_send(t.client, p, l, std::move(pl), pred);
    }
    Action a;
    a.op = "2pc.commit_evt";
    a.txn = t.id;
    a.pred = pred;
    w.queue_action(t.client, std::move(a));
  } else {
    t.phase = TxnPhase::Aborted;
    w.mark_aborted(t.id, {t.events.begin(), t.events.end()});
    for (const auto& p : t.participants) {
      Payload pl;
      pl.op = "2pc.abort";
      pl.txn = t.id;
      pl.ctx = t.fail_ctx;
      w.queue_send(t.client, p, l, std::move(pl), pred);
    }
    Action a;
    a.op = "2pc.abort_evt";
    a.txn = t.id;
    a.pred = pred;
    w.queue_action(t.client, std::move(a));
  }
}

void receive_2pc(World& w, Message& m) {
  const std::string& op = m.payload.op;
  const LocationId& here = m.to;
  if (op == "2pc.read") {
    Action a;
    a.op = "2pc.read_do";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "2pc.write") {
    w.write_buffers_[m.payload.txn].push_back(
        {m.payload.field, m.payload.value, m.payload.ctx, -1, 0});
    Payload p;
    p.op = "2pc.ack";
    p.txn = m.payload.txn;
    p.index = m.payload.index;
    w.queue_send(here, m.from, m.label, std::move(p), m.receive_event);
  } else if (op == "2pc.reply" || op == "2pc.ack") {
    auto& t = w.txns_.at(m.payload.txn);
    if (op == "2pc.reply") {
      t.env[t.accesses[m.payload.index].var] = m.payload.value;
    }
    t.last_client_event = m.receive_event;
    t.next_access = m.payload.index + 1;
    advance_2pc(w, t);
  } else if (op == "2pc.prep") {
    Action a;
    a.op = "2pc.vote_do";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "2pc.vote") {
    auto& t = w.txns_.at(m.payload.txn);
    t.votes_pending--;
    if (!m.payload.ok) {
      t.vote_failed = true;
      t.fail_ctx = m.payload.ctx;
    }
    if (t.votes_pending == 0) decide_2pc(w, t, m.receive_event);
  } else if (op == "2pc.commit") {
    for (const auto& bw : w.write_buffers_[m.payload.txn]) {
      if (field_def(w, bw.field).location != here) continue;
      Action a;
      a.op = "2pc.apply";
      a.txn = m.payload.txn;
      a.field = bw.field;
      a.value = bw.value;
      a.pred = m.receive_event;
      w.queue_action(here, std::move(a));
    }
    Action a;
    a.op = "2pc.commit_evt_store";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "2pc.abort") {
    Action a;
    a.op = "2pc.abort_evt_store";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  }
}

bool action_2pc(World& w, const LocationId& loc, const Action& a) {
  if (a.op == "2pc.read_do") {
    Message& m = w.messages_.at(a.message_id);
    auto& fs = w.fields_.at(m.payload.field);
    EventId id = w.emit(
        EventKind::Read, loc, field_def(w, m.payload.field).label,
        m.payload.txn + ".rd." + m.payload.field,
        {a.pred, fs.last_write_event}, m.payload.field, m.payload.txn);
    fs.reads_since_write.push_back(id);
    w.read_versions_[m.payload.txn][m.payload.field] = {fs.version,
                                                        m.payload.ctx, -1, 0};
    Payload p;
    p.op = "2pc.reply";
    p.txn = m.payload.txn;
    p.index = m.payload.index;
    p.value = fs.value;
    w.queue_send(loc, m.from, m.label, std::move(p), id);
    return true;
  }
  if (a.op == "2pc.vote_do") {
    Message& m = w.messages_.at(a.message_id);
    const TxnId& txn = m.payload.txn;
    bool ok = true;
    ConflictLabel cause;
    for (const auto& bw : w.write_buffers_[txn]) {
      if (field_def(w, bw.field).location != loc) continue;
      auto& fs = w.fields_.at(bw.field);
      if (fs.write_locker && *fs.write_locker != txn) {
        ok = false;
        cause = fs.write_ctx;
      }
      for (const auto& [lt, lctx] : fs.read_lockers) {
        if (lt != txn) {
          ok = false;
          cause = lctx;
        }
      }
    }
    for (const auto& [fid, rec] : w.read_versions_[txn]) {
      if (field_def(w, fid).location != loc) continue;
      auto& fs = w.fields_.at(fid);
      if (fs.version != rec.version) {
        ok = false;
        cause = fs.write_ctx.principals().empty()
                    ? conflict_label_of(field_def(w, fid).label)
                    : fs.write_ctx;
      } else if (fs.write_locker && *fs.write_locker != txn) {
        ok = false;
        cause = fs.write_ctx;
      }
    }
    if (ok) {
      for (const auto& bw : w.write_buffers_[txn]) {
        if (field_def(w, bw.field).location != loc) continue;
        auto& fs = w.fields_.at(bw.field);
        fs.write_locker = txn;
        fs.write_ctx = bw.ctx;
      }
      for (const auto& [fid, rec] : w.read_versions_[txn]) {
        if (field_def(w, fid).location != loc) continue;
        w.fields_.at(fid).read_lockers[txn] = rec.ctx;
      }
    }
    Payload p;
    p.op = "2pc.vote";
    p.txn = txn;
    p.ok = ok;
    p.ctx = cause;
    w.queue_send(loc, m.from, m.label, std::move(p), a.pred);
    return true;
  }
  if (a.op == "2pc.apply") {
    auto& fs = w.fields_.at(a.field);
    std::vector<EventId> preds = {a.pred, fs.last_write_event};
    for (EventId r : fs.reads_since_write) preds.push_back(r);
    EventId id =
        w.emit(EventKind::Write, loc, field_def(w, a.field).label,
               a.txn + ".wr." + a.field, preds, a.field, a.txn);
    fs.value = a.value;
    fs.version++;
    fs.last_write_event = id;
    fs.reads_since_write.clear();
    if (fs.write_locker == a.txn) fs.write_locker.reset();
    return true;
  }
  if (a.op == "2pc.commit_evt_store") {
    Message& m = w.messages_.at(a.message_id);
    w.emit(EventKind::Commit, loc, m.label, m.payload.txn + ".commit." + loc,
           {a.pred}, std::nullopt, m.payload.txn);
    for (auto& [fid, fs] : w.fields_) {
      if (field_def(w, fid).location != loc) continue;
      fs.read_lockers.erase(m.payload.txn);
      if (fs.write_locker == m.payload.txn) fs.write_locker.reset();
    }
    return true;
  }
  if (a.op == "2pc.abort_evt_store") {
    Message& m = w.messages_.at(a.message_id);
    EventId id = w.emit(EventKind::Abort, loc,
                        w.scn().find_location(loc)->label,
                        m.payload.txn + ".abort." + loc, {a.pred},
                        std::nullopt, m.payload.txn);
    w.state_.mutable_event(id).cl = m.payload.ctx;
    for (auto& [fid, fs] : w.fields_) {
      if (field_def(w, fid).location != loc) continue;
      fs.read_lockers.erase(m.payload.txn);
      if (fs.write_locker == m.payload.txn) fs.write_locker.reset();
    }
    return true;
  }
  if (a.op == "2pc.commit_evt") {
    auto& t = w.txns_.at(a.txn);
    w.emit(EventKind::Commit, loc, decision_label(w, t), t.id + ".commit",
           {a.pred}, std::nullopt, t.id);
    t.phase = TxnPhase::Committed;
    w.metrics_.commits++;
    return true;
  }
  if (a.op == "2pc.abort_evt") {
    auto& t = w.txns_.at(a.txn);
    EventId id = w.emit(EventKind::Abort, loc,
                        w.scn().find_location(loc)->label, t.id + ".abort",
                        {a.pred}, std::nullopt, t.id);
    w.state_.mutable_event(id).cl = t.fail_ctx;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Conservative locking. Admits only transactions whose access chain rises
// monotonically through the lattice; acquires one lock per (location, label)
// in chain order, waiting FIFO, and releases in reverse after the last
// access. Commit notifications then walk the participants backward.
// ---------------------------------------------------------------------------

std::string lock_key(const LocationId& loc, const Label& l) {
  return loc + "|" + l.str();
}

LockState& lock_at(World& w, const LocationId& loc, const Label& l) {
  auto& lk = w.locks_[lock_key(loc, l)];
  lk.location = loc;
  lk.label = l;
  return lk;
}

void begin_finish_locks(World& w, TxnRuntime& t) {
  t.phase = TxnPhase::Committing;
  EventId pred = t.last_client_event;
  for (auto it = t.held_locks.rbegin(); it != t.held_locks.rend(); ++it) {
    auto& lk = w.locks_.at(*it);
    if (lk.location == t.client) {
      Action a;
      a.op = "lk.rel_local";
      a.txn = t.id;
      a.field = *it;
      a.pred = pred;
      w.queue_action(t.client, std::move(a));
    } else {
      Payload p;
      p.op = "lk.rel";
      p.txn = t.id;
      p.field = *it;
      w.queue_send(t.client, lk.location, lk.label, std::move(p), pred);
    }
  }
  Label l = decision_label(w, t);
  for (auto it = t.participants.rbegin(); it != t.participants.rend(); ++it) {
    Payload p;
    p.op = "lk.commit";
    p.txn = t.id;
    w.queue_send(t.client, *it, l, std::move(p), pred);
  }
  Action a;
  a.op = "lk.commit_evt";
  a.txn = t.id;
  a.pred = pred;
  w.queue_action(t.client, std::move(a));
}

void advance_locks(World& w, TxnRuntime& t) {
  while (t.next_access < static_cast<int>(t.accesses.size())) {
    const auto& acc = t.accesses[t.next_access];
    if (!guards_ok(t, acc)) {
      t.next_access++;
      continue;
    }
    if (acc.kind == txdsl::Stmt::Kind::Print) {
      std::string key = lock_key(t.client, acc.pc);
      if (std::find(t.held_locks.begin(), t.held_locks.end(), key) !=
          t.held_locks.end()) {
        queue_print(w, t, t.next_access, t.last_client_event);
      } else {
        Action a;
        a.op = "lk.acq_local";
        a.txn = t.id;
        a.index = t.next_access;
        a.pred = t.last_client_event;
        w.queue_action(t.client, std::move(a));
      }
      return;
    }
    Payload p;
    p.op = "lk.req";
    p.txn = t.id;
    p.index = t.next_access;
    p.field = acc.field;
    if (acc.kind == txdsl::Stmt::Kind::Write) p.value = eval(t, acc.value);
    p.ctx = conflict_label_of(acc.pc);
    add_participant(t, acc.location);
    w.queue_send(t.client, acc.location, access_label(w, acc), std::move(p),
                 t.last_client_event);
    return;
  }
  begin_finish_locks(w, t);
}

void receive_locks(World& w, Message& m) {
  const std::string& op = m.payload.op;
  const LocationId& here = m.to;
  if (op == "lk.req") {
    Label fl = field_def(w, m.payload.field).label;
    auto& lk = lock_at(w, here, fl);
    if (!lk.holder || *lk.holder == m.payload.txn) {
      // Reserve immediately: the grant must not race with requests arriving
      // before the queued acquire action runs.
      lk.holder = m.payload.txn;
      Action a;
      a.op = "lk.acq";
      a.message_id = m.id;
      a.pred = m.receive_event;
      w.queue_action(here, std::move(a));
    } else {
      lk.waiters.push_back(m.id);
    }
  } else if (op == "lk.rep") {
    auto& t = w.txns_.at(m.payload.txn);
    const auto& acc = t.accesses[m.payload.index];
    if (acc.kind == txdsl::Stmt::Kind::Read) {
      t.env[acc.var] = m.payload.value;
    }
    t.held_locks.push_back(lock_key(acc.location, access_label(w, acc)));
    t.last_client_event = m.receive_event;
    t.next_access = m.payload.index + 1;
    advance_locks(w, t);
  } else if (op == "lk.rel") {
    Action a;
    a.op = "lk.rel_do";
    a.message_id = m.id;
    a.field = m.payload.field;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "lk.commit") {
    Action a;
    a.op = "lk.commit_evt_store";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  }
}

void release_lock(World& w, const LocationId& loc, const std::string& key,
                  const TxnId& txn, EventId pred) {
  auto& lk = w.locks_.at(key);
  EventId id = w.emit(EventKind::LockRelease, loc, lk.label,
                      txn + ".rel." + key + "." +
                          std::to_string(lk.reentry),
                      {pred, lk.last_event}, key, txn);
  lk.last_event = id;
  lk.reentry--;
  if (lk.reentry == 0) {
    if (!lk.waiters.empty()) {
      int mid = lk.waiters.front();
      lk.waiters.pop_front();
      lk.holder = w.messages_.at(mid).payload.txn;
      Action a;
      a.op = "lk.acq";
      a.message_id = mid;
      a.pred = id;
      w.queue_action(loc, std::move(a));
    } else {
      lk.holder.reset();
    }
  }
}

bool action_locks(World& w, const LocationId& loc, const Action& a) {
  if (a.op == "lk.acq") {
    Message& m = w.messages_.at(a.message_id);
    Label fl = field_def(w, m.payload.field).label;
    auto& lk = lock_at(w, loc, fl);
    lk.holder = m.payload.txn;
    lk.reentry++;
    EventId id = w.emit(EventKind::LockAcquire, loc, fl,
                        m.payload.txn + ".acq." + lock_key(loc, fl) + "." +
                            std::to_string(lk.reentry),
                        {a.pred, lk.last_event}, lock_key(loc, fl),
                        m.payload.txn);
    lk.last_event = id;
    Action next;
    next.op = "lk.access";
    next.message_id = m.id;
    next.pred = id;
    w.queue_action(loc, std::move(next));
    return true;
  }
  if (a.op == "lk.access") {
    Message& m = w.messages_.at(a.message_id);
    auto& t = w.txns_.at(m.payload.txn);
    const auto& acc = t.accesses[m.payload.index];
    auto& fs = w.fields_.at(m.payload.field);
    Label fl = field_def(w, m.payload.field).label;
    Payload p;
    p.op = "lk.rep";
    p.txn = m.payload.txn;
    p.index = m.payload.index;
    EventId id;
    if (acc.kind == txdsl::Stmt::Kind::Read) {
      id = w.emit(EventKind::Read, loc, fl,
                  m.payload.txn + ".rd." + m.payload.field,
                  {a.pred, fs.last_write_event}, m.payload.field,
                  m.payload.txn);
      fs.reads_since_write.push_back(id);
      p.value = fs.value;
    } else {
      std::vector<EventId> preds = {a.pred, fs.last_write_event};
      for (EventId r : fs.reads_since_write) preds.push_back(r);
      id = w.emit(EventKind::Write, loc, fl,
                  m.payload.txn + ".wr." + m.payload.field, preds,
                  m.payload.field, m.payload.txn);
      fs.value = m.payload.value;
      fs.version++;
      fs.last_write_event = id;
      fs.reads_since_write.clear();
      fs.write_ctx = m.payload.ctx;
    }
    w.queue_send(loc, m.from, m.label, std::move(p), id);
    return true;
  }
  if (a.op == "lk.acq_local") {
    auto& t = w.txns_.at(a.txn);
    const auto& acc = t.accesses[a.index];
    auto& lk = lock_at(w, loc, acc.pc);
    lk.holder = t.id;
    lk.reentry++;
    std::string key = lock_key(loc, acc.pc);
    EventId id = w.emit(EventKind::LockAcquire, loc, acc.pc,
                        t.id + ".acq." + key + "." +
                            std::to_string(lk.reentry),
                        {a.pred, lk.last_event}, key, t.id);
    lk.last_event = id;
    t.held_locks.push_back(key);
    queue_print(w, t, a.index, id);
    return true;
  }
  if (a.op == "lk.rel_local") {
    release_lock(w, loc, a.field, a.txn, a.pred);
    return true;
  }
  if (a.op == "lk.rel_do") {
    Message& m = w.messages_.at(a.message_id);
    release_lock(w, loc, a.field, m.payload.txn, a.pred);
    return true;
  }
  if (a.op == "lk.commit_evt_store") {
    Message& m = w.messages_.at(a.message_id);
    w.emit(EventKind::Commit, loc, m.label, m.payload.txn + ".commit." + loc,
           {a.pred}, std::nullopt, m.payload.txn);
    return true;
  }
  if (a.op == "lk.commit_evt") {
    auto& t = w.txns_.at(a.txn);
    w.emit(EventKind::Commit, loc, decision_label(w, t), t.id + ".commit",
           {a.pred}, std::nullopt, t.id);
    t.phase = TxnPhase::Committed;
    w.metrics_.commits++;
    if (w.protocol() == ProtocolKind::BrokenPreorder) {
      for (const auto& id : w.txn_order_) {
        auto& t2 = w.txns_.at(id);
        if (t2.parked) {
          t2.parked = false;
          t2.phase = TxnPhase::Running;
          advance_locks(w, t2);
        }
      }
    }
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Staged commit. Each stage runs a two-phase round at one conflict level:
// execute, prepare (no-wait stage locks plus read validation), precommit
// (writes become visible and stay claimed until the final commit). A failed
// stage aborts only that stage's attempt and retries with fresh reads, so
// abort notifications never leave the stage's conflict-label class.
// ---------------------------------------------------------------------------

void advance_sc(World& w, TxnRuntime& t);

void start_commit_sc(World& w, TxnRuntime& t, EventId pred) {
  t.phase = TxnPhase::Committing;
  for (int s = t.stage_count - 1; s >= 0; s--) {
    for (const auto& p : stage_participants(t, s)) {
      Payload pl;
      pl.op = "sc.commit";
      pl.txn = t.id;
      pl.stage = s;
      w.queue_send(t.client, p, stage_cl(t, s).as_label(), std::move(pl),
                   t.stage_decision[s]);
    }
  }
  Action a;
  a.op = "sc.commit_evt";
  a.txn = t.id;
  a.pred = pred;
  w.queue_action(t.client, std::move(a));
}

void finish_stage_sc(World& w, TxnRuntime& t, EventId pred) {
  t.stage_decision.push_back(pred);
  t.current_stage++;
  t.attempt = 0;
  if (t.current_stage < t.stage_count) {
    t.phase = TxnPhase::Running;
    t.vote_failed = false;
    advance_sc(w, t);
  } else {
    start_commit_sc(w, t, pred);
  }
}

void prepare_stage_sc(World& w, TxnRuntime& t) {
  auto parts = stage_participants(t, t.current_stage);
  if (parts.empty()) {
    w.metrics_.stages_precommitted[t.id]++;
    finish_stage_sc(w, t, t.last_client_event);
    return;
  }
  t.participants = parts;
  t.phase = TxnPhase::Preparing;
  t.votes_pending = static_cast<int>(parts.size());
  t.vote_failed = false;
  w.metrics_.prepare_round_trips[t.id]++;
  Label l = stage_cl(t, t.current_stage).as_label();
  for (const auto& p : parts) {
    Payload pl;
    pl.op = "sc.prep";
    pl.txn = t.id;
    pl.stage = t.current_stage;
    pl.attempt = t.attempt;
    w.queue_send(t.client, p, l, std::move(pl), t.last_client_event);
  }
}

void advance_sc(World& w, TxnRuntime& t) {
  while (t.next_access < static_cast<int>(t.accesses.size()) &&
         t.stage_of_access[t.next_access] == t.current_stage) {
    const auto& acc = t.accesses[t.next_access];
    if (!guards_ok(t, acc)) {
      t.next_access++;
      continue;
    }
    if (acc.kind == txdsl::Stmt::Kind::Print) {
      queue_print(w, t, t.next_access, t.last_client_event);
      return;
    }
    Payload p;
    p.op = acc.kind == txdsl::Stmt::Kind::Read ? "sc.read" : "sc.write";
    p.txn = t.id;
    p.stage = t.current_stage;
    p.attempt = t.attempt;
    p.index = t.next_access;
    p.field = acc.field;
    if (acc.kind == txdsl::Stmt::Kind::Write) p.value = eval(t, acc.value);
    p.ctx = stage_cl(t, t.current_stage);
    w.queue_send(t.client, acc.location, field_def(w, acc.field).label,
                 std::move(p), t.last_client_event);
    return;
  }
  prepare_stage_sc(w, t);
}

bool stale_sc(const TxnRuntime& t, const Payload& p) {
  return p.stage != t.current_stage || p.attempt != t.attempt;
}

void decide_sc(World& w, TxnRuntime& t, EventId pred) {
  if (!t.vote_failed) {
    for (const auto& p : t.participants) {
      Payload pl;
      pl.op = "sc.pc";
      pl.txn = t.id;
      pl.stage = t.current_stage;
      pl.attempt = t.attempt;
      w.queue_send(t.client, p, stage_cl(t, t.current_stage).as_label(),
                   std::move(pl), pred);
    }
    w.metrics_.stages_precommitted[t.id]++;
    finish_stage_sc(w, t, pred);
  } else {
    for (const auto& p : t.participants) {
      Payload pl;
      pl.op = "sc.abort";
      pl.txn = t.id;
      pl.stage = t.current_stage;
      pl.attempt = t.attempt;
      pl.ctx = stage_cl(t, t.current_stage);
      pl.dead = true;
      w.queue_send(t.client, p, stage_cl(t, t.current_stage).as_label(),
                   std::move(pl), pred);
    }
    Action a;
    a.op = "sc.abort_evt";
    a.txn = t.id;
    a.stage = t.current_stage;
    a.pred = pred;
    w.queue_action(t.client, std::move(a));
  }
}

void receive_sc(World& w, Message& m) {
  const std::string& op = m.payload.op;
  const LocationId& here = m.to;
  if (op == "sc.read") {
    Action a;
    a.op = "sc.read_do";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "sc.write") {
    w.write_buffers_[m.payload.txn].push_back({m.payload.field,
                                               m.payload.value, m.payload.ctx,
                                               m.payload.stage,
                                               m.payload.attempt});
    Payload p;
    p.op = "sc.wrep";
    p.txn = m.payload.txn;
    p.stage = m.payload.stage;
    p.attempt = m.payload.attempt;
    p.index = m.payload.index;
    w.queue_send(here, m.from, m.label, std::move(p), m.receive_event);
  } else if (op == "sc.rrep" || op == "sc.wrep") {
    auto& t = w.txns_.at(m.payload.txn);
    if (stale_sc(t, m.payload)) return;
    if (op == "sc.rrep") {
      t.env[t.accesses[m.payload.index].var] = m.payload.value;
    }
    t.last_client_event = m.receive_event;
    t.next_access = m.payload.index + 1;
    advance_sc(w, t);
  } else if (op == "sc.prep") {
    Action a;
    a.op = "sc.vote_do";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "sc.vote") {
    auto& t = w.txns_.at(m.payload.txn);
    if (stale_sc(t, m.payload)) return;
    t.votes_pending--;
    if (!m.payload.ok) {
      t.vote_failed = true;
      t.fail_ctx = m.payload.ctx;
    }
    if (t.votes_pending == 0) decide_sc(w, t, m.receive_event);
  } else if (op == "sc.pc") {
    for (const auto& bw : w.write_buffers_[m.payload.txn]) {
      if (bw.stage != m.payload.stage || bw.attempt != m.payload.attempt) {
        continue;
      }
      if (field_def(w, bw.field).location != here) continue;
      Action a;
      a.op = "sc.apply";
      a.txn = m.payload.txn;
      a.field = bw.field;
      a.value = bw.value;
      a.stage = m.payload.stage;
      a.index = m.payload.attempt;
      a.pred = m.receive_event;
      w.queue_action(here, std::move(a));
    }
    Action a;
    a.op = "sc.pc_evt";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "sc.abort") {
    Action a;
    a.op = "sc.abort_evt_store";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  } else if (op == "sc.commit") {
    std::string key = m.payload.txn + "|" + std::to_string(m.payload.stage) +
                      "|" + here;
    if (!w.sc_pc_done_[key]) {
      w.sc_parked_commit_[key] = m.id;
      return;
    }
    Action a;
    a.op = "sc.commit_evt_store";
    a.message_id = m.id;
    a.pred = m.receive_event;
    w.queue_action(here, std::move(a));
  }
}

bool action_sc(World& w, const LocationId& loc, const Action& a) {
  if (a.op == "sc.read_do") {
    Message& m = w.messages_.at(a.message_id);
    auto& fs = w.fields_.at(m.payload.field);
    EventId id = w.emit(EventKind::Read, loc,
                        field_def(w, m.payload.field).label,
                        m.payload.txn + ".a" +
                            std::to_string(m.payload.attempt) + ".rd." +
                            m.payload.field,
                        {a.pred, fs.last_write_event}, m.payload.field,
                        m.payload.txn);
    fs.reads_since_write.push_back(id);
    w.read_versions_[m.payload.txn][m.payload.field] = {
        fs.version, m.payload.ctx, m.payload.stage, m.payload.attempt};
    Payload p;
    p.op = "sc.rrep";
    p.txn = m.payload.txn;
    p.stage = m.payload.stage;
    p.attempt = m.payload.attempt;
    p.index = m.payload.index;
    p.value = fs.value;
    w.queue_send(loc, m.from, m.label, std::move(p), id);
    return true;
  }
  if (a.op == "sc.vote_do") {
    Message& m = w.messages_.at(a.message_id);
    const TxnId& txn = m.payload.txn;
    bool ok = true;
    ConflictLabel cause;
    for (const auto& bw : w.write_buffers_[txn]) {
      if (bw.stage != m.payload.stage || bw.attempt != m.payload.attempt) {
        continue;
      }
      if (field_def(w, bw.field).location != loc) continue;
      auto& fs = w.fields_.at(bw.field);
      if ((fs.stage_lock && *fs.stage_lock != txn) ||
          (fs.precommit_holder && *fs.precommit_holder != txn)) {
        ok = false;
        cause = conflict_label_of(field_def(w, bw.field).label);
      }
    }
    for (const auto& [fid, rec] : w.read_versions_[txn]) {
      if (rec.stage != m.payload.stage || rec.attempt != m.payload.attempt) {
        continue;
      }
      if (field_def(w, fid).location != loc) continue;
      auto& fs = w.fields_.at(fid);
      if (fs.version != rec.version) {
        ok = false;
        cause = fs.write_ctx.principals().empty()
                    ? conflict_label_of(field_def(w, fid).label)
                    : fs.write_ctx;
      } else if (fs.stage_lock && *fs.stage_lock != txn) {
        ok = false;
        cause = conflict_label_of(field_def(w, fid).label);
      }
    }
    if (ok) {
      auto claim = [&](const FieldId& fid) {
        auto& fs = w.fields_.at(fid);
        fs.stage_lock = txn;
        fs.stage_lock_attempt = m.payload.attempt;
      };
      for (const auto& bw : w.write_buffers_[txn]) {
        if (bw.stage == m.payload.stage && bw.attempt == m.payload.attempt &&
            field_def(w, bw.field).location == loc) {
          claim(bw.field);
        }
      }
      for (const auto& [fid, rec] : w.read_versions_[txn]) {
        if (rec.stage == m.payload.stage && rec.attempt == m.payload.attempt &&
            field_def(w, fid).location == loc) {
          claim(fid);
        }
      }
    }
    Payload p;
    p.op = "sc.vote";
    p.txn = txn;
    p.stage = m.payload.stage;
    p.attempt = m.payload.attempt;
    p.ok = ok;
    p.ctx = cause;
    w.queue_send(loc, m.from, m.label, std::move(p), a.pred);
    return true;
  }
  if (a.op == "sc.apply") {
    auto& fs = w.fields_.at(a.field);
    std::vector<EventId> preds = {a.pred, fs.last_write_event};
    for (EventId r : fs.reads_since_write) preds.push_back(r);
    EventId id = w.emit(EventKind::Write, loc, field_def(w, a.field).label,
                        a.txn + ".wr." + a.field + ".s" +
                            std::to_string(a.stage),
                        preds, a.field, a.txn);
    fs.value = a.value;
    fs.version++;
    fs.last_write_event = id;
    fs.reads_since_write.clear();
    fs.precommit_holder = a.txn;
    for (const auto& bw : w.write_buffers_[a.txn]) {
      if (bw.field == a.field && bw.stage == a.stage &&
          bw.attempt == a.index) {
        fs.write_ctx = bw.ctx;
      }
    }
    return true;
  }
  if (a.op == "sc.pc_evt") {
    Message& m = w.messages_.at(a.message_id);
    const TxnId& txn = m.payload.txn;
    w.emit(EventKind::Precommit, loc, m.label,
           txn + ".pc." + loc + ".s" + std::to_string(m.payload.stage),
           {a.pred}, std::nullopt, txn);
    for (const auto& [fid, rec] : w.read_versions_[txn]) {
      if (rec.stage == m.payload.stage && rec.attempt == m.payload.attempt &&
          field_def(w, fid).location == loc) {
        w.fields_.at(fid).precommit_holder = txn;
      }
    }
    for (auto& [fid, fs] : w.fields_) {
      if (field_def(w, fid).location == loc && fs.stage_lock == txn) {
        fs.stage_lock.reset();
      }
    }
    std::string key =
        txn + "|" + std::to_string(m.payload.stage) + "|" + loc;
    w.sc_pc_done_[key] = true;
    auto parked = w.sc_parked_commit_.find(key);
    if (parked != w.sc_parked_commit_.end()) {
      Action c;
      c.op = "sc.commit_evt_store";
      c.message_id = parked->second;
      c.pred = w.messages_.at(parked->second).receive_event;
      w.queue_action(loc, std::move(c));
      w.sc_parked_commit_.erase(parked);
    }
    return true;
  }
  if (a.op == "sc.abort_evt_store") {
    Message& m = w.messages_.at(a.message_id);
    const TxnId& txn = m.payload.txn;
    EventId id = w.emit(EventKind::Abort, loc, m.label,
                        txn + ".a" + std::to_string(m.payload.attempt) +
                            ".abort." + loc + ".s" +
                            std::to_string(m.payload.stage),
                        {a.pred}, std::nullopt, txn);
    w.state_.mutable_event(id).cl = m.payload.ctx;
    w.mark_aborted(txn, {id});
    for (auto& [fid, fs] : w.fields_) {
      if (field_def(w, fid).location != loc) continue;
      if (fs.stage_lock == txn &&
          fs.stage_lock_attempt == m.payload.attempt) {
        fs.stage_lock.reset();
      }
    }
    return true;
  }
  if (a.op == "sc.abort_evt") {
    auto& t = w.txns_.at(a.txn);
    ConflictLabel cl = stage_cl(t, a.stage);
    EventId id = w.emit(EventKind::Abort, loc, cl.as_label(),
                        t.id + ".a" + std::to_string(t.attempt) + ".abort." +
                            loc + ".s" + std::to_string(a.stage),
                        {a.pred}, std::nullopt, t.id);
    w.state_.mutable_event(id).cl = cl;
    w.mark_aborted(t.id, t.stage_events);
    t.stage_events.clear();
    t.attempt++;
    t.phase = TxnPhase::Running;
    t.vote_failed = false;
    t.next_access = stage_first_access(t, t.current_stage);
    advance_sc(w, t);
    return true;
  }
  if (a.op == "sc.commit_evt_store") {
    Message& m = w.messages_.at(a.message_id);
    const TxnId& txn = m.payload.txn;
    w.emit(EventKind::Commit, loc, m.label,
           txn + ".commit." + loc + ".s" + std::to_string(m.payload.stage),
           {a.pred}, std::nullopt, txn);
    for (auto& [fid, fs] : w.fields_) {
      if (field_def(w, fid).location == loc && fs.precommit_holder == txn) {
        fs.precommit_holder.reset();
      }
    }
    return true;
  }
  if (a.op == "sc.commit_evt") {
    auto& t = w.txns_.at(a.txn);
    Label l = stage_cl(t, t.stage_count - 1).as_label();
    w.emit(EventKind::Commit, loc, l, t.id + ".commit", {a.pred},
           std::nullopt, t.id);
    t.phase = TxnPhase::Committed;
    w.metrics_.commits++;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Shared entry points.
// ---------------------------------------------------------------------------

void walk_for_par(const txdsl::Block& b, const txdsl::Program& prog,
                  bool* found) {
  for (const auto& s : b) {
    switch (s->kind) {
      case txdsl::Stmt::Kind::Par:
        *found = true;
        return;
      case txdsl::Stmt::Kind::If:
        walk_for_par(s->body, prog, found);
        break;
      case txdsl::Stmt::Kind::Call: {
        auto it = prog.procs.find(s->callee);
        if (it != prog.procs.end()) walk_for_par(it->second.body, prog, found);
        break;
      }
      default:
        break;
    }
    if (*found) return;
  }
}

/// Lock-based scheduling only admits chains whose labels rise monotonically;
/// anything else could leak through lock contention at an unrelated level.
void check_monotonic_admission(World& w, const TxnRuntime& t,
                               const txdsl::Program& prog) {
  bool has_par = false;
  walk_for_par(prog.body, prog, &has_par);
  if (has_par) {
    throw ProtocolRefusal(
        "NonMonotonicTransaction",
        t.id + ": parallel branches cannot be totally ordered");
  }
  Label prev = Label::bottom(w.scn().principals);
  for (const auto& acc : t.accesses) {
    Label l = access_label(w, acc);
    if (!flows_to(prev, l)) {
      throw ProtocolRefusal("NonMonotonicTransaction",
                            t.id + ": access label " + l.str() +
                                " does not follow " + prev.str());
    }
    prev = l;
  }
}

}  // namespace

void init_world(World& w) {
  if (w.protocol() == ProtocolKind::Locks ||
      w.protocol() == ProtocolKind::BrokenPreorder) {
    for (const auto& id : w.txn_order_) {
      const auto& t = w.txns_.at(id);
      auto prog = scenario::parse(*w.scn().find_program(t.program));
      check_monotonic_admission(w, t, prog);
    }
  }
  if (w.protocol() == ProtocolKind::BrokenPreorder &&
      !w.locations_.empty()) {
    // The commit order is fixed up front, before any transaction runs; the
    // root state is univalent, which is exactly what the necessary-condition
    // checks are meant to catch.
    w.decide_event_ = w.emit(EventKind::Local, w.locations_.front(),
                             Label::bottom(w.scn().principals),
                             "preorder.decide", {});
  }
}

void on_start(World& w, TxnRuntime& t) {
  t.phase = TxnPhase::Running;
  switch (w.protocol()) {
    case ProtocolKind::TwoPhase:
      advance_2pc(w, t);
      break;
    case ProtocolKind::Locks:
      advance_locks(w, t);
      break;
    case ProtocolKind::StagedCommit:
      advance_sc(w, t);
      break;
    case ProtocolKind::BrokenPreorder: {
      const TxnId& first = w.txn_order_.front();
      if (t.id != first && w.txns_.at(first).phase != TxnPhase::Committed) {
        t.parked = true;
        t.phase = TxnPhase::Pending;
        return;
      }
      advance_locks(w, t);
      break;
    }
  }
}

void on_receive(World& w, Message& m) {
  switch (w.protocol()) {
    case ProtocolKind::TwoPhase:
      receive_2pc(w, m);
      break;
    case ProtocolKind::Locks:
    case ProtocolKind::BrokenPreorder:
      receive_locks(w, m);
      break;
    case ProtocolKind::StagedCommit:
      receive_sc(w, m);
      break;
  }
}

namespace {

void advance(World& w, TxnRuntime& t) {
  switch (w.protocol()) {
    case ProtocolKind::TwoPhase:
      advance_2pc(w, t);
      break;
    case ProtocolKind::Locks:
    case ProtocolKind::BrokenPreorder:
      advance_locks(w, t);
      break;
    case ProtocolKind::StagedCommit:
      advance_sc(w, t);
      break;
  }
}

}  // namespace

void on_action(World& w, const LocationId& loc, const Action& a) {
  if (a.op == "print") {
    auto& t = w.txns_.at(a.txn);
    const auto& acc = t.accesses[a.index];
    EventId id = w.emit(EventKind::Local, loc, acc.pc,
                        t.id + ".a" + std::to_string(t.attempt) + ".print.i" +
                            std::to_string(a.index),
                        {a.pred}, std::nullopt, t.id);
    t.last_client_event = id;
    t.next_access = a.index + 1;
    advance(w, t);
    return;
  }
  switch (w.protocol()) {
    case ProtocolKind::TwoPhase:
      action_2pc(w, loc, a);
      break;
    case ProtocolKind::Locks:
    case ProtocolKind::BrokenPreorder:
      action_locks(w, loc, a);
      break;
    case ProtocolKind::StagedCommit:
      action_sc(w, loc, a);
      break;
  }
}

}  // namespace sectx::protocols
