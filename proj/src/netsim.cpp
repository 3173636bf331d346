#include "sectx/netsim.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <regex>
#include <sstream>

#include "protocols_internal.hpp"

namespace sectx::netsim {

ProtocolKind protocol_from_string(const std::string& s) {
  if (s == "2pc") return ProtocolKind::TwoPhase;
  if (s == "locks") return ProtocolKind::Locks;
  if (s == "sc") return ProtocolKind::StagedCommit;
  if (s == "broken") return ProtocolKind::BrokenPreorder;
  throw std::invalid_argument("unknown protocol: " + s);
}

const char* protocol_name(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::TwoPhase: return "2pc";
    case ProtocolKind::Locks: return "locks";
    case ProtocolKind::StagedCommit: return "sc";
    case ProtocolKind::BrokenPreorder: return "broken";
  }
  return "?";
}

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string strip_attempt_markers(const std::string& key) {
  std::string out;
  out.reserve(key.size());
  for (size_t i = 0; i < key.size();) {
    if (key[i] == '.' && i + 1 < key.size() && key[i + 1] == 'a' &&
        i + 2 < key.size() && std::isdigit(static_cast<unsigned char>(key[i + 2]))) {
      size_t j = i + 2;
      while (j < key.size() && std::isdigit(static_cast<unsigned char>(key[j]))) {
        j++;
      }
      i = j;
      continue;
    }
    out.push_back(key[i++]);
  }
  return out;
}

World::World(std::shared_ptr<const scenario::Scenario> scn,
             ProtocolKind protocol, uint64_t seed)
    : scenario_(std::move(scn)), protocol_(protocol), seed_(seed) {
  for (const auto& loc : scenario_->locations) {
    locations_.push_back(loc.id);
    queues_[loc.id];
  }
  for (const auto& f : scenario_->fields) {
    fields_[f.id].value = f.init;
  }

  auto ctx = scenario::make_context(*scenario_);
  for (size_t i = 0; i < scenario_->starts.size(); i++) {
    const auto& start = scenario_->starts[i];
    const auto* def = scenario_->find_program(start.program);
    TxnId id = def->name;
    if (txns_.count(id)) id += "#" + std::to_string(i);

    TxnRuntime t;
    t.id = id;
    t.program = def->name;
    t.client = def->location;
    t.principal = def->principal;

    auto prog = scenario::parse(*def);
    auto ann = txdsl::annotate_pc(prog, ctx);
    if (protocol_ == ProtocolKind::StagedCommit) {
      txdsl::StagePlan plan;
      try {
        plan = txdsl::plan_stages(prog, ctx, ann);
        bool symbolic = false;
        for (const auto& st : plan.stages) symbolic |= st.cl.symbolic();
        if (symbolic) {
          plan = txdsl::resolve_dynamic_stagepoints(plan, scenario_->label_vars);
        }
      } catch (const txdsl::StageOrderViolation& e) {
        throw ProtocolRefusal("StagePlanMissing",
                              id + ": " + std::string(e.what()));
      }
      t.accesses = txdsl::plan_accesses(plan);
      t.stage_count = static_cast<int>(plan.stages.size());
      int stage = 0;
      size_t seen = 0;
      for (const auto& st : plan.stages) {
        t.stage_coordinators.push_back(st.coordinator);
        for (size_t k = 0; k < st.accesses.size(); k++) {
          (void)k;
          t.stage_of_access.push_back(stage);
          seen++;
        }
        stage++;
      }
      (void)seen;
    } else {
      t.accesses = txdsl::textual_accesses(prog, ctx, ann);
      t.stage_count = 1;
      t.stage_of_access.assign(t.accesses.size(), 0);
    }

    txn_order_.push_back(id);
    txns_.emplace(id, std::move(t));

    NIE n;
    n.id = static_cast<int>(nies_.size());
    n.is_start = true;
    n.txn = id;
    n.due = start.time;
    nies_.push_back(n);
  }

  protocols::init_world(*this);
}

EventId World::emit(EventKind kind, const LocationId& loc, const Label& label,
                    std::string key, const std::vector<EventId>& preds,
                    const std::optional<FieldId>& field,
                    const std::optional<TxnId>& txn) {
  model::Event e;
  e.key = std::move(key);
  e.location = loc;
  e.label = label;
  e.kind = kind;
  e.field = field;
  e.txn = txn;
  std::vector<EventId> uniq;
  for (EventId p : preds) {
    if (p >= 0 && std::find(uniq.begin(), uniq.end(), p) == uniq.end()) {
      uniq.push_back(p);
    }
  }
  EventId id = state_.add_event(std::move(e), uniq);
  if (txn) {
    auto& t = txns_.at(*txn);
    t.events.insert(id);
    t.stage_events.push_back(id);
  }
  if (kind == EventKind::Abort) {
    metrics_.aborts_by_observer_label[label.str()]++;
  }

  if (explore_mode_) return id;
  nlohmann::json edges = nlohmann::json::array();
  for (EventId p : uniq) edges.push_back({p, id});
  trace_.push_back({{"step", trace_.size()},
                    {"event",
                     {{"id", id},
                      {"kind", model::kind_name(kind)},
                      {"loc", loc},
                      {"label", label.str()},
                      {"txn", txn ? nlohmann::json(*txn) : nlohmann::json()}}},
                    {"hb_new_edges", edges}});
  return id;
}

void World::queue_action(const LocationId& loc, Action a) {
  queues_.at(loc).push_back(std::move(a));
}

int World::queue_send(const LocationId& from, const LocationId& to,
                      const Label& label, Payload payload, EventId pred) {
  Message m;
  m.id = next_message_id_++;
  m.from = from;
  m.to = to;
  m.label = label;
  std::ostringstream k;
  k << payload.txn << ".a" << payload.attempt << "." << payload.op;
  if (payload.stage >= 0) k << ".s" << payload.stage;
  if (payload.index >= 0) k << ".i" << payload.index;
  if (!payload.field.empty()) k << "." << payload.field;
  k << "." << from << ">" << to;
  m.key = k.str();
  m.payload = std::move(payload);
  int id = m.id;
  messages_.emplace(id, std::move(m));

  Action a;
  a.op = "send";
  a.message_id = id;
  a.pred = pred;
  queue_action(from, std::move(a));
  return id;
}

void World::mark_aborted(TxnId txn, const std::vector<EventId>& events) {
  auto& t = txns_.at(txn);
  for (EventId id : events) {
    state_.mutable_event(id).aborted = true;
    t.events.erase(id);
  }
}

int64_t World::delay_for(const std::string& channel) {
  if (explore_mode_) return 0;
  uint64_t n = static_cast<uint64_t>(channel_counters_[channel]++);
  uint64_t r = splitmix64(seed_ ^ fnv1a(channel) ^ (n * 0x9e3779b97f4a7c15ull));
  return 1 + static_cast<int64_t>(r % 5);
}

void World::fire_nie(int nie_id) {
  NIE& n = nies_.at(nie_id);
  n.fired = true;
  if (n.is_start) {
    auto& t = txns_.at(n.txn);
    std::vector<EventId> preds;
    if (decide_event_ >= 0) preds.push_back(decide_event_);
    EventId id = emit(EventKind::Start, t.client,
                      Label::bottom(scenario_->principals), t.id + ".start",
                      preds, std::nullopt, t.id);
    t.start_event = id;
    t.last_client_event = id;
    protocols::on_start(*this, t);
  } else {
    Message& m = messages_.at(n.message_id);
    m.delay_event = emit(EventKind::NetworkDelay, m.to, m.label,
                         m.key + ".delay", {m.send_event}, std::nullopt,
                         m.payload.txn.empty()
                             ? std::nullopt
                             : std::optional<TxnId>(m.payload.txn));
    if (m.payload.dead) mark_aborted(m.payload.txn, {m.delay_event});
    Action a;
    a.op = "deliver";
    a.message_id = m.id;
    a.pred = m.delay_event;
    queue_action(m.to, std::move(a));
  }
}

void World::process_action(const LocationId& loc, const Action& a) {
  if (a.op == "send") {
    Message& m = messages_.at(a.message_id);
    m.send_event = emit(EventKind::Send, m.from, m.label, m.key + ".send",
                        {a.pred}, std::nullopt,
                        m.payload.txn.empty()
                            ? std::nullopt
                            : std::optional<TxnId>(m.payload.txn));
    if (m.payload.dead) mark_aborted(m.payload.txn, {m.send_event});
    NIE n;
    n.id = static_cast<int>(nies_.size());
    n.message_id = m.id;
    n.due = now_ + delay_for(m.from + ">" + m.to);
    nies_.push_back(n);
  } else if (a.op == "deliver") {
    Message& m = messages_.at(a.message_id);
    m.receive_event = emit(EventKind::Receive, m.to, m.label, m.key + ".recv",
                           {m.delay_event}, std::nullopt,
                           m.payload.txn.empty()
                               ? std::nullopt
                               : std::optional<TxnId>(m.payload.txn));
    if (m.payload.dead) mark_aborted(m.payload.txn, {m.receive_event});
    protocols::on_receive(*this, m);
  } else {
    protocols::on_action(*this, loc, a);
  }
}

bool World::step() {
  for (;;) {
    int best = -1;
    for (const NIE& n : nies_) {
      if (n.fired || n.due > now_) continue;
      if (best < 0 || n.due < nies_[best].due ||
          (n.due == nies_[best].due && n.id < nies_[best].id)) {
        best = n.id;
      }
    }
    if (best >= 0) {
      fire_nie(best);
      return true;
    }
    for (size_t i = 0; i < locations_.size(); i++) {
      size_t idx = (poll_cursor_ + i) % locations_.size();
      auto& q = queues_.at(locations_[idx]);
      if (!q.empty()) {
        Action a = std::move(q.front());
        q.pop_front();
        poll_cursor_ = (idx + 1) % locations_.size();
        process_action(locations_[idx], a);
        return true;
      }
    }
    int64_t next_due = -1;
    for (const NIE& n : nies_) {
      if (n.fired) continue;
      if (next_due < 0 || n.due < next_due) next_due = n.due;
    }
    if (next_due < 0) return false;
    now_ = next_due;
  }
}

bool World::run_to_quiescence(int64_t max_steps) {
  for (int64_t i = 0; i < max_steps; i++) {
    if (!step()) return true;
  }
  return !step();
}

std::vector<int> World::enabled_nies() const {
  std::vector<int> out;
  for (const NIE& n : nies_) {
    if (!n.fired) out.push_back(n.id);
  }
  return out;
}

bool World::advance_one_event() {
  size_t before = state_.size();
  for (;;) {
    bool progressed = false;
    for (size_t i = 0; i < locations_.size(); i++) {
      size_t idx = (poll_cursor_ + i) % locations_.size();
      auto& q = queues_.at(locations_[idx]);
      if (!q.empty()) {
        Action a = std::move(q.front());
        q.pop_front();
        poll_cursor_ = (idx + 1) % locations_.size();
        process_action(locations_[idx], a);
        progressed = true;
        break;
      }
    }
    if (state_.size() > before) return true;
    if (!progressed) return false;
  }
}

void World::run_closure() {
  for (;;) {
    bool progressed = false;
    for (size_t i = 0; i < locations_.size(); i++) {
      size_t idx = (poll_cursor_ + i) % locations_.size();
      auto& q = queues_.at(locations_[idx]);
      if (!q.empty()) {
        Action a = std::move(q.front());
        q.pop_front();
        poll_cursor_ = (idx + 1) % locations_.size();
        process_action(locations_[idx], a);
        progressed = true;
        break;
      }
    }
    if (!progressed) return;
  }
}

bool World::quiescent() const {
  for (const NIE& n : nies_) {
    if (!n.fired) return false;
  }
  for (const auto& [loc, q] : queues_) {
    if (!q.empty()) return false;
  }
  return true;
}

bool World::all_committed() const {
  for (const auto& [id, t] : txns_) {
    if (t.phase != TxnPhase::Committed) return false;
  }
  return true;
}

std::vector<model::Transaction> World::transactions() const {
  std::vector<model::Transaction> out;
  for (const TxnId& id : txn_order_) {
    const auto& t = txns_.at(id);
    model::Transaction txn;
    txn.id = id;
    txn.start = t.start_event;
    // The transaction-as-analyzed is its application events; commit and
    // message traffic are protocol machinery and stay out of the event set.
    for (EventId e : t.events) {
      switch (state_.event(e).kind) {
        case EventKind::Start:
        case EventKind::Read:
        case EventKind::Write:
        case EventKind::Local:
          txn.events.insert(e);
          break;
        default:
          break;
      }
    }
    out.push_back(std::move(txn));
  }
  return out;
}

std::string World::canonical_key() const {
  std::ostringstream os;

  std::vector<std::string> live;
  std::map<EventId, std::string> stripped;
  for (const auto& e : state_.events()) {
    if (e.aborted) continue;
    stripped[e.id] = strip_attempt_markers(e.key);
    live.push_back(stripped[e.id] + "|" + model::kind_name(e.kind) + "|" +
                   e.location + "|" + e.label.str());
  }
  std::sort(live.begin(), live.end());
  os << "ev:";
  for (const auto& s : live) os << s << ";";

  // Causal order among live events, taken as the closure so that chains
  // running through aborted retry attempts still count; each event gets a
  // digest of its live ancestors.
  std::vector<std::string> order;
  for (const auto& [id, key] : stripped) {
    std::vector<std::string> anc;
    for (const auto& [aid, akey] : stripped) {
      if (aid >= id) break;  // edges point from lower to higher ids
      if (state_.happens_before(aid, id)) anc.push_back(akey);
    }
    std::sort(anc.begin(), anc.end());
    std::string blob;
    for (const auto& a : anc) {
      blob += a;
      blob += ';';
    }
    std::ostringstream digest;
    digest << std::hex << fnv1a(blob);
    order.push_back(key + "<" + digest.str());
  }
  std::sort(order.begin(), order.end());
  os << "\nhb:";
  for (const auto& s : order) os << s << ";";

  auto ref = [&](EventId id) {
    return id >= 0 && stripped.count(id) ? stripped.at(id) : std::string("-");
  };
  os << "\nfs:";
  for (const auto& [id, fs] : fields_) {
    os << id << "=" << fs.value << ",v" << fs.version << ",w"
       << ref(fs.last_write_event) << ",r[";
    for (EventId r : fs.reads_since_write) {
      if (stripped.count(r)) os << stripped.at(r) << " ";
    }
    os << "],rl[";
    for (const auto& [t, c] : fs.read_lockers) os << t << " ";
    os << "],wl" << (fs.write_locker ? *fs.write_locker : "-") << ",sl"
       << (fs.stage_lock ? *fs.stage_lock : "-") << ",pc"
       << (fs.precommit_holder ? *fs.precommit_holder : "-") << ";";
  }

  os << "\nlk:";
  for (const auto& [key, lk] : locks_) {
    os << key << "=" << (lk.holder ? *lk.holder : "-") << "," << lk.reentry
       << ",[";
    for (int mid : lk.waiters) os << strip_attempt_markers(messages_.at(mid).key) << " ";
    os << "];";
  }

  os << "\ntx:";
  for (const TxnId& id : txn_order_) {
    const auto& t = txns_.at(id);
    os << id << "=" << static_cast<int>(t.phase) << ",s" << t.current_stage
       << ",n" << t.next_access << ",vp" << t.votes_pending << ",vf"
       << t.vote_failed << ",p" << t.parked << ",env[";
    for (const auto& [k, v] : t.env) os << k << "=" << v << " ";
    os << "];";
  }

  os << "\nq:";
  for (const auto& loc : locations_) {
    os << loc << "[";
    for (const Action& a : queues_.at(loc)) {
      os << a.op << ",";
      if (a.message_id >= 0) os << strip_attempt_markers(messages_.at(a.message_id).key);
      os << "," << a.txn << ",s" << a.stage << ",i" << a.index << " ";
    }
    os << "];";
  }

  os << "\ncur:" << (locations_.empty() ? 0 : poll_cursor_ % locations_.size());

  os << "\nsc:";
  for (const auto& [k, v] : sc_pc_done_) {
    if (v) os << strip_attempt_markers(k) << ";";
  }
  os << "|";
  for (const auto& [k, mid] : sc_parked_commit_) {
    os << strip_attempt_markers(k) << "=" << strip_attempt_markers(messages_.at(mid).key)
       << ";";
  }

  // Undelivered messages of aborted attempts are folded into a set: their
  // delivery is a state no-op, and each failed attempt leaves one behind,
  // which would otherwise keep retry states from ever matching.
  os << "\nnie:";
  std::vector<std::string> pending;
  for (const NIE& n : nies_) {
    if (n.fired) continue;
    if (n.is_start) {
      pending.push_back("start:" + n.txn);
      continue;
    }
    const Message& m = messages_.at(n.message_id);
    pending.push_back((m.payload.dead ? "dead:" : "") +
                      strip_attempt_markers(m.key));
  }
  std::sort(pending.begin(), pending.end());
  pending.erase(std::unique(pending.begin(), pending.end(),
                            [](const std::string& a, const std::string& b) {
                              return a == b && a.rfind("dead:", 0) == 0;
                            }),
                pending.end());
  for (const auto& s : pending) os << s << ";";

  return os.str();
}

uint64_t World::canonical_hash() const { return fnv1a(canonical_key()); }

int64_t default_max_steps() {
  if (const char* env = std::getenv("SECTX_MAX_STEPS")) {
    return std::max<int64_t>(1, std::atoll(env));
  }
  return 20000;
}

}  // namespace sectx::netsim
