#include "sectx/explore.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace sectx::explore {

using netsim::World;

Explorer::Explorer(std::shared_ptr<const scenario::Scenario> scn,
                   netsim::ProtocolKind protocol, Options opts)
    : scenario_(std::move(scn)), protocol_(protocol), opts_(opts) {}

void Explorer::check_bounds(const World& w) const {
  if (static_cast<int>(w.txn_order_.size()) > opts_.max_transactions) {
    throw BoundExceeded("scenario has " +
                        std::to_string(w.txn_order_.size()) +
                        " transactions; explorer bound is " +
                        std::to_string(opts_.max_transactions));
  }
  std::map<netsim::TxnId, std::set<std::string>> nies;
  for (const auto& n : w.nies_) {
    if (n.is_start) {
      nies[n.txn].insert("start");
    } else {
      const auto& m = w.messages_.at(n.message_id);
      if (!m.payload.txn.empty()) {
        nies[m.payload.txn].insert(netsim::strip_attempt_markers(m.key));
      }
    }
  }
  for (const auto& [txn, keys] : nies) {
    if (static_cast<int>(keys.size()) > opts_.max_nies_per_txn) {
      throw BoundExceeded(txn + " exceeds " +
                          std::to_string(opts_.max_nies_per_txn) +
                          " nondeterministic input events");
    }
  }
}

namespace {

// FPD / DPS witness bits for the event just scheduled (the last event of
// the child state). FPD for (first, second): the event belongs to or is
// happens-before-reachable from the first transaction. DPS for (first,
// second): no event of the second transaction precedes it.
void edge_bits(const World& w, const std::vector<netsim::TxnId>& txn_ids,
               Explorer::Edge& e, netsim::EventId ed) {
  const int n = static_cast<int>(txn_ids.size());
  e.fpd.assign(n * n, false);
  e.dps.assign(n * n, false);
  if (ed < 0 || ed >= static_cast<netsim::EventId>(w.state_.size())) return;
  for (int a = 0; a < n; a++) {
    const auto& ta = w.txns_.at(txn_ids[a]);
    bool in_or_after_a = w.state_.event(ed).txn == txn_ids[a];
    if (!in_or_after_a) {
      for (netsim::EventId e1 : ta.events) {
        if (w.state_.happens_before(e1, ed)) {
          in_or_after_a = true;
          break;
        }
      }
    }
    bool a_before_ed = false;
    for (netsim::EventId e2 : ta.events) {
      if (e2 != ed && w.state_.happens_before(e2, ed)) {
        a_before_ed = true;
        break;
      }
    }
    for (int b = 0; b < n; b++) {
      if (a == b) continue;
      e.fpd[a * n + b] = in_or_after_a;
      e.dps[b * n + a] = !a_before_ed;
    }
  }
}

}  // namespace

// Depth-first so that worlds live only on the expansion stack; only
// terminal states keep their world for outcome evaluation.
int Explorer::expand(World&& w) {
  uint64_t h = w.canonical_hash();
  auto it = by_hash_.find(h);
  if (it != by_hash_.end()) return it->second;
  check_bounds(w);
  if (static_cast<int>(nodes_.size()) >= opts_.max_states) {
    throw BoundExceeded("state bound of " + std::to_string(opts_.max_states) +
                        " reached");
  }
  int idx = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  by_hash_.emplace(h, idx);

  std::vector<int> moves = w.enabled_nies();
  if (moves.empty()) {
    nodes_[idx].terminal = true;
    nodes_[idx].world.emplace(std::move(w));
    return idx;
  }

  size_t before = w.state_.size();
  std::vector<Edge> edges;
  for (int nie : moves) {
    World child = w;
    child.fire_nie(nie);
    child.run_closure();
    Edge e;
    e.event_key = netsim::strip_attempt_markers(
        child.state_.event(static_cast<netsim::EventId>(before)).key);
    edge_bits(child, txn_ids_, e, static_cast<netsim::EventId>(before));
    e.to = expand(std::move(child));
    edges.push_back(std::move(e));
  }
  nodes_[idx].edges = std::move(edges);
  return idx;
}

void Explorer::explore() {
  World root(scenario_, protocol_, 0);
  root.explore_mode_ = true;
  root.run_closure();
  txn_ids_ = root.txn_order_;
  const int n = static_cast<int>(txn_ids_.size());

  expand(std::move(root));

  // Terminal outcomes, then backward fixpoint of reachable orders.
  std::vector<std::vector<int>> rev(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); i++) {
    nodes_[i].reach.assign(n * n, false);
    for (const auto& e : nodes_[i].edges) rev[e.to].push_back(static_cast<int>(i));
  }
  std::deque<int> work;
  for (size_t i = 0; i < nodes_.size(); i++) {
    if (!nodes_[i].terminal) continue;
    const World& w = *nodes_[i].world;
    auto txns = w.transactions();
    for (int a = 0; a < n; a++) {
      for (int b = 0; b < n; b++) {
        if (a != b &&
            model::transaction_precedes(w.state(), txns[a], txns[b], txns)) {
          nodes_[i].reach[a * n + b] = true;
        }
      }
    }
    work.push_back(static_cast<int>(i));
  }
  while (!work.empty()) {
    int i = work.front();
    work.pop_front();
    for (int p : rev[i]) {
      bool changed = false;
      for (int k = 0; k < n * n; k++) {
        if (nodes_[i].reach[k] && !nodes_[p].reach[k]) {
          nodes_[p].reach[k] = true;
          changed = true;
        }
      }
      if (changed) work.push_back(p);
    }
  }
  explored_ = true;
}

std::vector<int> Explorer::terminals() const {
  std::vector<int> out;
  for (size_t i = 0; i < nodes_.size(); i++) {
    if (nodes_[i].terminal) out.push_back(static_cast<int>(i));
  }
  return out;
}

Valence Explorer::classify_valence(int node, int ti, int tj) const {
  const int n = static_cast<int>(txn_ids_.size());
  bool first = nodes_.at(node).reach[ti * n + tj];
  bool second = nodes_.at(node).reach[tj * n + ti];
  if (first && second) return Valence::Bivalent;
  if (first) return Valence::UnivalentFirst;
  if (second) return Valence::UnivalentSecond;
  return Valence::Unordered;
}

Explorer::NecessaryReport Explorer::check_necessary_conditions() {
  NecessaryReport report;
  const int n = static_cast<int>(txn_ids_.size());

  // Reverse adjacency for per-terminal co-reachability.
  std::vector<std::vector<int>> rev(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); i++) {
    for (const auto& e : nodes_[i].edges) rev[e.to].push_back(static_cast<int>(i));
  }
  auto co_reachable = [&](int terminal) {
    std::vector<bool> seen(nodes_.size(), false);
    std::deque<int> work = {terminal};
    seen[terminal] = true;
    while (!work.empty()) {
      int i = work.front();
      work.pop_front();
      for (int p : rev[i]) {
        if (!seen[p]) {
          seen[p] = true;
          work.push_back(p);
        }
      }
    }
    return seen;
  };

  for (int a = 0; a < n; a++) {
    for (int b = 0; b < n; b++) {
      if (a == b) continue;
      const int pair = a * n + b;
      for (int term : terminals()) {
        if (!nodes_[term].reach[pair]) continue;
        auto seen = co_reachable(term);

        // Candidate decision events: edges crossing from a bivalent state
        // into a state univalent for this orientation, on some execution
        // ending in this terminal.
        bool fpd = false, dps = false, lemma = false;
        const World& tw = *nodes_[term].world;
        auto txns = tw.transactions();
        std::vector<netsim::EventId> conflicting;
        for (netsim::EventId e1 : txns[a].events) {
          for (netsim::EventId e2 : txns[b].events) {
            if (model::events_conflict(tw.state().event(e1),
                                       tw.state().event(e2))) {
              conflicting.push_back(e1);
              conflicting.push_back(e2);
            }
          }
        }
        std::sort(conflicting.begin(), conflicting.end());
        conflicting.erase(
            std::unique(conflicting.begin(), conflicting.end()),
            conflicting.end());

        // A decision event may be a conflicting event itself: if one
        // conflicting event precedes all the others, its scheduling is what
        // fixed the order, and it vacuously precedes the rest.
        for (netsim::EventId ec : conflicting) {
          bool min = true;
          for (netsim::EventId ec2 : conflicting) {
            if (ec2 != ec && !tw.state().happens_before(ec, ec2)) {
              min = false;
              break;
            }
          }
          if (min) {
            lemma = true;
            break;
          }
        }

        for (size_t i = 0; i < nodes_.size() && !(fpd && dps && lemma); i++) {
          if (classify_valence(static_cast<int>(i), a, b) != Valence::Bivalent) {
            continue;
          }
          for (const auto& e : nodes_[i].edges) {
            if (!seen[e.to]) continue;
            if (classify_valence(e.to, a, b) != Valence::UnivalentFirst) {
              continue;
            }
            fpd = fpd || e.fpd[pair];
            dps = dps || e.dps[pair];
            if (!lemma && !e.event_key.empty()) {
              netsim::EventId ed = -1;
              for (const auto& ev : tw.state().events()) {
                if (!ev.aborted &&
                    netsim::strip_attempt_markers(ev.key) == e.event_key) {
                  ed = ev.id;
                  break;
                }
              }
              if (ed >= 0) {
                bool ok = true;
                for (netsim::EventId ec : conflicting) {
                  if (ec != ed && !tw.state().happens_before(ed, ec)) {
                    ok = false;
                    break;
                  }
                }
                lemma = lemma || ok;
              }
            }
          }
        }

        auto describe = [&](const char* what) {
          report.violations.push_back(
              std::string(what) + " has no witness execution for " +
              txn_ids_[a] + " before " + txn_ids_[b] + " at terminal state " +
              std::to_string(term));
        };
        if (!fpd) describe("First-Precedes-Decision");
        if (!dps) describe("Decision-Precedes-Second");
        if (!lemma) describe("decision-before-conflicting-events");
      }
    }
  }
  report.ok = report.violations.empty();
  return report;
}

Explorer::DeadlockReport Explorer::check_deadlock_freedom() const {
  DeadlockReport report;
  auto terms = terminals();
  if (terms.empty()) {
    report.deadlock_free = false;
    report.problems.push_back("no terminal state reachable");
    return report;
  }
  for (int t : terms) {
    if (!nodes_[t].world->all_committed()) {
      report.deadlock_free = false;
      report.problems.push_back("terminal state " + std::to_string(t) +
                                " did not commit every transaction");
    }
  }
  std::vector<std::vector<int>> rev(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); i++) {
    for (const auto& e : nodes_[i].edges) rev[e.to].push_back(static_cast<int>(i));
  }
  std::vector<bool> seen(nodes_.size(), false);
  std::deque<int> work(terms.begin(), terms.end());
  for (int t : terms) seen[t] = true;
  while (!work.empty()) {
    int i = work.front();
    work.pop_front();
    for (int p : rev[i]) {
      if (!seen[p]) {
        seen[p] = true;
        work.push_back(p);
      }
    }
  }
  for (size_t i = 0; i < nodes_.size(); i++) {
    if (!seen[i]) {
      report.deadlock_free = false;
      report.problems.push_back("state " + std::to_string(i) +
                                " cannot reach any terminal");
    }
  }
  return report;
}

}  // namespace sectx::explore
