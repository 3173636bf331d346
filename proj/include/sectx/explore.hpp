#ifndef SECTX_EXPLORE_HPP_
#define SECTX_EXPLORE_HPP_

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sectx/netsim.hpp"

namespace sectx::explore {

struct BoundExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Valence of a state with respect to an (earlier, later) transaction pair.
enum class Valence { Bivalent, UnivalentFirst, UnivalentSecond, Unordered };

struct Options {
  int max_transactions = 3;
  /// Bound on nondeterministic input events (start + network delays) each
  /// transaction may accumulate, counted structurally so retries fold.
  int max_nies_per_txn = 16;
  int max_states = 500000;
};

/// Exhaustive search over nondeterministic input event (NIE) firing orders.
/// Each edge fires one NIE (a transaction start or a message delivery) and
/// then runs the deterministic location processing to quiescence. Location
/// queues are FIFO and locations interact only through messages, so delivery
/// order is the only observable nondeterminism, and the ordering decision
/// for any transaction pair is always made by a fired input event. States
/// are merged by canonical hash, which strips retry-attempt markers, so
/// abort/retry loops become cycles.
class Explorer {
 public:
  struct Edge {
    int to = -1;
    std::string event_key;  // attempt-stripped key of the scheduled event
    /// Per ordered transaction pair (dense index i*n+j): does this edge's
    /// event witness First-Precedes-Decision / Decision-Precedes-Second for
    /// orientation "txn i before txn j"?
    std::vector<bool> fpd;
    std::vector<bool> dps;
  };

  struct Node {
    std::optional<netsim::World> world;  // kept for terminals only
    std::vector<Edge> edges;
    bool terminal = false;
    /// Bit (i*n+j): some reachable terminal orders txn i before txn j.
    std::vector<bool> reach;
  };

  Explorer(std::shared_ptr<const scenario::Scenario> scn,
           netsim::ProtocolKind protocol, Options opts = {});

  void explore();

  int root() const { return 0; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<netsim::TxnId>& txns() const { return txn_ids_; }
  std::vector<int> terminals() const;

  Valence classify_valence(int node, int ti, int tj) const;

  struct NecessaryReport {
    bool ok = true;
    std::vector<std::string> violations;
  };
  /// First-Precedes-Decision, Decision-Precedes-Second, and the
  /// decision-before-conflicts lemma, checked against every reachable
  /// ordered terminal by searching all equivalent executions.
  NecessaryReport check_necessary_conditions();

  struct DeadlockReport {
    bool deadlock_free = true;
    std::vector<std::string> problems;
  };
  /// Every terminal committed everything, and a terminal stays reachable
  /// from every state (no stuck branches, no inescapable livelock).
  DeadlockReport check_deadlock_freedom() const;

 private:
  int expand(netsim::World&& w);
  void check_bounds(const netsim::World& w) const;

  std::shared_ptr<const scenario::Scenario> scenario_;
  netsim::ProtocolKind protocol_;
  Options opts_;
  std::vector<netsim::TxnId> txn_ids_;
  std::vector<Node> nodes_;
  std::unordered_map<uint64_t, int> by_hash_;
  bool explored_ = false;
};

}  // namespace sectx::explore

#endif  // SECTX_EXPLORE_HPP_
