#ifndef SECTX_NETSIM_HPP_
#define SECTX_NETSIM_HPP_

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sectx/model.hpp"
#include "sectx/scenario.hpp"
#include "sectx/txdsl.hpp"

namespace sectx::netsim {

using lattice::Label;
using model::EventId;
using model::EventKind;
using model::FieldId;
using model::LocationId;
using model::TxnId;

enum class ProtocolKind { TwoPhase, Locks, StagedCommit, BrokenPreorder };

ProtocolKind protocol_from_string(const std::string& s);
const char* protocol_name(ProtocolKind k);

/// Thrown when a protocol refuses a transaction before scheduling anything.
struct ProtocolRefusal : std::runtime_error {
  ProtocolRefusal(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind(std::move(kind)) {}
  std::string kind;  // "NonMonotonicTransaction" or "StagePlanMissing"
};

struct Payload {
  std::string op;  // protocol-defined
  TxnId txn;
  int stage = -1;
  int attempt = 0;
  int index = -1;  // access index within the transaction or stage
  FieldId field;
  std::string value;
  bool ok = true;
  /// Conflict label of the requesting context (principals of the pc);
  /// aborts caused by this context inherit it.
  lattice::ConflictLabel ctx;
  /// Message belongs to an already-aborted attempt; its events are emitted
  /// for the trace but immediately marked aborted.
  bool dead = false;
};

struct Message {
  int id = -1;
  LocationId from;
  LocationId to;
  Label label;
  Payload payload;
  /// Structural identity, stable across interleavings.
  std::string key;
  EventId send_event = -1;
  EventId delay_event = -1;
  EventId receive_event = -1;
};

struct NIE {
  int id = -1;
  bool is_start = false;
  TxnId txn;            // start NIEs
  int message_id = -1;  // delay NIEs
  int64_t due = 0;
  bool fired = false;
};

/// One pending unit of work at a location. Processing an action emits
/// exactly one event and then runs protocol logic.
struct Action {
  std::string op;
  TxnId txn;
  int message_id = -1;
  int stage = -1;
  int index = -1;
  FieldId field;
  std::string value;
  EventId pred = -1;  // causal predecessor of the emitted event
};

enum class TxnPhase { Pending, Running, Preparing, Committing, Committed, Aborted };

struct TxnRuntime {
  TxnId id;
  std::string program;
  LocationId client;
  lattice::Principal principal;
  TxnPhase phase = TxnPhase::Pending;
  std::vector<txdsl::StageAccess> accesses;  // flattened execution order
  std::vector<int> stage_of_access;          // parallel to accesses
  int stage_count = 1;
  std::vector<LocationId> stage_coordinators;
  int next_access = 0;
  int current_stage = 0;
  int attempt = 0;  // per-stage retry counter (staged commit)
  std::map<std::string, std::string> env;
  EventId start_event = -1;
  EventId last_client_event = -1;
  std::set<EventId> events;          // live (non-aborted) events
  std::vector<EventId> stage_events;  // events of the in-progress stage/attempt
  /// Client event at which each stage's precommit became unconditional; the
  /// final commit notification for a stage depends only on this, never on
  /// later (higher) stages.
  std::vector<EventId> stage_decision;
  // 2PC / per-stage commit bookkeeping
  std::vector<LocationId> participants;
  int votes_pending = 0;
  bool vote_failed = false;
  lattice::ConflictLabel fail_ctx;  // context that caused the failed vote
  std::vector<std::string> held_locks;  // lock keys, acquisition order
  bool parked = false;  // broken pre-ordering protocol holds the txn back
};

struct FieldState {
  std::string value;
  int64_t version = 0;
  EventId last_write_event = -1;
  std::vector<EventId> reads_since_write;
  // 2PC prepare-to-commit locks, with the contexts that took them
  std::map<TxnId, lattice::ConflictLabel> read_lockers;
  std::optional<TxnId> write_locker;
  lattice::ConflictLabel write_ctx;
  // staged commit: no-wait prepare lock and precommitted uncommitted claim.
  // The attempt tag keeps a late abort of a failed attempt from releasing
  // locks the retry has already re-taken.
  std::optional<TxnId> stage_lock;
  int stage_lock_attempt = 0;
  std::optional<TxnId> precommit_holder;
};

struct LockState {
  LocationId location;
  Label label;
  std::optional<TxnId> holder;
  int reentry = 0;
  std::deque<int> waiters;  // parked request message ids, FIFO
  EventId last_event = -1;  // tail of the lock's hb chain
};

struct Metrics {
  std::map<TxnId, int> stages_precommitted;
  std::map<TxnId, int> prepare_round_trips;
  std::map<std::string, int> aborts_by_observer_label;
  int commits = 0;
};

class World {
 public:
  World(std::shared_ptr<const scenario::Scenario> scn, ProtocolKind protocol,
        uint64_t seed);

  /// Runs one scheduling step: a due NIE if any, else the next location's
  /// pending action. Returns false when quiescent.
  bool step();

  /// Steps until quiescent or max_steps. Returns true on quiescence.
  bool run_to_quiescence(int64_t max_steps);

  /// Exploration interface: NIEs become explicit choices instead of timed.
  std::vector<int> enabled_nies() const;
  void fire_nie(int nie_id);
  /// Drains every location queue deterministically (no NIE firing).
  void run_closure();
  /// Processes queued actions (round-robin) until exactly one event is
  /// emitted or the queues drain; the explorer's deterministic move.
  /// Returns true iff an event was emitted.
  bool advance_one_event();

  /// State identity across interleavings; retry attempts are folded
  /// together so abort-retry loops form cycles instead of fresh states.
  uint64_t canonical_hash() const;
  std::string canonical_key() const;

  bool quiescent() const;
  bool all_committed() const;

  const model::SystemState& state() const { return state_; }
  std::vector<model::Transaction> transactions() const;
  const Metrics& metrics() const { return metrics_; }
  const nlohmann::json& trace() const { return trace_; }
  const scenario::Scenario& scn() const { return *scenario_; }
  ProtocolKind protocol() const { return protocol_; }

  // --- protocol-facing internals (protocols.cpp drives these) ---
  EventId emit(EventKind kind, const LocationId& loc, const Label& label,
               std::string key, const std::vector<EventId>& preds,
               const std::optional<FieldId>& field = std::nullopt,
               const std::optional<TxnId>& txn = std::nullopt);
  void queue_action(const LocationId& loc, Action a);
  int queue_send(const LocationId& from, const LocationId& to,
                 const Label& label, Payload payload, EventId pred);
  void mark_aborted(TxnId txn, const std::vector<EventId>& events);

  std::shared_ptr<const scenario::Scenario> scenario_;
  ProtocolKind protocol_;
  uint64_t seed_;
  int64_t now_ = 0;
  bool explore_mode_ = false;

  model::SystemState state_;
  std::map<TxnId, TxnRuntime> txns_;
  std::vector<TxnId> txn_order_;  // scenario start order
  std::map<FieldId, FieldState> fields_;
  std::map<std::string, LockState> locks_;  // key "loc|label"
  std::map<int, Message> messages_;
  std::vector<NIE> nies_;
  std::vector<LocationId> locations_;  // polling order
  std::map<LocationId, std::deque<Action>> queues_;
  size_t poll_cursor_ = 0;
  int next_message_id_ = 0;
  std::map<std::string, int64_t> channel_counters_;
  struct ReadRecord {
    int64_t version = 0;
    lattice::ConflictLabel ctx;
    int stage = -1;
    int attempt = 0;
  };
  std::map<TxnId, std::map<FieldId, ReadRecord>> read_versions_;
  struct BufferedWrite {
    FieldId field;
    std::string value;
    lattice::ConflictLabel ctx;
    int stage = -1;
    int attempt = 0;
  };
  std::map<TxnId, std::vector<BufferedWrite>> write_buffers_;
  /// Staged commit: commit messages may overtake the stage's precommit in
  /// the network; the store parks them until the precommit has landed.
  /// Keyed by "txn|stage|store".
  std::map<std::string, bool> sc_pc_done_;
  std::map<std::string, int> sc_parked_commit_;
  /// Root event of the broken pre-ordering protocol; -1 otherwise.
  EventId decide_event_ = -1;
  Metrics metrics_;
  nlohmann::json trace_ = nlohmann::json::array();

 private:
  void process_action(const LocationId& loc, const Action& a);
  int64_t delay_for(const std::string& channel);
};

int64_t default_max_steps();

/// Removes retry-attempt markers (".a<n>") from a structural key, giving the
/// identity used for canonical state comparison across attempts.
std::string strip_attempt_markers(const std::string& key);

}  // namespace sectx::netsim

#endif  // SECTX_NETSIM_HPP_
