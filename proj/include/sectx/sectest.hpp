#ifndef SECTX_SECTEST_HPP_
#define SECTX_SECTEST_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sectx/netsim.hpp"

namespace sectx::sectest {

using lattice::Label;
using lattice::Principal;

/// What a principal may observe: everything whose label flows to theirs.
Label observer_label(const Principal& p);

/// Schedule-ordered view of one execution restricted to an observer.
struct LowProjection {
  Label observer;

  struct Item {
    std::string key;
    model::EventKind kind = model::EventKind::Local;
    model::LocationId location;
    std::string label;

    bool operator==(const Item&) const = default;
    std::string str() const;
  };

  std::vector<Item> events;
  /// Sub-projection of the nondeterministic input events.
  std::vector<Item> nies;

  bool operator==(const LowProjection&) const = default;
};

LowProjection low_projection(const netsim::World& w, const Label& observer);

/// Relaxed observational determinism over matched seeds: for every seed the
/// observer's projection must be identical across all secret variants.
struct RodReport {
  bool pass = true;
  std::string scenario;
  std::string protocol;
  std::string observer;
  std::vector<std::string> variants;
  int seeds = 0;

  struct Divergence {
    uint64_t seed = 0;
    int step = -1;
    std::string variant_a;
    std::string variant_b;
    std::string event_a;  // "(end)" when one projection is a prefix
    std::string event_b;
  };
  std::optional<Divergence> divergence;
  nlohmann::json per_seed = nlohmann::json::array();

  nlohmann::json to_json() const;
};

RodReport rod_check(std::shared_ptr<const scenario::Scenario> scn,
                    netsim::ProtocolKind protocol, const Label& observer,
                    const std::vector<std::string>& variants, int seeds);

/// Abort-channel measurement: how often the attacker observes an abort,
/// per secret variant, over matched seeds.
struct ProbeReport {
  std::string scenario;
  std::string protocol;
  Principal attacker;
  int trials = 0;
  std::map<std::string, int> aborts_by_secret;
  std::map<std::string, double> abort_rate_by_secret;
  /// Per seed, the attacker's projections are identical across variants
  /// (stronger than rate equality).
  bool per_seed_identical = true;
  nlohmann::json per_seed = nlohmann::json::array();

  nlohmann::json to_json() const;
};

ProbeReport abort_channel_probe(std::shared_ptr<const scenario::Scenario> scn,
                                netsim::ProtocolKind protocol,
                                const Principal& attacker, int trials);

/// Communication-wall counterexample: the transactions are individually
/// secure but not relaxed-monotonic, and no deterministic wall-respecting
/// protocol within the bound schedules them consistently and live.
struct ImpossibilityReport {
  std::string scenario;
  int bound = 0;
  bool transactions_secure = false;
  std::map<std::string, bool> relaxed_monotonic;  // per transaction
  bool staged_commit_rejects = false;
  /// Locations able to host the join of the two transaction labels (where
  /// ordering information may live), and whether the wall separates them.
  std::vector<model::LocationId> coordination_locations;
  bool coordination_walled = false;

  struct CandidateResult {
    std::string policy;
    std::string failure;  // nonempty: first witnessed violation
  };
  std::vector<CandidateResult> candidates;
  bool every_candidate_fails = false;

  bool confirmed() const {
    return transactions_secure && staged_commit_rejects &&
           coordination_walled && every_candidate_fails;
  }

  nlohmann::json to_json() const;
};

ImpossibilityReport impossibility_demo(const scenario::Scenario& scn,
                                       int bound);

}  // namespace sectx::sectest

#endif  // SECTX_SECTEST_HPP_
