#include "sectx/sectest.hpp"

#include <algorithm>
#include <stdexcept>

#include "sectx/explore.hpp"

namespace sectx::sectest {

using model::EventKind;
using model::SystemState;
using model::Transaction;
using netsim::World;
using scenario::Scenario;

Label observer_label(const Principal& p) { return Label({p}, {p}); }

std::string LowProjection::Item::str() const {
  return key + "|" + model::kind_name(kind) + "|" + location + "|" + label;
}

LowProjection low_projection(const World& w, const Label& observer) {
  LowProjection out;
  out.observer = observer;
  for (const auto& e : w.state().events()) {
    if (!lattice::flows_to(e.label, observer)) continue;
    LowProjection::Item item{e.key, e.kind, e.location, e.label.str()};
    if (model::is_nie(e.kind)) out.nies.push_back(item);
    out.events.push_back(std::move(item));
  }
  return out;
}

namespace {

World run_variant(std::shared_ptr<const Scenario> scn,
                  const std::string& variant, netsim::ProtocolKind protocol,
                  uint64_t seed) {
  auto s = scn;
  if (!variant.empty()) {
    s = std::make_shared<const Scenario>(scenario::apply_variant(*scn, variant));
  }
  World w(s, protocol, seed);
  if (!w.run_to_quiescence(netsim::default_max_steps())) {
    throw std::runtime_error(scn->name + " variant '" + variant +
                             "' did not quiesce within the step budget");
  }
  return w;
}

/// Variants must differ only above the observer, or the experiment would
/// compare executions with observably different inputs.
void check_variants_opaque(const Scenario& scn, const Label& observer,
                           const std::vector<std::string>& variants) {
  for (const auto& v : variants) {
    if (v.empty()) continue;
    auto it = scn.variants.find(v);
    if (it == scn.variants.end()) {
      throw std::invalid_argument(scn.name + ": unknown variant '" + v + "'");
    }
    for (const auto& [field, value] : it->second) {
      const auto* def = scn.find_field(field);
      if (def && lattice::flows_to(def->label, observer)) {
        throw std::invalid_argument(
            scn.name + ": variant '" + v + "' changes " + field +
            ", which is visible to observer " + observer.str());
      }
    }
  }
}

}  // namespace

RodReport rod_check(std::shared_ptr<const Scenario> scn,
                    netsim::ProtocolKind protocol, const Label& observer,
                    const std::vector<std::string>& variants, int seeds) {
  check_variants_opaque(*scn, observer, variants);
  RodReport report;
  report.scenario = scn->name;
  report.protocol = netsim::protocol_name(protocol);
  report.observer = observer.str();
  report.variants = variants;
  report.seeds = seeds;

  std::vector<std::string> vs = variants;
  if (vs.empty()) vs.push_back("");

  for (uint64_t seed = 1; seed <= static_cast<uint64_t>(seeds); seed++) {
    std::vector<LowProjection> projections;
    for (const auto& v : vs) {
      projections.push_back(
          low_projection(run_variant(scn, v, protocol, seed), observer));
    }
    bool equal = true;
    for (size_t i = 1; i < projections.size() && equal; i++) {
      if (projections[i] == projections[0]) continue;
      equal = false;
      if (report.divergence) continue;
      RodReport::Divergence d;
      d.seed = seed;
      d.variant_a = vs[0];
      d.variant_b = vs[i];
      const auto& ea = projections[0].events;
      const auto& eb = projections[i].events;
      size_t k = 0;
      while (k < ea.size() && k < eb.size() && ea[k] == eb[k]) k++;
      d.step = static_cast<int>(k);
      d.event_a = k < ea.size() ? ea[k].str() : "(end)";
      d.event_b = k < eb.size() ? eb[k].str() : "(end)";
      report.divergence = std::move(d);
    }
    report.pass = report.pass && equal;
    report.per_seed.push_back({{"seed", seed}, {"equal", equal}});
  }
  return report;
}

nlohmann::json RodReport::to_json() const {
  nlohmann::json j{{"verdict", pass ? "PASS" : "FAIL"},
                   {"scenario", scenario},
                   {"protocol", protocol},
                   {"observer", observer},
                   {"variants", variants},
                   {"seeds", seeds},
                   {"per_seed", per_seed}};
  if (divergence) {
    j["diverging_step"] = divergence->step;
    j["divergence"] = {{"seed", divergence->seed},
                       {"variant_a", divergence->variant_a},
                       {"variant_b", divergence->variant_b},
                       {"event_a", divergence->event_a},
                       {"event_b", divergence->event_b}};
  }
  return j;
}

ProbeReport abort_channel_probe(std::shared_ptr<const Scenario> scn,
                                netsim::ProtocolKind protocol,
                                const Principal& attacker, int trials) {
  ProbeReport report;
  report.scenario = scn->name;
  report.protocol = netsim::protocol_name(protocol);
  report.attacker = attacker;
  report.trials = trials;
  Label obs = observer_label(attacker);

  std::vector<std::string> vs;
  for (const auto& [name, overrides] : scn->variants) vs.push_back(name);
  if (vs.empty()) vs.push_back("");

  for (const auto& v : vs) report.aborts_by_secret[v] = 0;

  for (uint64_t seed = 1; seed <= static_cast<uint64_t>(trials); seed++) {
    std::optional<LowProjection> first;
    bool identical = true;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& v : vs) {
      World w = run_variant(scn, v, protocol, seed);
      int aborts = 0;
      for (const auto& e : w.state().events()) {
        if (e.kind == EventKind::Abort && lattice::flows_to(e.label, obs)) {
          aborts++;
        }
      }
      report.aborts_by_secret[v] += aborts;
      counts[v.empty() ? "default" : v] = aborts;
      LowProjection p = low_projection(w, obs);
      if (!first) {
        first = std::move(p);
      } else if (!(p == *first)) {
        identical = false;
      }
    }
    report.per_seed_identical = report.per_seed_identical && identical;
    report.per_seed.push_back(
        {{"seed", seed}, {"aborts", counts}, {"identical", identical}});
  }
  for (const auto& [v, count] : report.aborts_by_secret) {
    report.abort_rate_by_secret[v] =
        trials > 0 ? static_cast<double>(count) / trials : 0.0;
  }
  return report;
}

nlohmann::json ProbeReport::to_json() const {
  return {{"verdict", per_seed_identical ? "CONFINED" : "LEAK"},
          {"scenario", scenario},
          {"protocol", protocol},
          {"attacker", attacker},
          {"trials", trials},
          {"aborts_by_secret", aborts_by_secret},
          {"abort_rate_by_secret", abort_rate_by_secret},
          {"per_seed_identical", per_seed_identical},
          {"per_seed", per_seed}};
}

namespace {

/// A deterministic per-location scheduling policy for the two-transaction
/// wall scenario. The location sees the transactions' requests arrive in
/// some order; on a first arrival it either schedules it immediately or
/// holds it, and once both are pending it schedules them in a fixed order.
struct LocPolicy {
  bool commit_first[2];   // schedule immediately when txn i arrives first
  bool first_wins[2];     // held case, txn i arrived first: schedule txn 0 first?

  std::string str(const std::string& t0, const std::string& t1) const {
    auto held = [&](int i) {
      return std::string("hold,then ") + (first_wins[i] ? t0 : t1) + " first";
    };
    return "on " + t0 + " first: " +
           (commit_first[0] ? "commit" : held(0)) + "; on " + t1 +
           " first: " + (commit_first[1] ? "commit" : held(1));
  }
};

}  // namespace

ImpossibilityReport impossibility_demo(const Scenario& scn, int bound) {
  if (scn.raw_transactions.size() != 2) {
    throw std::invalid_argument(scn.name +
                                ": expected exactly two raw transactions");
  }
  ImpossibilityReport report;
  report.scenario = scn.name;
  report.bound = bound;

  // Rebuild the transactions as a system state for the model predicates.
  SystemState state;
  std::vector<Transaction> txns;
  Label joint = lattice::Label::bottom(scn.principals);
  bool first_label = true;
  for (const auto& raw : scn.raw_transactions) {
    Transaction t;
    t.id = raw.id;
    std::map<std::string, model::EventId> by_key;
    for (const auto& re : raw.events) {
      std::vector<model::EventId> preds;
      for (const auto& [from, to] : raw.edges) {
        if (to == re.key) preds.push_back(by_key.at(from));
      }
      model::Event e;
      e.key = raw.id + "." + re.key;
      e.location = re.location;
      e.label = re.label;
      e.kind = re.kind;
      e.field = re.field;
      e.txn = raw.id;
      model::EventId id = state.add_event(std::move(e), preds);
      by_key[re.key] = id;
      t.events.insert(id);
      joint = first_label ? re.label : lattice::join(joint, re.label);
      first_label = false;
    }
    txns.push_back(std::move(t));
  }

  report.transactions_secure = true;
  std::vector<model::LocationId> all_locs;
  for (const auto& loc : scn.locations) all_locs.push_back(loc.id);
  for (const auto& t : txns) {
    report.transactions_secure =
        report.transactions_secure && model::is_transaction_secure(t, state);
    report.relaxed_monotonic[t.id] =
        model::satisfies_relaxed_monotonicity(t, state, all_locs);
    report.staged_commit_rejects =
        report.staged_commit_rejects || !report.relaxed_monotonic[t.id];
  }

  // Ordering information about the pair carries the join of both labels,
  // which only some locations may host; the wall must separate all of them
  // for the local-policy enumeration below to be exhaustive.
  for (const auto& loc : scn.locations) {
    if (lattice::flows_to(joint, loc.label)) {
      report.coordination_locations.push_back(loc.id);
    }
  }
  auto walled = [&](const model::LocationId& a, const model::LocationId& b) {
    for (const auto& [x, y] : scn.wall) {
      if ((x == a && y == b) || (x == b && y == a)) return true;
    }
    return false;
  };
  report.coordination_walled = report.coordination_locations.size() >= 2;
  for (size_t i = 0; i < report.coordination_locations.size(); i++) {
    for (size_t j = i + 1; j < report.coordination_locations.size(); j++) {
      report.coordination_walled =
          report.coordination_walled &&
          walled(report.coordination_locations[i],
                 report.coordination_locations[j]);
    }
  }

  // Shared locations: where both transactions deliver a request. Each needs
  // two receives and two schedule steps, so the per-location event bound
  // must admit at least four.
  if (bound < 4) {
    throw explore::BoundExceeded(
        "bound " + std::to_string(bound) +
        " cannot schedule two transactions at one location");
  }
  std::vector<model::LocationId> shared;
  for (const auto& loc : scn.locations) {
    bool in_both = true;
    for (const auto& raw : scn.raw_transactions) {
      bool here = false;
      for (const auto& re : raw.events) {
        here = here || (re.location == loc.id &&
                        re.kind == EventKind::Receive);
      }
      in_both = in_both && here;
    }
    if (in_both) shared.push_back(loc.id);
  }
  if (shared.size() != 2) {
    throw std::invalid_argument(scn.name +
                                ": expected two shared receive locations");
  }

  const std::string t0 = scn.raw_transactions[0].id;
  const std::string t1 = scn.raw_transactions[1].id;

  // Enumerate deterministic local policies at both shared locations and
  // play every adversary choice of arrivals against each pair:
  //   - one transaction starts and the other never does;
  //   - both start, with each location seeing either arrival order.
  auto order_at = [&](const LocPolicy& p, int first_arrival) {
    // Returns true iff txn 0 ends up scheduled first at this location.
    if (p.commit_first[first_arrival]) return first_arrival == 0;
    return p.first_wins[first_arrival];
  };
  for (int a = 0; a < 16; a++) {
    for (int b = 0; b < 16; b++) {
      LocPolicy pa{{bool(a & 1), bool(a & 2)}, {bool(a & 4), bool(a & 8)}};
      LocPolicy pb{{bool(b & 1), bool(b & 2)}, {bool(b & 4), bool(b & 8)}};
      std::string failure;

      for (int solo = 0; solo < 2 && failure.empty(); solo++) {
        const std::string& txn = solo == 0 ? t0 : t1;
        const std::string& other = solo == 0 ? t1 : t0;
        if (!pa.commit_first[solo]) {
          failure = shared[0] + " holds " + txn + " forever when " + other +
                    " never starts";
        } else if (!pb.commit_first[solo]) {
          failure = shared[1] + " holds " + txn + " forever when " + other +
                    " never starts";
        }
      }
      for (int fa = 0; fa < 2 && failure.empty(); fa++) {
        for (int fb = 0; fb < 2 && failure.empty(); fb++) {
          bool a_first = order_at(pa, fa);
          bool b_first = order_at(pb, fb);
          if (a_first != b_first) {
            failure = "inconsistent order: " + shared[0] + " schedules " +
                      (a_first ? t0 : t1) + " first (arrival " +
                      (fa == 0 ? t0 : t1) + " first), " + shared[1] +
                      " schedules " + (b_first ? t0 : t1) + " first (arrival " +
                      (fb == 0 ? t0 : t1) + " first)";
          }
        }
      }
      report.candidates.push_back(
          {shared[0] + ": " + pa.str(t0, t1) + " / " + shared[1] + ": " +
               pb.str(t0, t1),
           failure});
    }
  }
  report.every_candidate_fails = !report.candidates.empty();
  for (const auto& c : report.candidates) {
    report.every_candidate_fails =
        report.every_candidate_fails && !c.failure.empty();
  }
  return report;
}

nlohmann::json ImpossibilityReport::to_json() const {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : candidates) {
    cands.push_back({{"policy", c.policy}, {"failure", c.failure}});
  }
  return {{"verdict", confirmed() ? "impossibility-confirmed" : "INCONCLUSIVE"},
          {"scenario", scenario},
          {"bound", bound},
          {"transactions_secure", transactions_secure},
          {"relaxed_monotonic", relaxed_monotonic},
          {"staged_commit_rejects", staged_commit_rejects},
          {"coordination_locations", coordination_locations},
          {"coordination_walled", coordination_walled},
          {"candidates", candidates.size()},
          {"every_candidate_fails", every_candidate_fails},
          {"candidate_results", cands}};
}

}  // namespace sectx::sectest
