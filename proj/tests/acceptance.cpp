// Acceptance gate for the toolkit: ten criteria, one printed line each.
// Every tolerance (seed counts, time budgets, exact stage counts and
// diagnostics) is pinned here; the binary exits nonzero if any line fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sectx/explore.hpp"
#include "sectx/lattice.hpp"
#include "sectx/model.hpp"
#include "sectx/netsim.hpp"
#include "sectx/scenario.hpp"
#include "sectx/sectest.hpp"
#include "sectx/txdsl.hpp"

using namespace sectx;
using netsim::ProtocolKind;

namespace {

std::shared_ptr<const scenario::Scenario> load(const std::string& name,
                                               const std::string& variant = "") {
  auto s = scenario::load_scenario(std::string(SCENARIO_DIR) + "/" + name +
                                   ".json");
  if (!variant.empty()) s = scenario::apply_variant(s, variant);
  return std::make_shared<const scenario::Scenario>(std::move(s));
}

struct Gate {
  int failures = 0;
  int index = 0;

  /// Runs one criterion; the body returns an empty string on success and a
  /// one-line reason on failure. budget_s <= 0 means no time budget.
  void criterion(const std::string& title, double budget_s,
                 const std::function<std::string()>& body) {
    ++index;
    auto t0 = std::chrono::steady_clock::now();
    std::string problem;
    try {
      problem = body();
    } catch (const std::exception& e) {
      problem = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (problem.empty() && budget_s > 0 && secs > budget_s) {
      problem = "exceeded time budget of " + std::to_string(budget_s) + "s";
    }
    std::printf("%s  criterion %2d: %s (%.2fs)\n",
                problem.empty() ? "PASS" : "FAIL", index, title.c_str(), secs);
    if (!problem.empty()) {
      std::printf("      -> %s\n", problem.c_str());
      ++failures;
    }
  }
};

/// Static analysis of one program: pc diagnostics plus either a stage plan
/// or the stage-order violation that prevented one.
struct ProgramCheck {
  std::vector<txdsl::Diagnostic> diags;
  std::optional<txdsl::StagePlan> plan;
  std::string order_left, order_right;
};

ProgramCheck check_program(const scenario::Scenario& scn,
                           const std::string& name) {
  ProgramCheck out;
  const auto* def = scn.find_program(name);
  if (!def) return out;
  txdsl::Context ctx = scenario::make_context(scn);
  txdsl::Program prog = scenario::parse(*def);
  auto ann = txdsl::annotate_pc(prog, ctx);
  out.diags = txdsl::check_pc_constraint(prog, ctx, ann);
  try {
    auto plan = txdsl::plan_stages(prog, ctx, ann);
    out.plan = txdsl::resolve_dynamic_stagepoints(plan, scn.label_vars);
  } catch (const txdsl::StageOrderViolation& e) {
    out.order_left = e.left_cl;
    out.order_right = e.right_cl;
  }
  return out;
}

bool has_diag(const ProgramCheck& c, const std::string& kind) {
  for (const auto& d : c.diags) {
    if (d.kind == kind) return true;
  }
  return false;
}

// Event-level reachability by DFS over predecessor lists, independent of the
// ancestor-bitset bookkeeping in SystemState.
bool reachable_oracle(const model::SystemState& s, model::EventId from,
                      model::EventId to) {
  std::vector<model::EventId> stack = {to};
  std::set<model::EventId> seen;
  while (!stack.empty()) {
    model::EventId v = stack.back();
    stack.pop_back();
    for (model::EventId p : s.preds(v)) {
      if (p == from) return true;
      if (seen.insert(p).second) stack.push_back(p);
    }
  }
  return false;
}

model::Event mk_event(std::string key, model::EventKind kind,
                      std::optional<model::TxnId> txn = std::nullopt) {
  model::Event e;
  e.key = std::move(key);
  e.location = "loc";
  e.label = lattice::Label::top();
  e.kind = kind;
  e.txn = std::move(txn);
  return e;
}

}  // namespace

int main() {
  Gate gate;

  gate.criterion("checker rejects insecure and accepts secure program", 1.0,
                 [] {
    auto insecure = load("hospital_insecure");
    auto bad = check_program(*insecure, "patsy");
    if (!has_diag(bad, "pc_constraint")) {
      return std::string("no pc_constraint diagnostic for insecure program");
    }
    auto secure = load("hospital_secure");
    for (const auto& def : secure->programs) {
      auto c = check_program(*secure, def.name);
      if (!c.diags.empty() || !c.plan) {
        return "secure program " + def.name + " rejected";
      }
    }
    return std::string();
  });

  gate.criterion("stage counts: patient 2, post 1, comment 2", 0, [] {
    auto expect = [](const scenario::Scenario& scn, const std::string& name,
                     size_t stages) -> std::string {
      auto c = check_program(scn, name);
      if (!c.plan) return name + ": no stage plan";
      if (c.plan->stages.size() != stages) {
        return name + ": " + std::to_string(c.plan->stages.size()) +
               " stages, expected " + std::to_string(stages);
      }
      return "";
    };
    auto hospital = load("hospital_secure");
    auto blog = load("blog");
    for (const auto& problem :
         {expect(*hospital, "patsy", 2), expect(*blog, "post", 1),
          expect(*blog, "comment", 2)}) {
      if (!problem.empty()) return problem;
    }
    return std::string();
  });

  gate.criterion("incomparable purchase reports {Outel} vs {Bank,Gloria}", 0,
                 [] {
    auto c = check_program(*load("rainforest"), "purchase");
    if (c.plan) return std::string("stage plan unexpectedly succeeded");
    if (c.order_left != "{Outel}" || c.order_right != "{Bank,Gloria}") {
      return "diagnostic was " + c.order_left + " vs " + c.order_right;
    }
    return std::string();
  });

  gate.criterion("abort channel exists under 2pc: 1000 seeds, positive-only",
                 60.0, [] {
    auto r = sectest::abort_channel_probe(load("hospital_insecure"),
                                          ProtocolKind::TwoPhase, "Attacker",
                                          1000);
    if (r.aborts_by_secret.at("positive") <= 0) {
      return std::string("no attacker-visible aborts on the positive variant");
    }
    if (r.aborts_by_secret.at("negative") != 0) {
      return std::to_string(r.aborts_by_secret.at("negative")) +
             " attacker-visible aborts on the negative variant";
    }
    return std::string();
  });

  gate.criterion("staged commit closes the channel: 1000 matched seeds", 0,
                 [] {
    auto r = sectest::rod_check(load("hospital_secure"),
                                ProtocolKind::StagedCommit,
                                sectest::observer_label("Attacker"),
                                {"negative", "positive"}, 1000);
    if (!r.pass) {
      const auto& d = *r.divergence;
      return "projections diverge at seed " + std::to_string(d.seed) +
             " step " + std::to_string(d.step);
    }
    return std::string();
  });

  gate.criterion("serializability: all protocols x scenarios x 100 seeds", 0,
                 [] {
    const std::vector<std::string> names = {"hospital_secure",
                                            "hospital_insecure", "locks_pair",
                                            "blog", "minimal", "rainforest"};
    const ProtocolKind protocols[] = {ProtocolKind::TwoPhase,
                                      ProtocolKind::Locks,
                                      ProtocolKind::StagedCommit};
    int checked = 0;
    for (const auto& name : names) {
      auto scn = load(name);
      for (ProtocolKind kind : protocols) {
        for (uint64_t seed = 1; seed <= 100; ++seed) {
          try {
            netsim::World w(scn, kind, seed);
            if (!w.run_to_quiescence(netsim::default_max_steps())) {
              return name + "/" + netsim::protocol_name(kind) + " seed " +
                     std::to_string(seed) + ": no quiescence";
            }
            std::vector<model::Transaction> committed;
            for (const auto& t : w.transactions()) {
              if (w.txns_.at(t.id).phase == netsim::TxnPhase::Committed) {
                committed.push_back(t);
              }
            }
            bool ok = model::is_serializable(w.state(), committed) &&
                      model::conflict_graph_acyclic(w.state(), committed);
            if (!ok) {
              return name + "/" + netsim::protocol_name(kind) + " seed " +
                     std::to_string(seed) + ": not serializable";
            }
            ++checked;
          } catch (const netsim::ProtocolRefusal&) {
            break;  // protocol declines this scenario for every seed
          }
        }
      }
    }
    if (checked < 100) return std::string("too few executions checked");
    return std::string();
  });

  // Explorations are shared between the deadlock-freedom and
  // necessary-condition criteria; each corpus stays within the documented
  // bound of 2 transactions and 16 input events per transaction.
  struct Explored {
    std::string name;
    explore::Explorer::NecessaryReport nec;
    explore::Explorer::DeadlockReport dl;
  };
  std::vector<Explored> explored;
  bool broken_flagged = false;

  gate.criterion("deadlock freedom: exhaustive sc and lock exploration",
                 300.0, [&] {
    struct Corpus {
      std::string scenario, variant;
      ProtocolKind kind;
    };
    const std::vector<Corpus> corpora = {
        {"hospital_secure", "positive", ProtocolKind::StagedCommit},
        {"blog", "", ProtocolKind::StagedCommit},
        {"locks_pair", "", ProtocolKind::Locks}};
    for (const auto& c : corpora) {
      explore::Explorer ex(load(c.scenario, c.variant), c.kind);
      ex.explore();
      Explored e{c.scenario + "/" + netsim::protocol_name(c.kind),
                 ex.check_necessary_conditions(), ex.check_deadlock_freedom()};
      bool free_here = e.dl.deadlock_free;
      explored.push_back(std::move(e));
      if (!free_here) {
        return explored.back().name + ": " + explored.back().dl.problems[0];
      }
    }
    explore::Explorer broken(load("locks_pair"), ProtocolKind::BrokenPreorder);
    broken.explore();
    broken_flagged = !broken.check_necessary_conditions().ok;
    return std::string();
  });

  gate.criterion("ordering conditions hold; broken pre-ordering is flagged",
                 0, [&] {
    if (explored.size() != 3) return std::string("explorations incomplete");
    for (const auto& e : explored) {
      if (!e.nec.ok) return e.name + ": " + e.nec.violations[0];
    }
    if (!broken_flagged) {
      return std::string("broken pre-ordering protocol passed the conditions");
    }
    return std::string();
  });

  gate.criterion("communication wall impossibility at bound 6", 600.0, [] {
    auto scn = load("cloud_wall");
    auto r = sectest::impossibility_demo(*scn, 6);
    if (!r.transactions_secure) return std::string("transactions not secure");
    bool some_non_monotonic = false;
    for (const auto& [txn, mono] : r.relaxed_monotonic) {
      some_non_monotonic = some_non_monotonic || !mono;
    }
    if (!some_non_monotonic) {
      return std::string("every transaction is relaxed-monotonic");
    }
    if (!r.every_candidate_fails) {
      for (const auto& c : r.candidates) {
        if (c.failure.empty()) return "candidate survives: " + c.policy;
      }
    }
    if (!r.confirmed()) return std::string("demonstration inconclusive");
    // The report is a decision procedure, not a sample: re-running must
    // reproduce it bit for bit.
    auto again = sectest::impossibility_demo(*scn, 6);
    if (r.to_json().dump() != again.to_json().dump()) {
      return std::string("report not deterministic");
    }
    return std::string();
  });

  gate.criterion("lattice laws and ordering oracles agree exhaustively", 0,
                 [] {
    using namespace sectx::lattice;
    auto labels = all_labels({"a", "b", "c", "d"});
    if (labels.size() != 81) return std::string("label universe wrong size");
    for (const auto& l1 : labels) {
      for (const auto& l2 : labels) {
        bool oracle = std::includes(l1.readers().begin(), l1.readers().end(),
                                    l2.readers().begin(), l2.readers().end()) &&
                      std::includes(l1.writers().begin(), l1.writers().end(),
                                    l2.writers().begin(), l2.writers().end());
        if (flows_to(l1, l2) != oracle) return std::string("flows_to mismatch");
        Label j = join(l1, l2);
        Label m = meet(l1, l2);
        if (!flows_to(l1, j) || !flows_to(l2, j) || !flows_to(m, l1) ||
            !flows_to(m, l2)) {
          return std::string("join/meet not a bound");
        }
        for (const auto& u : labels) {
          if (flows_to(l1, u) && flows_to(l2, u) && !flows_to(j, u)) {
            return std::string("join not least");
          }
          if (flows_to(u, l1) && flows_to(u, l2) && !flows_to(u, m)) {
            return std::string("meet not greatest");
          }
        }
      }
    }

    std::mt19937 rng(20250823);
    for (int iter = 0; iter < 300; ++iter) {
      model::SystemState s;
      const int n = 2 + static_cast<int>(rng() % 7);  // <= 8 events
      std::vector<model::TxnId> owner(n);
      for (int i = 0; i < n; ++i) {
        std::vector<model::EventId> preds;
        for (int p = 0; p < i; ++p) {
          if (rng() % 3 == 0) preds.push_back(p);
        }
        owner[i] = "T" + std::to_string(rng() % 3);
        s.add_event(mk_event("e" + std::to_string(i), model::EventKind::Write,
                             owner[i]),
                    preds);
      }
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          if (a != b && s.happens_before(a, b) != reachable_oracle(s, a, b)) {
            return std::string("happens_before mismatch");
          }
        }
      }

      std::vector<model::Transaction> txns;
      for (int t = 0; t < 3; ++t) {
        model::Transaction txn;
        txn.id = "T" + std::to_string(t);
        for (int i = 0; i < n; ++i) {
          if (owner[i] == txn.id) txn.events.insert(i);
        }
        if (!txn.events.empty()) {
          txn.start = *txn.events.begin();
          txns.push_back(std::move(txn));
        }
      }
      // Oracle: lift DFS reachability to a transaction relation, then take
      // its transitive closure by search.
      const size_t k = txns.size();
      std::vector<std::vector<bool>> direct(k, std::vector<bool>(k, false));
      for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < k; ++j) {
          if (i == j) continue;
          for (model::EventId e1 : txns[i].events) {
            for (model::EventId e2 : txns[j].events) {
              direct[i][j] = direct[i][j] || reachable_oracle(s, e1, e2);
            }
          }
        }
      }
      auto path = [&](size_t from, size_t to) {
        std::vector<size_t> stack = {from};
        std::set<size_t> seen = {from};
        while (!stack.empty()) {
          size_t v = stack.back();
          stack.pop_back();
          for (size_t w = 0; w < k; ++w) {
            if (!direct[v][w]) continue;
            if (w == to) return true;
            if (seen.insert(w).second) stack.push_back(w);
          }
        }
        return false;
      };
      for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < k; ++j) {
          if (i == j) continue;
          if (model::transaction_precedes(s, txns[i], txns[j], txns) !=
              path(i, j)) {
            return std::string("transaction_precedes mismatch");
          }
        }
      }
    }
    return std::string();
  });

  std::printf("%d of %d criteria passed\n", gate.index - gate.failures,
              gate.index);
  return gate.failures == 0 ? 0 : 1;
}
