#ifndef SECTX_TXDSL_HPP_
#define SECTX_TXDSL_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sectx/lattice.hpp"
#include "sectx/model.hpp"

namespace sectx::txdsl {

using lattice::ConflictLabel;
using lattice::Label;
using model::FieldId;
using model::LocationId;

struct ParseError : std::runtime_error {
  ParseError(int line, int col, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
  int line;
  int col;
};

struct Expr {
  bool is_var = false;
  std::string text;  // variable name or string literal contents
};

struct Stmt;
using Block = std::vector<std::unique_ptr<Stmt>>;

struct Stmt {
  enum class Kind { Read, Write, If, Par, Print, Call };
  Kind kind;
  int index = -1;  // pre-order position, assigned after parsing
  int line = 0;
  std::string var;    // Read target / If guard
  std::string field;  // qualified "location.field" for Read/Write
  Expr value;         // Write value / Print argument
  Block body;         // If
  Block left, right;  // Par
  std::string callee; // Call
};

struct ClBounds {
  lattice::PrincipalSet min;
  lattice::PrincipalSet max;
};

struct Proc {
  std::string name;
  std::optional<ClBounds> bounds;
  Block body;
};

struct Program {
  std::string name;
  std::string principal;
  LocationId location;
  Block body;
  std::map<std::string, Proc> procs;
};

/// What the checker needs to know about the surrounding scenario.
struct FieldInfo {
  FieldId id;  // qualified
  LocationId location;
  Label label;
  std::optional<std::string> label_var;  // set when the label is "$name"
};

struct LocationInfo {
  LocationId id;
  Label label;
};

struct Context {
  lattice::PrincipalSet universe;
  std::map<FieldId, FieldInfo> fields;
  std::map<LocationId, LocationInfo> locations;
};

/// A conflict label that may still be symbolic (field labeled by a named
/// label variable, resolved when the scenario binds it).
struct ClRef {
  std::optional<std::string> var;
  ConflictLabel cl;  // resolved value; authoritative when var is empty

  bool symbolic() const { return var.has_value(); }
  bool same_stage(const ClRef& o) const {
    if (symbolic() || o.symbolic()) return var == o.var;
    return cl == o.cl;
  }
  std::string str() const { return symbolic() ? "$" + *var : cl.str(); }
};

struct StmtAnnotation {
  Label pc;
  std::optional<ClRef> cl;  // accesses and prints only
};

struct PcAnnotation {
  std::map<int, StmtAnnotation> by_stmt;  // keyed by Stmt::index
};

struct Diagnostic {
  std::string kind;
  int line = 0;
  std::string detail;
};

struct StageAccess {
  int stmt_index;
  int line;
  Stmt::Kind kind;  // Read, Write or Print
  FieldId field;    // empty for Print
  LocationId location;
  ClRef cl;
  std::vector<std::string> guards;  // vars that gate this access
  std::string var;                  // Read target
  Expr value;                       // Write value / Print argument
  Label pc;
};

struct Stage {
  ClRef cl;
  std::vector<StageAccess> accesses;
  LocationId coordinator;
};

struct Stagepoint {
  int position;  // line of the first access of the later stage
  ClRef left;
  ClRef right;
  bool dynamic;
};

struct StagePlan {
  std::vector<Stage> stages;
  std::vector<Stagepoint> stagepoints;
};

struct StageOrderViolation : std::runtime_error {
  StageOrderViolation(std::string left, std::string right, int line,
                      lattice::StageOrder order)
      : std::runtime_error("stage order violation at line " +
                           std::to_string(line) + ": " + left + " vs " +
                           right),
        left_cl(std::move(left)),
        right_cl(std::move(right)),
        line(line),
        order(order) {}
  std::string left_cl;
  std::string right_cl;
  int line;
  lattice::StageOrder order;
};

Program parse_program(const std::string& text);
PcAnnotation annotate_pc(const Program& p, const Context& ctx);
std::vector<Diagnostic> check_pc_constraint(const Program& p,
                                            const Context& ctx,
                                            const PcAnnotation& a);
StagePlan plan_stages(const Program& p, const Context& ctx,
                      const PcAnnotation& a);
StagePlan resolve_dynamic_stagepoints(
    const StagePlan& plan, const std::map<std::string, Label>& resolved);

/// Flattened access order of a plan (stage order), used by the runtime.
std::vector<StageAccess> plan_accesses(const StagePlan& plan);

/// Accesses in plain program order (Par flattened left then right), for
/// protocols that do not reorder by conflict label.
std::vector<StageAccess> textual_accesses(const Program& p, const Context& ctx,
                                          const PcAnnotation& a);

}  // namespace sectx::txdsl

#endif  // SECTX_TXDSL_HPP_
