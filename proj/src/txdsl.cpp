#include "sectx/txdsl.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

namespace sectx::txdsl {

namespace {

struct Token {
  enum class Type { Ident, String, Punct, End };
  Type type = Type::End;
  std::string text;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }

  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

  Token expect_punct(const std::string& p) {
    if (cur_.type != Token::Type::Punct || cur_.text != p) {
      throw ParseError(cur_.line, cur_.col, "expected '" + p + "'");
    }
    return take();
  }

  Token expect_ident() {
    if (cur_.type != Token::Type::Ident) {
      throw ParseError(cur_.line, cur_.col, "expected identifier");
    }
    return take();
  }

  bool at_ident(const std::string& kw) const {
    return cur_.type == Token::Type::Ident && cur_.text == kw;
  }

  bool at_punct(const std::string& p) const {
    return cur_.type == Token::Type::Punct && cur_.text == p;
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++col_;
        ++pos_;
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    cur_.line = line_;
    cur_.col = col_;
    if (pos_ >= src_.size()) {
      cur_.type = Token::Type::End;
      cur_.text.clear();
      return;
    }
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_')) {
        ++pos_;
        ++col_;
      }
      cur_.type = Token::Type::Ident;
      cur_.text = src_.substr(start, pos_ - start);
    } else if (c == '"') {
      ++pos_;
      ++col_;
      size_t start = pos_;
      while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
        ++pos_;
        ++col_;
      }
      if (pos_ >= src_.size() || src_[pos_] != '"') {
        throw ParseError(line_, col_, "unterminated string literal");
      }
      cur_.type = Token::Type::String;
      cur_.text = src_.substr(start, pos_ - start);
      ++pos_;
      ++col_;
    } else {
      cur_.type = Token::Type::Punct;
      cur_.text = std::string(1, c);
      ++pos_;
      ++col_;
    }
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token cur_;
};

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  Program parse() {
    Program p;
    while (lex_.at_ident("proc")) {
      Proc proc = parse_proc();
      std::string name = proc.name;
      p.procs.emplace(std::move(name), std::move(proc));
    }
    Token kw = lex_.expect_ident();
    if (kw.text != "atomic") {
      throw ParseError(kw.line, kw.col, "expected 'atomic'");
    }
    lex_.expect_punct("{");
    p.body = parse_block_body();
    int index = 0;
    number_block(p.body, index);
    for (auto& [name, proc] : p.procs) number_block(proc.body, index);
    return p;
  }

 private:
  Proc parse_proc() {
    lex_.take();  // proc
    Proc proc;
    proc.name = lex_.expect_ident().text;
    if (lex_.at_punct("[")) {
      lex_.take();
      ClBounds b;
      b.min = parse_cl_set();
      lex_.expect_punct(",");
      b.max = parse_cl_set();
      lex_.expect_punct("]");
      proc.bounds = b;
    }
    lex_.expect_punct("{");
    proc.body = parse_block_body();
    return proc;
  }

  lattice::PrincipalSet parse_cl_set() {
    lex_.expect_punct("{");
    lattice::PrincipalSet out;
    if (!lex_.at_punct("}")) {
      out.insert(lex_.expect_ident().text);
      while (lex_.at_punct(",")) {
        lex_.take();
        out.insert(lex_.expect_ident().text);
      }
    }
    lex_.expect_punct("}");
    return out;
  }

  Block parse_block_body() {
    Block block;
    while (!lex_.at_punct("}")) {
      if (lex_.peek().type == Token::Type::End) {
        throw ParseError(lex_.peek().line, lex_.peek().col, "expected '}'");
      }
      block.push_back(parse_stmt());
    }
    lex_.take();  // }
    return block;
  }

  Expr parse_expr() {
    if (lex_.peek().type == Token::Type::String) {
      return Expr{false, lex_.take().text};
    }
    Token id = lex_.expect_ident();
    return Expr{true, id.text};
  }

  std::string parse_field_ref() {
    Token store = lex_.expect_ident();
    lex_.expect_punct(".");
    Token field = lex_.expect_ident();
    return store.text + "." + field.text;
  }

  std::unique_ptr<Stmt> parse_stmt() {
    auto stmt = std::make_unique<Stmt>();
    Token first = lex_.expect_ident();
    stmt->line = first.line;
    if (first.text == "write") {
      stmt->kind = Stmt::Kind::Write;
      lex_.expect_punct("(");
      stmt->field = parse_field_ref();
      lex_.expect_punct(",");
      stmt->value = parse_expr();
      lex_.expect_punct(")");
      lex_.expect_punct(";");
    } else if (first.text == "if") {
      stmt->kind = Stmt::Kind::If;
      lex_.expect_punct("(");
      stmt->var = lex_.expect_ident().text;
      lex_.expect_punct(")");
      lex_.expect_punct("{");
      stmt->body = parse_block_body();
    } else if (first.text == "par") {
      stmt->kind = Stmt::Kind::Par;
      lex_.expect_punct("{");
      stmt->left = parse_block_body();
      Token kw = lex_.expect_ident();
      if (kw.text != "and") {
        throw ParseError(kw.line, kw.col, "expected 'and'");
      }
      lex_.expect_punct("{");
      stmt->right = parse_block_body();
    } else if (first.text == "print") {
      stmt->kind = Stmt::Kind::Print;
      lex_.expect_punct("(");
      stmt->value = parse_expr();
      lex_.expect_punct(")");
      lex_.expect_punct(";");
    } else if (first.text == "call") {
      stmt->kind = Stmt::Kind::Call;
      stmt->callee = lex_.expect_ident().text;
      lex_.expect_punct(";");
    } else {
      // var = read(store.field);
      stmt->kind = Stmt::Kind::Read;
      stmt->var = first.text;
      lex_.expect_punct("=");
      Token kw = lex_.expect_ident();
      if (kw.text != "read") {
        throw ParseError(kw.line, kw.col, "expected 'read'");
      }
      lex_.expect_punct("(");
      stmt->field = parse_field_ref();
      lex_.expect_punct(")");
      lex_.expect_punct(";");
    }
    return stmt;
  }

  void number_block(Block& block, int& index) {
    for (auto& s : block) {
      s->index = index++;
      number_block(s->body, index);
      number_block(s->left, index);
      number_block(s->right, index);
    }
  }

  Lexer lex_;
};

const FieldInfo& field_info(const Context& ctx, const Stmt& s) {
  auto it = ctx.fields.find(s.field);
  if (it == ctx.fields.end()) {
    throw ParseError(s.line, 1, "undeclared field '" + s.field + "'");
  }
  return it->second;
}

ClRef access_cl(const Context& ctx, const Stmt& s) {
  const FieldInfo& f = field_info(ctx, s);
  return ClRef{f.label_var, lattice::conflict_label_of(f.label)};
}

void collect_vars(const Block& block, std::set<std::string>& vars) {
  for (const auto& s : block) {
    if (s->kind == Stmt::Kind::Read) vars.insert(s->var);
    collect_vars(s->body, vars);
    collect_vars(s->left, vars);
    collect_vars(s->right, vars);
  }
}

struct Annotator {
  const Program& program;
  const Context& ctx;
  PcAnnotation out;
  std::map<std::string, Label> var_labels;
  int call_depth = 0;

  void walk(const Block& block, const Label& pc,
            std::vector<std::string>& guards) {
    for (const auto& s : block) {
      StmtAnnotation ann;
      ann.pc = pc;
      switch (s->kind) {
        case Stmt::Kind::Read:
          ann.cl = access_cl(ctx, *s);
          var_labels[s->var] = field_info(ctx, *s).label;
          break;
        case Stmt::Kind::Write:
          ann.cl = access_cl(ctx, *s);
          break;
        case Stmt::Kind::Print:
          ann.cl = ClRef{std::nullopt, lattice::conflict_label_of(pc)};
          break;
        case Stmt::Kind::If: {
          auto it = var_labels.find(s->var);
          if (it == var_labels.end()) {
            throw ParseError(s->line, 1,
                             "guard '" + s->var + "' was never read");
          }
          out.by_stmt[s->index] = ann;
          guards.push_back(s->var);
          walk(s->body, lattice::join(pc, it->second), guards);
          guards.pop_back();
          continue;
        }
        case Stmt::Kind::Par: {
          std::set<std::string> lv, rv;
          collect_vars(s->left, lv);
          collect_vars(s->right, rv);
          for (const auto& v : lv) {
            if (rv.count(v)) {
              throw ParseError(s->line, 1,
                               "par branches both bind '" + v + "'");
            }
          }
          out.by_stmt[s->index] = ann;
          walk(s->left, pc, guards);
          walk(s->right, pc, guards);
          continue;
        }
        case Stmt::Kind::Call: {
          auto it = program.procs.find(s->callee);
          if (it == program.procs.end()) {
            throw ParseError(s->line, 1, "unknown proc '" + s->callee + "'");
          }
          if (++call_depth > 16) {
            throw ParseError(s->line, 1, "call nesting too deep");
          }
          out.by_stmt[s->index] = ann;
          walk(it->second.body, pc, guards);
          --call_depth;
          continue;
        }
      }
      out.by_stmt[s->index] = ann;
    }
  }
};

struct Linearizer {
  const Program& program;
  const Context& ctx;
  const PcAnnotation& ann;
  std::vector<Diagnostic>* bounds_diags = nullptr;
  bool textual = false;  // keep program order, no Par reordering

  std::vector<StageAccess> run() {
    std::vector<std::string> guards;
    return block(program.body, guards);
  }

  std::vector<StageAccess> block(const Block& b,
                                 std::vector<std::string>& guards) {
    std::vector<StageAccess> out;
    for (const auto& s : b) {
      switch (s->kind) {
        case Stmt::Kind::Read:
        case Stmt::Kind::Write: {
          const FieldInfo& f = field_info(ctx, *s);
          const StmtAnnotation& sa = ann.by_stmt.at(s->index);
          StageAccess acc{s->index, s->line, s->kind, f.id,
                          f.location,  sa.cl.value(), guards};
          acc.var = s->var;
          acc.value = s->value;
          acc.pc = sa.pc;
          out.push_back(std::move(acc));
          break;
        }
        case Stmt::Kind::Print: {
          const StmtAnnotation& sa = ann.by_stmt.at(s->index);
          StageAccess acc{s->index, s->line, s->kind, "",
                          program.location, sa.cl.value(), guards};
          acc.value = s->value;
          acc.pc = sa.pc;
          out.push_back(std::move(acc));
          break;
        }
        case Stmt::Kind::If: {
          guards.push_back(s->var);
          auto inner = block(s->body, guards);
          guards.pop_back();
          out.insert(out.end(), inner.begin(), inner.end());
          break;
        }
        case Stmt::Kind::Par: {
          auto lhs = block(s->left, guards);
          auto rhs = block(s->right, guards);
          if (textual) {
            out.insert(out.end(), lhs.begin(), lhs.end());
            out.insert(out.end(), rhs.begin(), rhs.end());
          } else {
            auto merged = merge_par(lhs, rhs);
            out.insert(out.end(), merged.begin(), merged.end());
          }
          break;
        }
        case Stmt::Kind::Call: {
          const Proc& proc = program.procs.at(s->callee);
          auto inner = block(proc.body, guards);
          if (proc.bounds && bounds_diags) {
            check_bounds(*s, proc, inner);
          }
          out.insert(out.end(), inner.begin(), inner.end());
          break;
        }
      }
    }
    return out;
  }

  // Par branches are unordered; emit the wider conflict labels first so a
  // valid stage order exists whenever one is possible.
  static std::vector<StageAccess> merge_par(std::vector<StageAccess>& a,
                                            std::vector<StageAccess>& b) {
    std::vector<StageAccess> out;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      auto ord = lattice::stage_order(a[i].cl.cl, b[j].cl.cl);
      if (ord == lattice::StageOrder::After) {
        out.push_back(b[j++]);
      } else {
        out.push_back(a[i++]);
      }
    }
    while (i < a.size()) out.push_back(a[i++]);
    while (j < b.size()) out.push_back(b[j++]);
    return out;
  }

  void check_bounds(const Stmt& call, const Proc& proc,
                    const std::vector<StageAccess>& accesses) {
    for (const auto& acc : accesses) {
      const auto& ps = acc.cl.cl.principals();
      bool above_min = std::includes(ps.begin(), ps.end(),
                                     proc.bounds->min.begin(),
                                     proc.bounds->min.end());
      bool below_max = std::includes(proc.bounds->max.begin(),
                                     proc.bounds->max.end(), ps.begin(),
                                     ps.end());
      if (!above_min || !below_max) {
        bounds_diags->push_back(
            {"cl_bounds", call.line,
             "call to '" + proc.name + "': access at line " +
                 std::to_string(acc.line) + " has cl " + acc.cl.str() +
                 " outside declared bounds"});
      }
    }
  }
};

LocationId pick_coordinator(const Context& ctx, const Stage& stage) {
  const Label cl_label = stage.cl.cl.as_label();
  for (const auto& acc : stage.accesses) {
    auto it = ctx.locations.find(acc.location);
    if (it != ctx.locations.end() &&
        lattice::flows_to(cl_label, it->second.label)) {
      return acc.location;
    }
  }
  throw std::runtime_error("no location can coordinate stage " +
                           stage.cl.str());
}

StagePlan build_plan(const Context& ctx,
                     const std::vector<StageAccess>& accesses,
                     bool validate_symbolic_pairs) {
  StagePlan plan;
  for (const auto& acc : accesses) {
    if (!plan.stages.empty() &&
        plan.stages.back().cl.same_stage(acc.cl)) {
      plan.stages.back().accesses.push_back(acc);
      continue;
    }
    if (!plan.stages.empty()) {
      const ClRef& left = plan.stages.back().cl;
      const ClRef& right = acc.cl;
      const bool dynamic = left.symbolic() || right.symbolic();
      if (!dynamic || validate_symbolic_pairs) {
        auto ord = lattice::stage_order(left.cl, right.cl);
        if (ord != lattice::StageOrder::Before) {
          throw StageOrderViolation(left.str(), right.str(), acc.line, ord);
        }
      }
      plan.stagepoints.push_back(Stagepoint{acc.line, left, right, dynamic});
    }
    plan.stages.push_back(Stage{acc.cl, {acc}, ""});
  }
  for (auto& stage : plan.stages) {
    stage.coordinator = pick_coordinator(ctx, stage);
  }
  return plan;
}

}  // namespace

Program parse_program(const std::string& text) {
  return Parser(text).parse();
}

PcAnnotation annotate_pc(const Program& p, const Context& ctx) {
  Annotator a{p, ctx};
  std::vector<std::string> guards;
  a.walk(p.body, Label::bottom(ctx.universe), guards);
  return a.out;
}

std::vector<Diagnostic> check_pc_constraint(const Program& p,
                                            const Context& ctx,
                                            const PcAnnotation& a) {
  std::vector<Diagnostic> out;
  std::function<void(const Block&)> walk = [&](const Block& block) {
    for (const auto& s : block) {
      if (s->kind == Stmt::Kind::Read || s->kind == Stmt::Kind::Write) {
        const StmtAnnotation& ann = a.by_stmt.at(s->index);
        if (!lattice::flows_to(ann.pc, ann.cl->cl.as_label())) {
          out.push_back(
              {"pc_constraint", s->line,
               "pc " + ann.pc.str() + " does not flow to conflict label " +
                   ann.cl->str() + " of " + s->field});
        }
      }
      walk(s->body);
      walk(s->left);
      walk(s->right);
      if (s->kind == Stmt::Kind::Call) {
        // bounds diagnostics are produced during planning
      }
    }
  };
  walk(p.body);

  // Call-site conflict-label bounds.
  Linearizer lin{p, ctx, a, &out};
  lin.run();
  return out;
}

StagePlan plan_stages(const Program& p, const Context& ctx,
                      const PcAnnotation& a) {
  Linearizer lin{p, ctx, a, nullptr};
  auto accesses = lin.run();
  return build_plan(ctx, accesses, /*validate_symbolic_pairs=*/false);
}

StagePlan resolve_dynamic_stagepoints(
    const StagePlan& plan, const std::map<std::string, Label>& resolved) {
  std::vector<StageAccess> accesses;
  Context dummy;
  for (const auto& stage : plan.stages) {
    for (auto acc : stage.accesses) {
      if (acc.cl.symbolic()) {
        auto it = resolved.find(*acc.cl.var);
        if (it == resolved.end()) {
          throw std::runtime_error("unresolved label variable $" +
                                   *acc.cl.var);
        }
        acc.cl = ClRef{std::nullopt, lattice::conflict_label_of(it->second)};
      }
      accesses.push_back(std::move(acc));
    }
  }
  // Rebuild with full validation; coordinators were already resolved, so
  // reuse them by stage cl lookup afterwards.
  StagePlan out;
  for (const auto& acc : accesses) {
    if (!out.stages.empty() && out.stages.back().cl.same_stage(acc.cl)) {
      out.stages.back().accesses.push_back(acc);
      continue;
    }
    if (!out.stages.empty()) {
      const ClRef& left = out.stages.back().cl;
      auto ord = lattice::stage_order(left.cl, acc.cl.cl);
      if (ord != lattice::StageOrder::Before) {
        throw StageOrderViolation(left.str(), acc.cl.str(), acc.line, ord);
      }
      out.stagepoints.push_back(
          Stagepoint{acc.line, left, acc.cl, /*dynamic=*/false});
    }
    out.stages.push_back(Stage{acc.cl, {acc}, ""});
  }
  // Carry over coordinators from the unresolved plan by matching the first
  // access of each stage.
  for (auto& stage : out.stages) {
    const int first_idx = stage.accesses.front().stmt_index;
    for (const auto& old : plan.stages) {
      bool found = false;
      for (const auto& acc : old.accesses) {
        if (acc.stmt_index == first_idx) {
          stage.coordinator = old.coordinator;
          found = true;
          break;
        }
      }
      if (found) break;
    }
  }
  return out;
}

std::vector<StageAccess> textual_accesses(const Program& p, const Context& ctx,
                                          const PcAnnotation& a) {
  Linearizer lin{p, ctx, a, nullptr, /*textual=*/true};
  return lin.run();
}

std::vector<StageAccess> plan_accesses(const StagePlan& plan) {
  std::vector<StageAccess> out;
  for (const auto& stage : plan.stages) {
    out.insert(out.end(), stage.accesses.begin(), stage.accesses.end());
  }
  return out;
}

}  // namespace sectx::txdsl
