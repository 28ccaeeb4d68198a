// Theory definitions and maps between them, loaded from .gfc text files.
//
// A theory file declares the field content of one graded phase space or field
// space, the rewrite rules valid on it, the symplectic potential (alpha), the
// symplectic two-form (omega), the action, a table of cohomological vector
// field components (q rows), named auxiliary expressions (constraints), and
// the base/partner pairs used by the interval superfield lift.
//
// A map file binds every field of a source theory to an expression in the
// fields of a target theory; applying the map is normalization with the
// bindings adjoined as rewrite rules.
//
// File format: line-oriented UTF-8, '#' starts a comment, a line beginning
// with whitespace continues the previous directive. Directives:
//
//   theory KEY | map KEY            file kind and registry key (= file stem)
//   description TEXT
//   geometry tensor|form
//   include KEY                     merge fields and rules of another theory
//   from KEY / to KEY               (maps) source and target theories
//   field NAME [sigma A] [ghost I] [vdeg A] [bundle B] [weight I]
//              [power none|invertible|coframe] [nabconst] [fixed]
//   rule PATTERN := EXPR            defined symbol (atom rewrite)
//   diff PATTERN via MARKER := EXPR declared derivative, any derivation
//   vdiff PATTERN via MARKER := EXPR   - " -, variation / d_t only
//   pair LOWER UPPER                index-contraction pair (metric pair)
//   lift BASE PARTNER               superfield components: BASE + PARTNER dt
//   alpha := EXPR / omega := EXPR / action := EXPR
//   q NAME := EXPR                  cohomological vector field component
//   constraint NAME := EXPR         named auxiliary expression
//   bind PATTERN := EXPR            (maps) source field -> target expression
//   def NAME := EXPR                (maps) named reconstruction expression
//
// PATTERN is `name`, `name{a b}` (positional index binding), or a labeled
// form `name_(x)` / `name_[x]` / `name_{x}` where x is a pattern letter or n.
#pragma once

#include "gfv/dsl.hpp"

#include <map>
#include <optional>

namespace gfv {

enum class Geometry { Tensor, Form };

struct QRow {
  SymId field = 0;
  Expression rhs;
};

struct NamedExpr {
  std::string name;
  Expression expr;
};

struct LiftRow {
  SymId base = 0;
  SymId partner = 0;
};

struct Theory {
  std::string key;
  std::string description;
  std::string raw_text; // file contents, byte-exact (dump re-emits this)
  Geometry geometry = Geometry::Tensor;
  std::vector<SymId> fields; // declaration order
  RuleSet rules;
  std::optional<Expression> alpha, omega, action;
  std::vector<QRow> q_table;
  std::vector<NamedExpr> constraints;
  std::vector<LiftRow> lifts;

  const Expression& constraint(const std::string& name) const;
  const Expression* q_of(SymId field) const;
  const LiftRow* lift_of(SymId base) const;
  bool has_field(SymId s) const;
};

struct FieldMap {
  std::string key;
  std::string from, to;
  std::string raw_text;
  std::vector<SymId> fields; // helper symbols declared by the map itself
  RuleSet bind;              // source fields -> target expressions
  RuleSet rules;             // extra rewrite rules valid on the target side
  std::vector<NamedExpr> defs;

  const Expression& def(const std::string& name) const;
};

// Substitutes the map's bindings into e and normalizes with the rules of the
// source theory, the target theory, and the map combined.
Expression apply_map(const FieldMap& m, const Expression& e, const Context& ctx);

class TheoryRegistry {
public:
  static TheoryRegistry& instance();

  // Resolution order for the data directory: explicit set_data_dir, the
  // GFV_THEORY_DIR environment variable, then the compiled-in default.
  void set_data_dir(const std::string& dir);
  const std::string& data_dir();

  const Theory& theory(const std::string& key);
  const FieldMap& map(const std::string& key);

  // Raw file contents of a theory or map (for bit-exact dumping).
  const std::string& raw_text(const std::string& key);
  bool is_map(const std::string& key);

  // All .gfc stems in the data directory, sorted.
  std::vector<std::string> keys();

private:
  TheoryRegistry() = default;
  std::string dir_;
  std::map<std::string, Theory> theories_;
  std::map<std::string, FieldMap> maps_;
};

// Parsers used by the registry; exposed for tests that load from strings.
Theory parse_theory(const std::string& text, const std::string& expect_key);
FieldMap parse_field_map(const std::string& text, const std::string& expect_key);

// "N-3", "2N", "-1", "N+2" -> affine a*N + b
Affine parse_affine_text(const std::string& s);

} // namespace gfv
