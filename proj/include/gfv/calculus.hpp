// Derivation calculus and the normal-form engine.
//
// Operators (all graded derivations, implemented by term-level Leibniz):
//   apply_dsigma    slice exterior derivative d (odd)
//   apply_dinterval interval exterior derivative dt @ d/dt (odd)
//   vary            field variation (odd; pushed onto base fields)
//   iota_frame      contraction with a coordinate frame vector (odd)
//   iota_field      contraction with a named vector field (component form
//                   v^a iota_a, so superfield substitution stays atomic)
//   bracket_of      pointwise Lie action: left operand acts as a derivation
//                   of the value-bundle wedge algebra on the right operand
//   lie_cov         Cartan magic formula built from iota_field and the
//                   covariant derivative d + [omega, -]
//
// normalize() drives atoms to the canonical form documented in expr.hpp:
// derivation words sorted (Cartan homotopy splits iota past d), brackets
// pushed to leaves, factors Koszul-sorted, power families merged, degree
// overflows killed, indices alpha-renamed with symmetry-orbit sign
// minimization, like terms collected. It is deterministic and idempotent.
#pragma once

#include "gfv/expr.hpp"

namespace gfv {

// --- theory-declared rewrite rules ---------------------------------------

// Placeholder letter inside rule right-hand sides: bound to the matched
// component label's index at instantiation time.
constexpr std::uint8_t kRuleSlot = 62;

// Rewrites one atom (matched by field and component label) to an expression.
// Letters listed in idx_pattern are bound positionally to the site atom's own
// tensor indices; all other right-hand-side letters are renamed fresh at each
// instantiation. A variation or derivation word on the site is re-applied to
// the instantiated right-hand side (the rule is a definitional identity).
struct AtomRule {
  SymId sym = 0;
  bool match_label = false;
  std::uint8_t label_kind = 0;
  bool label_is_n = false;
  std::vector<std::uint8_t> idx_pattern;
  Expression rhs;
};

// Declared derivative of a primitive-but-dependent symbol (an inverse, a
// determinant power, a curvature): only decorated occurrences rewrite. The
// innermost decoration D is peeled off the site and lands, in place and
// without any crossing sign, on the single `marker` atom of each right-hand
// side term; the remaining outer word is then re-applied by Leibniz. The rule
// text must therefore be the literal identity "D site = rhs(D marker)", which
// is decoration-independent exactly when every non-marker factor is even (the
// case for all registered rules).
struct DiffRule {
  SymId sym = 0;
  SymId marker = 0;
  std::vector<std::uint8_t> idx_pattern;
  Expression rhs;
  // Algebraic dependencies (an inverse, a determinant power) hold for every
  // derivation; differential ones (a curvature) only for the variation and the
  // time derivative, so spatial-derivative decorations stay opaque.
  bool var_only = false;
};

// Contracts a lower-index pair field against an upper-index pair field that
// shares one dummy, leaving an index identification; sharing both dummies
// leaves the trace factor (dimension of the slice).
struct PairRule {
  SymId lower = 0; // Sym2Dn-style factor
  SymId upper = 0; // Sym2Up-style factor
};

struct RuleSet {
  std::vector<AtomRule> atom_rules;
  std::vector<PairRule> pair_rules;
  std::vector<DiffRule> diff_rules;

  const AtomRule* find_atom(SymId s, const std::optional<CompLabel>& l,
                            std::size_t idx_count) const;
  const DiffRule* find_diff(SymId s) const;
};

// --- derivations ----------------------------------------------------------

// one derivation symbol through graded Leibniz, landing outermost on words
Expression apply_deriv_op(Deriv d, const Expression& e, const Context& ctx);
// a whole word, innermost entry applied first
Expression apply_word(const std::vector<Deriv>& w, Expression e, const Context& ctx);

Expression apply_dsigma(const Expression& e, const Context& ctx);
Expression apply_dinterval(const Expression& e, const Context& ctx);
Expression vary(const Expression& e, const Context& ctx);
Expression iota_frame(Index a, const Expression& e, const Context& ctx);
Expression iota_field(const std::string& vfield, const Expression& e, const Context& ctx);
// left slot acts: [actor, -]; actor terms must carry exactly one value atom
Expression bracket_of(const Expression& actor, const Expression& target, const Context& ctx);
// d_omega = d + [omega, -]
Expression cov_d(const Expression& omega, const Expression& e, const Context& ctx);
// L^omega_v = [iota_v, d_omega] (graded commutator)
Expression lie_cov(const std::string& vfield, const Expression& omega, const Expression& e,
                   const Context& ctx);
// coordinate Lie derivative along a named vector field: v^c pa_c plus one
// index-substitution correction per tensor slot; only underived, unvaried
// index-carrying or scalar atoms are admitted (no curvature bookkeeping)
Expression lie_coord(const std::string& vfield, const Expression& e, const Context& ctx);

// --- normal form ----------------------------------------------------------

Expression normalize(Expression e, const Context& ctx, const RuleSet* rules = nullptr);

// Zero test including pointwise invariance relations (the Lie action of a
// ghost on a top value-degree product vanishes); used by every checker.
bool is_zero_invariant(const Expression& e, const Context& ctx, const RuleSet* rules = nullptr);

// Identically-zero combinations available to the zero test: for every
// residual term of top value degree containing a bracket, the full Lie-action
// Leibniz sum over its factors.
std::vector<Expression> invariance_relations(const Expression& residual, const Context& ctx,
                                             const RuleSet* rules);

// Exact linear solve: writes target as a combination of the relation
// expressions if possible (emptying it and filling `sol`), else returns false.
bool span_reduce(Expression& target, const std::vector<Expression>& relations,
                 std::vector<Coeff>* sol, const Context& ctx);

} // namespace gfv
