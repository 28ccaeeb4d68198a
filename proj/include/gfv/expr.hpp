// Graded expressions: atoms (possibly bracket nodes), terms (coefficient times
// an ordered factor product, with an explicit interval one-form slot), and
// expressions (term sums tagged with an integration domain).
//
// Representation invariants after normalize():
//   - factors sorted by the canonical key with Koszul signs absorbed into the
//     coefficient; the dt slot sits conceptually to the right of all factors
//   - derivation words in canonical order; brackets carry no outer derivations
//   - dummy indices renamed in first-appearance order (alpha-equivalence)
//   - like terms collected, zero terms dropped
#pragma once

#include "gfv/poly.hpp"
#include "gfv/symbols.hpp"
#include "gfv/types.hpp"

#include <memory>
#include <vector>

namespace gfv {

struct Atom {
  SymId sym = 0;                  // ignored for bracket nodes
  Affine power{0, 1};             // multiplicative exponent (power families)
  std::vector<Deriv> derivs;      // innermost first
  std::optional<CompLabel> label; // frame-component label
  std::vector<Index> idx;         // own tensor indices
  bool var = false;               // variation applied to the base field
  bool var_outer = false;         // formal variation of the decorated composite
  std::unique_ptr<Atom> bl, br;   // bracket slots (both set <=> bracket node)

  Atom() = default;
  explicit Atom(SymId s) : sym(s) {}
  Atom(const Atom& o) { *this = o; }
  Atom& operator=(const Atom& o);
  Atom(Atom&&) = default;
  Atom& operator=(Atom&&) = default;

  bool is_bracket() const { return static_cast<bool>(bl); }
  static Atom bracket(Atom l, Atom r);

  // commutation parity (includes derivation and variation contributions)
  int parity(const Context& ctx) const;
  // slice form degree / value degree / ghost of this atom
  Affine sigma_degree(const Context& ctx) const;
  Affine v_degree(const Context& ctx) const;
  long ghost(const Context& ctx) const;
  int density_weight() const;

  friend bool operator==(const Atom& x, const Atom& y);
  friend bool operator!=(const Atom& x, const Atom& y) { return !(x == y); }
  // canonical total order: by field name, then structure
  static int cmp(const Atom& x, const Atom& y);
  friend bool operator<(const Atom& x, const Atom& y) { return cmp(x, y) < 0; }

  std::uint64_t hash() const;
};

struct Term {
  Coeff c;
  std::vector<Atom> atoms; // ordered product
  int dt = 0;              // 0 or 1: explicit interval one-form factor

  Term() = default;
  explicit Term(Coeff coeff) : c(std::move(coeff)) {}

  int total_parity(const Context& ctx) const; // includes dt
  Affine sigma_degree(const Context& ctx) const;
  long ghost(const Context& ctx) const;
  int density_weight() const;

  std::uint64_t key_hash() const; // hash of atoms+dt, ignoring coefficient
  friend bool operator==(const Term& x, const Term& y);
  static int cmp_key(const Term& x, const Term& y); // atoms+dt only
};

enum class Domain : std::uint8_t { None, Sigma, Cyl };

struct Expression {
  Domain dom = Domain::None;
  std::vector<Term> terms;

  Expression() = default;
  explicit Expression(Domain d) : dom(d) {}
  static Expression zero(Domain d = Domain::None) { return Expression(d); }

  bool is_zero() const { return terms.empty(); }
  std::size_t size() const { return terms.size(); }

  friend bool operator==(const Expression& x, const Expression& y);
  friend bool operator!=(const Expression& x, const Expression& y) { return !(x == y); }
};

// --- construction helpers -------------------------------------------------

Atom make_atom(const std::string& field, std::vector<Index> idx = {});
Term one_term();

// --- compact structural dump (diagnostics / error messages) ---------------

std::string debug_str(const Atom& a);
std::string debug_str(const Term& t);
std::string debug_str(const Expression& e);

// --- ring operations (results are NOT normalized unless stated) -----------

// graded product of two terms; handles the dt slot sign and dt^2 = 0
// (returns false if the product vanishes identically)
bool mul_terms(const Term& a, const Term& b, const Context& ctx, Term& out);

Expression add(Expression a, const Expression& b);
Expression scale(Expression a, const Coeff& k);
Expression mul(const Expression& a, const Expression& b, const Context& ctx);

// merge like terms, drop zeros, sort terms (cheap canonical sum form; atom
// canonicalization is normalize()'s job)
void collect(Expression& e);

// fresh index letters not used in the given expressions
class IndexAllocator {
public:
  explicit IndexAllocator(const std::vector<const Expression*>& used);
  explicit IndexAllocator(const Expression& used);
  IndexAllocator() = default;
  std::uint8_t fresh();
  void mark(std::uint8_t l) { if (l < 64) used_[l] = true; }

private:
  bool used_[64] = {false};
  void scan_atom(const Atom& a);
};

void collect_letters(const Atom& a, bool (&used)[64]);

} // namespace gfv
