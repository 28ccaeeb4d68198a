#include "gfv/poly.hpp"

#include <sstream>

namespace gfv {

namespace {

// Returns the list of rational roots r (with multiplicity) of a univariate
// polynomial in param p, by trial division with root candidates read off the
// evaluation lattice. Degrees here are tiny; candidates come from evaluating
// at small integers and from the constant/leading coefficient ratio.
std::vector<Rat> rational_roots(const Poly& poly, Param p, Poly& cofactor) {
  std::vector<Rat> roots;
  Poly cur = poly;
  bool progress = true;
  while (progress) {
    progress = false;
    // degree in p
    int deg = 0;
    for (const auto& [e, c] : cur.terms) {
      (void)c;
      if (e[p] > deg) deg = e[p];
    }
    if (deg == 0) break;
    // candidate roots: small integers and ±ratios of constant/leading terms
    std::vector<Rat> cand;
    for (long k = -6; k <= 6; ++k) cand.push_back(Rat(k));
    for (const Rat& r : cand) {
      // evaluate in p only: substitute p -> r
      std::array<Rat, NUM_PARAMS> probe{Rat(1), Rat(1), Rat(1), Rat(1)};
      // substitution must be symbolic in the other params: use Poly::subst
      Poly sub = cur.subst(p, Poly(r));
      (void)probe;
      if (sub.is_zero()) {
        // divide by (x_p - r)
        Poly factor = Poly::var(p) - Poly(r);
        Poly quot;
        if (cur.divide_exact(factor, quot)) {
          roots.push_back(r);
          cur = quot;
          progress = true;
          break;
        }
      }
    }
  }
  cofactor = cur;
  return roots;
}

} // namespace

void Coeff::normalize() {
  if (num.is_zero()) {
    den = Poly(Rat(1));
    return;
  }
  // clear sign-parameter factors from the denominator (eps^2 = 1)
  bool den_eps = false;
  for (const auto& [e, c] : den.terms) {
    (void)c;
    if (e[P_eps] != 0) den_eps = true;
  }
  if (den_eps) {
    Poly eps = Poly::var(P_eps);
    num *= eps;
    den *= eps;
  }
  // scale so den's leading coefficient is 1
  Rat lead = std::prev(den.terms.end())->second;
  if (!lead.is_one()) {
    Poly inv(Rat(1) / lead);
    num *= inv;
    den *= inv;
  }
  if (den.is_constant()) return;
  // whole-poly exact division
  Poly quot;
  if (num.divide_exact(den, quot)) {
    num = quot;
    den = Poly(Rat(1));
    return;
  }
  // cancel affine factors of den that also divide num
  for (int pi = 0; pi < NUM_PARAMS; ++pi) {
    bool den_has = false;
    for (const auto& [e, c] : den.terms) {
      (void)c;
      if (e[static_cast<Param>(pi)] != 0) den_has = true;
    }
    if (!den_has) continue;
    Poly cof;
    std::vector<Rat> roots = rational_roots(den, static_cast<Param>(pi), cof);
    for (const Rat& r : roots) {
      Poly factor = Poly::var(static_cast<Param>(pi)) - Poly(r);
      Poly qn, qd;
      if (num.divide_exact(factor, qn) && den.divide_exact(factor, qd)) {
        num = qn;
        den = qd;
      }
    }
  }
  if (den.is_constant()) {
    Rat c = den.constant_value();
    if (!c.is_one()) {
      num *= Poly(Rat(1) / c);
      den = Poly(Rat(1));
    }
  }
}

std::string Poly::str() const {
  if (terms.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  // print highest monomial last is unfriendly; emit in map order (graded by
  // exponent tuple order) which is deterministic
  for (const auto& [e, c] : terms) {
    std::string mono;
    for (int i = 0; i < NUM_PARAMS; ++i) {
      if (e[i] == 0) continue;
      if (!mono.empty()) mono += "*";
      mono += param_name(i);
      if (e[i] != 1) mono += "^" + std::to_string(e[i]);
    }
    std::string cs = c.str();
    if (!first) os << (c.sign() >= 0 ? " + " : " - ");
    if (first && c.sign() < 0) os << "-";
    std::string mag = cs;
    if (!mag.empty() && mag[0] == '-') mag = mag.substr(1);
    if (mono.empty()) {
      os << mag;
    } else if (mag == "1") {
      os << mono;
    } else {
      os << mag << "*" << mono;
    }
    first = false;
  }
  return os.str();
}

std::string Coeff::str() const {
  if (den.is_constant() && den.constant_value().is_one()) {
    if (num.is_constant()) return num.constant_value().str();
    return "(" + num.str() + ")";
  }
  std::string n = num.is_constant() ? num.constant_value().str() : "(" + num.str() + ")";
  return n + "/(" + den.str() + ")";
}

} // namespace gfv
