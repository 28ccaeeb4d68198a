// Finite Grassmann-algebra evaluation oracle. Maps every distinct atom to a
// parity-correct pseudo-random element of the exterior algebra on eight
// generators and evaluates expressions by plain (sign-free) multiplication in
// storage order. Equality of evaluations is an implementation-independent
// witness for the ring and sign layer: product order, Koszul sorting,
// interval-slot handling and bracket slot antisymmetry. Rewrite rules
// (derivative identities, index renaming, power merging) are outside its
// scope and are tested structurally instead.
#pragma once

#include "gfv/expr.hpp"

#include <cstdint>
#include <map>

namespace gfv {

// element of Lambda[g0..g7]; key bit i set <=> generator gi present
class GElem {
public:
  std::map<std::uint8_t, Rat> c;

  static GElem scalar(const Rat& r) {
    GElem e;
    if (!r.is_zero()) e.c[0] = r;
    return e;
  }
  static GElem generator(int i) {
    GElem e;
    e.c[static_cast<std::uint8_t>(1u << i)] = Rat(1);
    return e;
  }

  bool is_zero() const { return c.empty(); }

  GElem& operator+=(const GElem& o) {
    for (const auto& [m, v] : o.c) {
      auto it = c.find(m);
      if (it == c.end()) {
        c.emplace(m, v);
      } else {
        it->second += v;
        if (it->second.is_zero()) c.erase(it);
      }
    }
    return *this;
  }
  friend GElem operator+(GElem a, const GElem& b) { return a += b; }
  GElem operator-() const {
    GElem r;
    for (const auto& [m, v] : c) r.c.emplace(m, -v);
    return r;
  }
  friend GElem operator-(GElem a, const GElem& b) { return a + (-b); }

  friend GElem operator*(const GElem& a, const GElem& b);
  GElem scale(const Rat& r) const {
    GElem out;
    if (r.is_zero()) return out;
    for (const auto& [m, v] : c) out.c.emplace(m, v * r);
    return out;
  }

  friend bool operator==(const GElem& a, const GElem& b) { return a.c == b.c; }
  friend bool operator!=(const GElem& a, const GElem& b) { return !(a == b); }

  std::string str() const;
};

// sign of concatenating generator sets a and b into sorted order
int grassmann_sign(std::uint8_t a, std::uint8_t b);

// Deterministic seeded assignment of atoms to elements. Bracket atoms get the
// graded-antisymmetric combination of an element assigned to the sorted slot
// pair, so slot-order rewrites are checked against the definition rather than
// against themselves.
class GAssign {
public:
  GAssign(std::uint64_t seed, const Context& ctx);

  const GElem& element_for(const Atom& a);
  GElem eval_term(const Term& t);
  GElem eval(const Expression& e);

  const std::array<Rat, NUM_PARAMS>& params() const { return params_; }

private:
  std::uint64_t seed_;
  const Context& ctx_;
  std::array<Rat, NUM_PARAMS> params_;
  std::map<std::string, GElem> cache_;
  GElem random_element(const std::string& key, int parity);
};

} // namespace gfv
