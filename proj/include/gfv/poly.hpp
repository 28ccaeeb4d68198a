// Sparse multivariate polynomials and fractions over the formal parameters
// N (dimension), d (dim of the slice), Lam (cosmological constant), eps
// (signature sign). Coefficients of every expression live in the fraction
// field Q(N,d,Lam,eps); all arithmetic is exact.
//
// Degrees stay tiny (binomial prefactors, 1/(d-1) style divisors), so the
// representation favours simplicity: dense-on-demand sparse maps, equality by
// normalized subtraction, fraction reduction by content + trial division with
// the affine factors that actually occur.
#pragma once

#include "gfv/rational.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfv {

// Parameter slots, fixed order.
enum Param : int { P_N = 0, P_d = 1, P_Lam = 2, P_eps = 3, NUM_PARAMS = 4 };

inline const char* param_name(int p) {
  static const char* names[NUM_PARAMS] = {"N", "d", "Lam", "eps"};
  return names[p];
}

// Exponent vector for one monomial in the parameters.
using PExp = std::array<std::int16_t, NUM_PARAMS>;

class Poly {
public:
  // monomial exponents -> rational coefficient; zero coefficients never stored
  std::map<PExp, Rat> terms;

  Poly() = default;
  explicit Poly(const Rat& c) {
    if (!c.is_zero()) terms[{0, 0, 0, 0}] = c;
  }
  static Poly constant(long c) { return Poly(Rat(c)); }
  static Poly var(Param p, int exp = 1) {
    Poly r;
    PExp e{0, 0, 0, 0};
    e[p] = static_cast<std::int16_t>(exp);
    fold_eps(e);
    r.terms[e] = Rat(1);
    return r;
  }

  // eps is a sign (eps^2 = 1): exponents live in {0,1}
  static void fold_eps(PExp& e) {
    e[P_eps] = static_cast<std::int16_t>(((e[P_eps] % 2) + 2) % 2);
  }
  // a*N + b
  static Poly affine_n(long a, long b) {
    Poly r = Poly(Rat(b));
    if (a != 0) {
      PExp e{1, 0, 0, 0};
      r.terms[e] = Rat(a);
      if (b == 0) r.terms.erase(PExp{0, 0, 0, 0});
    }
    return r;
  }

  bool is_zero() const { return terms.empty(); }
  bool is_constant() const {
    return terms.empty() || (terms.size() == 1 && terms.begin()->first == PExp{0, 0, 0, 0});
  }
  Rat constant_value() const {
    if (terms.empty()) return Rat(0);
    auto it = terms.find(PExp{0, 0, 0, 0});
    if (it == terms.end() || terms.size() != 1)
      throw std::runtime_error("poly: not a constant");
    return it->second;
  }

  Poly& operator+=(const Poly& o) {
    for (const auto& [e, c] : o.terms) {
      auto it = terms.find(e);
      if (it == terms.end()) {
        terms.emplace(e, c);
      } else {
        it->second += c;
        if (it->second.is_zero()) terms.erase(it);
      }
    }
    return *this;
  }
  Poly& operator-=(const Poly& o) { return *this += -o; }
  Poly operator-() const {
    Poly r;
    for (const auto& [e, c] : terms) r.terms.emplace(e, -c);
    return r;
  }
  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly r;
    for (const auto& [ea, ca] : a.terms)
      for (const auto& [eb, cb] : b.terms) {
        PExp e;
        for (int i = 0; i < NUM_PARAMS; ++i)
          e[i] = static_cast<std::int16_t>(ea[i] + eb[i]);
        fold_eps(e);
        Rat c = ca * cb;
        auto it = r.terms.find(e);
        if (it == r.terms.end()) {
          r.terms.emplace(e, std::move(c));
        } else {
          it->second += c;
          if (it->second.is_zero()) r.terms.erase(it);
        }
      }
    return r;
  }
  Poly& operator*=(const Poly& o) { return *this = *this * o; }

  friend bool operator==(const Poly& a, const Poly& b) { return a.terms == b.terms; }
  friend bool operator!=(const Poly& a, const Poly& b) { return !(a == b); }
  friend bool operator<(const Poly& a, const Poly& b) {
    if (a.terms.size() != b.terms.size()) return a.terms.size() < b.terms.size();
    auto ia = a.terms.begin(), ib = b.terms.begin();
    for (; ia != a.terms.end(); ++ia, ++ib) {
      if (ia->first != ib->first) return ia->first < ib->first;
      if (ia->second != ib->second) return ia->second < ib->second;
    }
    return false;
  }

  // Exact division; returns false if o does not divide *this.
  bool divide_exact(const Poly& o, Poly& quot) const {
    if (o.is_zero()) return false;
    Poly rem = *this;
    quot = Poly();
    // leading term of o under the map order (last element = largest)
    auto lead = std::prev(o.terms.end());
    while (!rem.is_zero()) {
      auto rl = std::prev(rem.terms.end());
      PExp e;
      for (int i = 0; i < NUM_PARAMS; ++i) {
        int diff = rl->first[i] - lead->first[i];
        if (diff < 0) return false;
        e[i] = static_cast<std::int16_t>(diff);
      }
      Rat c = rl->second / lead->second;
      Poly m;
      m.terms[e] = c;
      quot += m;
      rem -= m * o;
      // progress guard: the leading monomial must strictly drop
      if (!rem.is_zero() && !(std::prev(rem.terms.end())->first < rl->first)) return false;
    }
    return true;
  }

  // Substitute parameter values; unset entries stay formal (only full
  // evaluation is used in practice).
  Rat eval(const std::array<Rat, NUM_PARAMS>& vals) const {
    Rat out(0);
    for (const auto& [e, c] : terms) {
      Rat t = c;
      for (int i = 0; i < NUM_PARAMS; ++i) {
        int k = e[i];
        Rat base = vals[i];
        if (k < 0) {
          base = Rat(1) / base;
          k = -k;
        }
        for (int j = 0; j < k; ++j) t *= base;
      }
      out += t;
    }
    return out;
  }

  // Substitute one parameter by a polynomial (used for d -> N-1 at concrete N).
  Poly subst(Param p, const Poly& val) const {
    Poly out;
    for (const auto& [e, c] : terms) {
      if (e[p] < 0) throw std::runtime_error("poly: negative power in subst");
      Poly t(c);
      PExp rest = e;
      rest[p] = 0;
      Poly mono;
      mono.terms[rest] = Rat(1);
      t *= mono;
      for (int j = 0; j < e[p]; ++j) t *= val;
      out += t;
    }
    return out;
  }

  std::string str() const;

  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [e, c] : terms) {
      for (int i = 0; i < NUM_PARAMS; ++i) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint16_t>(e[i]) + 7);
        h *= 1099511628211ull;
      }
      h ^= c.hash();
      h *= 1099511628211ull;
    }
    return h;
  }
};

// Fraction num/den of Poly, normalized: den monic-leading, content reduced,
// trial-divided by den's affine factors. den is never zero.
class Coeff {
public:
  Poly num, den;

  Coeff() : num(Rat(0)), den(Rat(1)) {}
  Coeff(long n) : num(Rat(n)), den(Rat(1)) {} // NOLINT
  explicit Coeff(const Rat& r) : num(r), den(Rat(1)) {}
  Coeff(Poly n, Poly d) : num(std::move(n)), den(std::move(d)) { normalize(); }
  static Coeff param(Param p, int exp = 1) {
    if (exp >= 0) return Coeff(Poly::var(p, exp), Poly(Rat(1)));
    return Coeff(Poly(Rat(1)), Poly::var(p, -exp));
  }
  static Coeff affine_n(long a, long b) { return Coeff(Poly::affine_n(a, b), Poly(Rat(1))); }

  bool is_zero() const { return num.is_zero(); }
  bool is_one() const { return num == den; }

  Coeff& operator+=(const Coeff& o) {
    if (den == o.den) {
      num += o.num;
    } else {
      num = num * o.den + o.num * den;
      den = den * o.den;
    }
    normalize();
    return *this;
  }
  Coeff& operator-=(const Coeff& o) { return *this += -o; }
  Coeff operator-() const {
    Coeff r = *this;
    r.num = -r.num;
    return r;
  }
  Coeff& operator*=(const Coeff& o) {
    num *= o.num;
    den *= o.den;
    normalize();
    return *this;
  }
  Coeff& operator/=(const Coeff& o) {
    if (o.is_zero()) throw std::runtime_error("coeff: division by zero");
    num *= o.den;
    den *= o.num;
    normalize();
    return *this;
  }
  friend Coeff operator+(Coeff a, const Coeff& b) { return a += b; }
  friend Coeff operator-(Coeff a, const Coeff& b) { return a -= b; }
  friend Coeff operator*(Coeff a, const Coeff& b) { return a *= b; }
  friend Coeff operator/(Coeff a, const Coeff& b) { return a /= b; }

  friend bool operator==(const Coeff& a, const Coeff& b) {
    // cross-multiplied equality is exact regardless of reduction state
    return a.num * b.den == b.num * a.den;
  }
  friend bool operator!=(const Coeff& a, const Coeff& b) { return !(a == b); }
  friend bool operator<(const Coeff& a, const Coeff& b) {
    if (a.num != b.num) return a.num < b.num;
    return a.den < b.den;
  }

  Rat eval(const std::array<Rat, NUM_PARAMS>& vals) const {
    Rat d = den.eval(vals);
    if (d.is_zero()) throw std::runtime_error("coeff: denominator vanishes at sample point");
    return num.eval(vals) / d;
  }

  std::string str() const;
  std::uint64_t hash() const { return num.hash() * 31 + den.hash(); }

private:
  void normalize();
};

} // namespace gfv
