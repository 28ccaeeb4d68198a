// Exact rational numbers backed by GMP. Thin value wrapper around mpq_t so the
// rest of the engine never touches raw GMP state.
#pragma once

#include <gmp.h>

#include <cstdint>
#include <string>
#include <utility>

namespace gfv {

class Rat {
public:
  Rat() { mpq_init(q_); }
  Rat(long n) { // NOLINT(google-explicit-constructor): numeric literal ergonomics
    mpq_init(q_);
    mpq_set_si(q_, n, 1);
  }
  Rat(long num, long den) {
    if (den < 0) { // GMP takes an unsigned denominator
      num = -num;
      den = -den;
    }
    mpq_init(q_);
    mpq_set_si(q_, num, static_cast<unsigned long>(den));
    mpq_canonicalize(q_);
  }
  Rat(const Rat& o) {
    mpq_init(q_);
    mpq_set(q_, o.q_);
  }
  Rat(Rat&& o) noexcept {
    mpq_init(q_);
    mpq_swap(q_, o.q_);
  }
  Rat& operator=(const Rat& o) {
    if (this != &o) mpq_set(q_, o.q_);
    return *this;
  }
  Rat& operator=(Rat&& o) noexcept {
    if (this != &o) mpq_swap(q_, o.q_);
    return *this;
  }
  ~Rat() { mpq_clear(q_); }

  static Rat from_string(const std::string& s) {
    Rat r;
    mpq_set_str(r.q_, s.c_str(), 10);
    mpq_canonicalize(r.q_);
    return r;
  }

  bool is_zero() const { return mpq_sgn(q_) == 0; }
  bool is_one() const { return mpq_cmp_si(q_, 1, 1) == 0; }
  int sign() const { return mpq_sgn(q_); }

  Rat& operator+=(const Rat& o) {
    mpq_add(q_, q_, o.q_);
    return *this;
  }
  Rat& operator-=(const Rat& o) {
    mpq_sub(q_, q_, o.q_);
    return *this;
  }
  Rat& operator*=(const Rat& o) {
    mpq_mul(q_, q_, o.q_);
    return *this;
  }
  Rat& operator/=(const Rat& o) {
    mpq_div(q_, q_, o.q_);
    return *this;
  }
  friend Rat operator+(Rat a, const Rat& b) { return a += b; }
  friend Rat operator-(Rat a, const Rat& b) { return a -= b; }
  friend Rat operator*(Rat a, const Rat& b) { return a *= b; }
  friend Rat operator/(Rat a, const Rat& b) { return a /= b; }
  Rat operator-() const {
    Rat r(*this);
    mpq_neg(r.q_, r.q_);
    return r;
  }

  friend bool operator==(const Rat& a, const Rat& b) { return mpq_equal(a.q_, b.q_) != 0; }
  friend bool operator!=(const Rat& a, const Rat& b) { return !(a == b); }
  friend bool operator<(const Rat& a, const Rat& b) { return mpq_cmp(a.q_, b.q_) < 0; }

  // Deterministic text form "n" or "n/d".
  std::string str() const {
    char* s = mpq_get_str(nullptr, 10, q_);
    std::string out(s);
    void (*freefn)(void*, size_t);
    mp_get_memory_functions(nullptr, nullptr, &freefn);
    freefn(s, out.size() + 1);
    return out;
  }

  // Stable 64-bit hash (used for term-map buckets, not for equality).
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 1099511628211ull;
    };
    mix(static_cast<std::uint64_t>(mpz_get_si(mpq_numref(q_))));
    mix(static_cast<std::uint64_t>(mpz_get_si(mpq_denref(q_))));
    return h;
  }

private:
  mpq_t q_;
};

} // namespace gfv
