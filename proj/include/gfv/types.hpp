// Small value types shared across the engine: affine integers in the formal
// dimension N, abstract slice indices, component labels, derivation symbols.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>

namespace gfv {

// Thrown for engine-level failures (budget exceeded, missing rule, ill-typed
// input). Checks distinguish "fail" (nonzero residual) from "error" (this).
struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// a*N + b with N the formal dimension. Used for form degrees, value-bundle
// degrees and coframe-power exponents.
struct Affine {
  long a = 0;
  long b = 0;

  constexpr Affine() = default;
  constexpr Affine(long a_, long b_) : a(a_), b(b_) {}
  static constexpr Affine of(long v) { return Affine{0, v}; }

  friend constexpr Affine operator+(Affine x, Affine y) { return {x.a + y.a, x.b + y.b}; }
  friend constexpr Affine operator-(Affine x, Affine y) { return {x.a - y.a, x.b - y.b}; }
  friend constexpr Affine operator*(long k, Affine x) { return {k * x.a, k * x.b}; }
  friend constexpr bool operator==(Affine x, Affine y) { return x.a == y.a && x.b == y.b; }
  friend constexpr bool operator!=(Affine x, Affine y) { return !(x == y); }
  friend constexpr bool operator<(Affine x, Affine y) {
    return std::tuple(x.a, x.b) < std::tuple(y.a, y.b);
  }

  constexpr bool is_zero() const { return a == 0 && b == 0; }
  constexpr long eval(long n) const { return a * n + b; }

  // Sign questions for all N >= n_min (formal mode). The affine functions that
  // occur are monotone, so checking the boundary decides.
  constexpr bool positive_for_all(long n_min) const { return a >= 0 && eval(n_min) > 0; }
  constexpr bool nonpositive_for_all(long n_min) const { return a <= 0 && eval(n_min) <= 0; }

  std::string str() const {
    if (a == 0) return std::to_string(b);
    std::string s;
    if (a == -1)
      s = "-N";
    else if (a == 1)
      s = "N";
    else
      s = std::to_string(a) + "N";
    if (b > 0) s += "+" + std::to_string(b);
    if (b < 0) s += std::to_string(b);
    return s;
  }
};

// Abstract index on the slice: interned letter + variance.
struct Index {
  std::uint8_t letter = 0;
  bool up = true;

  friend constexpr bool operator==(Index x, Index y) {
    return x.letter == y.letter && x.up == y.up;
  }
  friend constexpr bool operator!=(Index x, Index y) { return !(x == y); }
  friend constexpr bool operator<(Index x, Index y) {
    return std::tuple(x.letter, x.up) < std::tuple(y.letter, y.up);
  }
};

std::string index_name(std::uint8_t letter);
std::uint8_t index_letter(const std::string& name);

// Component label with respect to one of the three frame conventions.
// kind: 0 = round (a)/(n), 1 = square [a]/[n], 2 = brace {a}/{n}.
struct CompLabel {
  std::uint8_t kind = 0;
  bool is_n = false;
  Index idx{}; // meaningful only when !is_n; variance up

  friend bool operator==(const CompLabel& x, const CompLabel& y) {
    if (x.kind != y.kind || x.is_n != y.is_n) return false;
    return x.is_n || x.idx == y.idx;
  }
  friend bool operator!=(const CompLabel& x, const CompLabel& y) { return !(x == y); }
  friend bool operator<(const CompLabel& x, const CompLabel& y) {
    auto key = [](const CompLabel& l) {
      return std::tuple(l.kind, l.is_n, l.is_n ? Index{} : l.idx);
    };
    return key(x) < key(y);
  }
};

// Derivation symbols applied to an atom. Canonical word order (innermost
// first): Tdot*, Partial* (indices sorted), IotaP* (indices sorted, each swap
// changes sign), DSigma at most once outermost. DOp2 is an opaque second-order
// operator that only ever decorates a bare scalar. Nabla (the metric-
// compatible derivative) carries no commutation rules at all: it is a wall
// that nothing reorders across, and repeated Nabla entries keep their order.
struct Deriv {
  enum Kind : std::uint8_t { Tdot, Partial, IotaP, DSigma, DOp2, Nabla };
  Kind kind = Tdot;
  Index i1{}, i2{};

  static Deriv tdot() { return {Tdot, {}, {}}; }
  static Deriv partial(Index i) { return {Partial, i, {}}; }
  static Deriv iota(Index i) { return {IotaP, i, {}}; }
  static Deriv dsigma() { return {DSigma, {}, {}}; }
  static Deriv dop2(Index i, Index j) { return {DOp2, i, j}; }
  static Deriv nabla(Index i) { return {Nabla, i, {}}; }

  // parity of the operator under the commutation grading
  int parity() const { return (kind == IotaP || kind == DSigma) ? 1 : 0; }
  // change in slice form degree
  int form_shift() const {
    if (kind == DSigma) return 1;
    if (kind == IotaP) return -1;
    return 0;
  }

  friend bool operator==(const Deriv& x, const Deriv& y) {
    return x.kind == y.kind && x.i1 == y.i1 && x.i2 == y.i2;
  }
  friend bool operator!=(const Deriv& x, const Deriv& y) { return !(x == y); }
  friend bool operator<(const Deriv& x, const Deriv& y) {
    return std::tuple(x.kind, x.i1, x.i2) < std::tuple(y.kind, y.i1, y.i2);
  }
};

// Evaluation context: formal N (with a floor for degree-overflow decisions) or
// a concrete dimension.
struct Context {
  std::optional<long> n_value;  // concrete N when set
  long n_min = 5;               // formal mode: statements hold for all N >= n_min
  long max_terms = 1000000;     // expansion budget
  long rewrite_budget = 64;     // rule applications per atom chain

  long affine_eval(Affine x) const { return x.eval(n_value ? *n_value : n_min); }
  bool overflow_sigma(Affine deg) const {
    // degree > N-1 for all admissible N?
    Affine excess = deg - Affine{1, -1};
    if (n_value) return excess.eval(*n_value) > 0;
    return excess.positive_for_all(n_min);
  }
  bool overflow_v(Affine deg) const {
    Affine excess = deg - Affine{1, 0};
    if (n_value) return excess.eval(*n_value) > 0;
    return excess.positive_for_all(n_min);
  }
};

} // namespace gfv
