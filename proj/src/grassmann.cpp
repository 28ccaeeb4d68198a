#include "gfv/grassmann.hpp"

#include <random>
#include <sstream>

namespace gfv {

int grassmann_sign(std::uint8_t a, std::uint8_t b) {
  // count inversions: pairs (i in a, j in b) with i > j
  int inv = 0;
  for (int i = 0; i < 8; ++i) {
    if (!(a & (1u << i))) continue;
    for (int j = 0; j < i; ++j)
      if (b & (1u << j)) ++inv;
  }
  return (inv & 1) ? -1 : 1;
}

GElem operator*(const GElem& a, const GElem& b) {
  GElem out;
  for (const auto& [ma, va] : a.c)
    for (const auto& [mb, vb] : b.c) {
      if (ma & mb) continue; // repeated generator
      Rat v = va * vb;
      if (grassmann_sign(ma, mb) < 0) v = -v;
      std::uint8_t m = ma | mb;
      auto it = out.c.find(m);
      if (it == out.c.end()) {
        out.c.emplace(m, std::move(v));
      } else {
        it->second += v;
        if (it->second.is_zero()) out.c.erase(it);
      }
    }
  return out;
}

std::string GElem::str() const {
  if (c.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [m, v] : c) {
    if (!first) os << " + ";
    first = false;
    os << v.str();
    for (int i = 0; i < 8; ++i)
      if (m & (1u << i)) os << "*g" << i;
  }
  return os.str();
}

namespace {

// structural identity key (exact, unlike the 64-bit hash)
void atom_key(const Atom& a, std::string& out) {
  if (a.is_bracket()) {
    out += "[";
    atom_key(*a.bl, out);
    out += ",";
    atom_key(*a.br, out);
    out += "]";
  } else {
    out += SymTab::instance().name(a.sym);
    if (!(a.power == Affine{0, 1})) out += "^" + a.power.str();
  }
  for (const Deriv& d : a.derivs) {
    out += ";" + std::to_string(d.kind) + "." + std::to_string(d.i1.letter * 2 + d.i1.up);
    if (d.kind == Deriv::DOp2) out += "." + std::to_string(d.i2.letter * 2 + d.i2.up);
  }
  if (a.label) {
    out += "|L" + std::to_string(a.label->kind);
    out += a.label->is_n ? "n" : std::to_string(a.label->idx.letter + 2);
  }
  for (const Index& i : a.idx) out += "#" + std::to_string(i.letter * 2 + i.up);
  if (a.var) out += "!v";
  if (a.var_outer) out += "!V";
}

} // namespace

GAssign::GAssign(std::uint64_t seed, const Context& ctx) : seed_(seed), ctx_(ctx) {
  std::mt19937_64 rng(seed ^ 0x5eedf00d1234abcdull);
  auto rnd = [&rng]() {
    long num = static_cast<long>(rng() % 19) - 9;
    long den = static_cast<long>(rng() % 4) + 1;
    return Rat(num, den);
  };
  // sample parameter point: N and d generic, Lam generic, eps = +/-1
  params_[P_N] = Rat(static_cast<long>(rng() % 5) + 7);
  params_[P_d] = params_[P_N] - Rat(1);
  params_[P_Lam] = rnd();
  if (params_[P_Lam].is_zero()) params_[P_Lam] = Rat(3, 7);
  params_[P_eps] = (rng() & 1) ? Rat(1) : Rat(-1);
}

GElem GAssign::random_element(const std::string& key, int parity) {
  std::uint64_t h = 1469598103934665603ull ^ seed_;
  for (char ch : key) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  std::mt19937_64 rng(h);
  auto rnd = [&rng]() {
    long num = static_cast<long>(rng() % 19) - 9;
    long den = static_cast<long>(rng() % 4) + 1;
    return Rat(num, den);
  };
  GElem e;
  if (parity == 0) {
    Rat s = rnd();
    if (s.is_zero()) s = Rat(2, 3);
    e += GElem::scalar(s);
    // a few grade-2 monomials in generators g1..g7 (g0 is the interval form)
    for (int k = 0; k < 3; ++k) {
      int i = 1 + static_cast<int>(rng() % 7);
      int j = 1 + static_cast<int>(rng() % 7);
      if (i == j) continue;
      e += (GElem::generator(i) * GElem::generator(j)).scale(rnd());
    }
  } else {
    bool any = false;
    for (int i = 1; i < 8; ++i) {
      Rat v = rnd();
      if (v.is_zero()) continue;
      e += GElem::generator(i).scale(v);
      any = true;
    }
    if (!any) e += GElem::generator(1 + static_cast<int>(rng() % 7));
  }
  return e;
}

const GElem& GAssign::element_for(const Atom& a) {
  std::string key;
  atom_key(a, key);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  GElem e;
  if (a.is_bracket()) {
    // assign the sorted slot pair, derive the other order by antisymmetry
    int cmp = Atom::cmp(*a.bl, *a.br);
    int pl = a.bl->parity(ctx_), pr = a.br->parity(ctx_);
    if (cmp == 0 && (pl & 1) == 0) {
      e = GElem(); // [x,x] = 0 for even x
    } else if (cmp <= 0) {
      std::string base = "BR<" + key + ">";
      e = random_element(base, (pl + pr) & 1);
      // decorations on the bracket shift the element independently
    } else {
      Atom sorted = a;
      std::swap(sorted.bl, sorted.br);
      GElem se = element_for(sorted);
      e = ((pl & pr & 1) ? se : -se); // [y,x] = -(-1)^{|x||y|}[x,y]
    }
  } else {
    e = random_element(key, a.parity(ctx_));
  }
  auto [jt, ok] = cache_.emplace(std::move(key), std::move(e));
  (void)ok;
  return jt->second;
}

GElem GAssign::eval_term(const Term& t) {
  GElem acc = GElem::scalar(t.c.eval(params_));
  for (const Atom& a : t.atoms) {
    acc = acc * element_for(a);
    if (acc.is_zero()) return acc;
  }
  if (t.dt) acc = acc * GElem::generator(0); // interval form, rightmost
  return acc;
}

GElem GAssign::eval(const Expression& e) {
  GElem acc;
  for (const Term& t : e.terms) acc += eval_term(t);
  return acc;
}

} // namespace gfv
