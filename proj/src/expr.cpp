#include "gfv/expr.hpp"

#include <algorithm>

namespace gfv {

namespace {

// exact product of two affine forms; at most one side may depend on N
Affine affine_product(Affine x, Affine y, const char* what) {
  if (x.a != 0 && y.a != 0) throw EngineError(std::string("affine product overflow in ") + what);
  return Affine{x.a * y.b + y.a * x.b, x.b * y.b};
}

} // namespace

Atom& Atom::operator=(const Atom& o) {
  if (this == &o) return *this;
  sym = o.sym;
  power = o.power;
  derivs = o.derivs;
  label = o.label;
  idx = o.idx;
  var = o.var;
  var_outer = o.var_outer;
  bl = o.bl ? std::make_unique<Atom>(*o.bl) : nullptr;
  br = o.br ? std::make_unique<Atom>(*o.br) : nullptr;
  return *this;
}

Atom Atom::bracket(Atom l, Atom r) {
  Atom a;
  a.bl = std::make_unique<Atom>(std::move(l));
  a.br = std::make_unique<Atom>(std::move(r));
  return a;
}

// Atom semantics: derivs( var?( label?( base^power ) ) ); brackets replace the
// base. Component labels extract the coefficient along an odd frame vector of
// the value bundle, so they flip parity, zero out the form and value degrees,
// and are only legal on 0-form, value-degree-1 bases.
int Atom::parity(const Context& ctx) const {
  long p = 0;
  if (is_bracket()) {
    p = bl->parity(ctx) + br->parity(ctx);
  } else {
    const FieldSpec& fs = SymTab::instance().spec(sym);
    p = fs.power != PowerMode::None ? 0 : fs.parity();
  }
  if (label) p += 1;
  if (var) p += 1;
  if (var_outer) p += 1;
  for (const Deriv& dv : derivs) p += dv.parity();
  return static_cast<int>(((p % 2) + 2) % 2);
}

Affine Atom::sigma_degree(const Context& ctx) const {
  Affine base{};
  if (is_bracket()) {
    base = bl->sigma_degree(ctx) + br->sigma_degree(ctx);
  } else {
    const FieldSpec& fs = SymTab::instance().spec(sym);
    base = fs.sigma_form;
    if (!(power.a == 0 && power.b == 1))
      base = affine_product(fs.sigma_form, power, "form degree");
  }
  if (label) {
    if (!base.is_zero())
      throw EngineError("component label on a non-scalar form");
    base = Affine{};
  }
  for (const Deriv& dv : derivs) base = base + Affine{0, dv.form_shift()};
  return base;
}

Affine Atom::v_degree(const Context& ctx) const {
  Affine base{};
  if (is_bracket()) {
    base = bl->v_degree(ctx) + br->v_degree(ctx) + Affine{0, -2};
  } else {
    const FieldSpec& fs = SymTab::instance().spec(sym);
    base = fs.vdeg;
    if (!(power.a == 0 && power.b == 1))
      base = affine_product(fs.vdeg, power, "value degree");
  }
  if (label) base = Affine{};
  return base;
}

long Atom::ghost(const Context& ctx) const {
  long g = 0;
  if (is_bracket()) {
    g = bl->ghost(ctx) + br->ghost(ctx);
  } else {
    const FieldSpec& fs = SymTab::instance().spec(sym);
    if (!(power.a == 0 && power.b == 1) && fs.ghost != 0)
      throw EngineError("power of field with nonzero ghost");
    g = fs.ghost;
  }
  if (var) g += 1;
  if (var_outer) g += 1;
  return g;
}

int Atom::density_weight() const {
  if (is_bracket()) return bl->density_weight() + br->density_weight();
  int w = SymTab::instance().spec(sym).density_weight;
  if (w != 0 && !(power == Affine{0, 1})) {
    // a merged power of a weight-w density carries weight w * exponent
    if (power.a != 0)
      throw EngineError("density weight with a formal power exponent");
    w = static_cast<int>(w * power.b);
  }
  return w;
}

bool operator==(const Atom& x, const Atom& y) { return Atom::cmp(x, y) == 0; }

int Atom::cmp(const Atom& x, const Atom& y) {
  bool xb = x.is_bracket(), yb = y.is_bracket();
  if (!xb && !yb) {
    const std::string& nx = SymTab::instance().name(x.sym);
    const std::string& ny = SymTab::instance().name(y.sym);
    if (nx != ny) return nx < ny ? -1 : 1;
  }
  if (xb != yb) return xb ? 1 : -1; // brackets sort after simple atoms
  if (xb) {
    int c = cmp(*x.bl, *y.bl);
    if (c) return c;
    c = cmp(*x.br, *y.br);
    if (c) return c;
  }
  if (x.power != y.power) return x.power < y.power ? -1 : 1;
  if (x.derivs != y.derivs) return x.derivs < y.derivs ? -1 : 1;
  bool xl = x.label.has_value(), yl = y.label.has_value();
  if (xl != yl) return xl ? 1 : -1;
  if (xl && *x.label != *y.label) return *x.label < *y.label ? -1 : 1;
  if (x.idx != y.idx) return x.idx < y.idx ? -1 : 1;
  if (x.var != y.var) return x.var ? 1 : -1;
  if (x.var_outer != y.var_outer) return x.var_outer ? 1 : -1;
  return 0;
}

std::uint64_t Atom::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  if (is_bracket()) {
    mix(0x6272ull);
    mix(bl->hash());
    mix(br->hash());
  } else {
    mix(sym + 1);
  }
  mix(static_cast<std::uint64_t>(power.a + 100));
  mix(static_cast<std::uint64_t>(power.b + 100));
  for (const Deriv& d : derivs) {
    mix(d.kind + 1);
    mix(static_cast<std::uint64_t>(d.i1.letter) * 2 + d.i1.up);
    mix(static_cast<std::uint64_t>(d.i2.letter) * 2 + d.i2.up);
  }
  if (label) {
    mix(0x4cull + label->kind);
    mix(label->is_n ? 1 : (2ull + label->idx.letter * 2 + label->idx.up));
  }
  for (const Index& i : idx) mix(3ull + i.letter * 2 + i.up);
  mix((var ? 1u : 0u) | (var_outer ? 2u : 0u));
  return h;
}

int Term::total_parity(const Context& ctx) const {
  int p = dt;
  for (const Atom& a : atoms) p += a.parity(ctx);
  return ((p % 2) + 2) % 2;
}

Affine Term::sigma_degree(const Context& ctx) const {
  Affine s{};
  for (const Atom& a : atoms) s = s + a.sigma_degree(ctx);
  return s;
}

long Term::ghost(const Context& ctx) const {
  long g = 0;
  for (const Atom& a : atoms) g += a.ghost(ctx);
  return g;
}

int Term::density_weight() const {
  int w = 0;
  for (const Atom& a : atoms) w += a.density_weight();
  return w;
}

std::uint64_t Term::key_hash() const {
  std::uint64_t h = 0x9e3779b97f4a7c15ull + static_cast<unsigned>(dt);
  for (const Atom& a : atoms) h = h * 1099511628211ull + a.hash();
  return h;
}

bool operator==(const Term& x, const Term& y) {
  return x.dt == y.dt && x.atoms == y.atoms && x.c == y.c;
}

int Term::cmp_key(const Term& x, const Term& y) {
  if (x.dt != y.dt) return x.dt < y.dt ? -1 : 1;
  if (x.atoms.size() != y.atoms.size()) return x.atoms.size() < y.atoms.size() ? -1 : 1;
  for (std::size_t i = 0; i < x.atoms.size(); ++i) {
    int c = Atom::cmp(x.atoms[i], y.atoms[i]);
    if (c) return c;
  }
  return 0;
}

bool operator==(const Expression& x, const Expression& y) {
  return x.dom == y.dom && x.terms.size() == y.terms.size() &&
         std::equal(x.terms.begin(), x.terms.end(), y.terms.begin());
}

Atom make_atom(const std::string& field, std::vector<Index> idx) {
  Atom a(SymTab::instance().id(field));
  a.idx = std::move(idx);
  return a;
}

Term one_term() { return Term(Coeff(1)); }

bool mul_terms(const Term& a, const Term& b, const Context& ctx, Term& out) {
  if (a.dt && b.dt) return false; // interval form squares to zero
  out = Term(a.c * b.c);
  if (out.c.is_zero()) return false;
  out.atoms = a.atoms;
  out.atoms.insert(out.atoms.end(), b.atoms.begin(), b.atoms.end());
  out.dt = a.dt + b.dt;
  if (a.dt) {
    // move a's dt slot to the right, past all of b's factors
    int p = 0;
    for (const Atom& at : b.atoms) p += at.parity(ctx);
    if (p % 2) out.c = -out.c;
  }
  return true;
}

Expression add(Expression a, const Expression& b) {
  if (a.dom == Domain::None) a.dom = b.dom;
  else if (b.dom != Domain::None && a.dom != b.dom)
    throw EngineError("adding expressions over different domains");
  a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
  return a;
}

Expression scale(Expression a, const Coeff& k) {
  if (k.is_zero()) {
    a.terms.clear();
    return a;
  }
  for (Term& t : a.terms) t.c *= k;
  return a;
}

Expression mul(const Expression& a, const Expression& b, const Context& ctx) {
  Expression out;
  out.dom = a.dom != Domain::None ? a.dom : b.dom;
  if (a.dom != Domain::None && b.dom != Domain::None && a.dom != b.dom)
    throw EngineError("multiplying expressions over different domains");
  out.terms.reserve(a.terms.size() * b.terms.size());
  for (const Term& ta : a.terms)
    for (const Term& tb : b.terms) {
      Term t;
      if (mul_terms(ta, tb, ctx, t)) out.terms.push_back(std::move(t));
      if (static_cast<long>(out.terms.size()) > ctx.max_terms)
        throw EngineError("term budget exceeded in mul");
    }
  return out;
}

void collect(Expression& e) {
  std::sort(e.terms.begin(), e.terms.end(),
            [](const Term& x, const Term& y) { return Term::cmp_key(x, y) < 0; });
  std::vector<Term> merged;
  for (Term& t : e.terms) {
    if (!merged.empty() && Term::cmp_key(merged.back(), t) == 0) {
      merged.back().c += t.c;
    } else {
      merged.push_back(std::move(t));
    }
  }
  e.terms.clear();
  for (Term& t : merged)
    if (!t.c.is_zero()) e.terms.push_back(std::move(t));
}

void collect_letters(const Atom& a, bool (&used)[64]) {
  auto mark = [&used](Index i) {
    if (i.letter < 64) used[i.letter] = true;
  };
  if (a.is_bracket()) {
    collect_letters(*a.bl, used);
    collect_letters(*a.br, used);
  }
  for (const Deriv& d : a.derivs) {
    if (d.kind == Deriv::Partial || d.kind == Deriv::IotaP) mark(d.i1);
    if (d.kind == Deriv::DOp2) {
      mark(d.i1);
      mark(d.i2);
    }
  }
  if (a.label && !a.label->is_n) mark(a.label->idx);
  for (const Index& i : a.idx) mark(i);
}

IndexAllocator::IndexAllocator(const std::vector<const Expression*>& used) {
  for (const Expression* e : used)
    for (const Term& t : e->terms)
      for (const Atom& a : t.atoms) scan_atom(a);
}

IndexAllocator::IndexAllocator(const Expression& used) {
  for (const Term& t : used.terms)
    for (const Atom& a : t.atoms) scan_atom(a);
}

void IndexAllocator::scan_atom(const Atom& a) { collect_letters(a, used_); }

std::uint8_t IndexAllocator::fresh() {
  for (int i = 0; i < 64; ++i)
    if (!used_[i]) {
      used_[i] = true;
      return static_cast<std::uint8_t>(i);
    }
  throw EngineError("out of index letters");
}

std::string debug_str(const Atom& a) {
  std::string s;
  // derivation word prints outermost-first so it reads like application order
  for (auto it = a.derivs.rbegin(); it != a.derivs.rend(); ++it) {
    switch (it->kind) {
      case Deriv::Tdot: s += "dot."; break;
      case Deriv::Partial: s += "pa_" + index_name(it->i1.letter) + "."; break;
      case Deriv::IotaP: s += "io_" + index_name(it->i1.letter) + "."; break;
      case Deriv::DSigma: s += "dS."; break;
      case Deriv::DOp2:
        s += "D2_" + index_name(it->i1.letter) + index_name(it->i2.letter) + ".";
        break;
      case Deriv::Nabla: s += "nb_" + index_name(it->i1.letter) + "."; break;
    }
  }
  if (a.var) s += "var.";
  if (a.var_outer) s += "varo.";
  if (a.is_bracket()) {
    s += "br[" + debug_str(*a.bl) + "," + debug_str(*a.br) + "]";
  } else {
    s += SymTab::instance().spec(a.sym).name;
    if (a.label) {
      const char* open = a.label->kind == 0 ? "(" : a.label->kind == 1 ? "[" : "{";
      const char* close = a.label->kind == 0 ? ")" : a.label->kind == 1 ? "]" : "}";
      s += std::string("'") + open + (a.label->is_n ? "n" : index_name(a.label->idx.letter)) + close;
    }
    if (!(a.power == Affine{0, 1})) s += "^(" + a.power.str() + ")";
    for (const Index& i : a.idx) s += (i.up ? "^" : "_") + index_name(i.letter);
  }
  return s;
}

std::string debug_str(const Term& t) {
  std::string s = "(" + t.c.str() + ")";
  for (const Atom& a : t.atoms) s += " " + debug_str(a);
  if (t.dt) s += " dt";
  return s;
}

std::string debug_str(const Expression& e) {
  if (e.terms.empty()) return "0";
  std::string s;
  for (std::size_t i = 0; i < e.terms.size(); ++i) {
    if (i) s += "\n + ";
    s += debug_str(e.terms[i]);
  }
  return s;
}

} // namespace gfv
