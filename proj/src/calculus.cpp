// Graded derivation operators: exterior derivatives, contractions, variation,
// pointwise Lie action. All follow the sign model of expr.hpp: a term is an
// ordered atom product with the interval form slot conceptually rightmost.
#include "gfv/calculus.hpp"

namespace gfv {

namespace {

// parity of an operator's contribution prefix when it passes the first k atoms
int prefix_parity(const Term& t, std::size_t k, const Context& ctx) {
  int p = 0;
  for (std::size_t i = 0; i < k; ++i) p += t.atoms[i].parity(ctx);
  return p & 1;
}

int suffix_parity(const Term& t, std::size_t k, const Context& ctx) {
  int p = 0;
  for (std::size_t i = k; i < t.atoms.size(); ++i) p += t.atoms[i].parity(ctx);
  return p & 1;
}

} // namespace

// Apply one derivation symbol through graded Leibniz; the symbol lands
// outermost on each atom's word. Bracket atoms keep the symbol until
// normalize() pushes it into the slots.
Expression apply_deriv_op(Deriv d, const Expression& e, const Context& ctx) {
  Expression out(e.dom);
  int dp = d.parity();
  for (const Term& t : e.terms) {
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
      Term nt = t;
      nt.atoms[i].derivs.push_back(d);
      if (dp && prefix_parity(t, i, ctx)) nt.c = -nt.c;
      out.terms.push_back(std::move(nt));
    }
  }
  return out;
}

Expression apply_word(const std::vector<Deriv>& w, Expression e, const Context& ctx) {
  for (const Deriv& d : w) e = apply_deriv_op(d, e, ctx); // innermost first
  return e;
}

Expression apply_dsigma(const Expression& e, const Context& ctx) {
  return apply_deriv_op(Deriv::dsigma(), e, ctx);
}

Expression iota_frame(Index a, const Expression& e, const Context& ctx) {
  a.up = false;
  return apply_deriv_op(Deriv::iota(a), e, ctx);
}

// dt @ d/dt: odd, kills dt-terms, puts the new dt slot rightmost.
Expression apply_dinterval(const Expression& e, const Context& ctx) {
  Expression out(e.dom);
  for (const Term& t : e.terms) {
    if (t.dt) continue;
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
      Term nt = t;
      nt.atoms[i].derivs.push_back(Deriv::tdot());
      nt.dt = 1;
      // dt enters at the operator position and is stored rightmost: it
      // crosses the prefix, the differentiated atom (t-derivative keeps
      // parity), and the suffix -- the parity of the whole atom list
      if (suffix_parity(t, 0, ctx) & 1) nt.c = -nt.c;
      out.terms.push_back(std::move(nt));
    }
  }
  return out;
}

namespace {

// Variation of one atom as a small expression (power families split off a
// scaled factor; a second variation vanishes; opaque second-order decorated
// atoms get the formal outer-variation mark).
Expression vary_atom(const Atom& a, const Context& ctx) {
  Expression out;
  if (a.var) return out; // delta^2 = 0 on coordinate atoms
  if (!a.is_bracket() && a.sym == SymTab::instance().kron()) return out;
  if (!a.is_bracket() && SymTab::instance().spec(a.sym).fixed) return out; // background
  if (!a.is_bracket() && !(a.power == Affine{0, 1})) {
    // delta(b^k) = k b^(k-1) delta(b), even base
    Term t(Coeff::affine_n(a.power.a, a.power.b));
    Affine down = a.power - Affine{0, 1};
    if (!down.is_zero()) {
      Atom rest(a.sym);
      rest.power = down;
      t.atoms.push_back(std::move(rest));
    }
    Atom varied(a.sym);
    varied.var = true;
    t.atoms.push_back(std::move(varied));
    out.terms.push_back(std::move(t));
    int sgn = 1;
    for (const Deriv& d : a.derivs)
      if (d.parity()) sgn = -sgn;
    if (sgn < 0) out = scale(std::move(out), Coeff(-1));
    return apply_word(a.derivs, std::move(out), ctx);
  }
  Term t(Coeff(1));
  Atom na = a;
  bool opaque2 = false;
  for (const Deriv& d : na.derivs)
    if (d.kind == Deriv::DOp2) opaque2 = true;
  if (opaque2) {
    na.var_outer = true;
  } else {
    na.var = true;
    int sgn = 1;
    for (const Deriv& d : na.derivs)
      if (d.parity()) sgn = -sgn; // delta moved inside the word
    if (sgn < 0) t.c = -t.c;
  }
  t.atoms.push_back(std::move(na));
  out.terms.push_back(std::move(t));
  return out;
}

} // namespace

Expression vary(const Expression& e, const Context& ctx) {
  Expression out(e.dom);
  for (const Term& t : e.terms) {
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
      Expression sub = vary_atom(t.atoms[i], ctx);
      for (const Term& st : sub.terms) {
        Term nt(t.c * st.c);
        nt.dt = t.dt;
        nt.atoms.assign(t.atoms.begin(), t.atoms.begin() + static_cast<long>(i));
        nt.atoms.insert(nt.atoms.end(), st.atoms.begin(), st.atoms.end());
        nt.atoms.insert(nt.atoms.end(), t.atoms.begin() + static_cast<long>(i) + 1,
                        t.atoms.end());
        if (prefix_parity(t, i, ctx)) nt.c = -nt.c;
        out.terms.push_back(std::move(nt));
      }
    }
  }
  return out;
}

Expression iota_field(const std::string& vfield, const Expression& e, const Context& ctx) {
  SymId v = SymTab::instance().id(vfield);
  const FieldSpec& fs = SymTab::instance().spec(v);
  if (fs.bundle != Bundle::Vector)
    throw EngineError("iota along '" + vfield + "': not a vector field");
  IndexAllocator alloc(e);
  Index a{alloc.fresh(), true};
  Expression contracted = iota_frame(a, e, ctx);
  Expression out(e.dom);
  for (Term& t : contracted.terms) {
    Atom comp(v);
    comp.idx = {Index{a.letter, true}};
    t.atoms.insert(t.atoms.begin(), std::move(comp));
    out.terms.push_back(std::move(t));
  }
  return out;
}

Expression bracket_of(const Expression& actor, const Expression& target, const Context& ctx) {
  Expression out(actor.dom != Domain::None ? actor.dom : target.dom);
  for (const Term& ta : actor.terms) {
    // isolate the single value-bundle atom of the actor term
    std::size_t ai = ta.atoms.size();
    for (std::size_t i = 0; i < ta.atoms.size(); ++i) {
      if (!ta.atoms[i].v_degree(ctx).is_zero()) {
        if (ai != ta.atoms.size()) throw EngineError("bracket actor with several value factors");
        ai = i;
      }
    }
    if (ai == ta.atoms.size()) continue; // scalar actor acts trivially
    Atom actor_atom = ta.atoms[ai];
    int ap = actor_atom.parity(ctx);
    Term rest(ta.c);
    rest.dt = ta.dt;
    for (std::size_t i = 0; i < ta.atoms.size(); ++i)
      if (i != ai) rest.atoms.push_back(ta.atoms[i]);
    if (ap && prefix_parity(ta, ai, ctx)) rest.c = -rest.c; // actor moved leftmost

    for (const Term& tb : target.terms) {
      for (std::size_t j = 0; j < tb.atoms.size(); ++j) {
        const Atom& bj = tb.atoms[j];
        if (bj.v_degree(ctx).is_zero()) continue; // trivial action on scalars
        Term piece(tb.c);
        piece.dt = tb.dt;
        piece.atoms.assign(tb.atoms.begin(), tb.atoms.begin() + static_cast<long>(j));
        if (!bj.is_bracket() && !(bj.power == Affine{0, 1})) {
          // derivation on a merged power: k b^(k-1) [actor, b]
          piece.c *= Coeff::affine_n(bj.power.a, bj.power.b);
          Affine down = bj.power - Affine{0, 1};
          if (!down.is_zero()) {
            Atom restp(bj.sym);
            restp.power = down;
            piece.atoms.push_back(std::move(restp));
          }
          Atom single(bj.sym);
          piece.atoms.push_back(Atom::bracket(actor_atom, std::move(single)));
        } else {
          piece.atoms.push_back(Atom::bracket(actor_atom, bj));
        }
        piece.atoms.insert(piece.atoms.end(), tb.atoms.begin() + static_cast<long>(j) + 1,
                           tb.atoms.end());
        if (ap && prefix_parity(tb, j, ctx)) piece.c = -piece.c;
        Term full;
        if (!mul_terms(rest, piece, ctx, full)) continue;
        out.terms.push_back(std::move(full));
        if (static_cast<long>(out.terms.size()) > ctx.max_terms)
          throw EngineError("term budget exceeded in bracket");
      }
    }
  }
  return out;
}

Expression cov_d(const Expression& omega, const Expression& e, const Context& ctx) {
  return add(apply_dsigma(e, ctx), bracket_of(omega, e, ctx));
}

Expression lie_cov(const std::string& vfield, const Expression& omega, const Expression& e,
                   const Context& ctx) {
  SymId v = SymTab::instance().id(vfield);
  int pv = SymTab::instance().spec(v).parity();
  int p_iota = (pv + 1) & 1; // parity of the composite operator v^a iota_a
  Expression lhs = iota_field(vfield, cov_d(omega, e, ctx), ctx);
  Expression rhs = cov_d(omega, iota_field(vfield, e, ctx), ctx);
  if (p_iota == 0) rhs = scale(std::move(rhs), Coeff(-1));
  return add(std::move(lhs), std::move(rhs));
}

Expression lie_coord(const std::string& vfield, const Expression& e, const Context& ctx) {
  SymId v = SymTab::instance().id(vfield);
  const FieldSpec& vs = SymTab::instance().spec(v);
  if (vs.bundle != Bundle::Vector)
    throw EngineError("coordinate Lie derivative along non-vector field '" + vfield + "'");
  int p_op = vs.parity();
  IndexAllocator alloc(e);
  std::uint8_t c = alloc.fresh();

  Expression out(e.dom);
  for (const Term& t : e.terms) {
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
      const Atom& A = t.atoms[i];
      if (A.is_bracket() || !A.derivs.empty() || A.var || A.label)
        throw EngineError("coordinate Lie derivative of a decorated atom");
      if (static_cast<int>(A.idx.size()) != SymTab::instance().spec(A.sym).own_indices())
        throw EngineError("coordinate Lie derivative of an atom with open index slots");
      int sign = (p_op && (prefix_parity(t, i, ctx) & 1)) ? -1 : 1;

      // expansion pieces for this atom; each is (v-factor, replaced atom)
      auto push_piece = [&](Atom vf, Atom rep, int extra) {
        Term nt(t.c);
        if (extra != 1) nt.c *= Coeff(extra);
        if (sign < 0) nt.c = -nt.c;
        nt.dt = t.dt;
        nt.atoms.assign(t.atoms.begin(), t.atoms.begin() + static_cast<long>(i));
        nt.atoms.push_back(std::move(vf));
        nt.atoms.push_back(std::move(rep));
        nt.atoms.insert(nt.atoms.end(), t.atoms.begin() + static_cast<long>(i) + 1,
                        t.atoms.end());
        out.terms.push_back(std::move(nt));
      };

      // transport piece v^c pa_c A
      {
        Atom vf(v);
        vf.idx = {Index{c, true}};
        Atom rep = A;
        rep.derivs.push_back(Deriv::partial(Index{c, false}));
        push_piece(std::move(vf), std::move(rep), 1);
      }
      // one slot correction per tensor index
      for (std::size_t j = 0; j < A.idx.size(); ++j) {
        Index slot = A.idx[j];
        Atom vf(v);
        Atom rep = A;
        rep.idx[j].letter = c;
        int extra;
        if (slot.up) {
          // minus (pa_c v^slot) A[slot -> c]
          vf.idx = {Index{slot.letter, true}};
          vf.derivs.push_back(Deriv::partial(Index{c, false}));
          rep.idx[j].up = true;
          extra = -1;
        } else {
          // plus (pa_slot v^c) A[slot -> c]
          vf.idx = {Index{c, true}};
          vf.derivs.push_back(Deriv::partial(Index{slot.letter, false}));
          rep.idx[j].up = false;
          extra = 1;
        }
        push_piece(std::move(vf), std::move(rep), extra);
      }
      // densities pick up a divergence term: weight times (pa_c v^c) A
      if (int w = A.density_weight(); w != 0) {
        Atom vf(v);
        vf.idx = {Index{c, true}};
        vf.derivs.push_back(Deriv::partial(Index{c, false}));
        push_piece(std::move(vf), A, w);
      }
      if (static_cast<long>(out.terms.size()) > ctx.max_terms)
        throw EngineError("term budget exceeded in coordinate Lie derivative");
    }
  }
  return out;
}

} // namespace gfv
