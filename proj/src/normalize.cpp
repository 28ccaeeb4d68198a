// Normal-form engine. Each step makes one local rewrite class idempotent;
// normalize() iterates the steps to a global fixpoint under a budget.
#include "gfv/calculus.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace gfv {

const AtomRule* RuleSet::find_atom(SymId s, const std::optional<CompLabel>& l,
                                   std::size_t idx_count) const {
  for (const AtomRule& r : atom_rules) {
    if (r.sym != s) continue;
    if (r.match_label != l.has_value()) continue;
    if (r.match_label) {
      if (r.label_kind != l->kind || r.label_is_n != l->is_n) continue;
    }
    if (r.idx_pattern.size() != idx_count) continue;
    return &r;
  }
  return nullptr;
}

const DiffRule* RuleSet::find_diff(SymId s) const {
  for (const DiffRule& r : diff_rules)
    if (r.sym == s) return &r;
  return nullptr;
}

namespace {

// ---------------------------------------------------------------- utilities

// replace atom i of t by a sub-expression of equal total parity
void splice_at(const Term& t, std::size_t i, const Expression& sub, const Context& ctx,
               std::vector<Term>& out) {
  for (const Term& st : sub.terms) {
    Term nt(t.c * st.c);
    nt.dt = t.dt;
    nt.atoms.assign(t.atoms.begin(), t.atoms.begin() + static_cast<long>(i));
    nt.atoms.insert(nt.atoms.end(), st.atoms.begin(), st.atoms.end());
    nt.atoms.insert(nt.atoms.end(), t.atoms.begin() + static_cast<long>(i) + 1, t.atoms.end());
    if (st.dt) {
      if (nt.dt) continue; // interval form squares to zero
      nt.dt = 1;
      int p = 0;
      for (std::size_t m = i + 1; m < t.atoms.size(); ++m) p += t.atoms[m].parity(ctx);
      if (p & 1) nt.c = -nt.c;
    }
    if (!nt.c.is_zero()) out.push_back(std::move(nt));
  }
}

// visit every atom of a term, brackets included (outer before slots)
template <class F> void visit_atoms(Atom& a, F&& f) {
  f(a);
  if (a.is_bracket()) {
    visit_atoms(*a.bl, f);
    visit_atoms(*a.br, f);
  }
}
template <class F> void visit_atoms(Term& t, F&& f) {
  for (Atom& a : t.atoms) visit_atoms(a, f);
}

// visit every index occurrence of an atom in structural order
template <class F> void visit_indices(Atom& a, F&& f) {
  if (a.is_bracket()) {
    visit_indices(*a.bl, f);
    visit_indices(*a.br, f);
  }
  for (Deriv& d : a.derivs) {
    if (d.kind == Deriv::Partial || d.kind == Deriv::IotaP || d.kind == Deriv::Nabla) f(d.i1);
    if (d.kind == Deriv::DOp2) {
      f(d.i1);
      f(d.i2);
    }
  }
  if (a.label && !a.label->is_n) f(a.label->idx);
  for (Index& i : a.idx) f(i);
}
template <class F> void visit_indices(Term& t, F&& f) {
  for (Atom& a : t.atoms) visit_indices(a, f);
}

// ------------------------------------------------------------ bracket step

int sort_word_simple(std::vector<Deriv>& w, bool& needs_cartan);
bool word_kills(const Atom& a, const Context& ctx);

// Peels one decoration layer / canonicalizes one bracket atom. Returns true
// with `out` set (terms of exactly one atom each) when a rewrite applies.
bool canon_bracket(const Atom& a, const Context& ctx, Expression& out) {
  const Atom& L = *a.bl;
  const Atom& R = *a.br;
  auto emit = [&out](Coeff c, Atom atom) {
    Term t(std::move(c));
    t.atoms.push_back(std::move(atom));
    out.terms.push_back(std::move(t));
  };

  if (a.var || a.var_outer) {
    // graded Leibniz of the variation into the slots
    if (!(L.power == Affine{0, 1}) || !(R.power == Affine{0, 1}))
      throw EngineError("bracket slot carries a merged power");
    int pL = L.parity(ctx);
    // slot variation with the sign of moving delta inside the slot's word
    auto vary_slot = [](const Atom& s, Atom& res, int& sgn) {
      if (s.var || (!s.is_bracket() && s.sym == SymTab::instance().kron())) return false;
      res = s;
      res.var = true;
      sgn = 1;
      for (const Deriv& d : s.derivs)
        if (d.parity()) sgn = -sgn;
      return true;
    };
    Atom vl, vr;
    int sl = 1, sr = 1;
    if (vary_slot(L, vl, sl)) {
      Atom b = a;
      b.var = b.var_outer = false;
      *b.bl = vl;
      emit(Coeff(sl), std::move(b));
    }
    if (vary_slot(R, vr, sr)) {
      Atom b = a;
      b.var = b.var_outer = false;
      *b.br = vr;
      emit(Coeff((pL & 1) ? -sr : sr), std::move(b));
    }
    return true;
  }

  if (!a.derivs.empty()) {
    // push the innermost derivation into the slots
    Deriv d0 = a.derivs.front();
    if (d0.kind == Deriv::DOp2) throw EngineError("opaque second-order symbol on a bracket");
    std::vector<Deriv> rest(a.derivs.begin() + 1, a.derivs.end());
    int pL = L.parity(ctx);
    Atom b1 = a;
    b1.derivs = rest;
    b1.bl->derivs.push_back(d0);
    emit(Coeff(1), std::move(b1));
    Atom b2 = a;
    b2.derivs = rest;
    b2.br->derivs.push_back(d0);
    emit(Coeff((d0.parity() && (pL & 1)) ? -1 : 1), std::move(b2));
    return true;
  }

  // recurse into slots
  if (L.is_bracket()) {
    Expression sub;
    if (canon_bracket(L, ctx, sub)) {
      for (const Term& st : sub.terms) {
        Atom b = a;
        *b.bl = st.atoms.at(0);
        emit(st.c, std::move(b));
      }
      return true;
    }
  }
  if (R.is_bracket()) {
    Expression sub;
    if (canon_bracket(R, ctx, sub)) {
      for (const Term& st : sub.terms) {
        Atom b = a;
        *b.br = st.atoms.at(0);
        emit(st.c, std::move(b));
      }
      return true;
    }
  }

  // canonicalize simple slot words: ordering signs, annihilations, and the
  // contraction-of-d split apply inside a slot exactly as at the top level
  for (int side = 0; side < 2; ++side) {
    const Atom& S = side ? R : L;
    if (S.is_bracket() || S.derivs.empty()) continue;
    Atom s = S;
    bool cartan = false;
    int sg = sort_word_simple(s.derivs, cartan);
    if (sg == 0) return true; // slot annihilates; empty out
    if (cartan) {
      std::size_t k = 0;
      for (; k + 1 < s.derivs.size(); ++k)
        if (s.derivs[k].kind == Deriv::DSigma && s.derivs[k + 1].kind == Deriv::IotaP) break;
      Index ai = s.derivs[k + 1].i1;
      Atom s1 = s;
      s1.derivs.erase(s1.derivs.begin() + static_cast<long>(k),
                      s1.derivs.begin() + static_cast<long>(k) + 2);
      s1.derivs.insert(s1.derivs.begin() + static_cast<long>(k), Deriv::partial(ai));
      Atom s2 = s;
      std::swap(s2.derivs[k], s2.derivs[k + 1]);
      Atom b1 = a;
      *(side ? b1.br : b1.bl) = std::move(s1);
      emit(Coeff(sg), std::move(b1));
      Atom b2 = a;
      *(side ? b2.br : b2.bl) = std::move(s2);
      emit(Coeff(-sg), std::move(b2));
      return true;
    }
    if (word_kills(s, ctx)) return true; // contraction on a bottom-degree slot
    if (sg != 1 || s.derivs != S.derivs) {
      Atom b = a;
      *(side ? b.br : b.bl) = std::move(s);
      emit(Coeff(sg), std::move(b));
      return true;
    }
  }

  // trivial action on value-degree-zero slots
  if (L.v_degree(ctx).is_zero() || R.v_degree(ctx).is_zero()) return true; // empty out

  int c = Atom::cmp(L, R);
  if (c == 0 && (L.parity(ctx) & 1) == 0) return true; // [x,x] = 0 for even x

  // [x,[x,x]] = 0 for odd x (thrice the element equals its own negative)
  if (!L.is_bracket() && R.is_bracket() && !R.bl->is_bracket() && !R.br->is_bracket() &&
      *R.bl == L && *R.br == L && (L.parity(ctx) & 1))
    return true;

  // right-nest: [[A,B],C] = [A,[B,C]] - (-1)^{|A||B|} [B,[A,C]]
  if (L.is_bracket()) {
    Atom A = *L.bl;
    Atom B = *L.br;
    int s2 = (A.parity(ctx) & B.parity(ctx) & 1) ? 1 : -1;
    Atom b1 = Atom::bracket(A, Atom::bracket(B, R));
    Atom b2 = Atom::bracket(B, Atom::bracket(A, R));
    emit(Coeff(1), std::move(b1));
    emit(Coeff(s2), std::move(b2));
    return true;
  }

  if (c > 0) {
    int s = -((L.parity(ctx) & R.parity(ctx) & 1) ? -1 : 1);
    Atom b = a;
    std::swap(b.bl, b.br);
    emit(Coeff(s), std::move(b));
    return true;
  }
  return false;
}

bool step_brackets(std::vector<Term>& terms, const Context& ctx) {
  bool changed = false;
  std::vector<Term> out;
  out.reserve(terms.size());
  for (Term& t : terms) {
    std::size_t hit = t.atoms.size();
    Expression sub;
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
      if (!t.atoms[i].is_bracket()) continue;
      if (canon_bracket(t.atoms[i], ctx, sub)) {
        hit = i;
        break;
      }
    }
    if (hit == t.atoms.size()) {
      out.push_back(std::move(t));
    } else {
      splice_at(t, hit, sub, ctx, out);
      changed = true;
    }
  }
  terms = std::move(out);
  return changed;
}

// --------------------------------------------------------------- word step

int deriv_rank(Deriv::Kind k) {
  switch (k) {
    case Deriv::DOp2: return 0;
    case Deriv::Tdot: return 1;
    case Deriv::Partial: return 2;
    case Deriv::IotaP: return 3;
    case Deriv::DSigma: return 4;
    case Deriv::Nabla: return 5; // unused: Nabla never reorders
  }
  return 6;
}

// Sorts one derivation word in place (no Cartan splits). Returns the sign, or
// 0 if the word annihilates (iota^2, d^2). Stops before any (DSigma, IotaP)
// adjacency, which the caller must split.
int sort_word_simple(std::vector<Deriv>& w, bool& needs_cartan) {
  needs_cartan = false;
  int sign = 1;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      Deriv &x = w[k], &y = w[k + 1];
      // no commutation data for the metric derivative: leave it in place
      if (x.kind == Deriv::Nabla || y.kind == Deriv::Nabla) continue;
      int rx = deriv_rank(x.kind), ry = deriv_rank(y.kind);
      if (rx == ry) {
        if (x.kind == Deriv::DSigma) return 0;
        if (x.kind == Deriv::IotaP) {
          if (x.i1 == y.i1) return 0;
          if (y.i1 < x.i1) {
            std::swap(x, y);
            sign = -sign;
            moved = true;
          }
        } else if (x.kind == Deriv::Partial || x.kind == Deriv::DOp2) {
          if (std::tuple(y.i1, y.i2) < std::tuple(x.i1, x.i2)) {
            std::swap(x, y);
            moved = true;
          }
        }
        continue;
      }
      if (ry < rx) {
        if (y.kind == Deriv::DOp2)
          throw EngineError("opaque second-order symbol not innermost");
        if (x.kind == Deriv::DSigma && y.kind == Deriv::IotaP) {
          needs_cartan = true;
          return sign;
        }
        std::swap(x, y); // all other pairs commute without sign
        moved = true;
      }
    }
  }
  // symmetric pair order inside DOp2
  for (Deriv& d : w)
    if (d.kind == Deriv::DOp2 && d.i2 < d.i1) std::swap(d.i1, d.i2);
  return sign;
}

// degree walk: zero iff some contraction hits a bottom-degree form
bool word_kills(const Atom& a, const Context& ctx) {
  Affine s{};
  if (!a.is_bracket()) {
    const FieldSpec& fs = SymTab::instance().spec(a.sym);
    s = fs.sigma_form;
    if (!(a.power == Affine{0, 1})) {
      Atom undecorated(a.sym);
      undecorated.power = a.power;
      s = undecorated.sigma_degree(ctx);
    }
    if (a.label) s = Affine{};
  } else {
    Atom plain = a;
    plain.derivs.clear();
    s = plain.sigma_degree(ctx);
  }
  for (const Deriv& d : a.derivs) {
    if (d.kind == Deriv::IotaP) {
      if (ctx.n_value) {
        if (s.eval(*ctx.n_value) <= 0) return true;
      } else if (s.nonpositive_for_all(ctx.n_min)) {
        return true;
      } else if (!s.positive_for_all(ctx.n_min)) {
        throw EngineError("indeterminate form degree under contraction");
      }
    }
    s = s + Affine{0, d.form_shift()};
  }
  return false;
}

bool step_words(std::vector<Term>& terms, const Context& ctx) {
  bool changed = false;
  std::vector<Term> out;
  out.reserve(terms.size());
  for (std::size_t ti = 0; ti < terms.size(); ++ti) {
    Term& t = terms[ti];
    bool rewritten = false;
    bool killed = false;
    for (std::size_t i = 0; i < t.atoms.size() && !rewritten && !killed; ++i) {
      Atom& a = t.atoms[i];
      if (a.is_bracket()) continue; // bracket step owns these
      if (a.sym == SymTab::instance().kron() && (!a.derivs.empty() || a.var)) {
        killed = true; // the identification tensor is constant
        break;
      }
      if (!a.var && !a.derivs.empty() && a.derivs.front().kind == Deriv::Nabla &&
          SymTab::instance().spec(a.sym).nab_const) {
        killed = true; // metric compatibility: nabla annihilates the metric family
        break;
      }
      if (SymTab::instance().spec(a.sym).fixed &&
          (a.var || (!a.derivs.empty() && a.derivs.front().kind == Deriv::Tdot))) {
        killed = true; // background structure: no variation, no time dependence
        break;
      }
      {
        // the metric derivative acting directly on a plain scalar function is
        // the coordinate derivative; rewrite to the primitive spelling
        const FieldSpec& fs = SymTab::instance().spec(a.sym);
        if (!a.derivs.empty() && a.derivs.front().kind == Deriv::Nabla &&
            fs.bundle == Bundle::Scalar && fs.density_weight == 0 && !a.label &&
            fs.sigma_form.is_zero() && fs.vdeg.is_zero()) {
          a.derivs.front() = Deriv::partial(a.derivs.front().i1);
          changed = true;
        }
      }
      if (!(a.power == Affine{0, 1}) && a.var)
        throw EngineError("unexpanded variation on a merged power");
      if (!(a.power == Affine{0, 1}) && !a.derivs.empty()) {
        // Leibniz through a merged power: k b^(k-1) (d0 b), then the rest
        Deriv d0 = a.derivs.front();
        std::vector<Deriv> rest(a.derivs.begin() + 1, a.derivs.end());
        Expression sub;
        Term base(Coeff::affine_n(a.power.a, a.power.b));
        Affine down = a.power - Affine{0, 1};
        if (!down.is_zero()) {
          Atom restp(a.sym);
          restp.power = down;
          base.atoms.push_back(std::move(restp));
        }
        Atom derived(a.sym);
        derived.derivs.push_back(d0);
        base.atoms.push_back(std::move(derived));
        sub.terms.push_back(std::move(base));
        sub = apply_word(rest, std::move(sub), ctx);
        splice_at(t, i, sub, ctx, out);
        rewritten = true;
        break;
      }
      if (!a.derivs.empty()) {
        bool cartan = false;
        int s = sort_word_simple(a.derivs, cartan);
        if (s == 0) {
          killed = true;
          break;
        }
        if (s < 0) {
          t.c = -t.c;
          changed = true;
        }
        if (cartan) {
          // iota_a(d X) = partial_a X - d(iota_a X) at the flagged adjacency
          std::size_t k = 0;
          for (; k + 1 < a.derivs.size(); ++k)
            if (a.derivs[k].kind == Deriv::DSigma && a.derivs[k + 1].kind == Deriv::IotaP) break;
          Index ai = a.derivs[k + 1].i1;
          Expression sub;
          Atom a1 = a;
          a1.derivs.erase(a1.derivs.begin() + static_cast<long>(k),
                          a1.derivs.begin() + static_cast<long>(k) + 2);
          a1.derivs.insert(a1.derivs.begin() + static_cast<long>(k), Deriv::partial(ai));
          Atom a2 = a;
          std::swap(a2.derivs[k], a2.derivs[k + 1]);
          Term t1(Coeff(1));
          t1.atoms.push_back(std::move(a1));
          Term t2(Coeff(-1));
          t2.atoms.push_back(std::move(a2));
          sub.terms = {std::move(t1), std::move(t2)};
          splice_at(t, i, sub, ctx, out);
          rewritten = true;
          break;
        }
        if (word_kills(a, ctx)) {
          killed = true;
          break;
        }
      }
    }
    if (killed) {
      changed = true;
    } else if (!rewritten) {
      out.push_back(std::move(t));
    } else {
      changed = true;
    }
  }
  terms = std::move(out);
  return changed;
}

// --------------------------------------------------------------- rule step

// renames right-hand-side letters: bound pattern letters take the site's
// letters, everything else gets a letter unused in the host term
void bind_and_freshen(Expression& rhs, std::map<std::uint8_t, std::uint8_t> ren,
                      const Term& host) {
  bool used[64] = {false};
  {
    Term h = host;
    visit_indices(h, [&used](Index& ix) {
      if (ix.letter < 64) used[ix.letter] = true;
    });
  }
  auto fresh = [&used]() {
    for (std::uint8_t l = 0; l < 64; ++l)
      if (!used[l]) {
        used[l] = true;
        return l;
      }
    throw EngineError("out of index letters");
  };
  for (Term& t : rhs.terms)
    visit_indices(t, [&](Index& ix) {
      auto it = ren.find(ix.letter);
      if (it == ren.end()) it = ren.emplace(ix.letter, fresh()).first;
      ix.letter = it->second;
    });
}

Expression instantiate_rhs(const AtomRule& rule, const Atom& site, const Context& ctx,
                           const Term& host) {
  Expression rhs = rule.rhs;
  std::map<std::uint8_t, std::uint8_t> ren;
  if (rule.match_label && !rule.label_is_n) ren[kRuleSlot] = site.label->idx.letter;
  for (std::size_t k = 0; k < rule.idx_pattern.size(); ++k)
    ren[rule.idx_pattern[k]] = site.idx[k].letter;
  bind_and_freshen(rhs, std::move(ren), host);
  if (site.var) rhs = vary(rhs, ctx);
  if (site.var_outer) throw EngineError("rule fired on an opaque outer variation");
  rhs = apply_word(site.derivs, std::move(rhs), ctx);
  return rhs;
}

// Peels the innermost decoration of the site onto the rule's marker atoms (in
// place, no crossing sign -- see the DiffRule contract), then re-applies the
// remaining outer word.
Expression instantiate_diff(const DiffRule& rule, const Atom& site, const Context& ctx,
                            const Term& host) {
  Expression rhs = rule.rhs;
  std::map<std::uint8_t, std::uint8_t> ren;
  for (std::size_t k = 0; k < rule.idx_pattern.size(); ++k)
    ren[rule.idx_pattern[k]] = site.idx[k].letter;
  bind_and_freshen(rhs, std::move(ren), host);

  bool peel_var = site.var;
  std::vector<Deriv> rest = site.derivs;
  Deriv d0{};
  if (!peel_var) {
    d0 = rest.front();
    rest.erase(rest.begin());
  }
  for (Term& t : rhs.terms) {
    bool placed = false;
    for (Atom& a : t.atoms) {
      if (a.is_bracket() || a.sym != rule.marker) continue;
      if (placed) throw EngineError("declared derivative with several marker atoms");
      if (peel_var)
        a.var = true;
      else
        a.derivs.insert(a.derivs.begin(), d0);
      placed = true;
    }
    if (!placed) throw EngineError("declared derivative without a marker atom");
  }
  return apply_word(rest, std::move(rhs), ctx);
}

bool step_rules(std::vector<Term>& terms, const Context& ctx, const RuleSet* rules) {
  bool changed = false;
  std::vector<Term> out;
  out.reserve(terms.size());
  for (Term& t : terms) {
    // 1. single-atom rewrite rules (full definitions, then declared
    //    derivatives of decorated dependent symbols)
    std::size_t hit = t.atoms.size();
    const AtomRule* rule = nullptr;
    const DiffRule* drule = nullptr;
    if (rules) {
      for (std::size_t i = 0; i < t.atoms.size(); ++i) {
        const Atom& a = t.atoms[i];
        if (a.is_bracket() || a.var_outer) continue;
        rule = rules->find_atom(a.sym, a.label, a.idx.size());
        if (rule) {
          hit = i;
          break;
        }
      }
      if (!rule) {
        for (std::size_t i = 0; i < t.atoms.size(); ++i) {
          const Atom& a = t.atoms[i];
          if (a.is_bracket() || a.var_outer || a.label) continue;
          if (!a.var && a.derivs.empty()) continue; // undecorated: primitive
          if (!(a.power == Affine{0, 1})) continue; // power splits come first
          drule = rules->find_diff(a.sym);
          if (drule && drule->var_only && !a.var &&
              a.derivs.front().kind != Deriv::Tdot) {
            drule = nullptr; // spatial decorations stay opaque
            continue;
          }
          if (drule && drule->idx_pattern.size() == a.idx.size()) {
            hit = i;
            break;
          }
          drule = nullptr;
        }
      }
    }
    if (rule) {
      splice_at(t, hit, instantiate_rhs(*rule, t.atoms[hit], ctx, t), ctx, out);
      changed = true;
      continue;
    }
    if (drule) {
      splice_at(t, hit, instantiate_diff(*drule, t.atoms[hit], ctx, t), ctx, out);
      changed = true;
      continue;
    }
    // 2. metric-pair contraction rules
    bool pair_done = false;
    if (rules) {
      auto clean = [](const Atom& a) {
        return !a.is_bracket() && a.derivs.empty() && !a.var && !a.var_outer && !a.label &&
               a.power == Affine{0, 1};
      };
      for (const PairRule& pr : rules->pair_rules) {
        for (std::size_t i = 0; i < t.atoms.size() && !pair_done; ++i) {
          for (std::size_t j = i + 1; j < t.atoms.size() && !pair_done; ++j) {
            const Atom &x = t.atoms[i], &y = t.atoms[j];
            if (!clean(x) || !clean(y)) continue;
            bool direct = x.sym == pr.lower && y.sym == pr.upper;
            bool flipped = x.sym == pr.upper && y.sym == pr.lower;
            if (!direct && !flipped) continue;
            const Atom& lo = direct ? x : y;
            const Atom& up = direct ? y : x;
            std::vector<std::uint8_t> shared;
            for (const Index& il : lo.idx)
              for (const Index& iu : up.idx)
                if (il.letter == iu.letter) shared.push_back(il.letter);
            if (shared.empty()) continue;
            Term nt(t.c);
            nt.dt = t.dt;
            for (std::size_t m = 0; m < t.atoms.size(); ++m)
              if (m != i && m != j) nt.atoms.push_back(t.atoms[m]);
            if (shared.size() == 2) {
              nt.c *= Coeff::param(P_d); // full trace leaves the slice dimension
            } else {
              Index up_left{}, dn_left{};
              for (const Index& iu : up.idx)
                if (iu.letter != shared[0]) up_left = Index{iu.letter, true};
              for (const Index& il : lo.idx)
                if (il.letter != shared[0]) dn_left = Index{il.letter, false};
              Atom k(SymTab::instance().kron());
              k.idx = {up_left, dn_left};
              nt.atoms.push_back(std::move(k));
            }
            out.push_back(std::move(nt));
            pair_done = true;
          }
        }
        if (pair_done) break;
      }
    }
    if (pair_done) {
      changed = true;
      continue;
    }
    // 3. index identification (Kronecker) elimination
    bool kron_done = false;
    for (std::size_t i = 0; i < t.atoms.size() && !kron_done; ++i) {
      Atom& a = t.atoms[i];
      if (a.is_bracket() || a.sym != SymTab::instance().kron()) continue;
      Index up = a.idx.at(0), dn = a.idx.at(1);
      if (up.letter == dn.letter) {
        Term nt(t.c * Coeff::param(P_d));
        nt.dt = t.dt;
        for (std::size_t m = 0; m < t.atoms.size(); ++m)
          if (m != i) nt.atoms.push_back(t.atoms[m]);
        out.push_back(std::move(nt));
        kron_done = true;
        break;
      }
      // find a contracted partner occurrence elsewhere in the term
      bool replaced = false;
      Term nt = t;
      std::size_t seen_atom = 0;
      for (std::size_t m = 0; m < nt.atoms.size() && !replaced; ++m) {
        if (m == i) continue;
        visit_indices(nt.atoms[m], [&](Index& ix) {
          if (replaced) return;
          if (ix.letter == up.letter && !ix.up) {
            ix.letter = dn.letter;
            replaced = true;
          } else if (ix.letter == dn.letter && ix.up) {
            ix.letter = up.letter;
            replaced = true;
          }
        });
        seen_atom = m;
      }
      (void)seen_atom;
      if (replaced) {
        nt.atoms.erase(nt.atoms.begin() + static_cast<long>(i));
        out.push_back(std::move(nt));
        kron_done = true;
      }
    }
    if (kron_done) {
      changed = true;
      continue;
    }
    out.push_back(std::move(t));
  }
  terms = std::move(out);
  return changed;
}

// ------------------------------------------------------------- Koszul step

bool step_koszul(std::vector<Term>& terms, const Context& ctx) {
  bool changed = false;
  std::vector<Term> out;
  out.reserve(terms.size());
  for (Term& t : terms) {
    // bubble sort with graded signs
    bool moved = true;
    while (moved) {
      moved = false;
      for (std::size_t k = 0; k + 1 < t.atoms.size(); ++k) {
        if (Atom::cmp(t.atoms[k], t.atoms[k + 1]) > 0) {
          bool both_odd = (t.atoms[k].parity(ctx) & t.atoms[k + 1].parity(ctx) & 1) != 0;
          std::swap(t.atoms[k], t.atoms[k + 1]);
          if (both_odd) t.c = -t.c;
          moved = true;
          changed = true;
        }
      }
    }
    // odd square kill
    bool killed = false;
    for (std::size_t k = 0; k + 1 < t.atoms.size(); ++k)
      if (Atom::cmp(t.atoms[k], t.atoms[k + 1]) == 0 && (t.atoms[k].parity(ctx) & 1)) {
        killed = true;
        break;
      }
    if (killed) {
      changed = true;
      continue;
    }
    // merge multiplicative power families
    auto mergeable = [](const Atom& a) {
      return !a.is_bracket() && a.derivs.empty() && !a.var && !a.var_outer && !a.label &&
             SymTab::instance().spec(a.sym).power != PowerMode::None;
    };
    for (std::size_t k = 0; k + 1 < t.atoms.size();) {
      Atom &x = t.atoms[k], &y = t.atoms[k + 1];
      if (!x.is_bracket() && !y.is_bracket() && x.sym == y.sym && mergeable(x) && mergeable(y)) {
        x.power = x.power + y.power;
        t.atoms.erase(t.atoms.begin() + static_cast<long>(k) + 1);
        if (x.power.is_zero()) t.atoms.erase(t.atoms.begin() + static_cast<long>(k));
        changed = true;
      } else {
        ++k;
      }
    }
    out.push_back(std::move(t));
  }
  terms = std::move(out);
  return changed;
}

// ----------------------------------------------------------- overflow step

bool step_overflow(std::vector<Term>& terms, const Context& ctx) {
  bool changed = false;
  std::vector<Term> out;
  out.reserve(terms.size());
  for (Term& t : terms) {
    Affine s{}, v{};
    for (const Atom& a : t.atoms) {
      s = s + a.sigma_degree(ctx);
      v = v + a.v_degree(ctx);
    }
    if (ctx.overflow_sigma(s) || ctx.overflow_v(v)) {
      changed = true;
      continue;
    }
    out.push_back(std::move(t));
  }
  terms = std::move(out);
  return changed;
}

// -------------------------------------------------------------- index step

// local index-order canonicalization inside one term; returns the sign (0 on
// annihilation by a repeated contraction)
int local_sorts(Term& t, const Context& ctx) {
  int sign = 1;
  bool dead = false;
  visit_atoms(t, [&](Atom& a) {
    if (dead) return;
    if (!a.is_bracket()) {
      const FieldSpec& fs = SymTab::instance().spec(a.sym);
      if ((fs.bundle == Bundle::Sym2Up || fs.bundle == Bundle::Sym2Dn) && a.idx.size() == 2) {
        if (a.idx[1] < a.idx[0]) std::swap(a.idx[0], a.idx[1]);
      }
    }
    bool cartan = false;
    int s = sort_word_simple(a.derivs, cartan);
    // an unsplit homotopy adjacency is left for the next word pass
    if (s == 0) {
      dead = true;
      return;
    }
    sign *= s;
  });
  if (dead) return 0;
  (void)ctx;
  return sign;
}

struct Occurrence {
  int ups = 0, downs = 0;
};

// alpha-rename the dummies of one term by first structural appearance;
// returns false if the index pattern is ill-formed
void rename_dummies(Term& t) {
  std::map<std::uint8_t, Occurrence> occ;
  std::vector<std::uint8_t> order;
  visit_indices(t, [&](Index& ix) {
    auto [it, fresh] = occ.emplace(ix.letter, Occurrence{});
    if (fresh) order.push_back(ix.letter);
    if (ix.up)
      it->second.ups++;
    else
      it->second.downs++;
  });
  std::set<std::uint8_t> free_letters;
  for (auto& [l, o] : occ) {
    if (o.ups == 1 && o.downs == 1) continue; // dummy, rename below
    // anything else keeps its letter: single occurrences are free indices,
    // and repeated same-variance occurrences appear as intermediate states
    // (a frame contraction applied twice distributes over bracket slots
    // before the cross terms cancel) whose copies are structurally
    // identical, so collection does not need renaming to match them
    free_letters.insert(l);
  }
  // canonical letters for dummies: smallest letters not taken by free indices
  std::map<std::uint8_t, std::uint8_t> ren;
  std::uint8_t next = 0;
  auto take = [&]() {
    while (free_letters.count(next)) ++next;
    if (next >= 64) throw EngineError("out of index letters");
    return next++;
  };
  for (std::uint8_t l : order) {
    if (free_letters.count(l)) continue;
    ren[l] = take();
  }
  visit_indices(t, [&](Index& ix) {
    auto it = ren.find(ix.letter);
    if (it != ren.end()) ix.letter = it->second;
  });
}

// full canonical pass for one term: local sorts + Koszul sort + renaming to a
// cycle-stable state; returns false if the term annihilates
bool canonical_term(Term& t, const Context& ctx) {
  struct State {
    Term term;
    std::uint64_t h;
  };
  std::vector<State> seen;
  for (int iter = 0; iter < 16; ++iter) {
    int s = local_sorts(t, ctx);
    if (s == 0) return false;
    if (s < 0) t.c = -t.c;
    // Koszul order can shift once letters change
    bool moved = true;
    while (moved) {
      moved = false;
      for (std::size_t k = 0; k + 1 < t.atoms.size(); ++k)
        if (Atom::cmp(t.atoms[k], t.atoms[k + 1]) > 0) {
          bool both_odd = (t.atoms[k].parity(ctx) & t.atoms[k + 1].parity(ctx) & 1) != 0;
          std::swap(t.atoms[k], t.atoms[k + 1]);
          if (both_odd) t.c = -t.c;
          moved = true;
        }
    }
    rename_dummies(t);
    std::uint64_t h = t.key_hash() * 1099511628211ull + t.c.hash();
    for (const State& st : seen)
      if (st.h == h && Term::cmp_key(st.term, t) == 0 && st.term.c == t.c) {
        // cycle: adopt the lexicographically smallest state seen
        const Term* best = &t;
        for (const State& s2 : seen) {
          int c = Term::cmp_key(s2.term, *best);
          if (c < 0 || (c == 0 && s2.term.c < best->c)) best = &s2.term;
        }
        t = *best;
        return true;
      }
    seen.push_back(State{t, h});
    // converged if the last two states agree
    if (seen.size() >= 2) {
      const State& pa = seen[seen.size() - 2];
      if (pa.h == h && Term::cmp_key(pa.term, t) == 0 && pa.term.c == t.c) return true;
    }
  }
  return true;
}

// dummy-pair transpositions that may relate equivalent labelings
std::vector<std::pair<std::uint8_t, std::uint8_t>> symmetry_generators(Term& t) {
  std::vector<std::pair<std::uint8_t, std::uint8_t>> gens;
  auto add = [&gens](std::uint8_t x, std::uint8_t y) {
    if (x == y) return;
    if (y < x) std::swap(x, y);
    for (auto& g : gens)
      if (g.first == x && g.second == y) return;
    gens.emplace_back(x, y);
  };
  visit_atoms(t, [&](Atom& a) {
    if (!a.is_bracket()) {
      const FieldSpec& fs = SymTab::instance().spec(a.sym);
      if ((fs.bundle == Bundle::Sym2Up || fs.bundle == Bundle::Sym2Dn) && a.idx.size() == 2)
        add(a.idx[0].letter, a.idx[1].letter);
    }
    for (std::size_t k = 0; k < a.derivs.size(); ++k) {
      const Deriv& d = a.derivs[k];
      if (d.kind == Deriv::DOp2) add(d.i1.letter, d.i2.letter);
      if (k + 1 < a.derivs.size()) {
        const Deriv& e = a.derivs[k + 1];
        if (d.kind == e.kind && (d.kind == Deriv::Partial || d.kind == Deriv::IotaP))
          add(d.i1.letter, e.i1.letter);
      }
    }
  });
  if (gens.size() > 6) gens.resize(6); // orbit cap; sound but not exhaustive
  return gens;
}

bool step_indices(std::vector<Term>& terms, const Context& ctx) {
  bool changed = false;
  std::vector<Term> out;
  out.reserve(terms.size());
  for (Term& t : terms) {
    Term before = t;
    if (!canonical_term(t, ctx)) {
      changed = true;
      continue;
    }
    // explore the symmetry orbit for a smaller labeling or a sign clash
    auto gens = symmetry_generators(t);
    bool killed = false;
    if (!gens.empty()) {
      Term best = t;
      for (std::uint32_t mask = 1; mask < (1u << gens.size()); ++mask) {
        Term cand = t;
        for (std::size_t g = 0; g < gens.size(); ++g)
          if (mask & (1u << g)) {
            auto [x, y] = gens[g];
            visit_indices(cand, [&, x = x, y = y](Index& ix) {
              if (ix.letter == x)
                ix.letter = y;
              else if (ix.letter == y)
                ix.letter = x;
            });
          }
        if (!canonical_term(cand, ctx)) continue;
        int c = Term::cmp_key(cand, best);
        if (c == 0 && cand.c == -best.c) {
          killed = true;
          break;
        }
        if (c < 0) best = std::move(cand);
      }
      if (killed) {
        changed = true;
        continue;
      }
      if (Term::cmp_key(best, t) != 0) changed = true;
      t = std::move(best);
    }
    if (Term::cmp_key(before, t) != 0 || !(before.c == t.c)) changed = true;
    out.push_back(std::move(t));
  }
  terms = std::move(out);
  return changed;
}

} // namespace

// ------------------------------------------------------------------ driver

Expression normalize(Expression e, const Context& ctx, const RuleSet* rules) {
  collect(e);
  for (int pass = 0; pass < 64; ++pass) {
    bool changed = false;
    changed |= step_brackets(e.terms, ctx);
    changed |= step_words(e.terms, ctx);
    changed |= step_rules(e.terms, ctx, rules);
    changed |= step_koszul(e.terms, ctx);
    changed |= step_overflow(e.terms, ctx);
    changed |= step_indices(e.terms, ctx);
    collect(e);
    if (static_cast<long>(e.terms.size()) > ctx.max_terms)
      throw EngineError("term budget exceeded in normalize");
    if (!changed) return e;
  }
  throw EngineError("normalize did not reach a fixpoint");
}

// --------------------------------------------- invariance relations / spans

namespace {

using TermKey = Term;
struct KeyLess {
  bool operator()(const Term& a, const Term& b) const { return Term::cmp_key(a, b) < 0; }
};
using Row = std::map<TermKey, Coeff, KeyLess>;

Row to_row(const Expression& e) {
  Row r;
  for (const Term& t : e.terms) {
    Term key = t;
    key.c = Coeff(1);
    r[key] = t.c;
  }
  return r;
}

} // namespace

std::vector<Expression> invariance_relations(const Expression& residual, const Context& ctx,
                                             const RuleSet* rules) {
  std::vector<Expression> rels;
  std::set<std::string> seen;
  for (const Term& t : residual.terms) {
    // the Lie action of an algebra-valued atom annihilates top value degree
    Affine vtot{};
    for (const Atom& a : t.atoms) vtot = vtot + a.v_degree(ctx);
    if (!(vtot == Affine{1, 0})) continue;
    for (std::size_t i = 0; i < t.atoms.size(); ++i) {
      const Atom& a = t.atoms[i];
      if (!a.is_bracket()) continue;
      if (!(a.bl->v_degree(ctx) == Affine{0, 2})) continue; // actor must be algebra-valued
      Expression actor;
      {
        Term ta(Coeff(1));
        ta.atoms.push_back(*a.bl);
        actor.terms.push_back(std::move(ta));
      }
      Expression untied;
      {
        Term tu(Coeff(1));
        tu.dt = t.dt;
        tu.atoms = t.atoms;
        tu.atoms[i] = *a.br;
        untied.terms.push_back(std::move(tu));
      }
      Expression rel = normalize(bracket_of(actor, untied, ctx), ctx, rules);
      if (rel.is_zero()) continue;
      std::string sig;
      for (const Term& rt : rel.terms) {
        sig += std::to_string(rt.key_hash());
        sig += ':';
        sig += rt.c.str();
        sig += ';';
      }
      if (seen.insert(sig).second) rels.push_back(std::move(rel));
    }
  }
  return rels;
}

bool span_reduce(Expression& target, const std::vector<Expression>& relations,
                 std::vector<Coeff>* sol, const Context& ctx) {
  (void)ctx;
  Row tr = to_row(target);
  std::vector<Row> rows;
  rows.reserve(relations.size());
  for (const Expression& r : relations) rows.push_back(to_row(r));
  if (sol) sol->assign(relations.size(), Coeff(0));
  // track the relation combination forming each echelon row
  std::vector<std::vector<Coeff>> combo(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    combo[i].assign(relations.size(), Coeff(0));
    combo[i][i] = Coeff(1);
  }
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    // eliminate with previously fixed pivots
    for (std::size_t u : used) {
      const TermKey& pk = rows[u].begin()->first;
      auto it = rows[i].find(pk);
      if (it == rows[i].end()) continue;
      Coeff f = it->second / rows[u].begin()->second;
      for (const auto& [k, v] : rows[u]) {
        auto jt = rows[i].find(k);
        if (jt == rows[i].end()) {
          rows[i][k] = -(f * v);
          if (rows[i][k].is_zero()) rows[i].erase(k);
        } else {
          jt->second -= f * v;
          if (jt->second.is_zero()) rows[i].erase(jt);
        }
      }
      for (std::size_t m = 0; m < relations.size(); ++m) combo[i][m] -= f * combo[u][m];
    }
    if (!rows[i].empty()) used.push_back(i);
  }
  // reduce the target
  std::vector<Coeff> lam(relations.size(), Coeff(0));
  for (std::size_t u : used) {
    const TermKey& pk = rows[u].begin()->first;
    auto it = tr.find(pk);
    if (it == tr.end()) continue;
    Coeff f = it->second / rows[u].begin()->second;
    for (const auto& [k, v] : rows[u]) {
      auto jt = tr.find(k);
      if (jt == tr.end()) {
        tr[k] = -(f * v);
        if (tr[k].is_zero()) tr.erase(k);
      } else {
        jt->second -= f * v;
        if (jt->second.is_zero()) tr.erase(jt);
      }
    }
    for (std::size_t m = 0; m < relations.size(); ++m) lam[m] += f * combo[u][m];
  }
  if (!tr.empty()) return false;
  if (sol) *sol = std::move(lam);
  target.terms.clear();
  return true;
}

bool is_zero_invariant(const Expression& e, const Context& ctx, const RuleSet* rules) {
  Expression n = normalize(e, ctx, rules);
  if (n.is_zero()) return true;
  std::vector<Expression> rels = invariance_relations(n, ctx, rules);
  if (rels.empty()) return false;
  return span_reduce(n, rels, nullptr, ctx);
}

} // namespace gfv
