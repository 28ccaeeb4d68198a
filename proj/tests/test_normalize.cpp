// Normal-form engine: cross-validated against the exterior-algebra oracle on
// the ring/sign layer, and against structural operator identities (nilpotence,
// graded Leibniz, the contraction homotopy) on the rewrite layer.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gfv/calculus.hpp"
#include "gfv/grassmann.hpp"

#include <random>

using namespace gfv;

namespace {

void register_alphabet() {
  static bool done = false;
  if (done) return;
  done = true;
  auto reg = [](const char* n, Affine sf, int gh, Affine vd, Bundle b, PowerMode pw = PowerMode::None,
                int w = 0) {
    FieldSpec fs;
    fs.name = n;
    fs.sigma_form = sf;
    fs.ghost = gh;
    fs.vdeg = vd;
    fs.bundle = b;
    fs.power = pw;
    fs.density_weight = w;
    SymTab::instance().add(fs);
  };
  reg("n_a", {0, 0}, 0, {0, 0}, Bundle::Scalar);               // even scalar
  reg("n_b", {0, 0}, 0, {0, 0}, Bundle::Scalar);               // even scalar
  reg("n_f", {0, 0}, 1, {0, 0}, Bundle::Scalar);               // odd scalar
  reg("n_g", {0, 0}, 1, {0, 0}, Bundle::Scalar);               // odd scalar
  reg("n_w", {0, 1}, 0, {0, 2}, Bundle::Connection);           // odd (1+2)
  reg("n_c", {0, 0}, 1, {0, 2}, Bundle::Connection);           // odd ghost connection
  reg("n_x", {0, 0}, 0, {0, 1}, Bundle::FormV);                // odd value vector
  reg("n_y", {0, 1}, 0, {0, 1}, Bundle::FormV);                // even value one-form
  reg("n_e", {0, 1}, 0, {0, 1}, Bundle::FormV, PowerMode::Coframe);
  reg("n_h", {0, 0}, 0, {0, 0}, Bundle::Scalar, PowerMode::InvertibleScalar);
  reg("n_m", {0, 0}, 0, {0, 0}, Bundle::Density, PowerMode::InvertibleScalar, 1);
  reg("n_gu", {0, 0}, 0, {0, 0}, Bundle::Sym2Up);
  reg("n_gd", {0, 0}, 0, {0, 0}, Bundle::Sym2Dn);
  reg("n_v", {0, 0}, 0, {0, 0}, Bundle::Vector);
  reg("n_u", {0, 0}, 0, {0, 0}, Bundle::Covector);
  reg("n_s2", {0, 2}, 0, {0, 0}, Bundle::Scalar);              // slice two-form
  reg("n_xi", {0, 0}, 1, {0, 0}, Bundle::Vector);              // odd vector field
}

Expression expr_of(Term t, Domain d = Domain::None) {
  Expression e(d);
  e.terms.push_back(std::move(t));
  return e;
}

Expression atom_expr(const std::string& n) { return expr_of([&] {
  Term t(Coeff(1));
  t.atoms.push_back(make_atom(n));
  return t;
}()); }

// random ring-layer expressions: decorated atoms, bare brackets, dt slots,
// no indices / derivation words / power families (those are rewrite-layer)
struct RingGen {
  std::mt19937_64 rng;
  explicit RingGen(std::uint64_t seed) : rng(seed) {}

  Atom rand_atom(bool allow_bracket) {
    static const char* scalars[] = {"n_a", "n_b", "n_f", "n_g"};
    static const char* values[] = {"n_w", "n_c", "n_x", "n_y"};
    std::uint64_t r = rng();
    Atom a;
    if (allow_bracket && r % 7 == 0) {
      // brackets stay undecorated here: a variation mark on a bracket is a
      // rewrite-layer state (it expands by Leibniz into the slots), not a
      // terminal generator the oracle could assign independently
      Atom l = make_atom(values[(r / 8) % 4]);
      Atom rr = make_atom(values[(r / 64) % 4]);
      a = Atom::bracket(std::move(l), std::move(rr));
      return a;
    }
    if (r % 3 == 0) {
      a = make_atom(values[(r / 8) % 4]);
    } else {
      a = make_atom(scalars[(r / 8) % 4]);
    }
    if ((r >> 20) % 5 == 0) a.var = true;
    return a;
  }

  Term rand_term() {
    Term t(Coeff(static_cast<long>(rng() % 9) - 4));
    if (t.c.is_zero()) t.c = Coeff(1);
    if (rng() % 3 == 0) t.c *= Coeff::affine_n(1, -2);
    int n = 1 + static_cast<int>(rng() % 3);
    int value_atoms = 0;
    for (int i = 0; i < n; ++i) {
      Atom a = rand_atom(value_atoms < 2);
      Context ctx;
      if (!a.v_degree(ctx).is_zero()) {
        if (value_atoms >= 2) continue; // keep value degree below overflow
        ++value_atoms;
      }
      t.atoms.push_back(std::move(a));
    }
    t.dt = rng() % 4 == 0 ? 1 : 0;
    return t;
  }

  Expression rand_expr(int max_terms) {
    Expression e;
    int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_terms));
    for (int i = 0; i < n; ++i) e.terms.push_back(rand_term());
    return e;
  }
};

bool norm_zero(const Expression& e, const Context& ctx) {
  return normalize(e, ctx, nullptr).is_zero();
}

} // namespace

TEST_CASE("ring layer agrees with the exterior-algebra oracle") {
  register_alphabet();
  Context ctx;
  RingGen gen(0xbead5eedull);
  GAssign ga(11u, ctx), gb(12u, ctx);
  for (int it = 0; it < 1200; ++it) {
    Expression e = gen.rand_expr(4);
    Expression n = normalize(e, ctx);
    CHECK(ga.eval(e) == ga.eval(n));
    CHECK(gb.eval(e) == gb.eval(n));
    // idempotence
    Expression n2 = normalize(n, ctx);
    CHECK(n == n2);
  }
}

TEST_CASE("product and sum are ring homomorphisms into the oracle") {
  register_alphabet();
  Context ctx;
  RingGen gen(0x77123456ull);
  GAssign ga(21u, ctx);
  for (int it = 0; it < 1000; ++it) {
    Expression a = gen.rand_expr(3);
    Expression b = gen.rand_expr(3);
    CHECK(ga.eval(mul(a, b, ctx)) == ga.eval(a) * ga.eval(b));
    CHECK(ga.eval(add(a, b)) == ga.eval(a) + ga.eval(b));
    CHECK(ga.eval(scale(a, Coeff(-7))) == ga.eval(a).scale(Rat(-7)));
  }
}

TEST_CASE("exterior derivatives and the variation are square-zero and anticommute") {
  register_alphabet();
  Context ctx;
  RingGen gen(0x13571357ull);
  for (int it = 0; it < 1000; ++it) {
    Expression x = gen.rand_expr(3);
    CHECK(norm_zero(apply_dsigma(apply_dsigma(x, ctx), ctx), ctx));
    CHECK(norm_zero(vary(vary(x, ctx), ctx), ctx));
    CHECK(norm_zero(apply_dinterval(apply_dinterval(x, ctx), ctx), ctx));
    CHECK(norm_zero(add(apply_dsigma(apply_dinterval(x, ctx), ctx),
                        apply_dinterval(apply_dsigma(x, ctx), ctx)),
                    ctx));
    CHECK(norm_zero(add(vary(apply_dsigma(x, ctx), ctx), apply_dsigma(vary(x, ctx), ctx)), ctx));
    CHECK(norm_zero(add(vary(apply_dinterval(x, ctx), ctx),
                        apply_dinterval(vary(x, ctx), ctx)),
                    ctx));
  }
}

TEST_CASE("contraction homotopy: iota_a d + d iota_a = partial_a") {
  register_alphabet();
  Context ctx;
  RingGen gen(0x24682468ull);
  Index a{20, false};
  for (int it = 0; it < 1000; ++it) {
    Expression x = gen.rand_expr(3);
    Expression lhs = add(iota_frame(a, apply_dsigma(x, ctx), ctx),
                         apply_dsigma(iota_frame(a, x, ctx), ctx));
    Expression rhs = apply_deriv_op(Deriv::partial(a), x, ctx);
    CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());
  }
}

TEST_CASE("frame contractions anticommute, coordinate derivatives commute") {
  register_alphabet();
  Context ctx;
  RingGen gen(0x99887766ull);
  Index a{20, false}, b{21, false};
  for (int it = 0; it < 1000; ++it) {
    Expression x = gen.rand_expr(2);
    CHECK(norm_zero(add(iota_frame(a, iota_frame(b, x, ctx), ctx),
                        iota_frame(b, iota_frame(a, x, ctx), ctx)),
                    ctx));
    CHECK(norm_zero(iota_frame(a, iota_frame(a, x, ctx), ctx), ctx));
    Expression pab = apply_deriv_op(Deriv::partial(a), apply_deriv_op(Deriv::partial(b), x, ctx), ctx);
    Expression pba = apply_deriv_op(Deriv::partial(b), apply_deriv_op(Deriv::partial(a), x, ctx), ctx);
    CHECK(normalize(add(pab, scale(pba, Coeff(-1))), ctx).is_zero());
  }
}

TEST_CASE("graded Leibniz for d, the variation, and the interval derivative") {
  register_alphabet();
  Context ctx;
  RingGen gen(0x50505050ull);
  for (int it = 0; it < 1000; ++it) {
    Term ta = gen.rand_term();
    ta.dt = 0; // keep the product nonzero
    Term tb = gen.rand_term();
    Expression A = expr_of(ta), B = expr_of(tb);
    int pa = ta.total_parity(ctx);
    Expression ab = mul(A, B, ctx);

    Expression lhs = apply_dsigma(ab, ctx);
    Expression rhs = add(mul(apply_dsigma(A, ctx), B, ctx),
                         scale(mul(A, apply_dsigma(B, ctx), ctx), Coeff(pa ? -1 : 1)));
    CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());

    lhs = vary(ab, ctx);
    rhs = add(mul(vary(A, ctx), B, ctx),
              scale(mul(A, vary(B, ctx), ctx), Coeff(pa ? -1 : 1)));
    CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());

    lhs = apply_dinterval(ab, ctx);
    rhs = add(mul(apply_dinterval(A, ctx), B, ctx),
              scale(mul(A, apply_dinterval(B, ctx), ctx), Coeff(pa ? -1 : 1)));
    CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());

    // contraction along an odd vector field is an even derivation
    lhs = iota_field("n_xi", ab, ctx);
    rhs = add(mul(iota_field("n_xi", A, ctx), B, ctx),
              mul(A, iota_field("n_xi", B, ctx), ctx));
    CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());
  }
}

TEST_CASE("bracket push-down matches slot-level application") {
  register_alphabet();
  Context ctx;
  Expression w = atom_expr("n_w");
  Expression x = atom_expr("n_x");
  Expression y = atom_expr("n_y");
  // d[w,x] = [dw,x] - [w,dx]  (w odd)
  Expression lhs = normalize(apply_dsigma(bracket_of(w, x, ctx), ctx), ctx);
  Expression rhs = normalize(add(bracket_of(apply_dsigma(w, ctx), x, ctx),
                                 scale(bracket_of(w, apply_dsigma(x, ctx), ctx), Coeff(-1))),
                             ctx);
  CHECK(lhs == rhs);
  // delta[w,y] = [delta w, y] - [w, delta y]
  lhs = normalize(vary(bracket_of(w, y, ctx), ctx), ctx);
  rhs = normalize(add(bracket_of(vary(w, ctx), y, ctx),
                      scale(bracket_of(w, vary(y, ctx), ctx), Coeff(-1))),
                  ctx);
  CHECK(lhs == rhs);
  // derivation property over products
  Expression xy = mul(x, y, ctx);
  lhs = normalize(bracket_of(w, xy, ctx), ctx);
  rhs = normalize(add(mul(bracket_of(w, x, ctx), y, ctx),
                      scale(mul(x, bracket_of(w, y, ctx), ctx), Coeff(-1))),
                  ctx);
  CHECK(lhs == rhs);
}

TEST_CASE("power families: scaled Leibniz and multiplicative merging") {
  register_alphabet();
  Context ctx;
  Atom ek = make_atom("n_e");
  ek.power = Affine{1, -3};
  Expression Ek = expr_of([&] {
    Term t(Coeff(1));
    t.atoms.push_back(ek);
    return t;
  }());

  // delta(e^{N-3}) = (N-3) e^{N-4} delta e
  Expression got = normalize(vary(Ek, ctx), ctx);
  Expression want;
  {
    Term t(Coeff::affine_n(1, -3));
    Atom rest = make_atom("n_e");
    rest.power = Affine{1, -4};
    Atom de = make_atom("n_e");
    de.var = true;
    t.atoms = {rest, de};
    want = normalize(expr_of(std::move(t)), ctx);
  }
  CHECK(got == want);

  // d(e^{N-3}) = (N-3) e^{N-4} de
  got = normalize(apply_dsigma(Ek, ctx), ctx);
  {
    Term t(Coeff::affine_n(1, -3));
    Atom rest = make_atom("n_e");
    rest.power = Affine{1, -4};
    Atom de = make_atom("n_e");
    de.derivs.push_back(Deriv::dsigma());
    t.atoms = {rest, de};
    want = normalize(expr_of(std::move(t)), ctx);
  }
  CHECK(got == want);

  // e * e^{N-4} merges to e^{N-3}
  {
    Term t(Coeff(1));
    Atom e1 = make_atom("n_e");
    Atom er = make_atom("n_e");
    er.power = Affine{1, -4};
    t.atoms = {e1, er};
    Expression merged = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(merged.size() == 1);
    CHECK(merged.terms[0].atoms.size() == 1);
    CHECK(merged.terms[0].atoms[0].power == Affine{1, -3});
  }

  // h * h^{-1} = 1
  {
    Term t(Coeff(1));
    Atom h = make_atom("n_h");
    Atom hi = make_atom("n_h");
    hi.power = Affine{0, -1};
    t.atoms = {h, hi};
    Expression one = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(one.size() == 1);
    CHECK(one.terms[0].atoms.empty());
    CHECK(one.terms[0].c == Coeff(1));
  }
}

TEST_CASE("index canonicalization: symmetric-antisymmetric contractions vanish") {
  register_alphabet();
  Context ctx;
  // iota_a iota_b (s2) gamma^{ab} = 0 by symmetry
  {
    Term t(Coeff(1));
    Atom s = make_atom("n_s2");
    s.derivs.push_back(Deriv::iota(Index{0, false}));
    s.derivs.push_back(Deriv::iota(Index{1, false}));
    Atom g = make_atom("n_gu");
    g.idx = {Index{0, true}, Index{1, true}};
    t.atoms = {s, g};
    CHECK(normalize(expr_of(std::move(t)), ctx).is_zero());
  }
  // iota_a iota_b (s2) v^a v^b with an even vector is symmetric x
  // antisymmetric as well
  {
    Term t(Coeff(1));
    Atom s = make_atom("n_s2");
    s.derivs.push_back(Deriv::iota(Index{0, false}));
    s.derivs.push_back(Deriv::iota(Index{1, false}));
    Atom v1 = make_atom("n_v");
    v1.idx = {Index{0, true}};
    Atom v2 = make_atom("n_v");
    v2.idx = {Index{1, true}};
    t.atoms = {s, v1, v2};
    CHECK(normalize(expr_of(std::move(t)), ctx).is_zero());
  }
  // with an odd vector the square is antisymmetric too, so it survives
  {
    Term t(Coeff(1));
    Atom s = make_atom("n_s2");
    s.derivs.push_back(Deriv::iota(Index{0, false}));
    s.derivs.push_back(Deriv::iota(Index{1, false}));
    Atom x1 = make_atom("n_xi");
    x1.idx = {Index{0, true}};
    Atom x2 = make_atom("n_xi");
    x2.idx = {Index{1, true}};
    t.atoms = {s, x1, x2};
    CHECK_FALSE(normalize(expr_of(std::move(t)), ctx).is_zero());
  }
  // partial_a partial_b f gamma^{ab} survives (symmetric-symmetric)
  {
    Term t(Coeff(1));
    Atom f = make_atom("n_a");
    f.derivs.push_back(Deriv::partial(Index{0, false}));
    f.derivs.push_back(Deriv::partial(Index{1, false}));
    Atom g = make_atom("n_gu");
    g.idx = {Index{0, true}, Index{1, true}};
    t.atoms = {f, g};
    CHECK_FALSE(normalize(expr_of(std::move(t)), ctx).is_zero());
  }
  // alpha-equivalent terms collect: gamma^{ab} u_a u'_b written two ways
  {
    Term t1(Coeff(1));
    Atom g = make_atom("n_gu");
    g.idx = {Index{3, true}, Index{5, true}};
    Atom ua = make_atom("n_u");
    ua.idx = {Index{3, false}};
    Atom ub = make_atom("n_u");
    ub.idx = {Index{5, false}};
    t1.atoms = {g, ua, ub};
    Term t2(Coeff(-1));
    Atom g2 = make_atom("n_gu");
    g2.idx = {Index{9, true}, Index{7, true}};
    Atom ua2 = make_atom("n_u");
    ua2.idx = {Index{7, false}};
    Atom ub2 = make_atom("n_u");
    ub2.idx = {Index{9, false}};
    t2.atoms = {g2, ua2, ub2};
    Expression e;
    e.terms = {t1, t2};
    CHECK(normalize(e, ctx).is_zero());
  }
}

TEST_CASE("index identification tensor: traces and contractions") {
  register_alphabet();
  Context ctx;
  // kron^a_a = d
  {
    Term t(Coeff(1));
    Atom k(SymTab::instance().kron());
    k.idx = {Index{0, true}, Index{0, false}};
    t.atoms = {k};
    Expression n = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(n.size() == 1);
    CHECK(n.terms[0].atoms.empty());
    CHECK(n.terms[0].c == Coeff::param(P_d));
  }
  // kron^a_b v^b = v^a
  {
    Term t(Coeff(1));
    Atom k(SymTab::instance().kron());
    k.idx = {Index{0, true}, Index{1, false}};
    Atom v = make_atom("n_v");
    v.idx = {Index{1, true}};
    t.atoms = {k, v};
    Expression n = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(n.size() == 1);
    REQUIRE(n.terms[0].atoms.size() == 1);
    CHECK(n.terms[0].atoms[0].idx[0].up);
  }
}

TEST_CASE("metric pair rules contract to identifications") {
  register_alphabet();
  Context ctx;
  RuleSet rules;
  rules.pair_rules.push_back(PairRule{SymTab::instance().id("n_gd"), SymTab::instance().id("n_gu")});
  // gamma_{ab} gamma^{bc} u_c = u_a
  {
    Term t(Coeff(1));
    Atom gd = make_atom("n_gd");
    gd.idx = {Index{0, false}, Index{1, false}};
    Atom gu = make_atom("n_gu");
    gu.idx = {Index{1, true}, Index{2, true}};
    Atom u = make_atom("n_u");
    u.idx = {Index{2, false}};
    t.atoms = {gd, gu, u};
    Expression n = normalize(expr_of(std::move(t)), ctx, &rules);
    REQUIRE(n.size() == 1);
    REQUIRE(n.terms[0].atoms.size() == 1);
    CHECK(n.terms[0].atoms[0].sym == SymTab::instance().id("n_u"));
    CHECK(n.terms[0].atoms[0].idx[0].letter == 0);
  }
  // gamma_{ab} gamma^{ab} = d
  {
    Term t(Coeff(1));
    Atom gd = make_atom("n_gd");
    gd.idx = {Index{0, false}, Index{1, false}};
    Atom gu = make_atom("n_gu");
    gu.idx = {Index{0, true}, Index{1, true}};
    t.atoms = {gd, gu};
    Expression n = normalize(expr_of(std::move(t)), ctx, &rules);
    REQUIRE(n.size() == 1);
    CHECK(n.terms[0].atoms.empty());
    CHECK(n.terms[0].c == Coeff::param(P_d));
  }
}

TEST_CASE("atom rules fire under stored derivations and variations") {
  register_alphabet();
  Context ctx;
  // component relation: eps-style field, round-a label -> -(v^a) h^{-1}
  FieldSpec fs;
  fs.name = "n_epsf";
  fs.vdeg = Affine{0, 1};
  fs.bundle = Bundle::FormV;
  SymTab::instance().add(fs);
  RuleSet rules;
  AtomRule r;
  r.sym = SymTab::instance().id("n_epsf");
  r.match_label = true;
  r.label_kind = 0;
  r.label_is_n = false;
  {
    Term t(Coeff(-1));
    Atom v = make_atom("n_v");
    v.idx = {Index{kRuleSlot, true}};
    Atom hi = make_atom("n_h");
    hi.power = Affine{0, -1};
    t.atoms = {v, hi};
    r.rhs.terms.push_back(std::move(t));
  }
  rules.atom_rules.push_back(std::move(r));

  auto labelled = [&](bool with_var, bool with_d) {
    Term t(Coeff(1));
    Atom a = make_atom("n_epsf");
    a.label = CompLabel{0, false, Index{4, true}};
    a.var = with_var;
    if (with_d) a.derivs.push_back(Deriv::dsigma());
    Atom u = make_atom("n_u");
    u.idx = {Index{4, false}};
    t.atoms = {a, u};
    return expr_of(std::move(t));
  };
  // plain: fires to -v^a h^{-1} u_a
  Expression n = normalize(labelled(false, false), ctx, &rules);
  REQUIRE(n.size() == 1);
  CHECK(n.terms[0].atoms.size() == 3);
  // under a variation: two Leibniz pieces
  n = normalize(labelled(true, false), ctx, &rules);
  CHECK(n.size() == 2);
  // under d: two Leibniz pieces as well
  n = normalize(labelled(false, true), ctx, &rules);
  CHECK(n.size() == 2);
}

TEST_CASE("degree overflow annihilates and the invariance zero test works") {
  register_alphabet();
  Context ctx;
  // slice form degree beyond the slice dimension dies: (d x)(d y) e^{N-2}
  {
    Term t(Coeff(1));
    Atom xd = make_atom("n_x");
    xd.derivs.push_back(Deriv::dsigma());
    Atom yd = make_atom("n_y");
    yd.derivs.push_back(Deriv::dsigma());
    Atom ek = make_atom("n_e");
    ek.power = Affine{1, -2};
    t.atoms = {xd, yd, ek};
    CHECK(normalize(expr_of(std::move(t)), ctx).is_zero());
  }
  // value degree beyond the bundle dimension dies: x e^{N}
  {
    Term t(Coeff(1));
    Atom x = make_atom("n_x");
    Atom ek = make_atom("n_e");
    ek.power = Affine{1, 0};
    t.atoms = {x, ek};
    CHECK(normalize(expr_of(std::move(t)), ctx).is_zero());
  }
  // the Lie action of a ghost on a full-value-degree product is zero
  {
    Term t(Coeff(1));
    Atom ek = make_atom("n_e");
    ek.power = Affine{1, -1};
    Atom x = make_atom("n_x");
    t.atoms = {ek, x};
    Expression target = expr_of(std::move(t));
    Expression c = atom_expr("n_c");
    Expression acted = bracket_of(c, target, Context{});
    CHECK_FALSE(normalize(acted, ctx).is_zero()); // not a rewrite-level zero
    CHECK(is_zero_invariant(acted, ctx, nullptr)); // but an invariance zero
    // a single piece alone is not in the invariance span
    Expression half = bracket_of(c, expr_of([&] {
                                   Term t2(Coeff(1));
                                   Atom ek2 = make_atom("n_e");
                                   ek2.power = Affine{1, -1};
                                   t2.atoms = {ek2};
                                   return t2;
                                 }()),
                                 ctx);
    half = mul(half, atom_expr("n_x"), ctx);
    CHECK_FALSE(is_zero_invariant(half, ctx, nullptr));
  }
}

TEST_CASE("nested brackets reach one normal form through the Jacobi identity") {
  register_alphabet();
  Context ctx;
  Expression c = atom_expr("n_c");
  Expression w = atom_expr("n_w");
  Expression x = atom_expr("n_x");
  // [c,[c,c]] = 0 for an odd generator
  CHECK(normalize(bracket_of(c, bracket_of(c, c, ctx), ctx), ctx).is_zero());
  // (1/2)[[c,c],w] = [c,[c,w]]
  Expression lhs = scale(bracket_of(bracket_of(c, c, ctx), w, ctx), Coeff(Poly(Rat(1, 2)), Poly(Rat(1))));
  Expression rhs = bracket_of(c, bracket_of(c, w, ctx), ctx);
  CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());
  // the square of the covariant derivative is the curvature action:
  // d_w d_w x = [dw + (1/2)[w,w], x]
  Expression curv = add(apply_dsigma(w, ctx),
                        scale(bracket_of(w, w, ctx), Coeff(Poly(Rat(1, 2)), Poly(Rat(1)))));
  lhs = cov_d(w, cov_d(w, x, ctx), ctx);
  rhs = bracket_of(curv, x, ctx);
  CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());
}

TEST_CASE("covariant Lie derivative along an odd field is an odd derivation") {
  register_alphabet();
  Context ctx;
  Expression w = atom_expr("n_w");
  Expression x = atom_expr("n_x"); // odd factor: the second Leibniz piece flips
  Expression y = atom_expr("n_y");
  Expression xy = mul(x, y, ctx);
  Expression lhs = lie_cov("n_xi", w, xy, ctx);
  Expression rhs = add(mul(lie_cov("n_xi", w, x, ctx), y, ctx),
                       scale(mul(x, lie_cov("n_xi", w, y, ctx), ctx), Coeff(-1)));
  CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx).is_zero());
}

TEST_CASE("normalization is deterministic") {
  register_alphabet();
  Context ctx;
  RingGen g1(42), g2(42);
  for (int it = 0; it < 200; ++it) {
    Expression a = g1.rand_expr(4);
    Expression b = g2.rand_expr(4);
    CHECK(normalize(a, ctx) == normalize(b, ctx));
  }
}

namespace {

// A metric-style vocabulary: an upper fundamental pair field, its lowered
// companion and volume factor (both carrying declared derivatives), an opaque
// curvature-style scalar, and a fixed background constant.
void register_metric_alphabet() {
  static bool done = false;
  if (done) return;
  done = true;
  auto reg = [](const char* n, Bundle b, PowerMode pw, int w, bool nab, bool fx) {
    FieldSpec fs;
    fs.name = n;
    fs.bundle = b;
    fs.power = pw;
    fs.density_weight = w;
    fs.nab_const = nab;
    fs.fixed = fx;
    SymTab::instance().add(fs);
  };
  reg("t_g", Bundle::Sym2Up, PowerMode::None, 0, true, false);
  reg("t_gl", Bundle::Sym2Dn, PowerMode::None, 0, true, false);
  reg("t_s", Bundle::Density, PowerMode::InvertibleScalar, 1, true, false);
  reg("t_r", Bundle::Scalar, PowerMode::None, 0, false, false);
  reg("t_p", Bundle::Scalar, PowerMode::None, 0, false, false);
  reg("t_d", Bundle::Sym2Dn, PowerMode::None, 0, false, false);
  reg("t_k", Bundle::Scalar, PowerMode::None, 0, false, true);
}

RuleSet metric_rules() {
  register_metric_alphabet();
  SymTab& st = SymTab::instance();
  RuleSet rules;
  rules.pair_rules.push_back(PairRule{st.id("t_gl"), st.id("t_g")});
  {
    // D gl_{ab} = -gl_{ac} gl_{be} (D g)^{ce}
    DiffRule r;
    r.sym = st.id("t_gl");
    r.marker = st.id("t_g");
    r.idx_pattern = {0, 1};
    Term t(Coeff(-1));
    Atom a1(r.sym);
    a1.idx = {Index{0, false}, Index{2, false}};
    Atom a2(r.sym);
    a2.idx = {Index{1, false}, Index{3, false}};
    Atom a3(r.marker);
    a3.idx = {Index{2, true}, Index{3, true}};
    t.atoms = {a1, a2, a3};
    r.rhs.terms.push_back(std::move(t));
    rules.diff_rules.push_back(std::move(r));
  }
  {
    // D s = -1/2 s gl_{ab} (D g)^{ab}
    DiffRule r;
    r.sym = st.id("t_s");
    r.marker = st.id("t_g");
    Term t(Coeff(Poly(Rat(-1, 2)), Poly(Rat(1))));
    Atom a1(r.sym);
    Atom a2(st.id("t_gl"));
    a2.idx = {Index{0, false}, Index{1, false}};
    Atom a3(r.marker);
    a3.idx = {Index{0, true}, Index{1, true}};
    t.atoms = {a1, a2, a3};
    r.rhs.terms.push_back(std::move(t));
    rules.diff_rules.push_back(std::move(r));
  }
  {
    // D r = g^{ab} nabla_a nabla_b (D p): second derivatives land on the marker
    DiffRule r;
    r.sym = st.id("t_r");
    r.marker = st.id("t_p");
    Term t(Coeff(1));
    Atom a1(st.id("t_g"));
    a1.idx = {Index{0, true}, Index{1, true}};
    Atom a2(r.marker);
    a2.derivs = {Deriv::nabla(Index{1, false}), Deriv::nabla(Index{0, false})};
    t.atoms = {a1, a2};
    r.rhs.terms.push_back(std::move(t));
    r.var_only = true; // curvature-style: only variations and time derivatives expand
    rules.diff_rules.push_back(std::move(r));
  }
  return rules;
}

Expression trace_pair() {
  Term t(Coeff(1));
  Atom gu(SymTab::instance().id("t_g"));
  gu.idx = {Index{0, true}, Index{1, true}};
  Atom gl(SymTab::instance().id("t_gl"));
  gl.idx = {Index{0, false}, Index{1, false}};
  t.atoms = {gu, gl};
  return expr_of(std::move(t));
}

} // namespace

TEST_CASE("declared derivatives keep the pair identity under every derivation") {
  Context ctx;
  RuleSet rules = metric_rules();
  // undecorated lowered companion is inert
  {
    Term t(Coeff(1));
    Atom gl(SymTab::instance().id("t_gl"));
    gl.idx = {Index{0, false}, Index{1, false}};
    t.atoms = {gl};
    Expression n = normalize(expr_of(std::move(t)), ctx, &rules);
    REQUIRE(n.size() == 1);
    CHECK(n.terms[0].atoms.size() == 1);
  }
  // g^{ab} gl_{ab} = dim, so every derivation of it must cancel
  CHECK(normalize(vary(trace_pair(), ctx), ctx, &rules).is_zero());
  CHECK(normalize(apply_deriv_op(Deriv::tdot(), trace_pair(), ctx), ctx, &rules).is_zero());
  CHECK(normalize(apply_deriv_op(Deriv::partial(Index{5, false}), trace_pair(), ctx), ctx,
                  &rules)
            .is_zero());
}

TEST_CASE("declared volume-factor derivative cancels against the inverse power") {
  Context ctx;
  RuleSet rules = metric_rules();
  // delta s = -1/2 s gl_{ab} delta g^{ab}
  {
    Term t(Coeff(1));
    t.atoms.push_back(Atom(SymTab::instance().id("t_s")));
    Expression n = normalize(vary(expr_of(std::move(t)), ctx), ctx, &rules);
    Expression want;
    Term w(Coeff(Poly(Rat(-1, 2)), Poly(Rat(1))));
    w.atoms.push_back(Atom(SymTab::instance().id("t_s")));
    Atom gl(SymTab::instance().id("t_gl"));
    gl.idx = {Index{0, false}, Index{1, false}};
    w.atoms.push_back(gl);
    Atom gv(SymTab::instance().id("t_g"));
    gv.idx = {Index{0, true}, Index{1, true}};
    gv.var = true;
    w.atoms.push_back(gv);
    want.terms.push_back(std::move(w));
    CHECK(normalize(add(n, scale(want, Coeff(-1))), ctx, &rules).is_zero());
  }
  // s s^{-1} = 1: variation and coordinate derivative both cancel
  auto unit = [] {
    Term t(Coeff(1));
    t.atoms.push_back(Atom(SymTab::instance().id("t_s")));
    Atom inv(SymTab::instance().id("t_s"));
    inv.power = Affine{0, -1};
    t.atoms.push_back(inv);
    return expr_of(std::move(t));
  };
  CHECK(normalize(vary(unit(), ctx), ctx, &rules).is_zero());
  CHECK(normalize(apply_deriv_op(Deriv::partial(Index{6, false}), unit(), ctx), ctx, &rules)
            .is_zero());
}

TEST_CASE("declared curvature derivative peels one decoration and replays the rest") {
  Context ctx;
  RuleSet rules = metric_rules();
  SymTab& st = SymTab::instance();
  auto curv = [&](bool with_var, std::vector<Deriv> ds) {
    Term t(Coeff(1));
    Atom r(st.id("t_r"));
    r.var = with_var;
    r.derivs = std::move(ds);
    t.atoms = {r};
    return expr_of(std::move(t));
  };
  // undecorated: inert
  {
    Expression n = normalize(curv(false, {}), ctx, &rules);
    REQUIRE(n.size() == 1);
    CHECK(n.terms[0].atoms.size() == 1);
    CHECK(n.terms[0].atoms[0].sym == st.id("t_r"));
  }
  // spatially derived: still inert for a var-only rule
  {
    Expression n = normalize(curv(false, {Deriv::nabla(Index{6, false})}), ctx, &rules);
    REQUIRE(n.size() == 1);
    REQUIRE(n.terms[0].atoms.size() == 1);
    CHECK(n.terms[0].atoms[0].derivs.size() == 1);
  }
  // time derivative expands like the variation
  {
    Expression lhs = normalize(curv(false, {Deriv::tdot()}), ctx, &rules);
    CHECK(lhs.size() == 1);
    CHECK(!lhs.terms[0].atoms.empty());
    bool has_opaque = false;
    for (const Atom& a : lhs.terms[0].atoms)
      if (a.sym == st.id("t_r")) has_opaque = true;
    CHECK(!has_opaque);
  }
  // varied: the marker keeps the declared second-derivative word, with the
  // innermost metric derivative rewritten to the coordinate one on the scalar
  {
    Expression n = normalize(curv(true, {}), ctx, &rules);
    Expression want;
    Term w(Coeff(1));
    Atom gu(st.id("t_g"));
    gu.idx = {Index{0, true}, Index{1, true}};
    Atom p(st.id("t_p"));
    p.var = true;
    p.derivs = {Deriv::partial(Index{1, false}), Deriv::nabla(Index{0, false})};
    w.atoms = {gu, p};
    want.terms.push_back(std::move(w));
    CHECK(normalize(add(n, scale(want, Coeff(-1))), ctx, &rules).is_zero());
  }
  // outer word replays by Leibniz: d_c(delta r) equals d_c applied to the
  // expanded variation
  {
    Expression lhs = normalize(curv(true, {Deriv::partial(Index{7, false})}), ctx, &rules);
    Expression rhs = normalize(
        apply_deriv_op(Deriv::partial(Index{7, false}), normalize(curv(true, {}), ctx, &rules),
                       ctx),
        ctx, &rules);
    CHECK(normalize(add(lhs, scale(rhs, Coeff(-1))), ctx, &rules).is_zero());
  }
}

TEST_CASE("double variation vanishes through declared derivative rules") {
  Context ctx;
  RuleSet rules = metric_rules();
  SymTab& st = SymTab::instance();
  CHECK(normalize(vary(vary(trace_pair(), ctx), ctx), ctx, &rules).is_zero());
  {
    Term t(Coeff(1));
    t.atoms.push_back(Atom(st.id("t_s")));
    t.atoms.push_back(Atom(st.id("t_r")));
    Expression e = expr_of(std::move(t));
    CHECK(normalize(vary(vary(e, ctx), ctx), ctx, &rules).is_zero());
  }
}

TEST_CASE("positional index patterns bind a defined tensor's own indices") {
  Context ctx;
  register_metric_alphabet();
  register_alphabet();
  SymTab& st = SymTab::instance();
  RuleSet rules;
  rules.pair_rules.push_back(PairRule{st.id("n_gd"), st.id("n_gu")});
  {
    // t_d{a b} := n_gd{a b} n_a
    AtomRule r;
    r.sym = st.id("t_d");
    r.idx_pattern = {0, 1};
    Term t(Coeff(1));
    Atom gd = make_atom("n_gd");
    gd.idx = {Index{0, false}, Index{1, false}};
    t.atoms = {gd, make_atom("n_a")};
    r.rhs.terms.push_back(std::move(t));
    rules.atom_rules.push_back(std::move(r));
  }
  Term t(Coeff(1));
  Atom site(st.id("t_d"));
  site.idx = {Index{4, false}, Index{5, false}};
  Atom gu = make_atom("n_gu");
  gu.idx = {Index{4, true}, Index{5, true}};
  t.atoms = {site, gu};
  Expression n = normalize(expr_of(std::move(t)), ctx, &rules);
  REQUIRE(n.size() == 1);
  REQUIRE(n.terms[0].atoms.size() == 1);
  CHECK(n.terms[0].atoms[0].sym == st.id("n_a"));
  CHECK(n.terms[0].c == Coeff::param(P_d));
}

TEST_CASE("fixed background fields drop variations and time derivatives") {
  Context ctx;
  register_metric_alphabet();
  register_alphabet();
  CHECK(vary(atom_expr("t_k"), ctx).terms.empty());
  Term t(Coeff(1));
  t.atoms = {make_atom("t_k"), make_atom("n_f")};
  Expression e = expr_of(std::move(t));
  {
    Expression n = normalize(vary(e, ctx), ctx);
    REQUIRE(n.size() == 1);
    REQUIRE(n.terms[0].atoms.size() == 2);
    bool varied_odd = false;
    for (const Atom& a : n.terms[0].atoms)
      if (a.sym == SymTab::instance().id("n_f") && a.var) varied_odd = true;
    CHECK(varied_odd);
  }
  {
    Expression n = normalize(apply_dinterval(e, ctx), ctx);
    REQUIRE(n.size() == 1);
    CHECK(n.terms[0].dt == 1);
    CHECK(n.terms[0].c == Coeff(-1));
    bool dotted_odd = false;
    for (const Atom& a : n.terms[0].atoms)
      if (a.sym == SymTab::instance().id("n_f") && !a.derivs.empty() &&
          a.derivs.front().kind == Deriv::Tdot)
        dotted_odd = true;
    CHECK(dotted_odd);
  }
  // spatial dependence of a fixed field is retained
  {
    Atom k = make_atom("t_k");
    k.derivs.push_back(Deriv::partial(Index{2, false}));
    Term s(Coeff(1));
    s.atoms = {k};
    Expression n = normalize(expr_of(std::move(s)), ctx);
    CHECK(n.size() == 1);
  }
}

TEST_CASE("coordinate Lie derivative adds the divergence term on densities") {
  Context ctx;
  register_alphabet();
  SymTab& st = SymTab::instance();
  // weight one: L_v m = v^c d_c m + (d_c v^c) m
  {
    Expression lhs = lie_coord("n_v", atom_expr("n_m"), ctx);
    Expression want;
    {
      Term t(Coeff(1));
      Atom v = make_atom("n_v");
      v.idx = {Index{9, true}};
      Atom m = make_atom("n_m");
      m.derivs.push_back(Deriv::partial(Index{9, false}));
      t.atoms = {v, m};
      want.terms.push_back(std::move(t));
    }
    {
      Term t(Coeff(1));
      Atom v = make_atom("n_v");
      v.idx = {Index{9, true}};
      v.derivs.push_back(Deriv::partial(Index{9, false}));
      t.atoms = {v, make_atom("n_m")};
      want.terms.push_back(std::move(t));
    }
    CHECK(normalize(add(lhs, scale(want, Coeff(-1))), ctx).is_zero());
  }
  // a merged power scales the weight: L_v m^{-2} picks up -2 (d_c v^c) m^{-2}
  {
    Term src(Coeff(1));
    Atom minv(st.id("n_m"));
    minv.power = Affine{0, -2};
    src.atoms = {minv};
    Expression lhs = lie_coord("n_v", expr_of(std::move(src)), ctx);
    Expression want;
    {
      Term t(Coeff(-2));
      Atom v = make_atom("n_v");
      v.idx = {Index{9, true}};
      Atom mdown(st.id("n_m"));
      mdown.power = Affine{0, -3};
      Atom md(st.id("n_m"));
      md.derivs.push_back(Deriv::partial(Index{9, false}));
      t.atoms = {v, mdown, md};
      want.terms.push_back(std::move(t));
    }
    {
      Term t(Coeff(-2));
      Atom v = make_atom("n_v");
      v.idx = {Index{9, true}};
      v.derivs.push_back(Deriv::partial(Index{9, false}));
      Atom minv2(st.id("n_m"));
      minv2.power = Affine{0, -2};
      t.atoms = {v, minv2};
      want.terms.push_back(std::move(t));
    }
    CHECK(normalize(add(lhs, scale(want, Coeff(-1))), ctx).is_zero());
  }
}

TEST_CASE("metric derivative of a plain scalar becomes the coordinate derivative") {
  Context ctx;
  register_alphabet();
  // nabla_c f = d_c f on scalars
  {
    Atom a = make_atom("n_a");
    a.derivs.push_back(Deriv::nabla(Index{3, false}));
    Term t(Coeff(1));
    t.atoms = {a};
    Expression n = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(n.size() == 1);
    REQUIRE(n.terms[0].atoms.size() == 1);
    REQUIRE(n.terms[0].atoms[0].derivs.size() == 1);
    CHECK(n.terms[0].atoms[0].derivs[0].kind == Deriv::Partial);
  }
  // nabla_a nabla_b f keeps the outer metric derivative
  {
    Atom a = make_atom("n_a");
    a.derivs = {Deriv::nabla(Index{3, false}), Deriv::nabla(Index{2, false})};
    Term t(Coeff(1));
    t.atoms = {a};
    Expression n = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(n.size() == 1);
    REQUIRE(n.terms[0].atoms[0].derivs.size() == 2);
    CHECK(n.terms[0].atoms[0].derivs[0].kind == Deriv::Partial);
    CHECK(n.terms[0].atoms[0].derivs[1].kind == Deriv::Nabla);
  }
  // on a covector the metric derivative is opaque and stays
  {
    Atom a = make_atom("n_u");
    a.idx = {Index{0, false}};
    a.derivs.push_back(Deriv::nabla(Index{3, false}));
    Term t(Coeff(1));
    t.atoms = {a};
    Expression n = normalize(expr_of(std::move(t)), ctx);
    REQUIRE(n.size() == 1);
    CHECK(n.terms[0].atoms[0].derivs[0].kind == Deriv::Nabla);
  }
}
