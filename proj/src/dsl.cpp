// Text form of expressions: a hand-rolled tokenizer, a recursive-descent
// parser, and deterministic text/LaTeX renderers.
//
// Reading conventions: prefix operators bind to the next unit only;
// juxtaposition multiplies; '^' is an explicit product token (so `dt ^ dt`
// is the vanishing square); '/' divides by a pure-coefficient unit, which
// makes `3/2` and `f / (d - 1)` read as expected. `< x , y >` is the pairing:
// inside it, tensor atoms written without indices receive matching
// contraction letters automatically (left and right side in the same order).
#include "gfv/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gfv {

namespace {

// ------------------------------------------------------------------ lexer --

struct Tok {
  enum Kind {
    Name,    // identifier (field name or keyword)
    NameLbl, // identifier with a component label: name_[a] name_(n) name_{a}
    Int,     // unsigned integer literal
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Lt,
    Gt,
    Comma,
    Semi,
    Plus,
    Minus,
    Caret,
    Slash,
    End
  };
  Kind kind = End;
  std::string text;
  std::uint8_t lkind = 0; // label delimiter: 0 round, 1 square, 2 brace
  bool lis_n = false;
  std::uint8_t lletter = 0;
  int line = 1, col = 1;
};

bool name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Tok> lex(const std::string& s) {
  std::vector<Tok> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    char c = s[i];
    if (c == '\n') {
      ++i;
      ++line;
      col = 1;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      ++col;
      continue;
    }
    if (c == '#') { // comment to end of line
      while (i < n && s[i] != '\n') ++i;
      continue;
    }
    Tok t;
    t.line = line;
    t.col = col;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      t.kind = Tok::Int;
      t.text = s.substr(i, j - i);
      col += static_cast<int>(j - i);
      i = j;
      out.push_back(std::move(t));
      continue;
    }
    if (name_start(c)) {
      std::size_t j = i;
      while (j < n && name_char(s[j])) ++j;
      std::string w = s.substr(i, j - i);
      if (w.size() > 1 && w.back() == '_' && j < n &&
          (s[j] == '(' || s[j] == '[' || s[j] == '{')) {
        // component label attached to the name
        char open = s[j];
        char close = open == '(' ? ')' : open == '[' ? ']' : '}';
        std::size_t k = j + 1;
        std::size_t m = k;
        while (m < n && std::isalnum(static_cast<unsigned char>(s[m]))) ++m;
        if (m == k || m >= n || s[m] != close)
          throw ParseError("malformed component label after '" + w + "'", line, col);
        std::string inner = s.substr(k, m - k);
        t.kind = Tok::NameLbl;
        t.text = w.substr(0, w.size() - 1);
        t.lkind = open == '(' ? 0 : open == '[' ? 1 : 2;
        if (inner == "n") {
          t.lis_n = true;
        } else {
          try {
            t.lletter = index_letter(inner);
          } catch (const EngineError& ex) {
            throw ParseError(std::string("bad label index: ") + ex.what(), line, col);
          }
        }
        col += static_cast<int>(m + 1 - i);
        i = m + 1;
        out.push_back(std::move(t));
        continue;
      }
      t.kind = Tok::Name;
      t.text = std::move(w);
      col += static_cast<int>(j - i);
      i = j;
      out.push_back(std::move(t));
      continue;
    }
    Tok::Kind k;
    switch (c) {
      case '(': k = Tok::LParen; break;
      case ')': k = Tok::RParen; break;
      case '[': k = Tok::LBrack; break;
      case ']': k = Tok::RBrack; break;
      case '{': k = Tok::LBrace; break;
      case '}': k = Tok::RBrace; break;
      case '<': k = Tok::Lt; break;
      case '>': k = Tok::Gt; break;
      case ',': k = Tok::Comma; break;
      case ';': k = Tok::Semi; break;
      case '+': k = Tok::Plus; break;
      case '-': k = Tok::Minus; break;
      case '^': k = Tok::Caret; break;
      case '/': k = Tok::Slash; break;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    t.kind = k;
    out.push_back(std::move(t));
    ++i;
    ++col;
  }
  Tok e;
  e.kind = Tok::End;
  e.line = line;
  e.col = col;
  out.push_back(std::move(e));
  return out;
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), curr(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    curr[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      int cost = a[i - 1] == b[j - 1] ? 0 : 1;
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost});
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

// ----------------------------------------------------------------- parser --

// Contraction letters for pairings are handed out downward from the top of
// the letter space (the rewrite machinery owns the very top slots), so they
// can never collide with hand-written indices, which sit at the bottom.
constexpr int kPairTop = 61;
constexpr int kPairFloor = 40;

class Parser {
public:
  Parser(const std::string& text, const Context& ctx) : ctx_(ctx), toks_(lex(text)) {}

  Expression parse() {
    Domain dom = Domain::None;
    Expression out;
    if (at(Tok::Name) && (cur().text == "Int_Sigma" || cur().text == "Int_Cyl")) {
      std::string kw = cur().text;
      dom = kw == "Int_Sigma" ? Domain::Sigma : Domain::Cyl;
      advance();
      if (at(Tok::LBrace)) {
        advance();
        out = parse_sum(true, false);
        expect(Tok::RBrace, "'}'");
        while (at(Tok::Plus) || at(Tok::Minus)) { // more blocks over the same domain
          bool neg = at(Tok::Minus);
          advance();
          if (!(at(Tok::Name) && cur().text == kw))
            throw err("expected another '" + kw + "{...}' block");
          advance();
          expect(Tok::LBrace, "'{'");
          Expression more = parse_sum(true, false);
          expect(Tok::RBrace, "'}'");
          if (neg) more = scale(std::move(more), Coeff(-1));
          out = add(std::move(out), more);
        }
      } else {
        out = parse_sum(true, false); // domain prefix applies to the rest
      }
    } else {
      out = parse_sum(true, false);
    }
    if (!at(Tok::End)) throw err("unexpected trailing input");
    out.dom = dom;
    return out;
  }

private:
  const Context& ctx_;
  std::vector<Tok> toks_;
  std::size_t p_ = 0;

  struct Frame {
    int base;
    int cursor;
    int count = -1; // autofilled slots per additive term of the current side
  };
  std::vector<Frame> frames_;
  int term_base_ = kPairTop; // pool top for the current top-level term

  const Tok& cur() const { return toks_[p_]; }
  bool at(Tok::Kind k) const { return cur().kind == k; }
  void advance() {
    if (p_ + 1 < toks_.size()) ++p_;
  }
  ParseError err(const std::string& msg) const { return {msg, cur().line, cur().col}; }
  static ParseError err_at(const Tok& t, const std::string& msg) { return {msg, t.line, t.col}; }
  Tok expect(Tok::Kind k, const std::string& what) {
    if (!at(k)) throw err("expected " + what);
    Tok t = cur();
    advance();
    return t;
  }

  SymId resolve_field(const std::string& name, const Tok& t) const {
    SymTab& tab = SymTab::instance();
    if (tab.has(name)) return tab.id(name);
    std::vector<std::pair<int, std::string>> close;
    for (const std::string& cand : tab.names()) {
      int d = edit_distance(name, cand);
      if (d <= 2) close.emplace_back(d, cand);
    }
    std::sort(close.begin(), close.end());
    std::string msg = "unknown field '" + name + "'";
    if (!close.empty()) {
      msg += "; did you mean: ";
      for (std::size_t i = 0; i < close.size() && i < 5; ++i) {
        if (i) msg += ", ";
        msg += close[i].second;
      }
      msg += "?";
    }
    throw err_at(t, msg);
  }

  Index read_index(bool up) {
    Tok t = expect(Tok::Name, "an index name");
    try {
      return Index{index_letter(t.text), up};
    } catch (const EngineError& ex) {
      throw err_at(t, ex.what());
    }
  }

  Index parse_one_brace_index() {
    expect(Tok::LBrace, "'{'");
    Index ix = read_index(false); // derivation slots carry lower indices
    expect(Tok::RBrace, "'}'");
    return ix;
  }

  static Expression coeff_expr(const Coeff& c) {
    Expression e;
    if (!c.is_zero()) e.terms.emplace_back(c);
    return e;
  }

  static Expression field_expr(SymId sid) {
    Expression e;
    Term tm(Coeff(1));
    tm.atoms.emplace_back(sid);
    e.terms.push_back(std::move(tm));
    return e;
  }

  // collapse a parenthesized sum of bare coefficients into one term, so that
  // `(N - 2) f` scales a single term instead of distributing over two
  static void merge_pure_coeff(Expression& e) {
    if (e.dom != Domain::None) return;
    for (const Term& t : e.terms)
      if (!t.atoms.empty() || t.dt) return;
    Coeff c;
    for (const Term& t : e.terms) c += t.c;
    e.terms.clear();
    if (!c.is_zero()) e.terms.emplace_back(c);
  }

  Coeff pure_coeff(const Expression& u, const Tok& t0) const {
    Coeff c;
    for (const Term& t : u.terms) {
      if (!t.atoms.empty() || t.dt) throw err_at(t0, "divisor must be a pure coefficient");
      c += t.c;
    }
    return c;
  }

  bool starts_unit() const {
    switch (cur().kind) {
      case Tok::Name:
      case Tok::NameLbl:
      case Tok::Int:
      case Tok::LParen:
      case Tok::Lt: return true;
      default: return false;
    }
  }

  void note_side_term() {
    Frame& f = frames_.back();
    int used = f.base - f.cursor;
    if (f.count < 0)
      f.count = used;
    else if (f.count != used)
      throw err("pairing side terms fill different numbers of index slots");
  }

  Expression parse_sum(bool top, bool pairside) {
    Expression acc;
    int sign = 1;
    while (at(Tok::Plus) || at(Tok::Minus)) {
      if (at(Tok::Minus)) sign = -sign;
      advance();
    }
    for (;;) {
      if (top && frames_.empty()) term_base_ = kPairTop;
      if (pairside) frames_.back().cursor = frames_.back().base;
      Expression prod = parse_product();
      if (sign < 0) prod = scale(std::move(prod), Coeff(-1));
      if (pairside) note_side_term();
      acc = add(std::move(acc), prod);
      if (at(Tok::Plus) || at(Tok::Minus)) {
        sign = 1;
        while (at(Tok::Plus) || at(Tok::Minus)) {
          if (at(Tok::Minus)) sign = -sign;
          advance();
        }
        continue;
      }
      break;
    }
    return acc;
  }

  Expression parse_product() {
    Expression acc = parse_unit();
    for (;;) {
      if (at(Tok::Caret)) {
        advance();
        acc = mul(acc, parse_unit(), ctx_);
      } else if (at(Tok::Slash)) {
        advance();
        Tok t0 = cur();
        Expression u = parse_unit();
        Coeff c = pure_coeff(u, t0);
        if (c.is_zero()) throw err_at(t0, "division by zero");
        acc = scale(std::move(acc), Coeff(1) / c);
      } else if (starts_unit()) {
        acc = mul(acc, parse_unit(), ctx_);
      } else {
        break;
      }
    }
    return acc;
  }

  Expression parse_pairing() {
    Tok t0 = cur();
    advance(); // '<'
    int base = frames_.empty() ? term_base_ : frames_.back().cursor;
    frames_.push_back(Frame{base, base, -1});
    Expression l = parse_sum(false, true);
    expect(Tok::Comma, "','");
    int cl = std::max(frames_.back().count, 0);
    frames_.back().count = -1;
    frames_.back().cursor = frames_.back().base;
    Expression r = parse_sum(false, true);
    expect(Tok::Gt, "'>'");
    int cr = std::max(frames_.back().count, 0);
    bool nested = frames_.size() > 1;
    frames_.pop_back();
    if (cl != cr)
      throw err_at(t0, "pairing sides fill different numbers of index slots (" +
                           std::to_string(cl) + " vs " + std::to_string(cr) + ")");
    if (cl > 0 && nested)
      throw err_at(t0, "nested pairings may not auto-contract indices; write them explicitly");
    if (!nested) term_base_ -= cl;
    return mul(l, r, ctx_);
  }

  Expression parse_field_atom() {
    Tok t = cur();
    advance();
    SymId sid = resolve_field(t.text, t);
    const FieldSpec& fs = SymTab::instance().spec(sid);
    Atom a(sid);
    if (t.kind == Tok::NameLbl) {
      CompLabel lbl;
      lbl.kind = t.lkind;
      lbl.is_n = t.lis_n;
      if (!t.lis_n) lbl.idx = Index{t.lletter, true};
      a.label = lbl;
    }
    int want = fs.own_indices();
    if (at(Tok::LBrace)) {
      advance();
      int slot = 0;
      std::vector<Index> idx;
      while (!at(Tok::RBrace)) {
        idx.push_back(read_index(fs.index_up(slot)));
        ++slot;
      }
      advance();
      if (static_cast<int>(idx.size()) != want)
        throw err_at(t, "field '" + t.text + "' carries " + std::to_string(want) +
                            " indices, got " + std::to_string(idx.size()));
      a.idx = std::move(idx);
    } else if (want > 0) {
      if (frames_.empty())
        throw err_at(t, "field '" + t.text + "' needs " + std::to_string(want) +
                            " explicit indices outside a pairing");
      Frame& f = frames_.back();
      for (int s = 0; s < want; ++s) {
        if (f.cursor < kPairFloor) throw err_at(t, "too many pairing contraction slots");
        a.idx.push_back(Index{static_cast<std::uint8_t>(f.cursor), fs.index_up(s)});
        --f.cursor;
      }
    }
    Expression e;
    Term tm(Coeff(1));
    tm.atoms.push_back(std::move(a));
    e.terms.push_back(std::move(tm));
    return e;
  }

  Affine parse_affine() {
    Affine acc{0, 0};
    int sign = 1;
    if (at(Tok::Minus)) {
      sign = -1;
      advance();
    } else if (at(Tok::Plus)) {
      advance();
    }
    for (;;) {
      if (at(Tok::Int)) {
        long k = std::stol(cur().text);
        advance();
        if (at(Tok::Name) && cur().text == "N") {
          advance();
          acc = acc + Affine{sign * k, 0};
        } else {
          acc = acc + Affine{0, sign * k};
        }
      } else if (at(Tok::Name) && cur().text == "N") {
        advance();
        acc = acc + Affine{sign, 0};
      } else {
        throw err("expected an integer or N in the exponent");
      }
      if (at(Tok::Plus)) {
        sign = 1;
        advance();
        continue;
      }
      if (at(Tok::Minus)) {
        sign = -1;
        advance();
        continue;
      }
      break;
    }
    return acc;
  }

  Expression parse_unit() {
    const Tok t = cur();
    switch (t.kind) {
      case Tok::Int: {
        advance();
        return coeff_expr(Coeff(Rat::from_string(t.text)));
      }
      case Tok::LParen: {
        advance();
        Expression e = parse_sum(false, false);
        expect(Tok::RParen, "')'");
        merge_pure_coeff(e);
        return e;
      }
      case Tok::Lt: return parse_pairing();
      case Tok::NameLbl: return parse_field_atom();
      case Tok::Name: break;
      default: throw err("expected an expression");
    }
    const std::string& w = t.text;
    if (w == "N") {
      advance();
      return coeff_expr(Coeff::param(P_N));
    }
    if (w == "d") {
      advance();
      return coeff_expr(Coeff::param(P_d));
    }
    if (w == "Lam") {
      advance();
      return coeff_expr(Coeff::param(P_Lam));
    }
    if (w == "eps") {
      advance();
      return coeff_expr(Coeff::param(P_eps));
    }
    if (w == "dt") {
      advance();
      Expression e;
      Term tm(Coeff(1));
      tm.dt = 1;
      e.terms.push_back(std::move(tm));
      return e;
    }
    if (w == "d_S") {
      advance();
      return apply_dsigma(parse_unit(), ctx_);
    }
    if (w == "d_I") {
      advance();
      return apply_dinterval(parse_unit(), ctx_);
    }
    if (w == "d_t") {
      advance();
      return apply_deriv_op(Deriv::tdot(), parse_unit(), ctx_);
    }
    if (w == "var") {
      advance();
      return vary(parse_unit(), ctx_);
    }
    if (w == "pa" || w == "io" || w == "nab") {
      advance();
      Index ix = parse_one_brace_index();
      if (w == "pa") return apply_deriv_op(Deriv::partial(ix), parse_unit(), ctx_);
      if (w == "nab") return apply_deriv_op(Deriv::nabla(ix), parse_unit(), ctx_);
      return iota_frame(ix, parse_unit(), ctx_);
    }
    if (w == "D2") {
      advance();
      expect(Tok::LBrace, "'{'");
      Index i1 = read_index(true); // the opaque second-order slots sit upstairs
      Index i2 = read_index(true);
      expect(Tok::RBrace, "'}'");
      Tok t0 = cur();
      Expression u = parse_unit();
      if (u.terms.size() != 1 || u.terms[0].atoms.size() != 1 || u.terms[0].dt)
        throw err_at(t0, "D2 applies to a single factor");
      Term tm = u.terms[0];
      tm.atoms[0].derivs.push_back(Deriv::dop2(i1, i2));
      Expression e;
      e.terms.push_back(std::move(tm));
      return e;
    }
    if (w == "dw" || w == "i") {
      advance();
      expect(Tok::LBrack, "'['");
      Tok nt = expect(Tok::Name, "a field name");
      SymId sid = resolve_field(nt.text, nt);
      expect(Tok::RBrack, "']'");
      if (w == "i") return iota_field(nt.text, parse_unit(), ctx_);
      return cov_d(field_expr(sid), parse_unit(), ctx_);
    }
    if (w == "L") {
      advance();
      expect(Tok::LBrack, "'['");
      Tok vt = expect(Tok::Name, "a field name");
      resolve_field(vt.text, vt);
      if (at(Tok::Semi)) {
        advance();
        Tok ot = expect(Tok::Name, "a field name");
        SymId osid = resolve_field(ot.text, ot);
        expect(Tok::RBrack, "']'");
        return lie_cov(vt.text, field_expr(osid), parse_unit(), ctx_);
      }
      expect(Tok::RBrack, "']'");
      return lie_coord(vt.text, parse_unit(), ctx_);
    }
    if (w == "br") {
      advance();
      expect(Tok::LBrack, "'['");
      Tok t0 = cur();
      Expression l = parse_sum(false, false);
      expect(Tok::Comma, "','");
      Expression r = parse_sum(false, false);
      expect(Tok::RBrack, "']'");
      Expression out;
      for (const Term& tl : l.terms)
        for (const Term& tr : r.terms) {
          if (tl.atoms.size() != 1 || tr.atoms.size() != 1 || tl.dt || tr.dt)
            throw err_at(t0, "bracket slots must be single factors");
          Term tm(tl.c * tr.c);
          tm.atoms.push_back(Atom::bracket(tl.atoms[0], tr.atoms[0]));
          out.terms.push_back(std::move(tm));
        }
      return out;
    }
    if (w == "pow") {
      advance();
      expect(Tok::LParen, "'('");
      Tok nt = expect(Tok::Name, "a field name");
      SymId sid = resolve_field(nt.text, nt);
      const FieldSpec& fs = SymTab::instance().spec(sid);
      if (fs.power == PowerMode::None)
        throw err_at(nt, "field '" + nt.text + "' does not carry power exponents");
      expect(Tok::Comma, "','");
      Affine ex = parse_affine();
      expect(Tok::RParen, "')'");
      if (fs.power == PowerMode::InvertibleScalar && ex.a != 0)
        throw err_at(nt, "field '" + nt.text + "' takes integer exponents only");
      Expression e;
      Term tm(Coeff(1));
      Atom a(sid);
      a.power = ex;
      tm.atoms.push_back(std::move(a));
      e.terms.push_back(std::move(tm));
      return e;
    }
    if (w == "kron") {
      advance();
      expect(Tok::LBrace, "'{'");
      Index i1 = read_index(true);
      Index i2 = read_index(false);
      expect(Tok::RBrace, "'}'");
      Expression e;
      Term tm(Coeff(1));
      Atom a(SymTab::instance().kron());
      a.idx = {i1, i2};
      tm.atoms.push_back(std::move(a));
      e.terms.push_back(std::move(tm));
      return e;
    }
    if (w == "Int_Sigma" || w == "Int_Cyl")
      throw err("integration domains are only allowed at the top level");
    return parse_field_atom();
  }
};

// -------------------------------------------------------- text rendering --

std::string rat_tokens(const Rat& r) { return r.str(); } // p or p/q; '-' only in p

bool mono_params_empty(const PExp& e) {
  for (int i = 0; i < NUM_PARAMS; ++i)
    if (e[i]) return false;
  return true;
}

// magnitude of one monomial as grammar tokens ("3/2 N N Lam"); sign handled
// by the caller
std::string mono_tokens(const PExp& e, const Rat& mag) {
  std::vector<std::string> parts;
  if (!mag.is_one() || mono_params_empty(e)) parts.push_back(rat_tokens(mag));
  for (int p = 0; p < NUM_PARAMS; ++p) {
    int k = e[p];
    if (k < 0) throw EngineError("render: negative parameter exponent");
    for (int j = 0; j < k; ++j) parts.emplace_back(param_name(p));
  }
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += " ";
    s += parts[i];
  }
  return s;
}

// sum of monomials, highest first
std::string poly_tokens(const Poly& p) {
  if (p.is_zero()) return "0";
  std::string s;
  bool first = true;
  for (auto it = p.terms.rbegin(); it != p.terms.rend(); ++it) {
    bool neg = it->second.sign() < 0;
    Rat mag = neg ? -it->second : it->second;
    if (first) {
      if (neg) s += "-";
      first = false;
    } else {
      s += neg ? " - " : " + ";
    }
    s += mono_tokens(it->first, mag);
  }
  return s;
}

// coefficient of one term; leading sign returned separately so sums can join
// with " - "; the token string may be empty (coefficient one before factors)
std::pair<bool, std::string> coeff_tokens(const Coeff& c, bool have_factors) {
  Poly num = c.num;
  const Poly& den = c.den;
  bool neg = false;
  if (!num.is_zero() && num.terms.rbegin()->second.sign() < 0) {
    neg = true;
    num = -num;
  }
  bool den_one =
      den.is_constant() && !den.is_zero() && den.constant_value().is_one();
  std::string s;
  if (num.terms.size() == 1) {
    const auto& [e, r] = *num.terms.begin();
    bool bare_one = r.is_one() && mono_params_empty(e);
    if (!bare_one)
      s = mono_tokens(e, r);
    else if (!have_factors || !den_one)
      s = "1";
  } else if (num.is_zero()) {
    s = "0";
  } else {
    s = "( " + poly_tokens(num) + " )";
  }
  if (!den_one) {
    std::string dtok;
    bool simple = false;
    if (den.terms.size() == 1) {
      const auto& [e, r] = *den.terms.begin();
      if (r.sign() > 0) {
        int psum = 0, pone = -1;
        for (int p = 0; p < NUM_PARAMS; ++p) {
          psum += e[p];
          if (e[p] == 1) pone = p;
        }
        if (psum == 0) {
          dtok = rat_tokens(r);
          simple = true;
        } else if (psum == 1 && r.is_one()) {
          dtok = param_name(pone);
          simple = true;
        }
      }
    }
    if (!simple) dtok = "( " + poly_tokens(den) + " )";
    if (!s.empty()) s += " ";
    s += "/ " + dtok;
  }
  return {neg, s};
}

std::string affine_tokens(Affine x) {
  if (x.a == 0) return std::to_string(x.b);
  std::string s;
  if (x.a == 1)
    s = "N";
  else if (x.a == -1)
    s = "-N";
  else
    s = std::to_string(x.a) + " N";
  if (x.b > 0) s += " + " + std::to_string(x.b);
  if (x.b < 0) s += " - " + std::to_string(-x.b);
  return s;
}

std::string index_list_tokens(const std::vector<Index>& idx) {
  std::string s = "{";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += " ";
    s += index_name(idx[i].letter);
  }
  s += "}";
  return s;
}

void render_atom_tokens(const Atom& a, std::vector<std::string>& out) {
  if (a.var_outer) out.emplace_back("var"); // outer variation of the composite
  for (auto it = a.derivs.rbegin(); it != a.derivs.rend(); ++it) {
    switch (it->kind) {
      case Deriv::Tdot: out.emplace_back("d_t"); break;
      case Deriv::DSigma: out.emplace_back("d_S"); break;
      case Deriv::Partial: out.push_back("pa{" + index_name(it->i1.letter) + "}"); break;
      case Deriv::IotaP: out.push_back("io{" + index_name(it->i1.letter) + "}"); break;
      case Deriv::Nabla: out.push_back("nab{" + index_name(it->i1.letter) + "}"); break;
      case Deriv::DOp2:
        out.push_back("D2{" + index_name(it->i1.letter) + " " + index_name(it->i2.letter) +
                      "}");
        break;
    }
  }
  if (a.var) out.emplace_back("var");
  if (a.is_bracket()) {
    std::vector<std::string> l, r;
    render_atom_tokens(*a.bl, l);
    render_atom_tokens(*a.br, r);
    std::string s = "br[";
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (i) s += " ";
      s += l[i];
    }
    s += ", ";
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += " ";
      s += r[i];
    }
    s += "]";
    out.push_back(std::move(s));
    return;
  }
  const FieldSpec& fs = SymTab::instance().spec(a.sym);
  std::string base = fs.name;
  if (a.label) {
    const char* op = a.label->kind == 0 ? "(" : a.label->kind == 1 ? "[" : "{";
    const char* cl = a.label->kind == 0 ? ")" : a.label->kind == 1 ? "]" : "}";
    base += "_";
    base += op;
    base += a.label->is_n ? std::string("n") : index_name(a.label->idx.letter);
    base += cl;
  }
  if (!(a.power == Affine{0, 1})) {
    if (a.label) throw EngineError("render: labeled power atom");
    base = "pow(" + base + ", " + affine_tokens(a.power) + ")";
  }
  if (!a.idx.empty()) base += index_list_tokens(a.idx);
  out.push_back(std::move(base));
}

std::pair<bool, std::string> term_tokens(const Term& t) {
  bool have_factors = !t.atoms.empty() || t.dt != 0;
  auto [neg, cs] = coeff_tokens(t.c, have_factors);
  std::vector<std::string> parts;
  if (!cs.empty()) parts.push_back(std::move(cs));
  for (const Atom& a : t.atoms) render_atom_tokens(a, parts);
  if (t.dt) parts.emplace_back("dt");
  std::string body;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) body += " ";
    body += parts[i];
  }
  if (body.empty()) body = "1";
  return {neg, body};
}

// ------------------------------------------------------- LaTeX rendering --

std::string latex_name(const std::string& name) {
  static const std::unordered_map<std::string, std::string> table = {
      {"alpha", "\\alpha"},   {"beta", "\\beta"},     {"gamma", "\\gamma"},
      {"delta", "\\delta"},   {"epsilon", "\\epsilon"}, {"zeta", "\\zeta"},
      {"eta", "\\eta"},       {"theta", "\\theta"},   {"iota", "\\iota"},
      {"kappa", "\\kappa"},   {"lambda", "\\lambda"}, {"lam", "\\lambda"},
      {"mu", "\\mu"},         {"nu", "\\nu"},         {"xi", "\\xi"},
      {"pi", "\\pi"},         {"rho", "\\rho"},       {"sigma", "\\sigma"},
      {"tau", "\\tau"},       {"phi", "\\varphi"},    {"chi", "\\chi"},
      {"psi", "\\psi"},       {"omega", "\\omega"},   {"Gamma", "\\Gamma"},
      {"Delta", "\\Delta"},   {"Theta", "\\Theta"},   {"Lambda", "\\Lambda"},
      {"Xi", "\\Xi"},         {"Pi", "\\Pi"},         {"Sigma", "\\Sigma"},
      {"Phi", "\\Phi"},       {"Psi", "\\Psi"},       {"Omega", "\\Omega"},
      {"kron", "\\delta"},    {"epsn", "\\varepsilon_{n}"}};
  auto it = table.find(name);
  if (it != table.end()) return it->second;
  if (name.size() > 3 && name.compare(name.size() - 3, 3, "dag") == 0)
    return latex_name(name.substr(0, name.size() - 3)) + "^{\\dagger}";
  if (name.size() == 1) return name;
  return "\\mathit{" + name + "}";
}

std::string latex_rat(const Rat& mag) {
  std::string s = mag.str();
  auto slash = s.find('/');
  if (slash == std::string::npos) return s;
  return "\\tfrac{" + s.substr(0, slash) + "}{" + s.substr(slash + 1) + "}";
}

std::string latex_mono(const PExp& e, const Rat& mag) {
  std::vector<std::string> parts;
  if (!mag.is_one() || mono_params_empty(e)) parts.push_back(latex_rat(mag));
  static const char* pnames[NUM_PARAMS] = {"N", "d", "\\Lambda", "\\epsilon"};
  for (int p = 0; p < NUM_PARAMS; ++p) {
    int k = e[p];
    if (k <= 0) continue;
    if (k == 1)
      parts.emplace_back(pnames[p]);
    else
      parts.push_back(std::string(pnames[p]) + "^{" + std::to_string(k) + "}");
  }
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += " ";
    s += parts[i];
  }
  return s;
}

std::string latex_poly(const Poly& p) {
  if (p.is_zero()) return "0";
  std::string s;
  bool first = true;
  for (auto it = p.terms.rbegin(); it != p.terms.rend(); ++it) {
    bool neg = it->second.sign() < 0;
    Rat mag = neg ? -it->second : it->second;
    if (first) {
      if (neg) s += "-";
      first = false;
    } else {
      s += neg ? " - " : " + ";
    }
    s += latex_mono(it->first, mag);
  }
  return s;
}

std::pair<bool, std::string> latex_coeff(const Coeff& c, bool have_factors) {
  Poly num = c.num;
  const Poly& den = c.den;
  bool neg = false;
  if (!num.is_zero() && num.terms.rbegin()->second.sign() < 0) {
    neg = true;
    num = -num;
  }
  bool den_one = den.is_constant() && !den.is_zero() && den.constant_value().is_one();
  if (!den_one) return {neg, "\\frac{" + latex_poly(num) + "}{" + latex_poly(den) + "}"};
  if (num.terms.size() == 1) {
    const auto& [e, r] = *num.terms.begin();
    if (r.is_one() && mono_params_empty(e)) return {neg, have_factors ? "" : "1"};
    return {neg, latex_mono(e, r)};
  }
  if (num.is_zero()) return {neg, "0"};
  std::string s = latex_poly(num);
  if (have_factors) s = "\\left(" + s + "\\right)";
  return {neg, s};
}

std::string latex_affine(Affine x) {
  if (x.a == 0) return std::to_string(x.b);
  std::string s;
  if (x.a == 1)
    s = "N";
  else if (x.a == -1)
    s = "-N";
  else
    s = std::to_string(x.a) + "N";
  if (x.b > 0) s += "+" + std::to_string(x.b);
  if (x.b < 0) s += std::to_string(x.b);
  return s;
}

// consecutive same-variance indices grouped: gamma_{a b}, kron^{a}_{b}
std::string latex_indices(const std::vector<Index>& idx) {
  std::string s;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && idx[j].up == idx[i].up) ++j;
    s += idx[i].up ? "^{" : "_{";
    for (std::size_t k = i; k < j; ++k) {
      if (k > i) s += " ";
      s += index_name(idx[k].letter);
    }
    s += "}";
    i = j;
  }
  return s;
}

std::string latex_atom(const Atom& a) {
  std::string s;
  if (a.var_outer) s += "\\delta ";
  for (auto it = a.derivs.rbegin(); it != a.derivs.rend(); ++it) {
    switch (it->kind) {
      case Deriv::Tdot: s += "\\partial_{t} "; break;
      case Deriv::DSigma: s += "d "; break;
      case Deriv::Partial: s += "\\partial_{" + index_name(it->i1.letter) + "} "; break;
      case Deriv::IotaP: s += "\\iota_{" + index_name(it->i1.letter) + "} "; break;
      case Deriv::Nabla: s += "\\nabla_{" + index_name(it->i1.letter) + "} "; break;
      case Deriv::DOp2:
        s += "\\mathcal{D}^{" + index_name(it->i1.letter) + " " + index_name(it->i2.letter) +
             "} ";
        break;
    }
  }
  if (a.var) s += "\\delta ";
  if (a.is_bracket()) {
    s += "[" + latex_atom(*a.bl) + ", " + latex_atom(*a.br) + "]";
    return s;
  }
  std::string base = latex_name(SymTab::instance().spec(a.sym).name);
  if (a.label) {
    const char* op = a.label->kind == 0 ? "(" : a.label->kind == 1 ? "[" : "\\{";
    const char* cl = a.label->kind == 0 ? ")" : a.label->kind == 1 ? "]" : "\\}";
    base += "_{" + std::string(op) +
            (a.label->is_n ? std::string("n") : index_name(a.label->idx.letter)) + cl + "}";
  }
  if (!(a.power == Affine{0, 1})) base += "^{" + latex_affine(a.power) + "}";
  base += latex_indices(a.idx);
  return s + base;
}

} // namespace

Expression parse_expr(const std::string& text, const Context& ctx) {
  Parser p(text, ctx);
  return p.parse();
}

std::string render_text(const Expression& e) {
  std::string body;
  if (e.terms.empty()) {
    body = "0";
  } else {
    bool first = true;
    for (const Term& t : e.terms) {
      auto [neg, s] = term_tokens(t);
      if (first) {
        body = (neg ? "-" : "") + s;
        first = false;
      } else {
        body += (neg ? " - " : " + ") + s;
      }
    }
  }
  switch (e.dom) {
    case Domain::Sigma: return "Int_Sigma{ " + body + " }";
    case Domain::Cyl: return "Int_Cyl{ " + body + " }";
    default: return body;
  }
}

std::string render_latex(const Expression& e) {
  std::string body;
  if (e.terms.empty()) {
    body = "0";
  } else {
    bool first = true;
    for (const Term& t : e.terms) {
      bool have_factors = !t.atoms.empty() || t.dt != 0;
      auto [neg, cs] = latex_coeff(t.c, have_factors);
      std::string s = cs;
      for (const Atom& a : t.atoms) {
        if (!s.empty()) s += " ";
        s += latex_atom(a);
      }
      if (t.dt) s += "\\,dt";
      if (s.empty()) s = "1";
      if (first) {
        body = (neg ? "-" : "") + s;
        first = false;
      } else {
        body += (neg ? " - " : " + ") + s;
      }
    }
  }
  switch (e.dom) {
    case Domain::Sigma: return "\\int_{\\Sigma} " + body;
    case Domain::Cyl: return "\\int_{\\Sigma\\times I} " + body;
    default: return body;
  }
}

} // namespace gfv
