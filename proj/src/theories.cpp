#include "gfv/theories.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gfv {

namespace {

[[noreturn]] void fail(const std::string& key, int line, const std::string& msg) {
  throw EngineError(key + ".gfc line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct Directive {
  int line = 0;
  std::string text; // logical line, comments stripped, continuations joined
};

std::vector<Directive> split_directives(const std::string& text, const std::string& key) {
  std::vector<Directive> out;
  std::istringstream in(text);
  std::string phys;
  int lineno = 0;
  while (std::getline(in, phys)) {
    ++lineno;
    std::size_t hash = phys.find('#');
    if (hash != std::string::npos) phys.erase(hash);
    while (!phys.empty() && (phys.back() == ' ' || phys.back() == '\t' || phys.back() == '\r'))
      phys.pop_back();
    if (phys.empty()) continue;
    bool continuation = phys[0] == ' ' || phys[0] == '\t';
    if (continuation) {
      if (out.empty()) fail(key, lineno, "continuation line before any directive");
      out.back().text += ' ';
      out.back().text += trim(phys);
    } else {
      out.push_back(Directive{lineno, phys});
    }
  }
  return out;
}

// head word and remainder of a directive
std::pair<std::string, std::string> split_head(const std::string& s) {
  std::size_t b = s.find_first_of(" \t");
  if (b == std::string::npos) return {s, ""};
  return {s.substr(0, b), trim(s.substr(b + 1))};
}

// "LHS := RHS"
std::pair<std::string, std::string> split_defines(const std::string& s, const std::string& key,
                                                  int line) {
  std::size_t p = s.find(":=");
  if (p == std::string::npos) fail(key, line, "expected ':=' in '" + s + "'");
  return {trim(s.substr(0, p)), trim(s.substr(p + 2))};
}

Bundle parse_bundle(const std::string& w, const std::string& key, int line) {
  if (w == "scalar") return Bundle::Scalar;
  if (w == "vector") return Bundle::Vector;
  if (w == "covector") return Bundle::Covector;
  if (w == "sym2up") return Bundle::Sym2Up;
  if (w == "sym2dn") return Bundle::Sym2Dn;
  if (w == "density") return Bundle::Density;
  if (w == "formv") return Bundle::FormV;
  if (w == "connection") return Bundle::Connection;
  if (w == "formal") return Bundle::Formal;
  fail(key, line, "unknown bundle '" + w + "'");
}

int parse_int(const std::string& w, const std::string& key, int line) {
  try {
    std::size_t used = 0;
    int v = std::stoi(w, &used);
    if (used != w.size()) throw std::invalid_argument(w);
    return v;
  } catch (const std::exception&) {
    fail(key, line, "expected an integer, got '" + w + "'");
  }
}

SymId parse_field_directive(const std::string& rest, const std::string& key, int line) {
  std::vector<std::string> toks = words(rest);
  if (toks.empty()) fail(key, line, "field directive needs a name");
  FieldSpec fs;
  fs.name = toks[0];
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const std::string& w = toks[i];
    auto arg = [&]() -> const std::string& {
      if (++i >= toks.size()) fail(key, line, "'" + w + "' needs a value");
      return toks[i];
    };
    if (w == "sigma") {
      fs.sigma_form = parse_affine_text(arg());
    } else if (w == "ghost") {
      fs.ghost = parse_int(arg(), key, line);
    } else if (w == "vdeg") {
      fs.vdeg = parse_affine_text(arg());
    } else if (w == "bundle") {
      fs.bundle = parse_bundle(arg(), key, line);
    } else if (w == "weight") {
      fs.density_weight = parse_int(arg(), key, line);
    } else if (w == "power") {
      const std::string& p = arg();
      if (p == "none")
        fs.power = PowerMode::None;
      else if (p == "invertible")
        fs.power = PowerMode::InvertibleScalar;
      else if (p == "coframe")
        fs.power = PowerMode::Coframe;
      else
        fail(key, line, "unknown power mode '" + p + "'");
    } else if (w == "nabconst") {
      fs.nab_const = true;
    } else if (w == "fixed") {
      fs.fixed = true;
    } else if (w == "dt") {
      fs.interval_form = 1;
    } else {
      fail(key, line, "unknown field attribute '" + w + "'");
    }
  }
  try {
    return SymTab::instance().add(fs);
  } catch (const EngineError& ex) {
    fail(key, line, ex.what());
  }
}

struct Pattern {
  SymId sym = 0;
  bool match_label = false;
  std::uint8_t label_kind = 0;
  bool label_is_n = false;
  std::optional<std::uint8_t> label_letter;
  std::vector<std::uint8_t> idx_pattern;
};

Pattern parse_pattern(const std::string& text, const Context& ctx, const std::string& key,
                      int line) {
  Expression e;
  try {
    e = parse_expr(text, ctx);
  } catch (const EngineError& ex) {
    fail(key, line, std::string("bad pattern: ") + ex.what());
  }
  if (e.size() != 1 || e.terms[0].atoms.size() != 1 || !(e.terms[0].c == Coeff(1)) ||
      e.terms[0].dt != 0)
    fail(key, line, "pattern must be a single plain atom: '" + text + "'");
  const Atom& a = e.terms[0].atoms[0];
  if (a.is_bracket() || a.var || !a.derivs.empty() || !(a.power == Affine{0, 1}))
    fail(key, line, "pattern must be undecorated: '" + text + "'");
  Pattern p;
  p.sym = a.sym;
  if (a.label) {
    p.match_label = true;
    p.label_kind = a.label->kind;
    p.label_is_n = a.label->is_n;
    if (!a.label->is_n) p.label_letter = a.label->idx.letter;
  }
  for (const Index& ix : a.idx) {
    if (std::find(p.idx_pattern.begin(), p.idx_pattern.end(), ix.letter) != p.idx_pattern.end())
      fail(key, line, "repeated pattern index in '" + text + "'");
    p.idx_pattern.push_back(ix.letter);
  }
  return p;
}

void remap_letter(Atom& a, std::uint8_t from, std::uint8_t to) {
  if (a.is_bracket()) {
    remap_letter(*a.bl, from, to);
    remap_letter(*a.br, from, to);
  }
  for (Index& ix : a.idx)
    if (ix.letter == from) ix.letter = to;
  if (a.label && !a.label->is_n && a.label->idx.letter == from) a.label->idx.letter = to;
  for (Deriv& d : a.derivs) {
    switch (d.kind) {
      case Deriv::DOp2:
        if (d.i2.letter == from) d.i2.letter = to;
        [[fallthrough]];
      case Deriv::Partial:
      case Deriv::IotaP:
      case Deriv::Nabla:
        if (d.i1.letter == from) d.i1.letter = to;
        break;
      default: break;
    }
  }
}

void remap_letter(Expression& e, std::uint8_t from, std::uint8_t to) {
  for (Term& t : e.terms)
    for (Atom& a : t.atoms) remap_letter(a, from, to);
}

Expression parse_rhs(const std::string& text, const Context& ctx, const std::string& key,
                     int line) {
  try {
    return parse_expr(text, ctx);
  } catch (const EngineError& ex) {
    fail(key, line, ex.what());
  }
}

AtomRule make_atom_rule(const std::string& lhs, const std::string& rhs, const Context& ctx,
                        const std::string& key, int line) {
  Pattern p = parse_pattern(lhs, ctx, key, line);
  AtomRule r;
  r.sym = p.sym;
  r.match_label = p.match_label;
  r.label_kind = p.label_kind;
  r.label_is_n = p.label_is_n;
  r.idx_pattern = p.idx_pattern;
  r.rhs = parse_rhs(rhs, ctx, key, line);
  if (p.label_letter) remap_letter(r.rhs, *p.label_letter, kRuleSlot);
  return r;
}

DiffRule make_diff_rule(const std::string& rest, bool var_only, const Context& ctx,
                        const std::string& key, int line) {
  std::size_t via = rest.find(" via ");
  if (via == std::string::npos) fail(key, line, "expected 'via' in declared derivative");
  std::string lhs = trim(rest.substr(0, via));
  auto [marker_name, rhs_text] = split_defines(rest.substr(via + 5), key, line);
  Pattern p = parse_pattern(lhs, ctx, key, line);
  if (p.match_label) fail(key, line, "declared derivatives cannot match component labels");
  DiffRule r;
  r.sym = p.sym;
  r.idx_pattern = p.idx_pattern;
  r.var_only = var_only;
  try {
    r.marker = SymTab::instance().id(marker_name);
  } catch (const EngineError& ex) {
    fail(key, line, ex.what());
  }
  r.rhs = parse_rhs(rhs_text, ctx, key, line);
  for (const Term& t : r.rhs.terms) {
    int markers = 0;
    for (const Atom& a : t.atoms) {
      if (a.is_bracket()) fail(key, line, "brackets are not allowed in declared derivatives");
      if (a.sym == r.marker) {
        ++markers;
        continue;
      }
      if (a.parity(ctx) != 0)
        fail(key, line, "declared derivative has an odd non-marker factor");
    }
    if (markers != 1)
      fail(key, line, "each declared-derivative term needs exactly one marker atom");
  }
  return r;
}

void append_rules(RuleSet& dst, const RuleSet& src) {
  dst.atom_rules.insert(dst.atom_rules.end(), src.atom_rules.begin(), src.atom_rules.end());
  dst.pair_rules.insert(dst.pair_rules.end(), src.pair_rules.begin(), src.pair_rules.end());
  dst.diff_rules.insert(dst.diff_rules.end(), src.diff_rules.begin(), src.diff_rules.end());
}

std::string join_keys(const std::vector<std::string>& ks) {
  std::string out;
  for (const std::string& k : ks) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out.empty() ? "(none)" : out;
}

} // namespace

Affine parse_affine_text(const std::string& s) {
  // [sign][coeff]N[+|-b]  |  [sign]b
  std::size_t i = 0;
  auto read_int = [&](bool& any) -> long {
    long sign = 1;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) sign = (s[i++] == '-') ? -1 : 1;
    long mag = 0;
    bool digits = false;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
      mag = mag * 10 + (s[i++] - '0');
      digits = true;
    }
    any = digits;
    return sign * (digits ? mag : 1); // a bare sign before N means coefficient +-1
  };
  bool any = false;
  long first = read_int(any);
  long a = 0, b = 0;
  if (i < s.size() && s[i] == 'N') {
    ++i;
    a = first;
    if (i < s.size()) {
      if (s[i] != '+' && s[i] != '-') throw EngineError("bad affine value '" + s + "'");
      bool any2 = false;
      b = read_int(any2);
      if (!any2 || i != s.size()) throw EngineError("bad affine value '" + s + "'");
    }
  } else {
    if (!any || i != s.size()) throw EngineError("bad affine value '" + s + "'");
    b = first;
  }
  return Affine{a, b};
}

const Expression& Theory::constraint(const std::string& name) const {
  for (const NamedExpr& c : constraints)
    if (c.name == name) return c.expr;
  std::string known;
  for (const NamedExpr& c : constraints) {
    if (!known.empty()) known += ", ";
    known += c.name;
  }
  throw EngineError("theory '" + key + "' has no constraint '" + name +
                    "'; known: " + (known.empty() ? "(none)" : known));
}

const Expression* Theory::q_of(SymId field) const {
  for (const QRow& r : q_table)
    if (r.field == field) return &r.rhs;
  return nullptr;
}

const LiftRow* Theory::lift_of(SymId base) const {
  for (const LiftRow& r : lifts)
    if (r.base == base) return &r;
  return nullptr;
}

bool Theory::has_field(SymId s) const {
  return std::find(fields.begin(), fields.end(), s) != fields.end();
}

const Expression& FieldMap::def(const std::string& name) const {
  for (const NamedExpr& d : defs)
    if (d.name == name) return d.expr;
  throw EngineError("map '" + key + "' has no definition '" + name + "'");
}

Expression apply_map(const FieldMap& m, const Expression& e, const Context& ctx) {
  TheoryRegistry& reg = TheoryRegistry::instance();
  RuleSet rs;
  append_rules(rs, m.bind);
  append_rules(rs, m.rules);
  append_rules(rs, reg.theory(m.to).rules);
  append_rules(rs, reg.theory(m.from).rules);
  return normalize(e, ctx, &rs);
}

Theory parse_theory(const std::string& text, const std::string& expect_key) {
  Theory th;
  th.raw_text = text;
  Context ctx;
  const std::string& key = expect_key.empty() ? "(string)" : expect_key;
  std::vector<Directive> dirs = split_directives(text, key);
  if (dirs.empty()) throw EngineError(key + ".gfc: empty file");
  for (const Directive& d : dirs) {
    auto [head, rest] = split_head(d.text);
    if (head == "theory") {
      th.key = rest;
      if (!expect_key.empty() && th.key != expect_key)
        fail(key, d.line, "key '" + th.key + "' does not match the file name");
    } else if (head == "description") {
      th.description = rest;
    } else if (head == "geometry") {
      if (rest == "tensor")
        th.geometry = Geometry::Tensor;
      else if (rest == "form")
        th.geometry = Geometry::Form;
      else
        fail(key, d.line, "geometry must be 'tensor' or 'form'");
    } else if (head == "include") {
      const Theory& inc = TheoryRegistry::instance().theory(rest);
      for (SymId s : inc.fields)
        if (!th.has_field(s)) th.fields.push_back(s);
      append_rules(th.rules, inc.rules);
      if (th.description.empty()) th.description = inc.description;
    } else if (head == "field") {
      SymId s = parse_field_directive(rest, key, d.line);
      if (th.has_field(s)) fail(key, d.line, "field declared twice");
      th.fields.push_back(s);
    } else if (head == "rule") {
      auto [lhs, rhs] = split_defines(rest, key, d.line);
      th.rules.atom_rules.push_back(make_atom_rule(lhs, rhs, ctx, key, d.line));
    } else if (head == "diff" || head == "vdiff") {
      th.rules.diff_rules.push_back(make_diff_rule(rest, head == "vdiff", ctx, key, d.line));
    } else if (head == "pair") {
      std::vector<std::string> toks = words(rest);
      if (toks.size() != 2) fail(key, d.line, "pair needs two field names");
      try {
        th.rules.pair_rules.push_back(
            PairRule{SymTab::instance().id(toks[0]), SymTab::instance().id(toks[1])});
      } catch (const EngineError& ex) {
        fail(key, d.line, ex.what());
      }
    } else if (head == "lift") {
      std::vector<std::string> toks = words(rest);
      if (toks.size() != 2) fail(key, d.line, "lift needs base and partner field names");
      SymTab& st = SymTab::instance();
      LiftRow row;
      try {
        row.base = st.id(toks[0]);
        row.partner = st.id(toks[1]);
      } catch (const EngineError& ex) {
        fail(key, d.line, ex.what());
      }
      const FieldSpec& b = st.spec(row.base);
      const FieldSpec& p = st.spec(row.partner);
      if (p.ghost != b.ghost - 1)
        fail(key, d.line, "partner of '" + b.name + "' must sit one ghost degree lower");
      if (p.bundle != b.bundle || !(p.sigma_form == b.sigma_form) || !(p.vdeg == b.vdeg) ||
          p.density_weight != b.density_weight)
        fail(key, d.line, "partner of '" + b.name + "' must match its bundle and degrees");
      if (b.fixed || p.fixed) fail(key, d.line, "fixed fields cannot be lifted");
      if (th.lift_of(row.base)) fail(key, d.line, "field lifted twice");
      th.lifts.push_back(row);
    } else if (head == "alpha" || head == "omega" || head == "action") {
      auto [lhs, rhs] = split_defines(d.text, key, d.line);
      if (lhs != head) fail(key, d.line, "expected '" + head + " := ...'");
      Expression e = parse_rhs(rhs, ctx, key, d.line);
      if (head == "alpha")
        th.alpha = std::move(e);
      else if (head == "omega")
        th.omega = std::move(e);
      else
        th.action = std::move(e);
    } else if (head == "q") {
      auto [lhs, rhs] = split_defines(rest, key, d.line);
      QRow row;
      try {
        row.field = SymTab::instance().id(lhs);
      } catch (const EngineError& ex) {
        fail(key, d.line, ex.what());
      }
      if (!th.has_field(row.field)) fail(key, d.line, "q row for a field not in this theory");
      row.rhs = parse_rhs(rhs, ctx, key, d.line);
      th.q_table.push_back(std::move(row));
    } else if (head == "constraint") {
      auto [lhs, rhs] = split_defines(rest, key, d.line);
      th.constraints.push_back(NamedExpr{lhs, parse_rhs(rhs, ctx, key, d.line)});
    } else {
      fail(key, d.line, "unknown directive '" + head + "'");
    }
  }
  if (th.key.empty()) fail(key, dirs[0].line, "missing 'theory KEY' directive");
  return th;
}

FieldMap parse_field_map(const std::string& text, const std::string& expect_key) {
  FieldMap fm;
  fm.raw_text = text;
  Context ctx;
  const std::string& key = expect_key.empty() ? "(string)" : expect_key;
  std::vector<Directive> dirs = split_directives(text, key);
  if (dirs.empty()) throw EngineError(key + ".gfc: empty file");
  for (const Directive& d : dirs) {
    auto [head, rest] = split_head(d.text);
    if (head == "map") {
      fm.key = rest;
      if (!expect_key.empty() && fm.key != expect_key)
        fail(key, d.line, "key '" + fm.key + "' does not match the file name");
    } else if (head == "from" || head == "to") {
      (head == "from" ? fm.from : fm.to) = rest;
      TheoryRegistry::instance().theory(rest); // load now: registers its fields
    } else if (head == "field") {
      fm.fields.push_back(parse_field_directive(rest, key, d.line));
    } else if (head == "bind") {
      auto [lhs, rhs] = split_defines(rest, key, d.line);
      fm.bind.atom_rules.push_back(make_atom_rule(lhs, rhs, ctx, key, d.line));
    } else if (head == "rule") {
      auto [lhs, rhs] = split_defines(rest, key, d.line);
      fm.rules.atom_rules.push_back(make_atom_rule(lhs, rhs, ctx, key, d.line));
    } else if (head == "diff" || head == "vdiff") {
      fm.rules.diff_rules.push_back(make_diff_rule(rest, head == "vdiff", ctx, key, d.line));
    } else if (head == "pair") {
      std::vector<std::string> toks = words(rest);
      if (toks.size() != 2) fail(key, d.line, "pair needs two field names");
      try {
        fm.rules.pair_rules.push_back(
            PairRule{SymTab::instance().id(toks[0]), SymTab::instance().id(toks[1])});
      } catch (const EngineError& ex) {
        fail(key, d.line, ex.what());
      }
    } else if (head == "def") {
      auto [lhs, rhs] = split_defines(rest, key, d.line);
      fm.defs.push_back(NamedExpr{lhs, parse_rhs(rhs, ctx, key, d.line)});
    } else {
      fail(key, d.line, "unknown directive '" + head + "' in a map file");
    }
  }
  if (fm.key.empty()) fail(key, dirs[0].line, "missing 'map KEY' directive");
  if (fm.from.empty() || fm.to.empty()) fail(key, dirs[0].line, "map needs 'from' and 'to'");
  return fm;
}

TheoryRegistry& TheoryRegistry::instance() {
  static TheoryRegistry reg;
  return reg;
}

void TheoryRegistry::set_data_dir(const std::string& dir) {
  dir_ = dir;
  theories_.clear();
  maps_.clear();
}

const std::string& TheoryRegistry::data_dir() {
  if (dir_.empty()) {
    if (const char* env = std::getenv("GFV_THEORY_DIR")) {
      dir_ = env;
    } else {
#ifdef GFV_DATA_DIR
      dir_ = GFV_DATA_DIR;
#else
      dir_ = "theories";
#endif
    }
  }
  return dir_;
}

std::vector<std::string> TheoryRegistry::keys() {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir(), ec)) {
    if (entry.path().extension() == ".gfc") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {
std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EngineError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}
} // namespace

const Theory& TheoryRegistry::theory(const std::string& key) {
  auto it = theories_.find(key);
  if (it != theories_.end()) return it->second;
  if (maps_.count(key)) throw EngineError("'" + key + "' is a map, not a theory");
  std::string path = data_dir() + "/" + key + ".gfc";
  if (!std::filesystem::exists(path))
    throw EngineError("unknown theory '" + key + "'; available: " + join_keys(keys()));
  std::string text = read_file(path);
  std::vector<Directive> peek = split_directives(text, key);
  if (peek.empty()) throw EngineError(key + ".gfc: empty file");
  if (split_head(peek[0].text).first == "map")
    throw EngineError("'" + key + "' is a map, not a theory");
  // reserve the slot first so include cycles fail fast instead of recursing
  static thread_local std::vector<std::string> loading;
  if (std::find(loading.begin(), loading.end(), key) != loading.end())
    throw EngineError("circular include involving '" + key + "'");
  loading.push_back(key);
  Theory th;
  try {
    th = parse_theory(text, key);
  } catch (...) {
    loading.pop_back();
    throw;
  }
  loading.pop_back();
  return theories_.emplace(key, std::move(th)).first->second;
}

const FieldMap& TheoryRegistry::map(const std::string& key) {
  auto it = maps_.find(key);
  if (it != maps_.end()) return it->second;
  if (theories_.count(key)) throw EngineError("'" + key + "' is a theory, not a map");
  std::string path = data_dir() + "/" + key + ".gfc";
  if (!std::filesystem::exists(path))
    throw EngineError("unknown map '" + key + "'; available: " + join_keys(keys()));
  std::string text = read_file(path);
  FieldMap fm = parse_field_map(text, key);
  return maps_.emplace(key, std::move(fm)).first->second;
}

const std::string& TheoryRegistry::raw_text(const std::string& key) {
  if (is_map(key)) return map(key).raw_text;
  return theory(key).raw_text;
}

bool TheoryRegistry::is_map(const std::string& key) {
  if (maps_.count(key)) return true;
  if (theories_.count(key)) return false;
  std::string path = data_dir() + "/" + key + ".gfc";
  if (!std::filesystem::exists(path))
    throw EngineError("unknown theory or map '" + key + "'; available: " + join_keys(keys()));
  std::string text = read_file(path);
  std::vector<Directive> peek = split_directives(text, key);
  if (peek.empty()) throw EngineError(key + ".gfc: empty file");
  return split_head(peek[0].text).first == "map";
}

} // namespace gfv
