// Text form of expressions (.gfc files): lexer, parser, and deterministic
// renderers. The grammar (UTF-8):
//
//   expression  sum of products with '+' / '-'
//   product     juxtaposition (optionally the explicit '^' wedge); '/' divides
//               by a pure-coefficient factor
//   units       name | name_[x] name_(x) name_{x}   (component labels, x a
//               letter or n) | name{a b}             (tensor indices, variance
//               from the bundle) | integer | p/q | N d Lam eps | dt
//               | pow(name, affine-in-N)             (merged power families)
//               | d_S u | d_I u | d_t u | var u      (derivations)
//               | pa{a} u | io{a} u | nab{a} u | D2{a b} u
//               | dw[conn] u | i[vec] u | L[vec] u | L[vec;conn] u
//               | br[x, y]                           (graded bracket)
//               | < x , y >                          (pairing: open index
//                 slots are auto-contracted pairwise; with no open slots it
//                 is the graded product)
//               | Int_Sigma{ x } | Int_Cyl{ x }      (integration domains)
//               | ( x )
//
// Prefix operators bind to the next unit only; parenthesize for wider scope.
#pragma once

#include "gfv/calculus.hpp"

#include <string>

namespace gfv {

struct ParseError : EngineError {
  int line, col;
  ParseError(const std::string& msg, int line_, int col_)
      : EngineError(msg + " (line " + std::to_string(line_) + ", column " +
                    std::to_string(col_) + ")"),
        line(line_), col(col_) {}
};

// Parses one expression; every field name must already be registered.
Expression parse_expr(const std::string& text, const Context& ctx);

// Deterministic text rendering; parse_expr(render_text(e)) == e when e is a
// normal form.
std::string render_text(const Expression& e);

// Deterministic LaTeX rendering, stable token-for-token across runs.
std::string render_latex(const Expression& e);

} // namespace gfv
