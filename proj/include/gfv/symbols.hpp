// Field symbol registry. Every atom refers to a registered FieldSpec carrying
// its grading data and bundle type; the registry is append-only and shared.
#pragma once

#include "gfv/types.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace gfv {

using SymId = std::uint32_t;

enum class Bundle : std::uint8_t {
  Scalar,      // function on the slice
  Vector,      // tangent vector (one upper index on components)
  Covector,    // one lower index
  Sym2Up,      // symmetric 2-tensor, upper indices
  Sym2Dn,      // symmetric 2-tensor, lower indices
  Density,     // scalar density of weight 1
  FormV,       // differential form valued in the exterior value bundle
  Connection,  // so-valued connection one-form
  Formal       // opaque bookkeeping symbol
};

enum class PowerMode : std::uint8_t {
  None,             // exponent fixed to 1
  InvertibleScalar, // integer exponents, any sign (merged multiplicatively)
  Coframe           // affine-in-N exponents (merged multiplicatively)
};

struct FieldSpec {
  std::string name;
  Affine sigma_form{};      // slice form degree
  int interval_form = 0;    // 1 if the field lives in the dt-direction (atoms are stripped)
  int ghost = 0;
  Affine vdeg{};            // exterior degree in the value bundle
  Bundle bundle = Bundle::Scalar;
  int density_weight = 0;
  PowerMode power = PowerMode::None;
  bool nab_const = false; // annihilated by the metric-compatible derivative
  bool fixed = false;     // background structure: variation and time derivative
                          // vanish, and superfield lifts skip it

  // number of tensor indices carried by an undecorated atom of this field
  int own_indices() const {
    switch (bundle) {
      case Bundle::Vector:
      case Bundle::Covector: return 1;
      case Bundle::Sym2Up:
      case Bundle::Sym2Dn: return 2;
      default: return 0;
    }
  }
  bool index_up(int slot) const {
    (void)slot;
    return bundle == Bundle::Vector || bundle == Bundle::Sym2Up;
  }

  // Commutation parity of a bare atom (without derivations or variation).
  // Includes the value-bundle exterior degree; the affine parts must cancel
  // mod 2 so the parity is N-independent.
  int parity() const {
    Affine total = sigma_form + vdeg;
    if ((total.a % 2 + 2) % 2 != 0)
      throw EngineError("field '" + name + "': parity depends on formal N");
    long v = total.b + ghost; // interval part handled by the explicit dt slot
    return static_cast<int>(((v % 2) + 2) % 2);
  }
};

class SymTab {
public:
  static SymTab& instance();

  // Registers or re-validates a spec; same name with identical data is a no-op,
  // conflicting data is an error.
  SymId add(const FieldSpec& spec);
  bool has(const std::string& name) const { return by_name_.count(name) != 0; }
  SymId id(const std::string& name) const;
  const FieldSpec& spec(SymId id) const { return specs_.at(id); }
  const std::string& name(SymId id) const { return specs_.at(id).name; }

  // Built-in pseudo-field for index identification (Kronecker delta).
  SymId kron() const { return kron_; }

  // all registered names, in registration order (diagnostics)
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(specs_.size());
    for (const FieldSpec& s : specs_) out.push_back(s.name);
    return out;
  }

private:
  SymTab();
  std::vector<FieldSpec> specs_;
  std::unordered_map<std::string, SymId> by_name_;
  SymId kron_ = 0;
};

} // namespace gfv
