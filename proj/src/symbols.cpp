#include "gfv/symbols.hpp"

namespace gfv {

SymTab& SymTab::instance() {
  static SymTab tab;
  return tab;
}

SymTab::SymTab() {
  FieldSpec kron;
  kron.name = "kron";
  kron.bundle = Bundle::Formal;
  specs_.push_back(kron);
  by_name_["kron"] = 0;
  kron_ = 0;
}

SymId SymTab::add(const FieldSpec& spec) {
  auto it = by_name_.find(spec.name);
  if (it != by_name_.end()) {
    const FieldSpec& old = specs_[it->second];
    bool same = old.sigma_form == spec.sigma_form && old.interval_form == spec.interval_form &&
                old.ghost == spec.ghost && old.vdeg == spec.vdeg && old.bundle == spec.bundle &&
                old.density_weight == spec.density_weight && old.power == spec.power &&
                old.nab_const == spec.nab_const && old.fixed == spec.fixed;
    if (!same)
      throw EngineError("field '" + spec.name + "' redeclared with different data");
    return it->second;
  }
  if (spec.power != PowerMode::None) {
    // exponent merging relies on even parity of the base
    FieldSpec probe = spec;
    if (probe.parity() != 0)
      throw EngineError("field '" + spec.name + "': power families require even parity");
  }
  SymId id = static_cast<SymId>(specs_.size());
  specs_.push_back(spec);
  by_name_[spec.name] = id;
  return id;
}

SymId SymTab::id(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw EngineError("unknown field '" + name + "'");
  return it->second;
}

std::string index_name(std::uint8_t letter) {
  static const char* pool = "abcefghjklmpqrstuvwxyz"; // skip d,i,n,o (reserved/confusable)
  const int npool = 22;
  if (letter < npool) return std::string(1, pool[letter]);
  return std::string(1, pool[letter % npool]) + std::to_string(letter / npool);
}

std::uint8_t index_letter(const std::string& name) {
  static const char* pool = "abcefghjklmpqrstuvwxyz";
  const int npool = 22;
  if (name.empty()) throw EngineError("empty index name");
  int base = -1;
  for (int i = 0; i < npool; ++i)
    if (pool[i] == name[0]) base = i;
  if (base < 0) throw EngineError("bad index name '" + name + "'");
  if (name.size() == 1) return static_cast<std::uint8_t>(base);
  int suffix = std::stoi(name.substr(1));
  return static_cast<std::uint8_t>(base + npool * suffix);
}

} // namespace gfv
