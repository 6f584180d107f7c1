#pragma once

#include <string>
#include <string_view>

#include "elyte/chem.hpp"

namespace elyte {

// Restricted SMILES dialect: the supported element alphabet (organic-subset
// shorthand plus bracket atoms with H count and charge), bond symbols - = #,
// branches, ring closures 1-9, '.' fragments. Lowercase aromatic atoms are
// normalized to Kekule single/double alternation; only isolated aromatic
// 6-cycles are accepted. Throws SyntaxError / ValenceError.
MolGraph parse_smiles(std::string_view text);

// Emits text whose re-parse is graph-isomorphic to g. Not canonical.
std::string write_smiles(const MolGraph& g);

}  // namespace elyte
