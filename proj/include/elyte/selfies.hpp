#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "elyte/chem.hpp"

namespace elyte {

// Robust molecular string representation: every individually grammar-valid
// token sequence decodes to a valence-valid graph. Token text form is
// `[` bond-prefix? core charge? `]` where the prefix is one of = # . (none
// means a single bond, '.' starts an unbonded fragment), the core is an
// element symbol or Branch1/Ring1 (operational) or Ring2/Branch2 variants
// (index-table fillers), and the charge is +1 +2 -1 -2.

// Every token the codec understands, in a fixed order. The first 16 entries
// are the index table used to read branch lengths and ring spans.
const std::vector<std::string>& selfies_alphabet();

// Splits concatenated token text ("[C][=O]") into tokens. Throws
// TokenGrammarError on anything that is not a sequence of valid tokens.
std::vector<std::string> split_selfies(std::string_view text);

// Graph -> token text. Branch bodies and ring spans must fit the 16-entry
// index table; larger structures throw UnsupportedFeatureError.
std::string encode_selfies(const MolGraph& g);

// Token text -> graph. Total on grammar-valid input: bond orders are capped
// by remaining valence, unrealizable bonds are dropped, atoms are always
// placed. Throws TokenGrammarError only for malformed token text.
MolGraph decode_selfies(std::string_view text);

}  // namespace elyte
