#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "elyte/rng.hpp"

namespace elyte {

// Word-level token ids. Specials occupy fixed ids 0..4; corpus tokens follow
// in lexicographic order, so the same corpus always yields the same mapping.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kUnkId = 4;

using TokenList = std::vector<std::string>;

class Vocabulary {
 public:
  // Distinct corpus tokens after the 5 specials. Throws EmptyCorpusError if
  // the corpus has no entries.
  static Vocabulary build(const std::vector<TokenList>& corpus);

  // One token per line, line number = id (specials included). save() writes
  // the exact inverse of load().
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }

  // kUnkId for tokens outside the vocabulary.
  int id_of(const std::string& token) const;

  // Throws IdOutOfRangeError.
  const std::string& token_of(int id) const;

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// BOS + one id per token (UNK when unknown) + EOS.
std::vector<int> tokenize(const TokenList& tokens, const Vocabulary& v);

// Inverse of tokenize on UNK-free sequences; specials are dropped. Throws
// IdOutOfRangeError on ids outside [0, v.size()).
TokenList detokenize(const std::vector<int>& ids, const Vocabulary& v);

struct MaskedBatch {
  std::vector<int> source;          // ids with MASK substitutions
  std::vector<int> target;          // original ids
  std::vector<int> mask_positions;  // ascending
};

// Replaces max(1, round(ratio x maskable)) positions by MASK, where maskable
// excludes PAD/BOS/EOS and round is half-up. Throws ConfigError for ratio
// outside (0,1), NothingToMaskError when no position is maskable.
MaskedBatch apply_masking(const std::vector<int>& ids, double ratio, Rng& rng);

}  // namespace elyte
