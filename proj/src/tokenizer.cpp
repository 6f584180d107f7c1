#include "elyte/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "elyte/errors.hpp"

namespace elyte {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {"<pad>", "<bos>", "<eos>", "<mask>", "<unk>"};
  return specials;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    index_.emplace(tokens_[i], static_cast<int>(i));
  if (index_.size() != tokens_.size())
    throw ValidationError("vocabulary contains duplicate tokens");
}

Vocabulary Vocabulary::build(const std::vector<TokenList>& corpus) {
  if (corpus.empty()) throw EmptyCorpusError("cannot build a vocabulary from an empty corpus");
  std::set<std::string> distinct;
  for (const TokenList& entry : corpus) distinct.insert(entry.begin(), entry.end());
  std::vector<std::string> tokens = special_tokens();
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin()))
    throw ValidationError("vocabulary file " + path.string() +
                          " does not start with the five special tokens");
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);  // binary: no newline translation
  if (!out) throw IoError("cannot write vocabulary file " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing vocabulary file " + path.string());
}

int Vocabulary::id_of(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size())
    throw IdOutOfRangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> tokenize(const TokenList& tokens, const Vocabulary& v) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(kBosId);
  for (const std::string& t : tokens) ids.push_back(v.id_of(t));
  ids.push_back(kEosId);
  return ids;
}

TokenList detokenize(const std::vector<int>& ids, const Vocabulary& v) {
  TokenList out;
  for (const int id : ids) {
    const std::string& token = v.token_of(id);
    if (id == kPadId || id == kBosId || id == kEosId || id == kMaskId || id == kUnkId) continue;
    out.push_back(token);
  }
  return out;
}

MaskedBatch apply_masking(const std::vector<int>& ids, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("mask ratio must lie strictly between 0 and 1");
  std::vector<int> maskable;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != kPadId && ids[i] != kBosId && ids[i] != kEosId)
      maskable.push_back(static_cast<int>(i));
  if (maskable.empty()) throw NothingToMaskError("sequence has no maskable tokens");

  const int count = std::max(
      1, static_cast<int>(std::floor(ratio * static_cast<double>(maskable.size()) + 0.5)));

  MaskedBatch batch;
  batch.source = ids;
  batch.target = ids;
  for (const int pick : rng.sample_indices(static_cast<int>(maskable.size()), count))
    batch.mask_positions.push_back(maskable[static_cast<std::size_t>(pick)]);
  std::sort(batch.mask_positions.begin(), batch.mask_positions.end());
  for (const int pos : batch.mask_positions)
    batch.source[static_cast<std::size_t>(pos)] = kMaskId;
  return batch;
}

}  // namespace elyte
