#pragma once

// Referring-expression handling: vocabulary, tokenisation, the subject-NP
// decoupler that yields the attribute and spatial sub-sentences, and the
// trainable text encoder.

#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dasa/model_config.hpp"
#include "dasa/param_store.hpp"

namespace dasa::text {

inline constexpr std::size_t kUnkId = 0;
inline constexpr std::size_t kClsId = 1;
inline const std::string kUnkToken = "[UNK]";
inline const std::string kClsToken = "[CLS]";
inline const std::string kObjectWord = "object";

class Vocabulary {
 public:
  // [UNK] and [CLS] are prepended; duplicates are dropped.
  static Vocabulary from_words(const std::vector<std::string>& words);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t id(const std::string& word) const;  // kUnkId when absent
  const std::string& word(std::size_t id) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
};

std::vector<std::string> split_words(const std::string& text);
std::vector<std::size_t> tokenize(const std::vector<std::string>& words, const Vocabulary& vocab);
std::vector<std::size_t> tokenize(const std::string& text, const Vocabulary& vocab);

// Word classes the subject-NP extractor understands.
struct Lexicon {
  std::set<std::string> determiners{"the", "a"};
  std::set<std::string> sizes;
  std::set<std::string> colors;
  std::set<std::string> nouns;
};

struct DecoupledText {
  std::vector<std::string> original;
  std::vector<std::string> att;  // subject noun phrase
  std::vector<std::string> spa;  // original with the NP replaced by "(the) object"
  std::size_t np_begin = 0;
  std::size_t np_end = 0;  // one past the head noun
  bool has_determiner = false;
};

// Subject NP = optional determiner, size*, color*, head noun, starting at the
// first token. Throws ParseError when no head noun is found there.
DecoupledText decouple(const std::vector<std::string>& tokens, const Lexicon& lexicon);
// Inverse of decouple: substitutes att back in place of the "object" span.
std::vector<std::string> reconstruct(const DecoupledText& text);

// ---- encoder -----------------------------------------------------------------

void register_text_encoder(ParamStore& ps, const ModelConfig& cfg);

// (n+1)×d token features; row 0 is the [CLS] position.
Tensor encode_text(const std::vector<std::size_t>& ids, const ParamStore& ps,
                   const ModelConfig& cfg);
// Pooled sentence feature as a 1×d row (the [CLS] row).
Tensor encode_sentence(const std::vector<std::size_t>& ids, const ParamStore& ps,
                       const ModelConfig& cfg);

}  // namespace dasa::text
