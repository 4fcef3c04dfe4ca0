#include "dasa/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dasa/errors.hpp"
#include "dasa/layers.hpp"

namespace dasa::text {

// ---- vocabulary ---------------------------------------------------------------

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  auto push = [&v](const std::string& w) {
    if (v.ids_.count(w)) return;
    v.ids_[w] = v.words_.size();
    v.words_.push_back(w);
  };
  push(kUnkToken);
  push(kClsToken);
  for (const auto& w : words) push(w);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) words.push_back(line);
  if (words.size() < 2 || words[kUnkId] != kUnkToken || words[kClsId] != kClsToken) {
    throw IoError("vocabulary must start with [UNK] and [CLS]: " + path.string());
  }
  Vocabulary v;
  for (const auto& w : words) {
    if (v.ids_.count(w)) throw IoError("duplicate vocabulary entry: " + w);
    v.ids_[w] = v.words_.size();
    v.words_.push_back(w);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write vocabulary: " + path.string());
  for (const auto& w : words_) os << w << '\n';
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::word(std::size_t id) const {
  if (id >= words_.size()) throw ContractError("token id out of range: " + std::to_string(id));
  return words_[id];
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(w);
  }
  return out;
}

std::vector<std::size_t> tokenize(const std::vector<std::string>& words, const Vocabulary& vocab) {
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

std::vector<std::size_t> tokenize(const std::string& text, const Vocabulary& vocab) {
  return tokenize(split_words(text), vocab);
}

// ---- decoupling ---------------------------------------------------------------

DecoupledText decouple(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  DecoupledText out;
  out.original = tokens;
  std::size_t i = 0;
  if (i < tokens.size() && lexicon.determiners.count(tokens[i])) {
    out.has_determiner = true;
    ++i;
  }
  while (i < tokens.size() && lexicon.sizes.count(tokens[i])) ++i;
  while (i < tokens.size() && lexicon.colors.count(tokens[i])) ++i;
  if (i >= tokens.size() || !lexicon.nouns.count(tokens[i])) {
    std::string joined;
    for (const auto& t : tokens) joined += (joined.empty() ? "" : " ") + t;
    throw ParseError("no subject head noun in: \"" + joined + "\"");
  }
  out.np_begin = 0;
  out.np_end = i + 1;
  out.att.assign(tokens.begin(), tokens.begin() + static_cast<long>(out.np_end));
  if (out.has_determiner) out.spa.push_back("the");
  out.spa.push_back(kObjectWord);
  out.spa.insert(out.spa.end(), tokens.begin() + static_cast<long>(out.np_end), tokens.end());
  return out;
}

std::vector<std::string> reconstruct(const DecoupledText& text) {
  const std::size_t replaced = text.has_determiner ? 2 : 1;
  if (text.spa.size() < replaced || text.spa[replaced - 1] != kObjectWord) {
    throw ContractError("reconstruct: spatial sentence does not start with the object span");
  }
  std::vector<std::string> out = text.att;
  out.insert(out.end(), text.spa.begin() + static_cast<long>(replaced), text.spa.end());
  return out;
}

// ---- encoder ------------------------------------------------------------------

namespace {

std::string layer_prefix(std::size_t l) { return "text.layer" + std::to_string(l); }

}  // namespace

void register_text_encoder(ParamStore& ps, const ModelConfig& cfg) {
  cfg.validate();
  ps.add("text.tok_emb", {cfg.vocab_size, cfg.d}, InitKind::normal, cfg.embedding_std);
  ps.add("text.pos_emb", {cfg.max_tokens + 1, cfg.d}, InitKind::normal, cfg.embedding_std);
  const nn::AttentionShape shape{cfg.d, cfg.heads, true};
  for (std::size_t l = 0; l < cfg.text_layers; ++l) {
    const std::string p = layer_prefix(l);
    nn::register_attention(ps, p + ".attn", shape);
    nn::register_layer_norm(ps, p + ".ln1", cfg.d);
    nn::register_ffn(ps, p + ".ffn", cfg.d, cfg.ffn_mult * cfg.d);
    nn::register_layer_norm(ps, p + ".ln2", cfg.d);
  }
}

Tensor encode_text(const std::vector<std::size_t>& ids, const ParamStore& ps,
                   const ModelConfig& cfg) {
  if (ids.size() > cfg.max_tokens) {
    throw ContractError("encode_text: " + std::to_string(ids.size()) +
                        " tokens exceed max_tokens=" + std::to_string(cfg.max_tokens));
  }
  std::vector<std::size_t> with_cls;
  with_cls.reserve(ids.size() + 1);
  with_cls.push_back(kClsId);
  for (std::size_t id : ids) {
    if (id >= cfg.vocab_size) {
      throw ContractError("encode_text: token id " + std::to_string(id) +
                          " outside vocabulary of " + std::to_string(cfg.vocab_size));
    }
    with_cls.push_back(id);
  }
  Tensor x = add(gather_rows(ps.get("text.tok_emb"), with_cls),
                 slice_rows(ps.get("text.pos_emb"), 0, with_cls.size()));
  const nn::AttentionShape shape{cfg.d, cfg.heads, true};
  for (std::size_t l = 0; l < cfg.text_layers; ++l) {
    const std::string p = layer_prefix(l);
    x = nn::layer_norm(add(x, nn::attention(x, x, x, ps, p + ".attn", shape)), ps, p + ".ln1",
                       cfg.ln_eps);
    x = nn::layer_norm(add(x, nn::feed_forward(x, ps, p + ".ffn", cfg.nonlinearity)), ps,
                       p + ".ln2", cfg.ln_eps);
  }
  return x;
}

Tensor encode_sentence(const std::vector<std::size_t>& ids, const ParamStore& ps,
                       const ModelConfig& cfg) {
  if (cfg.sentence_pooling != "cls") {
    throw ContractError("unsupported sentence_pooling: " + cfg.sentence_pooling);
  }
  return slice_rows(encode_text(ids, ps, cfg), 0, 1);
}

}  // namespace dasa::text
