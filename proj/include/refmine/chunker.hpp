#pragma once

// Subword re-tokenization and fixed-window chunking for fixed-context
// labellers. Words are never split across windows; each window carries one
// label per word, so a window maps many subwords to one label.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "refmine/corpus.hpp"
#include "refmine/error.hpp"
#include "refmine/unicode.hpp"

namespace refmine {

struct SpecialTokens {
  std::string unknown = "[UNK]";
  std::string start = "[CLS]";
  std::string end = "[SEP]";
  std::string pad = "[PAD]";
};

/// Immutable subword vocabulary. Ids are positions in the token list; a
/// repeated entry keeps its first id.
class SubwordVocab {
 public:
  explicit SubwordVocab(std::vector<std::string> tokens, SpecialTokens specials = {},
                        std::string continuation_prefix = "##")
      : tokens_(std::move(tokens)),
        specials_(std::move(specials)),
        continuation_prefix_(std::move(continuation_prefix)) {
    if (tokens_.empty()) throw DataError("subword vocabulary is empty");
    ids_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
    unknown_id_ = require(specials_.unknown);
    start_id_ = require(specials_.start);
    end_id_ = require(specials_.end);
    pad_id_ = require(specials_.pad);
    std::vector<int> s = {unknown_id_, start_id_, end_id_, pad_id_};
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
      throw DataError("special vocabulary tokens must have distinct ids");
    }
  }

  /// One subword per line; the zero-based line number is the id.
  static SubwordVocab load(std::istream& in, SpecialTokens specials = {},
                           std::string continuation_prefix = "##",
                           const std::string& source = "<vocab>") {
    std::vector<std::string> tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) throw DataError(source, line_no, "empty vocabulary entry");
      tokens.push_back(line);
    }
    return SubwordVocab(std::move(tokens), std::move(specials), std::move(continuation_prefix));
  }

  /// Id of an entry, or -1.
  int find(std::string_view piece) const {
    auto it = ids_.find(std::string(piece));
    return it == ids_.end() ? -1 : it->second;
  }
  bool contains(std::string_view piece) const { return find(piece) >= 0; }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  const SpecialTokens& specials() const { return specials_; }
  const std::string& continuation_prefix() const { return continuation_prefix_; }
  int unknown_id() const { return unknown_id_; }
  int start_id() const { return start_id_; }
  int end_id() const { return end_id_; }
  int pad_id() const { return pad_id_; }

 private:
  int require(const std::string& special) const {
    const int id = find(special);
    if (id < 0) throw DataError("special token '" + special + "' missing from vocabulary");
    return id;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  SpecialTokens specials_;
  std::string continuation_prefix_;
  int unknown_id_ = -1;
  int start_id_ = -1;
  int end_id_ = -1;
  int pad_id_ = -1;
};

/// Greedy longest-prefix WordPiece split. Non-initial pieces carry the
/// continuation prefix. If any remainder has no matching entry, the whole
/// word becomes the unknown token.
inline std::vector<std::string> subword_tokenize(std::string_view word, const SubwordVocab& vocab) {
  const std::u32string cps = unicode::decode_utf8(word);
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::size_t end = cps.size();
    std::string match;
    while (end > start) {
      std::string candidate = start > 0 ? vocab.continuation_prefix() : std::string();
      candidate += unicode::encode_utf8(std::u32string_view(cps).substr(start, end - start));
      if (vocab.contains(candidate)) {
        match = std::move(candidate);
        break;
      }
      --end;
    }
    if (end == start) return {vocab.specials().unknown};
    pieces.push_back(std::move(match));
    start = end;
  }
  return pieces;
}

inline std::vector<int> subword_ids(std::string_view word, const SubwordVocab& vocab) {
  std::vector<int> ids;
  for (const std::string& p : subword_tokenize(word, vocab)) ids.push_back(vocab.find(p));
  return ids;
}

struct WordSpan {
  std::size_t first = 0;  // index of the word's first subword in the chunk
  std::size_t count = 0;

  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

struct Chunk {
  std::string doc_id;
  std::vector<int> subword_ids;              // padded to max_len
  std::vector<std::uint8_t> attention_mask;  // 1 on unpadded positions
  std::vector<WordSpan> word_spans;
  LabelSequence word_labels;
  std::vector<std::size_t> word_offsets;  // word index within the document

  /// Number of unpadded positions, start and end tokens included.
  std::size_t length() const {
    return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
  }

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Splits a document into windows of at most max_len subword positions.
///
/// Each window opens with the start token. Before a word with n subwords is
/// appended, a window already holding |T| positions is closed (end token,
/// then padding) when |T| + n + 1 > max_len. The last window is closed at the
/// end of the document; no empty window is ever emitted. A word with more
/// than max_len - 2 subwords is truncated and reported through `warnings`.
///
/// word_labels come from the gold column, else from the predicted column,
/// else they are all O.
inline std::vector<Chunk> chunk_document(const LabeledDocument& doc, const SubwordVocab& vocab,
                                         std::size_t max_len = 64,
                                         std::vector<std::string>* warnings = nullptr) {
  if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
  if (doc.tokens.empty()) throw DataError("document '" + doc.doc_id + "' has no tokens");
  const LabelSequence* labels = doc.gold ? &*doc.gold : (doc.pred ? &*doc.pred : nullptr);

  std::vector<Chunk> chunks;
  Chunk cur;
  auto open = [&] {
    cur = Chunk{};
    cur.doc_id = doc.doc_id;
    cur.subword_ids.push_back(vocab.start_id());
  };
  auto close = [&] {
    cur.subword_ids.push_back(vocab.end_id());
    cur.attention_mask.assign(cur.subword_ids.size(), 1);
    cur.subword_ids.resize(max_len, vocab.pad_id());
    cur.attention_mask.resize(max_len, 0);
    chunks.push_back(std::move(cur));
  };

  open();
  for (std::size_t w = 0; w < doc.tokens.size(); ++w) {
    std::vector<int> pieces = subword_ids(doc.tokens[w].text, vocab);
    if (pieces.size() > max_len - 2) {
      if (warnings) {
        warnings->push_back("word " + std::to_string(w) + " of " + doc.doc_id + " has " +
                            std::to_string(pieces.size()) + " subwords; truncated to " +
                            std::to_string(max_len - 2));
      }
      pieces.resize(max_len - 2);
    }
    if (cur.subword_ids.size() + pieces.size() + 1 > max_len) {
      close();
      open();
    }
    cur.word_spans.push_back(WordSpan{cur.subword_ids.size(), pieces.size()});
    cur.subword_ids.insert(cur.subword_ids.end(), pieces.begin(), pieces.end());
    cur.word_labels.push_back(labels ? (*labels)[w] : IobLabel::O);
    cur.word_offsets.push_back(w);
  }
  close();
  return chunks;
}

/// Per-position labels that give every subword of a word the word's label;
/// start, end and padding positions get O. Length is the unpadded length.
inline LabelSequence broadcast_word_labels(const Chunk& chunk) {
  LabelSequence out(chunk.length(), IobLabel::O);
  for (std::size_t k = 0; k < chunk.word_spans.size(); ++k) {
    const WordSpan& s = chunk.word_spans[k];
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(s.first), s.count, chunk.word_labels[k]);
  }
  return out;
}

/// Inverse of chunking: each word takes the label predicted at its first
/// subword. `per_position` holds one sequence per chunk covering at least the
/// unpadded positions. Chunks must tile one document's words exactly.
inline LabelSequence merge_predictions(std::span<const Chunk> chunks,
                                       std::span<const LabelSequence> per_position) {
  if (chunks.size() != per_position.size()) {
    throw DataError("got " + std::to_string(per_position.size()) + " prediction rows for " +
                    std::to_string(chunks.size()) + " chunks");
  }
  std::size_t n_words = 0;
  for (const Chunk& c : chunks) n_words += c.word_offsets.size();
  LabelSequence out(n_words, IobLabel::O);
  std::vector<bool> seen(n_words, false);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const Chunk& chunk = chunks[c];
    if (chunk.doc_id != chunks.front().doc_id) {
      throw DataError("chunk set mixes documents '" + chunks.front().doc_id + "' and '" +
                      chunk.doc_id + "'");
    }
    if (per_position[c].size() < chunk.length() || per_position[c].size() > chunk.subword_ids.size()) {
      throw DataError("prediction row " + std::to_string(c) + " has " +
                      std::to_string(per_position[c].size()) + " labels for a chunk of length " +
                      std::to_string(chunk.length()));
    }
    for (std::size_t k = 0; k < chunk.word_offsets.size(); ++k) {
      const std::size_t w = chunk.word_offsets[k];
      if (w >= n_words || seen[w]) {
        throw DataError("chunk set does not tile document '" + chunk.doc_id + "' (word " +
                        std::to_string(w) + ")");
      }
      seen[w] = true;
      out[w] = per_position[c][chunk.word_spans[k].first];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chunk dump: one JSON object per line.

inline nlohmann::json to_json(const Chunk& c) {
  nlohmann::json spans = nlohmann::json::array();
  for (const WordSpan& s : c.word_spans) spans.push_back({s.first, s.count});
  nlohmann::json labels = nlohmann::json::array();
  for (IobLabel l : c.word_labels) labels.push_back(std::string(1, to_char(l)));
  return nlohmann::json{{"doc_id", c.doc_id},
                        {"subword_ids", c.subword_ids},
                        {"attention_mask", c.attention_mask},
                        {"word_spans", spans},
                        {"word_labels", labels},
                        {"word_offsets", c.word_offsets}};
}

inline Chunk chunk_from_json(const nlohmann::json& j) {
  Chunk c;
  c.doc_id = j.at("doc_id").get<std::string>();
  c.subword_ids = j.at("subword_ids").get<std::vector<int>>();
  c.attention_mask = j.at("attention_mask").get<std::vector<std::uint8_t>>();
  for (const auto& s : j.at("word_spans")) {
    c.word_spans.push_back(WordSpan{s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  }
  for (const auto& l : j.at("word_labels")) {
    auto label = parse_label(l.get<std::string>());
    if (!label) throw DataError("unknown label '" + l.get<std::string>() + "' in chunk dump");
    c.word_labels.push_back(*label);
  }
  c.word_offsets = j.at("word_offsets").get<std::vector<std::size_t>>();
  if (c.attention_mask.size() != c.subword_ids.size() ||
      c.word_labels.size() != c.word_spans.size() || c.word_offsets.size() != c.word_spans.size()) {
    throw DataError("inconsistent field lengths in chunk record for '" + c.doc_id + "'");
  }
  return c;
}

inline void write_chunks(std::ostream& out, std::span<const Chunk> chunks) {
  for (const Chunk& c : chunks) out << to_json(c).dump() << '\n';
}

inline std::vector<Chunk> read_chunks(std::istream& in, const std::string& source = "<chunks>") {
  std::vector<Chunk> chunks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      chunks.push_back(chunk_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(source, line_no, e.what());
    } catch (const DataError& e) {
      throw DataError(source, line_no, e.what());
    }
  }
  return chunks;
}

}  // namespace refmine
