#pragma once

// Patent text tokenization, standoff annotation alignment and the IOB
// interchange format.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refmine/error.hpp"
#include "refmine/unicode.hpp"

namespace refmine {

/// IOB tag. The enumerator order is the canonical tie-break order B < I < O.
enum class IobLabel : std::uint8_t { B = 0, I = 1, O = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<IobLabel, kNumLabels> kAllLabels = {IobLabel::B, IobLabel::I,
                                                                 IobLabel::O};

inline constexpr std::size_t index_of(IobLabel l) { return static_cast<std::size_t>(l); }

inline constexpr char to_char(IobLabel l) {
  switch (l) {
    case IobLabel::B: return 'B';
    case IobLabel::I: return 'I';
    case IobLabel::O: return 'O';
  }
  return '?';
}

inline std::optional<IobLabel> parse_label(std::string_view s) {
  if (s == "B") return IobLabel::B;
  if (s == "I") return IobLabel::I;
  if (s == "O") return IobLabel::O;
  return std::nullopt;
}

using LabelSequence = std::vector<IobLabel>;

/// Well-formed IOB: every I is preceded by B or I.
inline bool is_well_formed(std::span<const IobLabel> labels) {
  IobLabel prev = IobLabel::O;
  for (IobLabel l : labels) {
    if (l == IobLabel::I && prev == IobLabel::O) return false;
    prev = l;
  }
  return true;
}

struct Token {
  std::string text;
  std::size_t start = 0;  // in code points
  std::size_t end = 0;    // exclusive
  std::optional<std::string> pos;

  friend bool operator==(const Token&, const Token&) = default;
};

struct LabeledDocument {
  std::string doc_id;
  std::vector<Token> tokens;
  std::optional<LabelSequence> gold;
  std::optional<LabelSequence> pred;

  std::size_t size() const { return tokens.size(); }

  friend bool operator==(const LabeledDocument&, const LabeledDocument&) = default;
};

struct AnnotationSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string kind;
};

struct CorpusStats {
  std::size_t n_documents = 0;
  std::size_t n_references = 0;
  std::size_t n_b_tokens = 0;
  std::size_t n_i_tokens = 0;
  std::optional<double> mean_reference_length;  // absent when there are no references
};

using AbbreviationSet = std::set<std::string, std::less<>>;

inline AbbreviationSet default_abbreviations() { return {"al."}; }

// ---------------------------------------------------------------------------
// Tokenization

namespace detail {

inline void push_token(std::vector<Token>& out, const std::u32string& text, std::size_t begin,
                       std::size_t end) {
  out.push_back(Token{unicode::encode_utf8(std::u32string_view(text).substr(begin, end - begin)),
                      begin, end, std::nullopt});
}

}  // namespace detail

/// Splits text on whitespace, then splits punctuation into single-character
/// tokens. Two exceptions keep punctuation inside a token:
///  - a whitespace-delimited unit with a digit and no letter ("22:981-993,")
///    keeps its interior punctuation; leading and trailing punctuation still
///    split off one character at a time;
///  - a word followed by "." stays whole when word + "." is an abbreviation.
/// Sentence and paragraph structure is ignored entirely.
inline std::vector<Token> tokenize(std::string_view text,
                                   const AbbreviationSet& abbreviations = default_abbreviations()) {
  using unicode::CharClass;
  const std::u32string cps = unicode::decode_utf8(text);
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = cps.size();
  while (i < n) {
    if (unicode::is_space(cps[i])) {
      ++i;
      continue;
    }
    std::size_t unit_end = i;
    bool has_digit = false;
    bool has_letter = false;
    while (unit_end < n && !unicode::is_space(cps[unit_end])) {
      const CharClass c = unicode::classify(cps[unit_end]);
      has_digit |= c == CharClass::Digit;
      has_letter |= c == CharClass::Letter;
      ++unit_end;
    }

    if (has_digit && !has_letter) {
      std::size_t lead = i;
      while (lead < unit_end && unicode::is_punct(cps[lead])) {
        detail::push_token(out, cps, lead, lead + 1);
        ++lead;
      }
      std::size_t trail = unit_end;
      while (trail > lead && unicode::is_punct(cps[trail - 1])) --trail;
      detail::push_token(out, cps, lead, trail);
      for (std::size_t k = trail; k < unit_end; ++k) detail::push_token(out, cps, k, k + 1);
    } else {
      std::size_t k = i;
      while (k < unit_end) {
        if (unicode::is_punct(cps[k])) {
          detail::push_token(out, cps, k, k + 1);
          ++k;
          continue;
        }
        std::size_t j = k;
        while (j < unit_end && !unicode::is_punct(cps[j])) ++j;
        if (j < unit_end && cps[j] == U'.' && !abbreviations.empty()) {
          std::string candidate =
              unicode::encode_utf8(std::u32string_view(cps).substr(k, j - k)) + ".";
          if (abbreviations.contains(candidate)) ++j;
        }
        detail::push_token(out, cps, k, j);
        k = j;
      }
    }
    i = unit_end;
  }
  return out;
}

/// Coarse tagger used when no external POS column is available.
inline std::string fallback_pos(std::string_view token) {
  using unicode::CharClass;
  const std::u32string cps = unicode::decode_utf8(token);
  bool digit = false;
  bool letter = false;
  bool all_punct = !cps.empty();
  for (char32_t c : cps) {
    const CharClass k = unicode::classify(c);
    digit |= k == CharClass::Digit;
    letter |= k == CharClass::Letter;
    all_punct &= k == CharClass::Punct;
  }
  if (all_punct) return "PUNCT";
  if (digit && !letter) return "NUM";
  if (!cps.empty() && unicode::is_upper(cps.front())) return "CAP";
  return "WORD";
}

inline void fill_fallback_pos(LabeledDocument& doc) {
  for (Token& t : doc.tokens) {
    if (!t.pos) t.pos = fallback_pos(t.text);
  }
}

// ---------------------------------------------------------------------------
// Annotation alignment

struct Alignment {
  LabeledDocument doc;
  std::vector<std::string> warnings;
};

/// Projects character-offset spans onto tokens: the first token overlapping a
/// span gets B, later overlapping tokens get I, everything else O.
/// Offsets past the end of the text, empty spans and overlapping spans are
/// hard errors; a span touching no token only produces a warning.
inline Alignment align_annotations(std::string doc_id, std::string_view text,
                                   std::vector<Token> tokens, std::vector<AnnotationSpan> spans) {
  const std::size_t text_len = unicode::decode_utf8(text).size();
  std::sort(spans.begin(), spans.end(),
            [](const AnnotationSpan& a, const AnnotationSpan& b) { return a.start < b.start; });
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const AnnotationSpan& sp = spans[s];
    if (sp.start >= sp.end || sp.end > text_len) {
      throw DataError("annotation offset out of range in " + doc_id + ": [" +
                      std::to_string(sp.start) + ", " + std::to_string(sp.end) +
                      ") for text of length " + std::to_string(text_len));
    }
    if (s > 0 && spans[s - 1].end > sp.start) {
      throw DataError("overlapping annotations in " + doc_id + " at offset " +
                      std::to_string(sp.start));
    }
  }

  Alignment result;
  LabelSequence labels(tokens.size(), IobLabel::O);
  std::vector<bool> claimed(tokens.size(), false);
  std::size_t first = 0;  // first token that may still overlap the current span
  for (const AnnotationSpan& sp : spans) {
    while (first < tokens.size() && tokens[first].end <= sp.start) ++first;
    bool opened = false;
    for (std::size_t t = first; t < tokens.size() && tokens[t].start < sp.end; ++t) {
      if (claimed[t]) continue;
      claimed[t] = true;
      labels[t] = opened ? IobLabel::I : IobLabel::B;
      opened = true;
    }
    if (!opened) {
      result.warnings.push_back("dangling span [" + std::to_string(sp.start) + ", " +
                                std::to_string(sp.end) + ") in " + doc_id +
                                " covers no token");
    }
  }
  result.doc.doc_id = std::move(doc_id);
  result.doc.tokens = std::move(tokens);
  result.doc.gold = std::move(labels);
  return result;
}

/// Reads BRAT standoff text-bound annotations ("T<n>\t<kind> <start> <end>\t<surface>").
/// Other annotation kinds (relations, attributes, notes) are skipped.
inline std::vector<AnnotationSpan> read_brat(std::istream& in,
                                             const std::string& source = "<ann>") {
  std::vector<AnnotationSpan> spans;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] != 'T') continue;
    const auto tab1 = line.find('\t');
    if (tab1 == std::string::npos) throw DataError(source, line_no, "missing TAB after annotation id");
    const auto tab2 = line.find('\t', tab1 + 1);
    const std::string body =
        line.substr(tab1 + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab1 - 1);
    if (body.find(';') != std::string::npos) {
      throw DataError(source, line_no, "discontinuous annotations are not supported");
    }
    const auto sp1 = body.find(' ');
    const auto sp2 = sp1 == std::string::npos ? sp1 : body.find(' ', sp1 + 1);
    if (sp2 == std::string::npos) throw DataError(source, line_no, "expected '<kind> <start> <end>'");
    AnnotationSpan span;
    span.kind = body.substr(0, sp1);
    try {
      std::size_t used = 0;
      const std::string a = body.substr(sp1 + 1, sp2 - sp1 - 1);
      const std::string b = body.substr(sp2 + 1);
      span.start = std::stoul(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      span.end = std::stoul(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::logic_error&) {
      throw DataError(source, line_no, "malformed offsets in '" + body + "'");
    }
    spans.push_back(std::move(span));
  }
  return spans;
}

// ---------------------------------------------------------------------------
// IOB interchange format
//
//   # doc_id = <id>
//   <token> TAB <pos> TAB <gold> TAB <pred>
//   ...
//   <blank line between documents>
//
// Absent columns are written as "_". Token offsets are not stored; documents
// read back get offsets of the space-joined token text.

inline constexpr std::string_view kDocHeader = "# doc_id = ";

namespace detail {

struct PendingDoc {
  LabeledDocument doc;
  std::vector<std::optional<IobLabel>> gold;
  std::vector<std::optional<IobLabel>> pred;
  std::size_t header_line = 0;
  std::size_t next_offset = 0;
};

inline std::optional<LabelSequence> finish_column(const std::vector<std::optional<IobLabel>>& col,
                                                  const std::string& source, std::size_t line,
                                                  const char* name) {
  const auto present = std::count_if(col.begin(), col.end(), [](const auto& l) { return l.has_value(); });
  if (present == 0) return std::nullopt;
  if (static_cast<std::size_t>(present) != col.size()) {
    throw DataError(source, line, std::string("document mixes labelled and '_' entries in the ") +
                                      name + " column");
  }
  LabelSequence out;
  out.reserve(col.size());
  for (const auto& l : col) out.push_back(*l);
  return out;
}

}  // namespace detail

inline std::vector<LabeledDocument> read_iob(std::istream& in, const std::string& source = "<iob>") {
  std::vector<LabeledDocument> docs;
  std::optional<detail::PendingDoc> cur;
  auto finish = [&]() {
    if (!cur) return;
    if (cur->doc.tokens.empty()) {
      throw DataError(source, cur->header_line, "document '" + cur->doc.doc_id + "' has no tokens");
    }
    cur->doc.gold = detail::finish_column(cur->gold, source, cur->header_line, "gold");
    cur->doc.pred = detail::finish_column(cur->pred, source, cur->header_line, "pred");
    docs.push_back(std::move(cur->doc));
    cur.reset();
  };

  std::string line;
  std::size_t line_no = 0;
  bool in_doc = false;  // false after a blank line until the next header
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      finish();
      in_doc = false;
      continue;
    }
    if (line.starts_with(kDocHeader) && line.find('\t') == std::string::npos) {
      finish();
      cur.emplace();
      cur->doc.doc_id = line.substr(kDocHeader.size());
      cur->header_line = line_no;
      if (cur->doc.doc_id.empty()) throw DataError(source, line_no, "empty doc_id");
      in_doc = true;
      continue;
    }
    if (!in_doc) throw DataError(source, line_no, "token line outside a document (missing '# doc_id = ' header)");

    std::vector<std::string_view> cols;
    std::string_view rest(line);
    for (auto tab = rest.find('\t'); tab != std::string_view::npos; tab = rest.find('\t')) {
      cols.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    cols.push_back(rest);
    if (cols.size() != 4) {
      throw DataError(source, line_no, "expected 4 TAB-separated columns (token pos gold pred)");
    }
    if (cols[0].empty()) throw DataError(source, line_no, "empty token");
    auto label_col = [&](std::string_view s) -> std::optional<IobLabel> {
      if (s == "_") return std::nullopt;
      auto l = parse_label(s);
      if (!l) throw DataError(source, line_no, "unknown label '" + std::string(s) + "'");
      return l;
    };
    Token tok;
    tok.text = std::string(cols[0]);
    tok.start = cur->next_offset;
    tok.end = tok.start + unicode::decode_utf8(tok.text).size();
    cur->next_offset = tok.end + 1;
    if (cols[1] != "_") tok.pos = std::string(cols[1]);
    cur->gold.push_back(label_col(cols[2]));
    cur->pred.push_back(label_col(cols[3]));
    cur->doc.tokens.push_back(std::move(tok));
  }
  finish();
  return docs;
}

inline void write_iob(std::ostream& out, std::span<const LabeledDocument> docs) {
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const LabeledDocument& doc = docs[d];
    if (d > 0) out << '\n';
    out << kDocHeader << doc.doc_id << '\n';
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      const Token& t = doc.tokens[i];
      out << t.text << '\t' << (t.pos ? *t.pos : "_") << '\t'
          << (doc.gold ? to_char((*doc.gold)[i]) : '_') << '\t'
          << (doc.pred ? to_char((*doc.pred)[i]) : '_') << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

/// Reference counts over gold labels. A reference starts at a B token, or at
/// an I token in first position (tolerates repaired data).
inline CorpusStats corpus_stats(std::span<const LabeledDocument> docs) {
  CorpusStats stats;
  stats.n_documents = docs.size();
  for (const LabeledDocument& doc : docs) {
    if (!doc.gold) throw DataError("document '" + doc.doc_id + "' has no gold labels");
    const LabelSequence& g = *doc.gold;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] == IobLabel::B) {
        ++stats.n_b_tokens;
        ++stats.n_references;
      } else if (g[i] == IobLabel::I) {
        ++stats.n_i_tokens;
        if (i == 0) ++stats.n_references;
      }
    }
  }
  if (stats.n_references > 0) {
    stats.mean_reference_length =
        static_cast<double>(stats.n_b_tokens + stats.n_i_tokens) / static_cast<double>(stats.n_references);
  }
  return stats;
}

}  // namespace refmine
