#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "refmine/corpus.hpp"
#include "refmine/error.hpp"

namespace refmine {

struct ReferenceSpan {
  std::string doc_id;
  std::size_t first_token = 0;
  std::size_t last_token = 0;  // inclusive
  std::string text;            // tokens joined by single spaces

  friend bool operator==(const ReferenceSpan&, const ReferenceSpan&) = default;
};

/// Token ranges [first, last] of the references in a predicted sequence.
/// A span starts at every B and at every I that follows an O (or opens the
/// document); it ends just before the next O or B. Predicted labels need not
/// be well-formed, so a missed word inside a reference splits it in two.
inline std::vector<std::pair<std::size_t, std::size_t>> span_ranges(std::span<const IobLabel> labels) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  bool open = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i]) {
      case IobLabel::B:
        out.emplace_back(i, i);
        open = true;
        break;
      case IobLabel::I:
        if (open) {
          out.back().second = i;
        } else {
          out.emplace_back(i, i);
          open = true;
        }
        break;
      case IobLabel::O:
        open = false;
        break;
    }
  }
  return out;
}

inline std::vector<ReferenceSpan> extract_spans(const std::string& doc_id,
                                                std::span<const IobLabel> labels,
                                                std::span<const Token> tokens) {
  if (labels.size() != tokens.size()) {
    throw DataError("document '" + doc_id + "': " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(tokens.size()) + " tokens");
  }
  std::vector<ReferenceSpan> spans;
  for (auto [first, last] : span_ranges(labels)) {
    ReferenceSpan s{doc_id, first, last, {}};
    for (std::size_t i = first; i <= last; ++i) {
      if (i > first) s.text.push_back(' ');
      s.text += tokens[i].text;
    }
    spans.push_back(std::move(s));
  }
  return spans;
}

/// Spans from the predicted column of a document.
inline std::vector<ReferenceSpan> extract_spans(const LabeledDocument& doc) {
  if (!doc.pred) throw DataError("document '" + doc.doc_id + "' has no predicted labels");
  return extract_spans(doc.doc_id, *doc.pred, doc.tokens);
}

// Span dump: header line, then doc_id TAB first_token TAB last_token TAB text.

inline constexpr std::string_view kSpanHeader = "doc_id\tfirst_token\tlast_token\ttext";

inline void write_spans(std::ostream& out, std::span<const ReferenceSpan> spans) {
  out << kSpanHeader << '\n';
  for (const ReferenceSpan& s : spans) {
    out << s.doc_id << '\t' << s.first_token << '\t' << s.last_token << '\t' << s.text << '\n';
  }
}

inline std::vector<ReferenceSpan> read_spans(std::istream& in, const std::string& source = "<spans>") {
  std::vector<ReferenceSpan> spans;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kSpanHeader) throw DataError(source, line_no, "missing span header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const auto tab = line.find('\t', pos);
      if (tab == std::string::npos) throw DataError(source, line_no, "expected 4 TAB-separated columns");
      cols.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    cols.push_back(line.substr(pos));
    ReferenceSpan s;
    s.doc_id = cols[0];
    try {
      s.first_token = std::stoul(cols[1]);
      s.last_token = std::stoul(cols[2]);
    } catch (const std::logic_error&) {
      throw DataError(source, line_no, "token indices must be integers");
    }
    if (s.first_token > s.last_token) throw DataError(source, line_no, "first_token > last_token");
    s.text = cols[3];
    spans.push_back(std::move(s));
  }
  return spans;
}

}  // namespace refmine
