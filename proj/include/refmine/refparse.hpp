#pragma once

// Field extraction from reference span text by a cascade of patterns:
// pages/volume, year, authors, and the journal as the remaining residue.

#include <algorithm>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refmine/error.hpp"
#include "refmine/extract.hpp"
#include "refmine/unicode.hpp"

namespace refmine {

struct PageRange {
  std::string first;
  std::optional<std::string> last;

  friend bool operator==(const PageRange&, const PageRange&) = default;
};

struct ParsedReference {
  std::optional<std::string> first_author;
  std::optional<std::string> second_author;
  std::optional<int> year;
  std::optional<std::string> journal;
  std::optional<std::string> volume_issue;
  std::optional<PageRange> pages;
  std::string raw;

  bool parseable() const {
    return first_author || second_author || year || journal || volume_issue || pages;
  }

  /// Volume without any "(issue)" suffix.
  std::optional<std::string> volume() const {
    if (!volume_issue) return std::nullopt;
    return volume_issue->substr(0, volume_issue->find('('));
  }

  friend bool operator==(const ParsedReference&, const ParsedReference&) = default;
};

namespace refparse_detail {

struct Word {
  std::string text;
  std::size_t begin = 0;  // byte offset in the joined text
  std::size_t end = 0;
};

inline bool is_punct_token(std::string_view t) {
  const std::u32string cps = unicode::decode_utf8(t);
  return !cps.empty() &&
         std::all_of(cps.begin(), cps.end(), [](char32_t c) { return unicode::is_punct(c); });
}

inline bool has_lower(std::string_view t) {
  for (char32_t c : unicode::decode_utf8(t)) {
    if (unicode::is_lower(c)) return true;
  }
  return false;
}

inline bool starts_upper(std::string_view t) {
  const std::u32string cps = unicode::decode_utf8(t);
  return !cps.empty() && unicode::is_upper(cps[0]);
}

inline std::string strip_trailing_period(std::string_view t) {
  std::string s(t);
  while (!s.empty() && (s.back() == '.' || s.back() == ',')) s.pop_back();
  return s;
}

inline bool is_particle(std::string_view t) {
  static constexpr std::string_view kParticles[] = {"van", "von", "der", "den", "de",  "del",
                                                    "della", "di", "da",  "du",  "la", "le", "ter"};
  return std::find(std::begin(kParticles), std::end(kParticles), t) != std::end(kParticles);
}

// Capitalized word with at least one lower-case letter: "Eskildsen", "McKay".
inline bool is_surname(std::string_view t) {
  const std::string s = strip_trailing_period(t);
  return s.size() >= 2 && starts_upper(s) && has_lower(s);
}

// "J", "J.", "JM", "J.M."
inline bool is_initials(std::string_view t) {
  std::size_t letters = 0;
  for (char32_t c : unicode::decode_utf8(t)) {
    if (c == U'.') continue;
    if (!unicode::is_upper(c)) return false;
    ++letters;
  }
  return letters >= 1 && letters <= 3;
}

inline bool is_conjunction(std::string_view t) { return t == "and" || t == "&"; }

inline bool is_name_like(std::string_view t) {
  return is_surname(t) || is_initials(t) || is_particle(t) || is_conjunction(t) || t == "." ||
         t == "-" || t == "'";
}

inline bool is_separator(std::string_view t) {
  return t == "," || t == ";" || t == ":" || t == "(" || t == ")" || t == "[" || t == "]";
}

inline bool is_marker(std::string_view t) {
  static constexpr std::string_view kMarkers[] = {"pp", "pp.", "p", "p.", "vol", "vol.", "Vol",
                                                  "Vol.", "no", "no.", "No", "No."};
  return std::find(std::begin(kMarkers), std::end(kMarkers), t) != std::end(kMarkers);
}

inline bool is_lead_in(std::string_view t) {
  static constexpr std::string_view kLeadIns[] = {"see", "See", "cf", "cf.", "e.g.", "e.g",
                                                  "also", "in", "In", "reviewed", "Reviewed"};
  return is_punct_token(t) ||
         std::find(std::begin(kLeadIns), std::end(kLeadIns), t) != std::end(kLeadIns);
}

inline bool is_al(std::string_view t) { return t == "al" || t == "al." || t == "al.,"; }

inline std::vector<std::string> surnames_in(std::span<const Word> block) {
  std::vector<std::string> out;
  std::string particles;
  for (const Word& w : block) {
    if (is_particle(w.text)) {
      particles += w.text + " ";
      continue;
    }
    if (is_surname(w.text) && !is_conjunction(w.text)) {
      out.push_back(particles + strip_trailing_period(w.text));
    }
    particles.clear();
  }
  return out;
}

/// Re-attaches split punctuation: "Nuc . Acids Res ." -> "Nuc. Acids Res.".
inline std::string join_journal(std::span<const Word> run) {
  std::string out;
  for (const Word& w : run) {
    const bool attach = w.text == "." || w.text == ",";
    if (!out.empty() && !attach) out.push_back(' ');
    out += w.text;
  }
  return out;
}

struct Match {
  std::size_t begin = 0;  // byte offsets in the joined text
  std::size_t end = 0;
  std::optional<std::string> volume;
  std::optional<std::string> issue;
  std::optional<std::string> first_page;
  std::optional<std::string> last_page;
};

inline const std::regex& volume_pages_re() {
  // volume[(issue)]:first[-last]
  static const std::regex re(
      R"(\b(\d+)\s*(?:\(\s*([0-9A-Za-z\-]+)\s*\)\s*)?:\s*(\d+)(?:\s*(?:-|\xE2\x80\x93)\s*(\d+))?(?!\d))");
  return re;
}
inline const std::regex& range_re() {
  static const std::regex re(R"(\b(\d+)\s*(?:-|\xE2\x80\x93)\s*(\d+)(?!\d))");
  return re;
}
inline const std::regex& volume_marker_re() {
  static const std::regex re(R"(\b[Vv]ol(?:ume)?\s*\.?\s*(\d+)(?!\d))");
  return re;
}
inline const std::regex& year_re() {
  static const std::regex re(R"(\b((?:19|20)\d\d)\b)");
  return re;
}

}  // namespace refparse_detail

inline ParsedReference parse_reference(std::string_view text) {
  namespace d = refparse_detail;
  ParsedReference ref;
  ref.raw = std::string(text);

  // Whitespace tokens of the span and their offsets in a single-space join.
  std::vector<d::Word> words;
  std::string joined;
  {
    const std::u32string cps = unicode::decode_utf8(text);
    std::size_t i = 0;
    while (i < cps.size()) {
      if (unicode::is_space(cps[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < cps.size() && !unicode::is_space(cps[j])) ++j;
      d::Word w;
      w.text = unicode::encode_utf8(std::u32string_view(cps).substr(i, j - i));
      if (!joined.empty()) joined.push_back(' ');
      w.begin = joined.size();
      joined += w.text;
      w.end = joined.size();
      words.push_back(std::move(w));
      i = j;
    }
  }
  if (words.empty()) return ref;
  auto word_at = [&](std::size_t byte) {
    auto it = std::upper_bound(words.begin(), words.end(), byte,
                               [](std::size_t b, const d::Word& w) { return b < w.begin; });
    return static_cast<std::size_t>(std::distance(words.begin(), it)) - 1;
  };

  // Pages and volume: the numeric pattern ending last; on equal ends the
  // longer (volume-bearing) match wins.
  std::vector<d::Match> numeric;
  for (auto it = std::sregex_iterator(joined.begin(), joined.end(), d::volume_pages_re());
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    d::Match x;
    x.begin = static_cast<std::size_t>(m.position(0));
    x.end = x.begin + static_cast<std::size_t>(m.length(0));
    x.volume = m.str(1);
    if (m[2].matched) x.issue = m.str(2);
    x.first_page = m.str(3);
    if (m[4].matched) x.last_page = m.str(4);
    numeric.push_back(std::move(x));
  }
  for (auto it = std::sregex_iterator(joined.begin(), joined.end(), d::range_re());
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    d::Match x;
    x.begin = static_cast<std::size_t>(m.position(0));
    x.end = x.begin + static_cast<std::size_t>(m.length(0));
    x.first_page = m.str(1);
    x.last_page = m.str(2);
    numeric.push_back(std::move(x));
  }
  std::optional<d::Match> volume_marker;
  for (auto it = std::sregex_iterator(joined.begin(), joined.end(), d::volume_marker_re());
       it != std::sregex_iterator(); ++it) {
    d::Match x;
    x.begin = static_cast<std::size_t>(it->position(0));
    x.end = x.begin + static_cast<std::size_t>(it->length(0));
    x.volume = it->str(1);
    volume_marker = x;
  }

  std::optional<d::Match> pages;
  for (const d::Match& m : numeric) {
    if (!pages || m.end > pages->end || (m.end == pages->end && m.begin < pages->begin)) pages = m;
  }
  if (pages) {
    ref.pages = PageRange{*pages->first_page, pages->last_page};
    if (pages->volume) {
      ref.volume_issue = *pages->volume + (pages->issue ? "(" + *pages->issue + ")" : "");
    }
  }
  std::optional<std::size_t> volume_begin;
  if (!ref.volume_issue && volume_marker) {
    ref.volume_issue = volume_marker->volume;
    volume_begin = volume_marker->begin;
  }
  if (!ref.volume_issue && pages) {
    // "Nature 412 , 100-105": a bare number just before the page range.
    std::size_t k = word_at(pages->begin);
    while (k > 0 && (d::is_separator(words[k - 1].text) || d::is_marker(words[k - 1].text) ||
                     words[k - 1].text == ".")) {
      --k;
    }
    if (k > 0) {
      const std::string& prev = words[k - 1].text;
      const bool digits = !prev.empty() && prev.size() <= 6 &&
                          std::all_of(prev.begin(), prev.end(), [](char c) { return c >= '0' && c <= '9'; });
      if (digits && !std::regex_match(prev, d::year_re())) {
        ref.volume_issue = prev;
        volume_begin = words[k - 1].begin;
        numeric.push_back(d::Match{words[k - 1].begin, words[k - 1].end, prev, {}, {}, {}});
      }
    }
  }

  // Year: the last standalone (19|20)dd outside every numeric pattern.
  std::optional<std::size_t> year_begin;
  for (auto it = std::sregex_iterator(joined.begin(), joined.end(), d::year_re());
       it != std::sregex_iterator(); ++it) {
    const std::size_t b = static_cast<std::size_t>(it->position(0));
    const std::size_t e = b + 4;
    const bool inside = std::any_of(numeric.begin(), numeric.end(),
                                    [&](const d::Match& m) { return b < m.end && m.begin < e; }) ||
                        (volume_marker && b < volume_marker->end && volume_marker->begin < e);
    // Part of a decimal number or a larger token such as "1999.5" / "2001:3".
    const bool glued = (b > 0 && (joined[b - 1] == '.' || joined[b - 1] == ':')) ||
                       (e + 1 < joined.size() && (joined[e] == '.' || joined[e] == ':') &&
                        joined[e + 1] >= '0' && joined[e + 1] <= '9');
    if (inside || glued) continue;
    ref.year = std::stoi(it->str(1));
    year_begin = b;
  }

  // Authors.
  std::size_t start = 0;
  while (start < words.size() && d::is_lead_in(words[start].text)) ++start;
  std::size_t author_end = start;  // first word after the author block
  std::vector<std::string> surnames;
  std::optional<std::size_t> et_al;
  for (std::size_t k = start; k + 1 < words.size(); ++k) {
    if (words[k].text == "et" && d::is_al(words[k + 1].text)) {
      et_al = k;
      break;
    }
  }
  if (et_al && *et_al > start &&
      std::all_of(words.begin() + static_cast<std::ptrdiff_t>(start),
                  words.begin() + static_cast<std::ptrdiff_t>(*et_al),
                  [](const d::Word& w) { return d::is_name_like(w.text) || w.text == ","; })) {
    surnames = d::surnames_in(std::span(words).subspan(start, *et_al - start));
    author_end = *et_al + 2;
    if (words[*et_al + 1].text == "al" && author_end < words.size() && words[author_end].text == ".") {
      ++author_end;
    }
  } else {
    // Comma-separated name list: leading segments made only of name-like
    // words. The list ends at the segment holding "and"/"&", at a period
    // closing a run of initials ("Lewis CB , Wilson C . Cell"), or after the
    // first segment otherwise.
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::optional<std::size_t> closed;
    std::size_t k = start;
    while (k < words.size()) {
      std::size_t e = k;
      bool closes = false;
      while (e < words.size() && !d::is_separator(words[e].text)) {
        if (words[e].text == "." && e > k && d::is_initials(words[e - 1].text) && e + 1 < words.size() &&
            !d::is_separator(words[e + 1].text) && !d::is_conjunction(words[e + 1].text)) {
          closes = true;
          break;
        }
        ++e;
      }
      const bool names = e > k && std::all_of(words.begin() + static_cast<std::ptrdiff_t>(k),
                                              words.begin() + static_cast<std::ptrdiff_t>(e),
                                              [](const d::Word& w) { return d::is_name_like(w.text); });
      const bool has_surname = std::any_of(words.begin() + static_cast<std::ptrdiff_t>(k),
                                           words.begin() + static_cast<std::ptrdiff_t>(e),
                                           [](const d::Word& w) { return d::is_surname(w.text); });
      if (!names || !has_surname) break;
      segments.emplace_back(k, e);
      // "Smith ( 2001 )": a bracket also ends the list.
      if (closes || (e < words.size() && words[e].text != "," && words[e].text != ";")) {
        closed = segments.size() - 1;
        break;
      }
      k = e + 1;
    }
    std::size_t last = closed.value_or(0);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto [b, e] = segments[s];
      if (std::any_of(words.begin() + static_cast<std::ptrdiff_t>(b),
                      words.begin() + static_cast<std::ptrdiff_t>(e),
                      [](const d::Word& w) { return d::is_conjunction(w.text); })) {
        last = s;
        break;
      }
    }
    // Without a comma the only segment may run into the journal title; the
    // residue rule below then finds no journal, which is the safe outcome.
    if (!segments.empty() && !(segments.size() == 1 && segments[0].second == words.size())) {
      const std::size_t b = segments.front().first;
      const std::size_t e = segments[last].second;
      surnames = d::surnames_in(std::span(words).subspan(b, e - b));
      author_end = e;
    }
  }
  if (!surnames.empty()) ref.first_author = surnames[0];
  if (surnames.size() > 1) ref.second_author = surnames[1];

  // Journal: longest run of words between the author block and the first
  // volume or page field, split at separators and at the year. Without
  // either field the year ends the region.
  std::size_t region_end = words.size();
  auto clip = [&](std::size_t byte) { region_end = std::min(region_end, word_at(byte)); };
  if (pages) clip(pages->begin);
  if (volume_begin) clip(*volume_begin);
  std::optional<std::size_t> year_word;
  if (year_begin) {
    if (!pages && !volume_begin) clip(*year_begin);
    year_word = word_at(*year_begin);
  }
  std::vector<std::span<const d::Word>> runs;
  std::size_t run_begin = author_end;
  for (std::size_t k = author_end; k <= region_end && k <= words.size(); ++k) {
    const bool boundary = k == region_end || k == words.size() || d::is_separator(words[k].text) ||
                          d::is_marker(words[k].text) || k == year_word;
    if (!boundary) continue;
    std::size_t b = run_begin;
    std::size_t e = k;
    while (b < e && d::is_punct_token(words[b].text)) ++b;
    while (e > b && d::is_punct_token(words[e - 1].text) && words[e - 1].text != ".") --e;
    while (e > b + 1 && words[e - 1].text == "." && d::is_punct_token(words[e - 2].text)) --e;
    if (e > b && !(e == b + 1 && words[b].text == ".")) {
      runs.push_back(std::span(words).subspan(b, e - b));
    }
    run_begin = k + 1;
  }
  const std::span<const d::Word>* best = nullptr;
  for (const auto& r : runs) {
    if (!best || r.size() > best->size()) best = &r;
  }
  // Plain prose has no author, year or numbers; its residue is not a journal.
  const bool anchored = ref.first_author || ref.year || ref.pages || ref.volume_issue;
  if (best && anchored) {
    std::string j = d::join_journal(*best);
    if (!j.empty()) ref.journal = std::move(j);
  }
  return ref;
}

// Parsed-reference dump: a header, then one TAB-separated record per span
// with "_" for absent fields.

struct ParsedSpan {
  ReferenceSpan span;
  ParsedReference ref;
};

inline constexpr std::string_view kParsedHeader =
    "doc_id\tfirst_token\tlast_token\tfirst_author\tsecond_author\tyear\tjournal\tvolume_issue\t"
    "first_page\tlast_page\traw";

inline void write_parsed(std::ostream& out, std::span<const ParsedSpan> records) {
  auto opt = [](const std::optional<std::string>& s) -> const std::string& {
    static const std::string absent = "_";
    return s ? *s : absent;
  };
  out << kParsedHeader << '\n';
  for (const ParsedSpan& p : records) {
    const ParsedReference& r = p.ref;
    out << p.span.doc_id << '\t' << p.span.first_token << '\t' << p.span.last_token << '\t'
        << opt(r.first_author) << '\t' << opt(r.second_author) << '\t'
        << (r.year ? std::to_string(*r.year) : "_") << '\t' << opt(r.journal) << '\t'
        << opt(r.volume_issue) << '\t' << (r.pages ? r.pages->first : "_") << '\t'
        << (r.pages ? opt(r.pages->last) : "_") << '\t' << r.raw << '\n';
  }
}

inline std::vector<ParsedSpan> read_parsed(std::istream& in, const std::string& source = "<parsed>") {
  std::vector<ParsedSpan> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kParsedHeader) throw DataError(source, line_no, "missing parsed-reference header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    for (int k = 0; k < 10; ++k) {
      const auto tab = line.find('\t', pos);
      if (tab == std::string::npos) throw DataError(source, line_no, "expected 11 TAB-separated columns");
      cols.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    cols.push_back(line.substr(pos));
    auto opt = [](const std::string& s) -> std::optional<std::string> {
      if (s == "_") return std::nullopt;
      return s;
    };
    ParsedSpan p;
    p.span.doc_id = cols[0];
    try {
      p.span.first_token = std::stoul(cols[1]);
      p.span.last_token = std::stoul(cols[2]);
      if (cols[5] != "_") p.ref.year = std::stoi(cols[5]);
    } catch (const std::logic_error&) {
      throw DataError(source, line_no, "malformed numeric field");
    }
    p.ref.first_author = opt(cols[3]);
    p.ref.second_author = opt(cols[4]);
    p.ref.journal = opt(cols[6]);
    p.ref.volume_issue = opt(cols[7]);
    if (cols[8] != "_") p.ref.pages = PageRange{cols[8], opt(cols[9])};
    p.ref.raw = cols[10];
    p.span.text = cols[10];
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace refmine
