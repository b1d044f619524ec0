#pragma once

// Linking parsed references to a local publication store.
//
// Candidates are blocked on (first-author surname, year). The first rule of
// the cascade for which the reference has every required field decides:
//   R1 journal + volume + first page
//   R2 first page + journal
//   R3 second author + journal
//   R4 journal + volume
// Exactly one passing candidate is a definite match; more is ambiguous.

#include <algorithm>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "refmine/error.hpp"
#include "refmine/refparse.hpp"
#include "refmine/unicode.hpp"

namespace refmine {

/// Case-fold, strip diacritics and periods, collapse whitespace. Idempotent.
inline std::string normalize_name(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char32_t c : unicode::decode_utf8(s)) {
    if (unicode::is_combining_mark(c) || c == U'.') continue;
    if (unicode::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (const char* folded = unicode::fold_diacritic(c)) {
      for (const char* p = folded; *p; ++p) out.push_back(static_cast<char>(unicode::to_lower(static_cast<unsigned char>(*p))));
    } else {
      unicode::append_utf8(out, unicode::to_lower(c));
    }
  }
  return out;
}

inline std::string normalize_page(std::string_view p) {
  const auto nz = p.find_first_not_of('0');
  if (nz == std::string_view::npos) return p.empty() ? std::string() : std::string("0");
  return std::string(p.substr(nz));
}

struct PublicationRecord {
  std::string record_id;
  std::string first_author_surname;
  std::vector<std::string> author_surnames;
  int year = 0;
  std::set<std::string> journal_names;
  std::optional<std::string> volume;
  std::optional<std::string> issue;
  std::optional<std::string> first_page;
};

class PublicationStore {
 public:
  using Key = std::pair<std::string, int>;

  void add(PublicationRecord record) {
    if (by_id_.contains(record.record_id)) {
      throw DataError("duplicate record_id '" + record.record_id + "'");
    }
    const std::size_t idx = records_.size();
    by_id_.emplace(record.record_id, idx);
    index_[Key{normalize_name(record.first_author_surname), record.year}].push_back(idx);
    std::set<std::string> journals;
    for (const std::string& j : record.journal_names) journals.insert(normalize_name(j));
    normalized_journals_.push_back(std::move(journals));
    records_.push_back(std::move(record));
  }

  std::size_t size() const { return records_.size(); }
  std::span<const PublicationRecord> records() const { return records_; }
  const PublicationRecord& record(std::size_t idx) const { return records_.at(idx); }

  const std::set<std::string>& normalized_journals(std::size_t idx) const {
    return normalized_journals_.at(idx);
  }

  /// Record indexes blocked under (first author, year).
  std::span<const std::size_t> candidates(std::string_view first_author, int year) const {
    auto it = index_.find(Key{normalize_name(first_author), year});
    if (it == index_.end()) return {};
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& record_id) const {
    auto it = by_id_.find(record_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<PublicationRecord> records_;
  std::vector<std::set<std::string>> normalized_journals_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<Key, std::vector<std::size_t>> index_;
};

/// Store file: record_id, first_author_surname, author_surnames (;-joined),
/// year, journal_names (;-joined), volume, issue, first_page; TAB-separated,
/// "_" for absent.
inline PublicationStore load_publications(std::istream& in, const std::string& source = "<store>") {
  PublicationStore store;
  std::string line;
  std::size_t line_no = 0;
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      const auto next = s.find(sep, pos);
      parts.push_back(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    return parts;
  };
  auto opt = [](const std::string& s) -> std::optional<std::string> {
    if (s == "_" || s.empty()) return std::nullopt;
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 8) throw DataError(source, line_no, "expected 8 TAB-separated columns");
    PublicationRecord r;
    r.record_id = cols[0];
    if (r.record_id.empty() || r.record_id == "_") throw DataError(source, line_no, "missing record_id");
    r.first_author_surname = cols[1];
    if (r.first_author_surname.empty() || r.first_author_surname == "_") {
      throw DataError(source, line_no, "missing first_author_surname");
    }
    if (cols[2] != "_") {
      for (std::string& a : split(cols[2], ';')) {
        if (!a.empty()) r.author_surnames.push_back(std::move(a));
      }
    }
    try {
      std::size_t used = 0;
      r.year = std::stoi(cols[3], &used);
      if (used != cols[3].size()) throw std::invalid_argument(cols[3]);
    } catch (const std::logic_error&) {
      throw DataError(source, line_no, "year must be an integer, got '" + cols[3] + "'");
    }
    if (cols[4] != "_") {
      for (std::string& j : split(cols[4], ';')) {
        if (!j.empty()) r.journal_names.insert(std::move(j));
      }
    }
    r.volume = opt(cols[5]);
    r.issue = opt(cols[6]);
    r.first_page = opt(cols[7]);
    try {
      store.add(std::move(r));
    } catch (const DataError& e) {
      throw DataError(source, line_no, e.what());
    }
  }
  return store;
}

enum class MatchRule { JournalVolumePage = 1, PageJournal = 2, SecondAuthorJournal = 3, JournalVolume = 4 };

inline constexpr std::string_view rule_name(MatchRule r) {
  switch (r) {
    case MatchRule::JournalVolumePage: return "R1";
    case MatchRule::PageJournal: return "R2";
    case MatchRule::SecondAuthorJournal: return "R3";
    case MatchRule::JournalVolume: return "R4";
  }
  return "?";
}

enum class MatchOutcome { Definite, Ambiguous, None };

struct MatchResult {
  MatchOutcome outcome = MatchOutcome::None;
  std::optional<std::string> record_id;  // set iff definite
  std::size_t candidates = 0;            // records passing the deciding rule
  std::optional<MatchRule> matched_rule;

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

namespace matcher_detail {

struct RefKeys {
  std::optional<std::string> journal;
  std::optional<std::string> volume;
  std::optional<std::string> page;
  std::optional<std::string> second_author;
};

inline RefKeys keys_of(const ParsedReference& ref) {
  RefKeys k;
  if (ref.journal) k.journal = normalize_name(*ref.journal);
  if (ref.volume() && !ref.volume()->empty()) k.volume = *ref.volume();
  if (ref.pages) k.page = normalize_page(ref.pages->first);
  if (ref.second_author) k.second_author = normalize_name(*ref.second_author);
  return k;
}

inline std::optional<MatchRule> deciding_rule(const RefKeys& k) {
  if (k.journal && k.volume && k.page) return MatchRule::JournalVolumePage;
  if (k.page && k.journal) return MatchRule::PageJournal;
  if (k.second_author && k.journal) return MatchRule::SecondAuthorJournal;
  if (k.journal && k.volume) return MatchRule::JournalVolume;
  return std::nullopt;
}

inline bool passes(MatchRule rule, const RefKeys& k, const PublicationStore& store, std::size_t idx) {
  const PublicationRecord& r = store.record(idx);
  auto journal = [&] { return store.normalized_journals(idx).contains(*k.journal); };
  auto volume = [&] { return r.volume && *r.volume == *k.volume; };
  auto page = [&] { return r.first_page && normalize_page(*r.first_page) == *k.page; };
  auto second = [&] {
    return r.author_surnames.size() > 1 && normalize_name(r.author_surnames[1]) == *k.second_author;
  };
  switch (rule) {
    case MatchRule::JournalVolumePage: return journal() && volume() && page();
    case MatchRule::PageJournal: return page() && journal();
    case MatchRule::SecondAuthorJournal: return second() && journal();
    case MatchRule::JournalVolume: return journal() && volume();
  }
  return false;
}

}  // namespace matcher_detail

/// Decides a match among the given candidate record indexes.
inline MatchResult match_among(const ParsedReference& ref, const PublicationStore& store,
                               std::span<const std::size_t> candidates) {
  MatchResult result;
  if (!ref.first_author || !ref.year) return result;
  const matcher_detail::RefKeys keys = matcher_detail::keys_of(ref);
  const auto rule = matcher_detail::deciding_rule(keys);
  if (!rule) return result;
  std::vector<std::string> passing;
  for (std::size_t idx : candidates) {
    if (matcher_detail::passes(*rule, keys, store, idx)) passing.push_back(store.record(idx).record_id);
  }
  result.candidates = passing.size();
  if (passing.empty()) return result;
  result.matched_rule = rule;
  if (passing.size() == 1) {
    result.outcome = MatchOutcome::Definite;
    result.record_id = passing.front();
  } else {
    result.outcome = MatchOutcome::Ambiguous;
  }
  return result;
}

inline MatchResult match_reference(const ParsedReference& ref, const PublicationStore& store) {
  if (!ref.first_author || !ref.year) return {};
  return match_among(ref, store, store.candidates(*ref.first_author, *ref.year));
}

// ---------------------------------------------------------------------------
// Funnel over many patents

struct PipelineCounts {
  std::size_t extracted = 0;
  std::size_t in_text_only = 0;
  std::size_t in_focus_years = 0;
  std::size_t parsed = 0;
  std::size_t definite_matches = 0;

  friend bool operator==(const PipelineCounts&, const PipelineCounts&) = default;
};

struct YearRange {
  int first = 1980;
  int last = 2010;
  bool contains(int y) const { return y >= first && y <= last; }
};

using FrontPageCitations = std::map<std::string, std::set<std::string>>;

struct MatchingReport {
  PipelineCounts counts;
  std::vector<MatchResult> results;                           // one per input span
  std::map<std::string, std::set<std::string>> unique_matches;  // patent -> record ids
};

/// Funnel: all extracted spans; minus those whose definite match is already a
/// front-page citation of the patent; with a parsed year in the focus range;
/// with the fields needed for matching (first author and year); definite
/// matches counted once per (patent, record).
inline MatchingReport run_matching(std::span<const ParsedSpan> spans, const PublicationStore& store,
                                   const FrontPageCitations& front_page = {}, YearRange focus = {}) {
  MatchingReport report;
  report.results.reserve(spans.size());
  for (const ParsedSpan& s : spans) {
    const MatchResult m = match_reference(s.ref, store);
    report.results.push_back(m);
    ++report.counts.extracted;
    if (m.outcome == MatchOutcome::Definite) {
      auto fp = front_page.find(s.span.doc_id);
      if (fp != front_page.end() && fp->second.contains(*m.record_id)) continue;
    }
    ++report.counts.in_text_only;
    if (!s.ref.year || !focus.contains(*s.ref.year)) continue;
    ++report.counts.in_focus_years;
    if (!s.ref.first_author) continue;
    ++report.counts.parsed;
    if (m.outcome == MatchOutcome::Definite) report.unique_matches[s.span.doc_id].insert(*m.record_id);
  }
  for (const auto& [patent, ids] : report.unique_matches) report.counts.definite_matches += ids.size();
  return report;
}

inline FrontPageCitations read_front_page(std::istream& in, const std::string& source = "<front-page>") {
  FrontPageCitations out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 ||
        tab + 1 == line.size()) {
      throw DataError(source, line_no, "expected 'patent_id TAB record_id'");
    }
    out[line.substr(0, tab)].insert(line.substr(tab + 1));
  }
  return out;
}

inline nlohmann::ordered_json to_json(const PipelineCounts& c) {
  return nlohmann::ordered_json{{"extracted", c.extracted},
                                {"in_text_only", c.in_text_only},
                                {"in_focus_years", c.in_focus_years},
                                {"parsed", c.parsed},
                                {"definite_matches", c.definite_matches}};
}

inline void write_counts(std::ostream& out, const PipelineCounts& c) { out << to_json(c).dump(2) << '\n'; }

inline PipelineCounts read_counts(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  PipelineCounts c;
  c.extracted = j.at("extracted").get<std::size_t>();
  c.in_text_only = j.at("in_text_only").get<std::size_t>();
  c.in_focus_years = j.at("in_focus_years").get<std::size_t>();
  c.parsed = j.at("parsed").get<std::size_t>();
  c.definite_matches = j.at("definite_matches").get<std::size_t>();
  return c;
}

}  // namespace refmine
