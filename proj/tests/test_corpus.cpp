#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "refmine/corpus.hpp"
#include "refmine/extract.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace refmine;
namespace rt = refmine::testing;

namespace {

std::vector<std::string> texts(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

LabelSequence labels(std::string_view s) {
  LabelSequence out;
  for (char c : s) out.push_back(*parse_label(std::string(1, c)));
  return out;
}

const std::string kCitationText =
    "(Eskildsen et al., Nuc. Acids Res. 31:3166-3173, 2003; "
    "Kakuta et al., J. Interferon & Cytokine Res. 22:981-993, 2002.)";

const std::string kShortText = "(Eskildsen et al., Nuc. Acids Res. 22:981-993, 2002.)";

}  // namespace

TEST(Tokenize, CitationRow) {
  const std::vector<std::string> expected = {"(",   "Eskildsen", "et",         "al.", ",",    "Nuc", ".", "Acids",
                                             "Res", ".",         "22:981-993", ",",   "2002", ".",   ")"};
  EXPECT_EQ(texts(tokenize(kShortText)), expected);
}

TEST(Tokenize, TwoCitations) {
  const std::vector<std::string> expected = {
      "(",   "Eskildsen", "et",       "al.", ",",   "Nuc",        ".", "Acids", "Res", ".",
      "31:3166-3173", ",", "2003",     ";",   "Kakuta", "et",   "al.", ",",  "J",     ".",
      "Interferon",   "&", "Cytokine", "Res", ".",   "22:981-993", ",", "2002", ".",   ")"};
  EXPECT_EQ(texts(tokenize(kCitationText)), expected);
}

TEST(Tokenize, Empty) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" \n\t ").empty());
}

TEST(Tokenize, NoAbbreviations) {
  const auto got = texts(tokenize("pp. 12-19", {}));
  EXPECT_EQ(got, (std::vector<std::string>{"pp", ".", "12-19"}));
  EXPECT_EQ(got, rt::oracle_tokenize("pp. 12-19", {}));
  EXPECT_EQ(texts(tokenize("et al.", {})), (std::vector<std::string>{"et", "al", "."}));
}

TEST(Tokenize, NumericUnits) {
  EXPECT_EQ(texts(tokenize("(2002.)")), (std::vector<std::string>{"(", "2002", ".", ")"}));
  EXPECT_EQ(texts(tokenize("1,234.5")), (std::vector<std::string>{"1,234.5"}));
  EXPECT_EQ(texts(tokenize("12a-3")), (std::vector<std::string>{"12a", "-", "3"}));
}

TEST(Tokenize, OffsetsAreCodePoints) {
  const std::string text = "Ωx Müller, 12";
  const auto toks = tokenize(text);
  ASSERT_EQ(texts(toks), (std::vector<std::string>{"Ωx", "Müller", ",", "12"}));
  EXPECT_EQ(toks[0].start, 0u);
  EXPECT_EQ(toks[0].end, 2u);
  EXPECT_EQ(toks[1].start, 3u);
  EXPECT_EQ(toks[1].end, 9u);
  EXPECT_EQ(toks[2].start, 9u);
  EXPECT_EQ(toks[3].start, 11u);
  EXPECT_EQ(toks[3].end, 13u);
}

TEST(Tokenize, NonBreakingSpaceSeparates) {
  EXPECT_EQ(texts(tokenize("a b")), (std::vector<std::string>{"a", "b"}));
}

TEST(Tokenize, MatchesRegexOracleOnRandomAscii) {
  std::mt19937_64 rng(7);
  const std::string alphabet = "aBz09 .,:;-()[]&/al.  ";
  const std::vector<std::set<std::string>> abbrev_sets = {{}, {"al."}, {"al.", "pp.", "a."}};
  for (int trial = 0; trial < 3000; ++trial) {
    std::string s;
    const std::size_t n = rng() % 24;
    for (std::size_t k = 0; k < n; ++k) s.push_back(alphabet[rng() % alphabet.size()]);
    const auto& ab = abbrev_sets[trial % abbrev_sets.size()];
    AbbreviationSet lib(ab.begin(), ab.end());
    ASSERT_EQ(texts(tokenize(s, lib)), rt::oracle_tokenize(s, ab)) << "input: '" << s << "'";
  }
}

namespace {

std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {"a", "Z", "7", ".", ",", "-", ":", "(", ")", " ", " ", "\n",
                                                  "é", "Ω", "ß", " ", "–", "al.", "et", "19"};
  std::string s;
  const std::size_t n = rng() % 30;
  for (std::size_t k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
  return s;
}

std::u32string non_space(std::string_view s) {
  std::u32string out;
  for (char32_t c : unicode::decode_utf8(s)) {
    if (!unicode::is_space(c)) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Tokenize, PropertiesOnRandomText) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::string s = random_text(rng);
    const auto toks = tokenize(s);
    const std::u32string cps = unicode::decode_utf8(s);

    std::string joined;
    std::string all;
    for (std::size_t k = 0; k < toks.size(); ++k) {
      ASSERT_FALSE(toks[k].text.empty());
      ASSERT_LT(toks[k].start, toks[k].end);
      ASSERT_EQ(unicode::encode_utf8(std::u32string_view(cps).substr(toks[k].start, toks[k].end - toks[k].start)),
                toks[k].text);
      if (k > 0) { ASSERT_LE(toks[k - 1].end, toks[k].start); }
      if (k > 0) joined += ' ';
      joined += toks[k].text;
      all += toks[k].text;
    }
    ASSERT_EQ(non_space(all), non_space(s)) << s;
    ASSERT_EQ(texts(tokenize(joined)), texts(toks)) << s;
  }
}

TEST(FallbackPos, Classes) {
  EXPECT_EQ(fallback_pos("("), "PUNCT");
  EXPECT_EQ(fallback_pos("22:981-993"), "NUM");
  EXPECT_EQ(fallback_pos("Eskildsen"), "CAP");
  EXPECT_EQ(fallback_pos("Ωmega"), "CAP");
  EXPECT_EQ(fallback_pos("al."), "WORD");
}

// ---------------------------------------------------------------------------

TEST(Align, SpanOverMiddleTokens) {
  const std::string text = "aa bb cc dd ee";
  auto a = align_annotations("d", text, tokenize(text), {{3, 11, "Reference"}});
  EXPECT_EQ(*a.doc.gold, labels("OBIIO"));
  EXPECT_TRUE(a.warnings.empty());
}

TEST(Align, AdjacentSpansStartNewB) {
  const std::string text = "aa bb cc dd";
  auto a = align_annotations("d", text, tokenize(text), {{0, 5, "R"}, {6, 8, "R"}});
  EXPECT_EQ(*a.doc.gold, labels("BIBO"));
}

TEST(Align, CitationLabelRow) {
  const std::size_t start = 1;                    // "Eskildsen"
  const std::size_t end = kShortText.size() - 1;  // through "2002."
  auto a = align_annotations("fig1", kShortText, tokenize(kShortText), {{start, end, "Reference"}});
  EXPECT_EQ(*a.doc.gold, labels("OBIIIIIIIIIIIIO"));
}

TEST(Align, PartialOverlapTagsToken) {
  const std::string text = "Eskildsen2002 x";
  auto a = align_annotations("d", text, tokenize(text), {{3, 5, "R"}});
  EXPECT_EQ(*a.doc.gold, labels("BO"));
}

TEST(Align, Errors) {
  const std::string text = "aa bb";
  const auto toks = tokenize(text);
  EXPECT_THROW(align_annotations("d", text, toks, {{0, 99, "R"}}), DataError);
  EXPECT_THROW(align_annotations("d", text, toks, {{3, 3, "R"}}), DataError);
  EXPECT_THROW(align_annotations("d", text, toks, {{0, 4, "R"}, {3, 5, "R"}}), DataError);
}

TEST(Align, SpanOverWhitespaceWarns) {
  const std::string text = "aa    bb";
  auto a = align_annotations("d", text, tokenize(text), {{3, 5, "R"}});
  EXPECT_EQ(*a.doc.gold, labels("OO"));
  EXPECT_EQ(a.warnings.size(), 1u);
}

TEST(Align, AlwaysWellFormedOnSyntheticPatents) {
  rt::SyntheticCorpus corpus(3);
  for (int d = 0; d < 20; ++d) {
    auto p = corpus.patent("P" + std::to_string(d), 3, 3);
    auto a = align_annotations(p.doc_id, p.text, tokenize(p.text), p.spans);
    ASSERT_TRUE(is_well_formed(*a.doc.gold));
    ASSERT_TRUE(a.warnings.empty());
    std::size_t b = std::count(a.doc.gold->begin(), a.doc.gold->end(), IobLabel::B);
    ASSERT_EQ(b, p.spans.size());
  }
}

TEST(Brat, ReadsTextBoundLines) {
  std::istringstream in(
      "T1\tReference 1 5\tabcd\n"
      "#1\tAnnotatorNotes T1\tnote\n"
      "T2\tReference 10 20\tsome text\n");
  const auto spans = read_brat(in);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].start, 1u);
  EXPECT_EQ(spans[0].end, 5u);
  EXPECT_EQ(spans[1].kind, "Reference");
}

TEST(Brat, DiscontinuousSpanRejected) {
  std::istringstream in("T1\tReference 1 5;7 9\tab cd\n");
  EXPECT_THROW(read_brat(in), DataError);
}

// ---------------------------------------------------------------------------

TEST(Iob, TwoDocuments) {
  std::istringstream in(
      "# doc_id = A\n"
      "x\tWORD\tB\t_\n"
      "y\tWORD\tI\t_\n"
      "\n"
      "# doc_id = B\n"
      "z\tWORD\tO\tB\n");
  const auto docs = read_iob(in);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].doc_id, "A");
  EXPECT_EQ(*docs[0].gold, labels("BI"));
  EXPECT_FALSE(docs[0].pred);
  EXPECT_EQ(*docs[1].pred, labels("B"));
}

TEST(Iob, CitationRoundTripIsByteIdentical) {
  auto a = align_annotations("fig1", kShortText, tokenize(kShortText), {{1, kShortText.size() - 1, "Reference"}});
  fill_fallback_pos(a.doc);
  std::vector<LabeledDocument> docs = {a.doc};
  std::ostringstream first;
  write_iob(first, docs);
  std::istringstream in(first.str());
  const auto back = read_iob(in);
  std::ostringstream second;
  write_iob(second, back);
  EXPECT_EQ(first.str(), second.str());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].gold, a.doc.gold);
  EXPECT_EQ(texts(back[0].tokens), texts(a.doc.tokens));
}

TEST(Iob, UnknownLabelNamesLine) {
  std::istringstream in(
      "# doc_id = A\n"
      "x\tWORD\tB\t_\n"
      "y\tWORD\tX\t_\n");
  try {
    read_iob(in, "f.iob");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("f.iob:3"), std::string::npos);
  }
}

TEST(Iob, FormatViolations) {
  auto bad = [](const std::string& s) {
    std::istringstream in(s);
    EXPECT_THROW(read_iob(in), DataError) << s;
  };
  bad("x\tWORD\tB\t_\n");                                        // no header
  bad("# doc_id = A\nx\tWORD\tB\n");                             // three columns
  bad("# doc_id = A\n\n# doc_id = B\nx\t_\tO\t_\n");             // empty document
  bad("# doc_id = A\nx\t_\tB\t_\ny\t_\t_\t_\n");                 // gold column half filled
}

TEST(Iob, RoundTripSyntheticCorpus) {
  auto docs = rt::synthetic_documents(5, 4, 2, 2);
  for (auto& d : docs) {
    fill_fallback_pos(d);
    d.pred = d.gold;
  }
  std::ostringstream out;
  write_iob(out, docs);
  std::istringstream in(out.str());
  const auto back = read_iob(in);
  ASSERT_EQ(back.size(), docs.size());
  for (std::size_t k = 0; k < docs.size(); ++k) {
    EXPECT_EQ(back[k].doc_id, docs[k].doc_id);
    EXPECT_EQ(texts(back[k].tokens), texts(docs[k].tokens));
    EXPECT_EQ(back[k].gold, docs[k].gold);
    EXPECT_EQ(back[k].pred, docs[k].pred);
  }
}

// ---------------------------------------------------------------------------

TEST(Stats, AllOutside) {
  LabeledDocument d;
  d.doc_id = "x";
  d.tokens = tokenize("a b c");
  d.gold = labels("OOO");
  std::vector<LabeledDocument> docs = {d};
  const auto s = corpus_stats(docs);
  EXPECT_EQ(s.n_documents, 1u);
  EXPECT_EQ(s.n_references, 0u);
  EXPECT_EQ(s.n_b_tokens, 0u);
  EXPECT_EQ(s.n_i_tokens, 0u);
  EXPECT_FALSE(s.mean_reference_length);
}

TEST(Stats, TwoReferences) {
  LabeledDocument d;
  d.doc_id = "x";
  d.tokens = tokenize("a b c d e");
  d.gold = labels("BIBII");
  std::vector<LabeledDocument> docs = {d};
  const auto s = corpus_stats(docs);
  EXPECT_EQ(s.n_references, 2u);
  EXPECT_EQ(s.n_i_tokens, 3u);
  ASSERT_TRUE(s.mean_reference_length);
  EXPECT_DOUBLE_EQ(*s.mean_reference_length, 2.5);
}

TEST(Stats, BCountMatchesExtractedGoldSpans) {
  const auto docs = rt::synthetic_documents(9, 6, 3, 3);
  const auto s = corpus_stats(docs);
  std::size_t spans = 0;
  for (const auto& d : docs) spans += extract_spans(d.doc_id, *d.gold, d.tokens).size();
  EXPECT_EQ(s.n_b_tokens, spans);
  EXPECT_EQ(s.n_references, spans);
}
