#pragma once

// Glue shared by the command-line tool and the integration tests.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <fstream>
#include <istream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "refmine/corpus.hpp"
#include "refmine/crf.hpp"
#include "refmine/error.hpp"
#include "refmine/eval.hpp"
#include "refmine/extract.hpp"
#include "refmine/matcher.hpp"
#include "refmine/parallel.hpp"
#include "refmine/refparse.hpp"

namespace refmine {

inline void sort_by_doc_id(std::vector<LabeledDocument>& docs) {
  std::stable_sort(docs.begin(), docs.end(),
                   [](const LabeledDocument& a, const LabeledDocument& b) { return a.doc_id < b.doc_id; });
}

/// Tokenizes a patent text and aligns its BRAT annotations.
inline Alignment ingest_brat(const std::string& doc_id, std::string_view text, std::istream& ann,
                             const AbbreviationSet& abbreviations = default_abbreviations(),
                             const std::string& ann_source = "<ann>") {
  return align_annotations(doc_id, text, tokenize(text, abbreviations), read_brat(ann, ann_source));
}

/// Leave-one-out trainer backed by the CRF.
inline eval::Trainer crf_trainer(crf::TrainConfig config = {}) {
  return [config](std::span<const LabeledDocument> train) -> eval::Labeller {
    auto model = std::make_shared<crf::CrfModel>(crf::train(train, config).model);
    return [model](const LabeledDocument& doc) { return crf::label_document(*model, doc); };
  };
}

inline std::vector<ReferenceSpan> extract_all(std::span<const LabeledDocument> docs) {
  std::vector<ReferenceSpan> spans;
  for (const LabeledDocument& d : docs) {
    auto s = extract_spans(d);
    spans.insert(spans.end(), s.begin(), s.end());
  }
  return spans;
}

inline std::vector<ParsedSpan> parse_all(std::span<const ReferenceSpan> spans) {
  std::vector<ParsedSpan> out;
  out.reserve(spans.size());
  for (const ReferenceSpan& s : spans) out.push_back(ParsedSpan{s, parse_reference(s.text)});
  return out;
}

}  // namespace refmine
