#pragma once

// Token-level micro metrics, the leave-one-out harness, and two analyses of
// predicted-O errors inside gold references: where in the reference they fall
// and how long the O runs are.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "refmine/corpus.hpp"
#include "refmine/error.hpp"
#include "refmine/extract.hpp"
#include "refmine/parallel.hpp"

namespace refmine::eval {

/// Per-label confusion counts, pooled over any number of sequences.
struct TokenCounts {
  std::array<std::size_t, kNumLabels> tp{};
  std::array<std::size_t, kNumLabels> fp{};
  std::array<std::size_t, kNumLabels> fn{};

  void add(std::span<const IobLabel> gold, std::span<const IobLabel> pred) {
    if (gold.size() != pred.size()) {
      throw DataError("label sequences differ in length: " + std::to_string(gold.size()) + " gold vs " +
                      std::to_string(pred.size()) + " predicted");
    }
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const std::size_t g = index_of(gold[i]);
      const std::size_t p = index_of(pred[i]);
      if (g == p) {
        ++tp[g];
      } else {
        ++fp[p];
        ++fn[g];
      }
    }
  }

  TokenCounts& operator+=(const TokenCounts& o) {
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      tp[k] += o.tp[k];
      fp[k] += o.fp[k];
      fn[k] += o.fn[k];
    }
    return *this;
  }

  friend bool operator==(const TokenCounts&, const TokenCounts&) = default;
};

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  // 0/0 ratios are reported as 0 and flagged here.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

struct EvalReport {
  LabelMetrics b;
  LabelMetrics i;
  TokenCounts counts;

  const LabelMetrics& operator[](IobLabel l) const {
    if (l == IobLabel::O) throw std::out_of_range("reports cover B and I only");
    return l == IobLabel::B ? b : i;
  }
};

inline LabelMetrics metrics_for(const TokenCounts& c, IobLabel label) {
  const std::size_t k = index_of(label);
  LabelMetrics m;
  m.support = c.tp[k] + c.fn[k];
  const std::size_t predicted = c.tp[k] + c.fp[k];
  m.precision_undefined = predicted == 0;
  m.recall_undefined = m.support == 0;
  m.precision = predicted == 0 ? 0.0 : static_cast<double>(c.tp[k]) / static_cast<double>(predicted);
  m.recall = m.support == 0 ? 0.0 : static_cast<double>(c.tp[k]) / static_cast<double>(m.support);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline EvalReport report_from(const TokenCounts& c) {
  return EvalReport{metrics_for(c, IobLabel::B), metrics_for(c, IobLabel::I), c};
}

/// Micro-averaged metrics over documents carrying both gold and predicted labels.
inline EvalReport token_metrics(std::span<const LabeledDocument> docs) {
  TokenCounts c;
  for (const LabeledDocument& d : docs) {
    if (!d.gold || !d.pred) throw DataError("document '" + d.doc_id + "' needs gold and predicted labels");
    c.add(*d.gold, *d.pred);
  }
  return report_from(c);
}

inline EvalReport token_metrics(std::span<const IobLabel> gold, std::span<const IobLabel> pred) {
  TokenCounts c;
  c.add(gold, pred);
  return report_from(c);
}

inline void write_report(std::ostream& out, const EvalReport& r) {
  out << "label\tprecision\trecall\tf1\tsupport\n";
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(3);
  for (IobLabel l : {IobLabel::B, IobLabel::I}) {
    const LabelMetrics& m = r[l];
    out << to_char(l) << '\t' << m.precision << (m.precision_undefined ? "*" : "") << '\t' << m.recall
        << (m.recall_undefined ? "*" : "") << '\t' << m.f1 << '\t' << m.support << '\n';
  }
  out.flags(flags);
}

// ---------------------------------------------------------------------------
// Leave-one-out

using Labeller = std::function<LabelSequence(const LabeledDocument&)>;
using Trainer = std::function<Labeller(std::span<const LabeledDocument>)>;

class FoldError : public std::runtime_error {
 public:
  FoldError(std::size_t fold, const std::string& doc_id, const std::string& what)
      : std::runtime_error("fold " + std::to_string(fold) + " (held out '" + doc_id + "'): " + what),
        fold_(fold) {}
  std::size_t fold() const { return fold_; }

 private:
  std::size_t fold_;
};

struct LooResult {
  EvalReport report;
  std::vector<LabeledDocument> predictions;  // input documents with pred filled
};

/// Trains on all but one document, labels the held-out one, for every
/// document; pools token counts over folds. Folds may run on `jobs` threads;
/// results do not depend on the thread count.
inline LooResult loo_harness(std::span<const LabeledDocument> docs, const Trainer& trainer,
                             std::size_t jobs = 1) {
  if (docs.size() < 2) throw DataError("leave-one-out needs at least 2 documents");
  for (const LabeledDocument& d : docs) {
    if (!d.gold) throw DataError("document '" + d.doc_id + "' has no gold labels");
  }
  LooResult result;
  result.predictions.assign(docs.begin(), docs.end());
  std::vector<std::exception_ptr> errors(docs.size());

  auto run_fold = [&](std::size_t k) {
    try {
      std::vector<LabeledDocument> train;
      train.reserve(docs.size() - 1);
      for (std::size_t j = 0; j < docs.size(); ++j) {
        if (j != k) train.push_back(docs[j]);
      }
      const Labeller labeller = trainer(train);
      LabelSequence pred = labeller(docs[k]);
      if (pred.size() != docs[k].size()) {
        throw DataError("labeller returned " + std::to_string(pred.size()) + " labels for " +
                        std::to_string(docs[k].size()) + " tokens");
      }
      result.predictions[k].pred = std::move(pred);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  parallel_for(docs.size(), jobs, run_fold);
  for (std::size_t k = 0; k < docs.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const std::exception& e) {
      throw FoldError(k, docs[k].doc_id, e.what());
    }
  }
  result.report = token_metrics(result.predictions);
  return result;
}

// ---------------------------------------------------------------------------
// Error analyses (predicted O inside gold references)

struct ErrorPositionHistogram {
  std::vector<double> positions;

  /// Counts per bin [k*width, (k+1)*width); 1.0 falls into the last bin.
  std::vector<std::pair<double, std::size_t>> bins(double width = 0.1) const {
    if (!(width > 0.0) || width > 1.0) throw std::invalid_argument("bin width must be in (0, 1]");
    const auto n = static_cast<std::size_t>(std::ceil(1.0 / width - 1e-9));
    std::vector<std::pair<double, std::size_t>> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k].first = static_cast<double>(k) * width;
    for (double p : positions) {
      auto k = static_cast<std::size_t>(std::floor(p / width + 1e-9));
      out[std::min(k, n - 1)].second++;
    }
    return out;
  }
};

struct ORunDistribution {
  std::vector<std::size_t> lengths;

  /// Quantile with linear interpolation between order statistics.
  std::optional<double> quantile(double q) const {
    if (lengths.empty()) return std::nullopt;
    std::vector<std::size_t> s = lengths;
    std::sort(s.begin(), s.end());
    const double h = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    return static_cast<double>(s[lo]) + (h - static_cast<double>(lo)) * static_cast<double>(s[hi] - s[lo]);
  }
  std::optional<double> median() const { return quantile(0.5); }
  std::optional<double> lower_quartile() const { return quantile(0.25); }
  std::optional<double> upper_quartile() const { return quantile(0.75); }
};

/// Relative index i/(len-1) of each predicted O inside a gold span (0 for
/// single-token spans).
inline void relative_error_positions(std::span<const IobLabel> gold, std::span<const IobLabel> pred,
                                     ErrorPositionHistogram& into) {
  if (gold.size() != pred.size()) throw DataError("gold and predicted sequences differ in length");
  for (auto [a, b] : span_ranges(gold)) {
    const std::size_t len = b - a + 1;
    for (std::size_t i = a; i <= b; ++i) {
      if (pred[i] != IobLabel::O) continue;
      into.positions.push_back(len > 1 ? static_cast<double>(i - a) / static_cast<double>(len - 1) : 0.0);
    }
  }
}

inline ErrorPositionHistogram relative_error_positions(std::span<const IobLabel> gold,
                                                       std::span<const IobLabel> pred) {
  ErrorPositionHistogram h;
  relative_error_positions(gold, pred, h);
  return h;
}

/// Lengths of maximal predicted-O runs inside each gold span.
inline void o_run_lengths(std::span<const IobLabel> gold, std::span<const IobLabel> pred,
                          ORunDistribution& into) {
  if (gold.size() != pred.size()) throw DataError("gold and predicted sequences differ in length");
  for (auto [a, b] : span_ranges(gold)) {
    std::size_t run = 0;
    for (std::size_t i = a; i <= b; ++i) {
      if (pred[i] == IobLabel::O) {
        ++run;
      } else if (run > 0) {
        into.lengths.push_back(run);
        run = 0;
      }
    }
    if (run > 0) into.lengths.push_back(run);
  }
}

inline ORunDistribution o_run_lengths(std::span<const IobLabel> gold, std::span<const IobLabel> pred) {
  ORunDistribution d;
  o_run_lengths(gold, pred, d);
  return d;
}

struct ErrorAnalysis {
  ErrorPositionHistogram positions;
  ORunDistribution runs;
};

inline ErrorAnalysis analyse_errors(std::span<const LabeledDocument> docs) {
  ErrorAnalysis a;
  for (const LabeledDocument& d : docs) {
    if (!d.gold || !d.pred) throw DataError("document '" + d.doc_id + "' needs gold and predicted labels");
    relative_error_positions(*d.gold, *d.pred, a.positions);
    o_run_lengths(*d.gold, *d.pred, a.runs);
  }
  return a;
}

inline void write_histogram(std::ostream& out, const ErrorPositionHistogram& h, double width) {
  out << "bin_start\tcount\n";
  for (auto [start, count] : h.bins(width)) out << start << '\t' << count << '\n';
}

inline void write_run_lengths(std::ostream& out, const ORunDistribution& d) {
  std::vector<std::size_t> s = d.lengths;
  std::sort(s.begin(), s.end());
  out << "length\tcount\n";
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    out << s[i] << '\t' << (j - i) << '\n';
    i = j;
  }
}

}  // namespace refmine::eval
