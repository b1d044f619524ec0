#pragma once

// Linear-chain CRF over {B, I, O}: window features, forward-backward
// inference, Viterbi decoding, and L2-regularized maximum-likelihood training.

#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
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
#include "refmine/lbfgs.hpp"
#include "refmine/unicode.hpp"

namespace refmine::crf {

inline constexpr std::size_t L = kNumLabels;

// ---------------------------------------------------------------------------
// Feature extraction

namespace detail {

inline bool looks_like_year(const std::u32string& s) {
  // (19|20)dd with at most one trailing punctuation character
  if (s.size() != 4 && s.size() != 5) return false;
  if (!((s[0] == U'1' && s[1] == U'9') || (s[0] == U'2' && s[1] == U'0'))) return false;
  if (!unicode::is_digit(s[2]) || !unicode::is_digit(s[3])) return false;
  return s.size() == 4 || unicode::is_punct(s[4]);
}

inline bool looks_like_page_range(const std::u32string& s) {
  // digits ([:-–] digits)+
  std::size_t i = 0;
  int groups = 0;
  while (true) {
    const std::size_t begin = i;
    while (i < s.size() && unicode::is_digit(s[i])) ++i;
    if (i == begin) return false;
    ++groups;
    if (i == s.size()) return groups >= 2;
    if (s[i] != U':' && s[i] != U'-' && s[i] != U'–') return false;
    ++i;
  }
}

struct TokenTraits {
  std::string lower;
  std::string pos;
  bool upper = false;
  bool title = false;
  bool digit = false;
  bool year = false;
};

inline const char* flag(bool b) { return b ? "1" : "0"; }

}  // namespace detail

/// Names of the per-token templates; the neighbour templates are the first
/// six entries of kNeighbourTemplates prefixed with the offset.
inline constexpr std::array<std::string_view, 11> kCurrentTemplates = {
    "w", "suf3", "suf2", "upper", "title", "digit", "hasdigit", "punct", "pos", "year", "pages"};
inline constexpr std::array<std::string_view, 6> kNeighbourTemplates = {"w",     "title", "upper",
                                                                        "digit", "pos",   "year"};
inline constexpr std::array<int, 4> kNeighbourOffsets = {-2, -1, 1, 2};
inline constexpr std::size_t kFeaturesPerToken =
    kCurrentTemplates.size() + kNeighbourTemplates.size() * kNeighbourOffsets.size();

/// Feature strings per token. Every template emits exactly one feature per
/// position ("<template>=<value>"); neighbour templates are prefixed with the
/// offset ("-1:w=...") and take the value __BOS__ / __EOS__ off the edges.
using FeatureStrings = std::vector<std::vector<std::string>>;

inline FeatureStrings extract_features(const LabeledDocument& doc) {
  using detail::flag;
  const std::size_t n = doc.tokens.size();
  std::vector<detail::TokenTraits> traits(n);
  FeatureStrings out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Token& tok = doc.tokens[i];
    const std::u32string cps = unicode::decode_utf8(tok.text);
    std::u32string low;
    bool any_letter = false, all_upper = true, all_digit = !cps.empty(), has_digit = false,
         all_punct = !cps.empty();
    for (char32_t c : cps) {
      low.push_back(unicode::to_lower(c));
      const auto k = unicode::classify(c);
      if (k == unicode::CharClass::Letter) {
        any_letter = true;
        if (!unicode::is_upper(c)) all_upper = false;
      }
      all_digit &= k == unicode::CharClass::Digit;
      has_digit |= k == unicode::CharClass::Digit;
      all_punct &= k == unicode::CharClass::Punct;
    }
    bool title = !cps.empty() && unicode::is_upper(cps[0]);
    for (std::size_t k = 1; title && k < cps.size(); ++k) title = !unicode::is_upper(cps[k]);

    detail::TokenTraits& t = traits[i];
    t.lower = unicode::encode_utf8(low);
    t.pos = tok.pos ? *tok.pos : fallback_pos(tok.text);
    t.upper = any_letter && all_upper;
    t.title = title;
    t.digit = all_digit;
    t.year = detail::looks_like_year(cps);

    const std::u32string_view lv(low);
    std::vector<std::string>& f = out[i];
    f.reserve(kFeaturesPerToken);
    f.push_back("w=" + t.lower);
    f.push_back("suf3=" + unicode::encode_utf8(lv.substr(lv.size() > 3 ? lv.size() - 3 : 0)));
    f.push_back("suf2=" + unicode::encode_utf8(lv.substr(lv.size() > 2 ? lv.size() - 2 : 0)));
    f.push_back(std::string("upper=") + flag(t.upper));
    f.push_back(std::string("title=") + flag(t.title));
    f.push_back(std::string("digit=") + flag(t.digit));
    f.push_back(std::string("hasdigit=") + flag(has_digit));
    f.push_back(std::string("punct=") + flag(all_punct));
    f.push_back("pos=" + t.pos);
    f.push_back(std::string("year=") + flag(t.year));
    f.push_back(std::string("pages=") + flag(detail::looks_like_page_range(cps)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int off : kNeighbourOffsets) {
      const std::string prefix = (off > 0 ? "+" : "") + std::to_string(off) + ":";
      const long j = static_cast<long>(i) + off;
      if (j < 0 || j >= static_cast<long>(n)) {
        const char* edge = j < 0 ? "__BOS__" : "__EOS__";
        for (std::string_view tmpl : kNeighbourTemplates) {
          out[i].push_back(prefix + std::string(tmpl) + "=" + edge);
        }
        continue;
      }
      const detail::TokenTraits& t = traits[static_cast<std::size_t>(j)];
      out[i].push_back(prefix + "w=" + t.lower);
      out[i].push_back(prefix + "title=" + flag(t.title));
      out[i].push_back(prefix + "upper=" + flag(t.upper));
      out[i].push_back(prefix + "digit=" + flag(t.digit));
      out[i].push_back(prefix + "pos=" + t.pos);
      out[i].push_back(prefix + "year=" + flag(t.year));
    }
  }
  return out;
}

/// Interning table from feature strings to dense ids.
class FeatureIndex {
 public:
  int intern(const std::string& name) {
    auto [it, inserted] = ids_.emplace(name, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }
  int find(const std::string& name) const {
    auto it = ids_.find(name);
    return it == ids_.end() ? -1 : it->second;
  }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
};

/// Feature ids per position. Features unknown to the index are dropped.
using FeatureSequence = std::vector<std::vector<int>>;

inline FeatureSequence encode(const FeatureStrings& strings, const FeatureIndex& index) {
  FeatureSequence seq(strings.size());
  for (std::size_t i = 0; i < strings.size(); ++i) {
    for (const std::string& s : strings[i]) {
      const int id = index.find(s);
      if (id >= 0) seq[i].push_back(id);
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Model and inference

struct TrainConfig {
  double l2_sigma = 1.0;
  int max_iterations = 200;
  double tolerance = 1e-5;
  int lbfgs_memory = 10;
};

class CrfModel {
 public:
  CrfModel() = default;
  CrfModel(FeatureIndex index, std::vector<double> state_weights,
           std::array<double, L * L> transition_weights)
      : index_(std::move(index)),
        state_(std::move(state_weights)),
        transition_(transition_weights) {
    if (state_.size() != index_.size() * L) {
      throw std::invalid_argument("state weight count does not match the feature index");
    }
  }

  const FeatureIndex& index() const { return index_; }
  std::size_t num_features() const { return index_.size(); }

  double state_weight(int feature, IobLabel label) const {
    return state_[static_cast<std::size_t>(feature) * L + index_of(label)];
  }
  double transition_weight(IobLabel from, IobLabel to) const {
    return transition_[index_of(from) * L + index_of(to)];
  }
  std::span<const double> state_weights() const { return state_; }
  std::span<double> state_weights() { return state_; }
  const std::array<double, L * L>& transition_weights() const { return transition_; }
  std::array<double, L * L>& transition_weights() { return transition_; }

  FeatureSequence encode(const LabeledDocument& doc) const {
    return crf::encode(extract_features(doc), index_);
  }

  TrainConfig config;
  int iterations = 0;

 private:
  FeatureIndex index_;
  std::vector<double> state_;
  std::array<double, L * L> transition_{};
};

/// Per-position label scores (sum of state weights of active features).
struct Lattice {
  std::size_t length = 0;
  std::vector<double> emission;  // length * L, row-major by position
  std::array<double, L * L> transition{};

  double emit(std::size_t i, std::size_t y) const { return emission[i * L + y]; }
  double trans(std::size_t a, std::size_t b) const { return transition[a * L + b]; }
};

inline Lattice build_lattice(const CrfModel& model, const FeatureSequence& seq) {
  Lattice lat;
  lat.length = seq.size();
  lat.emission.assign(seq.size() * L, 0.0);
  lat.transition = model.transition_weights();
  const auto w = model.state_weights();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (int f : seq[i]) {
      for (std::size_t y = 0; y < L; ++y) lat.emission[i * L + y] += w[static_cast<std::size_t>(f) * L + y];
    }
  }
  return lat;
}

inline double sequence_score(const Lattice& lat, std::span<const IobLabel> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < lat.length; ++i) {
    s += lat.emit(i, index_of(labels[i]));
    if (i > 0) s += lat.trans(index_of(labels[i - 1]), index_of(labels[i]));
  }
  return s;
}

namespace detail {

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) m = std::max(m, v[k]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k] - m);
  return m + std::log(s);
}

}  // namespace detail

struct ForwardBackward {
  double log_partition = 0.0;
  std::vector<double> alpha;     // length * L, log-space
  std::vector<double> beta;      // length * L, log-space
  std::vector<double> marginal;  // length * L, probabilities

  double node_marginal(std::size_t i, IobLabel y) const { return marginal[i * L + index_of(y)]; }
};

inline ForwardBackward forward_backward(const Lattice& lat) {
  if (lat.length == 0) throw std::invalid_argument("forward_backward: empty sequence");
  const std::size_t n = lat.length;
  ForwardBackward fb;
  fb.alpha.assign(n * L, 0.0);
  fb.beta.assign(n * L, 0.0);
  fb.marginal.assign(n * L, 0.0);
  std::array<double, L> tmp{};
  for (std::size_t y = 0; y < L; ++y) fb.alpha[y] = lat.emit(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t p = 0; p < L; ++p) tmp[p] = fb.alpha[(i - 1) * L + p] + lat.trans(p, y);
      fb.alpha[i * L + y] = detail::log_sum_exp(tmp.data(), L) + lat.emit(i, y);
    }
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t q = 0; q < L; ++q) {
        tmp[q] = lat.trans(y, q) + lat.emit(i + 1, q) + fb.beta[(i + 1) * L + q];
      }
      fb.beta[i * L + y] = detail::log_sum_exp(tmp.data(), L);
    }
  }
  fb.log_partition = detail::log_sum_exp(&fb.alpha[(n - 1) * L], L);
  for (std::size_t i = 0; i < n * L; ++i) {
    fb.marginal[i] = std::exp(fb.alpha[i] + fb.beta[i] - fb.log_partition);
  }
  return fb;
}

inline double log_partition(const CrfModel& model, const FeatureSequence& seq) {
  return forward_backward(build_lattice(model, seq)).log_partition;
}

/// Highest-scoring label sequence. Ties go to the earlier label in B < I < O,
/// both at each backpointer and at the final position.
inline LabelSequence viterbi(const Lattice& lat) {
  if (lat.length == 0) throw std::invalid_argument("viterbi: empty sequence");
  const std::size_t n = lat.length;
  std::vector<double> best(n * L);
  std::vector<std::uint8_t> back(n * L, 0);
  for (std::size_t y = 0; y < L; ++y) best[y] = lat.emit(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < L; ++y) {
      std::size_t arg = 0;
      double top = best[(i - 1) * L] + lat.trans(0, y);
      for (std::size_t p = 1; p < L; ++p) {
        const double v = best[(i - 1) * L + p] + lat.trans(p, y);
        if (v > top) {
          top = v;
          arg = p;
        }
      }
      best[i * L + y] = top + lat.emit(i, y);
      back[i * L + y] = static_cast<std::uint8_t>(arg);
    }
  }
  std::size_t y = 0;
  for (std::size_t k = 1; k < L; ++k) {
    if (best[(n - 1) * L + k] > best[(n - 1) * L + y]) y = k;
  }
  LabelSequence out(n);
  for (std::size_t i = n; i-- > 0;) {
    out[i] = static_cast<IobLabel>(y);
    y = back[i * L + y];
  }
  return out;
}

inline LabelSequence viterbi_decode(const CrfModel& model, const FeatureSequence& seq) {
  return viterbi(build_lattice(model, seq));
}

inline LabelSequence label_document(const CrfModel& model, const LabeledDocument& doc) {
  if (doc.tokens.empty()) return {};
  return viterbi_decode(model, model.encode(doc));
}

// ---------------------------------------------------------------------------
// Training

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingSequence {
  FeatureSequence features;
  LabelSequence labels;
};

/// Regularized negative log-likelihood and its gradient over a parameter
/// vector laid out as [state weights (F x L) | transitions (L x L)].
class CrfObjective {
 public:
  CrfObjective(std::size_t num_features, std::span<const TrainingSequence> data, double l2_sigma)
      : num_features_(num_features), data_(data), inv_var_(1.0 / (l2_sigma * l2_sigma)) {}

  std::size_t dimension() const { return num_features_ * L + L * L; }

  double operator()(std::span<const double> w, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t toff = num_features_ * L;
    double nll = 0.0;
    for (const TrainingSequence& seq : data_) {
      const std::size_t n = seq.features.size();
      if (n == 0) continue;
      Lattice lat;
      lat.length = n;
      lat.emission.assign(n * L, 0.0);
      for (std::size_t k = 0; k < L * L; ++k) lat.transition[k] = w[toff + k];
      for (std::size_t i = 0; i < n; ++i) {
        for (int f : seq.features[i]) {
          for (std::size_t y = 0; y < L; ++y) lat.emission[i * L + y] += w[static_cast<std::size_t>(f) * L + y];
        }
      }
      const ForwardBackward fb = forward_backward(lat);
      nll += fb.log_partition - sequence_score(lat, seq.labels);

      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t gold = index_of(seq.labels[i]);
        for (int f : seq.features[i]) {
          double* g = &grad[static_cast<std::size_t>(f) * L];
          for (std::size_t y = 0; y < L; ++y) g[y] += fb.marginal[i * L + y];
          g[gold] -= 1.0;
        }
        if (i == 0) continue;
        for (std::size_t a = 0; a < L; ++a) {
          for (std::size_t b = 0; b < L; ++b) {
            grad[toff + a * L + b] += std::exp(fb.alpha[(i - 1) * L + a] + lat.trans(a, b) +
                                               lat.emit(i, b) + fb.beta[i * L + b] - fb.log_partition);
          }
        }
        grad[toff + index_of(seq.labels[i - 1]) * L + gold] -= 1.0;
      }
    }
    double reg = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      reg += w[k] * w[k];
      grad[k] += w[k] * inv_var_;
    }
    return nll + 0.5 * reg * inv_var_;
  }

 private:
  std::size_t num_features_;
  std::span<const TrainingSequence> data_;
  double inv_var_;
};

struct TrainResult {
  CrfModel model;
  LbfgsResult optimizer;
};

/// Builds the feature index from the training documents and fits weights by
/// L-BFGS. Deterministic for a given config and document order.
inline TrainResult train(std::span<const LabeledDocument> docs, const TrainConfig& config = {}) {
  if (!(config.l2_sigma > 0.0)) throw std::invalid_argument("l2_sigma must be positive");
  FeatureIndex index;
  std::vector<TrainingSequence> data;
  for (const LabeledDocument& doc : docs) {
    if (!doc.gold) throw DataError("training document '" + doc.doc_id + "' has no gold labels");
    if (doc.tokens.empty()) continue;
    TrainingSequence seq;
    const FeatureStrings strings = extract_features(doc);
    seq.features.resize(strings.size());
    for (std::size_t i = 0; i < strings.size(); ++i) {
      for (const std::string& s : strings[i]) seq.features[i].push_back(index.intern(s));
    }
    seq.labels = *doc.gold;
    data.push_back(std::move(seq));
  }
  if (data.empty()) throw DataError("no non-empty training documents");

  const CrfObjective objective(index.size(), data, config.l2_sigma);
  LbfgsOptions opt;
  opt.max_iterations = config.max_iterations;
  opt.tolerance = config.tolerance;
  opt.memory = config.lbfgs_memory;
  auto checked = [&](std::span<const double> w, std::span<double> g) {
    const double v = objective(w, g);
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite training objective; check l2_sigma and feature counts");
    }
    return v;
  };
  TrainResult result;
  result.optimizer = minimize_lbfgs(checked, std::vector<double>(objective.dimension(), 0.0), opt);
  const std::vector<double>& w = result.optimizer.x;
  std::array<double, L * L> trans{};
  std::copy(w.end() - static_cast<std::ptrdiff_t>(L * L), w.end(), trans.begin());
  result.model = CrfModel(std::move(index),
                          std::vector<double>(w.begin(), w.end() - static_cast<std::ptrdiff_t>(L * L)),
                          trans);
  result.model.config = config;
  result.model.iterations = result.optimizer.iterations;
  return result;
}

// ---------------------------------------------------------------------------
// Model file: JSON with a format-version field.

inline constexpr int kModelFormatVersion = 1;

inline void save_model(std::ostream& out, const CrfModel& model) {
  nlohmann::json j;
  j["format"] = "refmine-crf";
  j["format_version"] = kModelFormatVersion;
  j["labels"] = {"B", "I", "O"};
  j["config"] = {{"l2_sigma", model.config.l2_sigma},
                 {"max_iterations", model.config.max_iterations},
                 {"tolerance", model.config.tolerance},
                 {"lbfgs_memory", model.config.lbfgs_memory}};
  j["iterations"] = model.iterations;
  j["features"] = model.index().names();
  j["state_weights"] = std::vector<double>(model.state_weights().begin(), model.state_weights().end());
  j["transition_weights"] = model.transition_weights();
  out << j.dump() << '\n';
}

inline CrfModel load_model(std::istream& in, const std::string& source = "<model>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.value("format", "") != "refmine-crf") throw DataError(source + ": not a CRF model file");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError(source + ": model format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
    }
    if (j.at("labels") != nlohmann::json({"B", "I", "O"})) {
      throw DataError(source + ": unexpected label set");
    }
    FeatureIndex index;
    for (const auto& name : j.at("features")) index.intern(name.get<std::string>());
    if (index.size() != j.at("features").size()) throw DataError(source + ": duplicate feature names");
    CrfModel model(std::move(index), j.at("state_weights").get<std::vector<double>>(),
                   j.at("transition_weights").get<std::array<double, L * L>>());
    const auto& cfg = j.at("config");
    model.config.l2_sigma = cfg.at("l2_sigma").get<double>();
    model.config.max_iterations = cfg.at("max_iterations").get<int>();
    model.config.tolerance = cfg.at("tolerance").get<double>();
    model.config.lbfgs_memory = cfg.value("lbfgs_memory", 10);
    model.iterations = j.value("iterations", 0);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(source + ": " + e.what());
  }
}

}  // namespace refmine::crf
