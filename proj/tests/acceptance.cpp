// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit 1 on any FAIL.
//
//   acceptance --cli <refmine binary> --e2e-data <dir>
//
// REFMINE_DATASET may name the updated annotated corpus as a gold IOB file;
// without it the corpus statistics use the synthetic oracle and the
// leave-one-out comparison is skipped.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "refmine/refmine.hpp"
#include "support/chunk_fixtures.hpp"
#include "support/crf_fixtures.hpp"
#include "support/oracles.hpp"
#include "support/planted.hpp"
#include "support/synthetic.hpp"

using namespace refmine;
namespace rt = refmine::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kLogZTolerance = 1e-8;
constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-5;
constexpr double kLooTolerance = 0.05;
constexpr std::size_t kCorpusReferences = 2318;
constexpr std::size_t kCorpusITokens = 32359;
constexpr std::size_t kCorpusReferenceTokens = 34677;
constexpr double kMeanLengthLow = 14.9;
constexpr double kMeanLengthHigh = 15.0;

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Pass;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Skip, std::move(d)}; }

int failures = 0;

void check(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.kind == Outcome::Pass && secs > budget_s) {
    r = fail(r.detail + "; over time budget");
  }
  const char* tag = r.kind == Outcome::Pass ? "PASS" : r.kind == Outcome::Fail ? "FAIL" : "SKIP";
  if (r.kind == Outcome::Fail) ++failures;
  char timing[64];
  std::snprintf(timing, sizeof timing, "%.2fs/%.0fs", secs, budget_s);
  std::cout << tag << "  " << name << "  [" << timing << "]  " << r.detail << std::endl;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

LabelSequence labels(std::string_view s) {
  LabelSequence out;
  for (char c : s) out.push_back(*parse_label(std::string(1, c)));
  return out;
}

std::optional<std::vector<LabeledDocument>> dataset() {
  const char* path = std::getenv("REFMINE_DATASET");
  if (!path || !*path) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string("cannot open REFMINE_DATASET ") + path);
  auto docs = read_iob(in, path);
  sort_by_doc_id(docs);
  return docs;
}

// ---------------------------------------------------------------------------

Outcome tokenizer_golden() {
  const std::vector<std::string> expected = {"(",   "Eskildsen", "et",         "al.", ",",    "Nuc", ".", "Acids",
                                             "Res", ".",         "22:981-993", ",",   "2002", ".",   ")"};
  std::vector<std::string> got;
  for (const Token& t : tokenize("(Eskildsen et al., Nuc. Acids Res. 22:981-993, 2002.)")) got.push_back(t.text);
  if (got != expected) return fail("token row differs");
  return pass("15 tokens match");
}

Outcome corpus_stats_check(const std::optional<std::vector<LabeledDocument>>& data) {
  if (data) {
    const CorpusStats s = corpus_stats(*data);
    const std::size_t total = s.n_b_tokens + s.n_i_tokens;
    const double mean = s.mean_reference_length.value_or(0.0);
    std::ostringstream d;
    d << "references " << s.n_references << ", I " << s.n_i_tokens << ", B+I " << total << ", mean " << fmt(mean);
    const bool ok = s.n_references == kCorpusReferences && s.n_i_tokens == kCorpusITokens &&
                    total == kCorpusReferenceTokens && mean >= kMeanLengthLow && mean <= kMeanLengthHigh;
    return ok ? pass(d.str()) : fail(d.str());
  }
  // Synthetic fallback: counts from the generator's own spans, tokenized by
  // the regex oracle, against stats over the aligned documents.
  constexpr std::uint64_t seed = 22;
  constexpr std::size_t n_docs = 22;
  rt::SyntheticCorpus corpus(seed);
  std::size_t refs = 0, tokens = 0;
  for (std::size_t k = 0; k < n_docs; ++k) {
    const auto p = corpus.patent("US" + std::to_string(7000000 + k) + "B2", 6, 3);
    const std::u32string cps = unicode::decode_utf8(p.text);
    for (const auto& s : p.spans) {
      const std::string surface = unicode::encode_utf8(std::u32string_view(cps).substr(s.start, s.end - s.start));
      ++refs;
      tokens += rt::oracle_tokenize(surface, {"al."}).size();
    }
  }
  const CorpusStats s = corpus_stats(rt::synthetic_documents(seed, n_docs));
  std::ostringstream d;
  d << "dataset not available, synthetic oracle: references " << s.n_references << "/" << refs << ", B+I "
    << s.n_b_tokens + s.n_i_tokens << "/" << tokens;
  const bool ok = s.n_references == refs && s.n_b_tokens == refs && s.n_b_tokens + s.n_i_tokens == tokens &&
                  s.mean_reference_length &&
                  *s.mean_reference_length == static_cast<double>(tokens) / static_cast<double>(refs);
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome crf_inference_oracle() {
  std::mt19937_64 rng(1000);
  double worst = 0.0;
  constexpr int kInstances = 1000;
  for (int t = 0; t < kInstances; ++t) {
    const std::size_t n = 1 + rng() % 8;
    const auto inst = rt::random_instance(n, 6, rng(), 2.0);
    const auto bf = rt::brute_force(rt::direct_emission(inst.model, inst.seq), rt::transition_matrix(inst.model));
    const crf::Lattice lat = crf::build_lattice(inst.model, inst.seq);
    const double log_z = crf::forward_backward(lat).log_partition;
    worst = std::max(worst, std::abs(log_z - bf.log_z));
    if (std::abs(log_z - bf.log_z) > kLogZTolerance) return fail("log partition off by " + std::to_string(worst));
    const LabelSequence best = crf::viterbi(lat);
    for (std::size_t i = 0; i < n; ++i) {
      if (index_of(best[i]) != static_cast<std::size_t>(bf.argmax[i])) {
        return fail("Viterbi differs from exhaustive argmax on instance " + std::to_string(t));
      }
    }
  }
  std::ostringstream d;
  d << kInstances << " instances, max |dlogZ| " << worst;
  return pass(d.str());
}

Outcome crf_gradient_check() {
  double worst = 0.0;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto data = rt::toy_training_data(seed);
    for (double sigma : {1.0, 0.3, 10.0}) {
      const crf::CrfObjective obj(rt::kToyFeatures, data, sigma);
      std::vector<double> w(obj.dimension());
      for (double& v : w) v = normal(rng);
      std::vector<double> g(w.size());
      obj(w, g);
      worst = std::max(worst, rt::max_relative_gradient_error(obj, w, g, kFiniteDifferenceStep));
    }
  }
  std::ostringstream d;
  d << "max relative error " << worst;
  return worst < kGradientTolerance ? pass(d.str()) : fail(d.str());
}

Outcome crf_leave_one_out(const std::optional<std::vector<LabeledDocument>>& data) {
  if (!data) return skip("REFMINE_DATASET not set; the annotated patent corpus is not available offline");
  const auto r = eval::loo_harness(*data, crf_trainer(), std::max(1u, std::thread::hardware_concurrency()));
  struct Target {
    const char* name;
    double got, published;
  };
  const Target targets[] = {{"B precision", r.report.b.precision, 0.922},
                            {"B recall", r.report.b.recall, 0.893},
                            {"I precision", r.report.i.precision, 0.964},
                            {"I recall", r.report.i.recall, 0.938}};
  std::ostringstream d;
  bool ok = true;
  for (const Target& t : targets) {
    d << t.name << " " << fmt(t.got) << " (" << fmt(t.published) << ") ";
    ok = ok && std::abs(t.got - t.published) <= kLooTolerance;
  }
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome chunker_properties() {
  const SubwordVocab v = rt::toy_vocab();
  std::set<std::string> entries;
  for (std::size_t k = 0; k < v.size(); ++k) entries.insert(v.token(static_cast<int>(k)));
  std::mt19937_64 rng(64);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  constexpr int kDocuments = 1000;
  for (int d = 0; d < kDocuments; ++d) {
    const std::size_t n = 1 + rng() % 80;
    std::vector<std::string> words;
    LabelSequence gold;
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < n; ++k) {
      std::string w;
      for (std::size_t c = 0, len = 1 + rng() % 12; c < len; ++c) w.push_back(alphabet[rng() % alphabet.size()]);
      words.push_back(w);
      gold.push_back(kAllLabels[rng() % 3]);
      counts.push_back(rt::oracle_pieces(w, entries).size());
    }
    const std::string where = " (document " + std::to_string(d) + ")";
    for (std::size_t max_len : {8u, 16u, 64u}) {
      const auto chunks = chunk_document(rt::doc_of(words, gold), v, max_len);
      const auto expect = rt::simulate(counts, max_len);
      if (chunks.size() != expect.size()) return fail("chunk count differs from window rule" + where);
      LabelSequence concat;
      std::vector<LabelSequence> rows;
      std::size_t next_word = 0;
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        const Chunk& ch = chunks[c];
        if (ch.length() > max_len) return fail("window bound exceeded" + where);
        if (ch.word_offsets.size() != expect[c] || ch.word_offsets.empty()) return fail("window rule" + where);
        // every word lies whole inside one chunk, in order
        for (std::size_t k = 0; k < ch.word_offsets.size(); ++k) {
          if (ch.word_offsets[k] != next_word++) return fail("word order" + where);
          if (ch.word_spans[k].first + ch.word_spans[k].count > ch.length() - 1) return fail("word straddles" + where);
        }
        concat.insert(concat.end(), ch.word_labels.begin(), ch.word_labels.end());
        rows.push_back(broadcast_word_labels(ch));
      }
      if (concat != gold) return fail("labels not conserved" + where);
      if (merge_predictions(chunks, rows) != gold) return fail("merge of chunk is not identity" + where);
    }
  }
  return pass(std::to_string(kDocuments) + " documents x {8, 16, 64}");
}

Outcome span_extraction_exhaustive() {
  const char alphabet[3] = {'B', 'I', 'O'};
  std::size_t cases = 0;
  for (std::size_t n = 0; n <= 10; ++n) {
    std::size_t total = 1;
    for (std::size_t k = 0; k < n; ++k) total *= 3;
    std::vector<char> s(n);
    LabelSequence l(n);
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      for (std::size_t k = 0; k < n; ++k) {
        s[k] = alphabet[c % 3];
        l[k] = kAllLabels[c % 3];
        c /= 3;
      }
      if (span_ranges(l) != rt::oracle_spans(s)) return fail("differs on " + std::string(s.begin(), s.end()));
      ++cases;
    }
  }
  return pass(std::to_string(cases) + " label strings");
}

Outcome matcher_check() {
  const auto set = rt::planted_set(2024, 1000, 100);
  const PublicationStore store = rt::store_of(set.records);
  std::size_t definite = 0;
  for (std::size_t k = 0; k < set.references.size(); ++k) {
    const MatchResult m = match_reference(set.references[k].ref, store);
    const auto o = rt::oracle_match(set.references[k].ref, set.records);
    if (m.record_id != o.definite || m.candidates != o.passing) {
      return fail("index and full scan disagree on reference " + std::to_string(k));
    }
    definite += m.outcome == MatchOutcome::Definite;
  }
  const PipelineCounts c = run_matching(set.references, store).counts;
  if (!(c.extracted >= c.in_text_only && c.in_text_only >= c.in_focus_years && c.in_focus_years >= c.parsed &&
        c.parsed >= c.definite_matches)) {
    return fail("funnel not monotone");
  }
  // Repeat one definite reference inside its own patent.
  auto it = std::find_if(set.references.begin(), set.references.end(), [&](const ParsedSpan& s) {
    return match_reference(s.ref, store).outcome == MatchOutcome::Definite;
  });
  if (it == set.references.end()) return fail("no definite match among planted references");
  std::vector<ParsedSpan> doubled = set.references;
  doubled.push_back(*it);
  const PipelineCounts c2 = run_matching(doubled, store).counts;
  if (c2.extracted != c.extracted + 1 || c2.definite_matches != c.definite_matches) {
    return fail("duplicate match counted twice");
  }
  std::ostringstream d;
  d << set.references.size() << " references over " << set.records.size() << " records, " << definite
    << " definite; funnel " << c.extracted << ">=" << c.in_text_only << ">=" << c.in_focus_years << ">=" << c.parsed
    << ">=" << c.definite_matches;
  return pass(d.str());
}

Outcome error_analyses() {
  using eval::o_run_lengths;
  using eval::relative_error_positions;
  {
    const auto r = eval::token_metrics(labels("BIO"), labels("BOO"));
    if (r.b.precision != 1.0 || r.b.recall != 1.0 || r.i.precision != 0.0 || !r.i.precision_undefined ||
        r.i.recall != 0.0) {
      return fail("metric fixture");
    }
  }
  if (relative_error_positions(labels("BIIII"), labels("BIOII")).positions != std::vector<double>{0.5} ||
      relative_error_positions(labels("OBO"), labels("OOO")).positions != std::vector<double>{0.0} ||
      relative_error_positions(labels("OBIIIO"), labels("OBOIOO")).positions != std::vector<double>{1.0 / 3.0, 1.0}) {
    return fail("error position fixture");
  }
  if (o_run_lengths(labels("BIIIII"), labels("BIOOII")).lengths != std::vector<std::size_t>{2} ||
      o_run_lengths(labels("BIII"), labels("OOOO")).median() != 4.0 ||
      !o_run_lengths(labels("OBIO"), labels("OBIO")).lengths.empty()) {
    return fail("O-run fixture");
  }
  const auto docs = rt::synthetic_documents(5, 4, 3, 3);
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr int kPerturbations = 1000;
  for (int t = 0; t < kPerturbations; ++t) {
    const LabelSequence& gold = *docs[rng() % docs.size()].gold;
    LabelSequence pred = gold;
    const double rate = u(rng);
    for (auto& l : pred) {
      if (u(rng) < rate) l = kAllLabels[rng() % 3];
    }
    std::size_t runs = 0;
    for (std::size_t r : o_run_lengths(gold, pred).lengths) runs += r;
    if (runs != relative_error_positions(gold, pred).positions.size()) {
      return fail("run lengths and positions disagree on perturbation " + std::to_string(t));
    }
  }
  return pass("fixtures exact, " + std::to_string(kPerturbations) + " perturbations consistent");
}

Outcome end_to_end(const std::string& cli, const std::string& data_dir) {
  if (cli.empty() || data_dir.empty()) return fail("--cli and --e2e-data are required");
  const fs::path work = fs::temp_directory_path() / ("refmine-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(work);
  const fs::path data(data_dir);
  auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  std::vector<std::string> steps;
  std::string texts;
  for (const auto& e : fs::directory_iterator(data)) {
    if (e.path().extension() == ".txt") texts += " " + q(e.path());
  }
  steps.push_back(q(cli) + " ingest-brat" + texts + " -o " + q(work / "gold.iob"));
  steps.push_back(q(cli) + " train-crf " + q(work / "gold.iob") + " -m " + q(work / "model.json"));
  steps.push_back(q(cli) + " label " + q(work / "gold.iob") + " -m " + q(work / "model.json") + " -o " +
                  q(work / "labelled.iob"));
  steps.push_back(q(cli) + " extract " + q(work / "labelled.iob") + " -o " + q(work / "spans.tsv"));
  steps.push_back(q(cli) + " parse " + q(work / "spans.tsv") + " -o " + q(work / "parsed.tsv"));
  steps.push_back(q(cli) + " match " + q(work / "parsed.tsv") + " --store " + q(data / "store.tsv") +
                  " --front-page " + q(data / "front_page.tsv") + " -o " + q(work / "counts.json"));
  for (const std::string& s : steps) {
    if (std::system((s + " 2>" + q(work / "stderr.txt")).c_str()) != 0) {
      fs::remove_all(work);
      return fail("command failed: " + s);
    }
  }
  std::ifstream got_in(work / "counts.json"), want_in(data / "expected_counts.json");
  const PipelineCounts got = read_counts(got_in), want = read_counts(want_in);
  fs::remove_all(work);
  std::ostringstream d;
  d << "counts " << to_json(got).dump();
  return got == want ? pass(d.str()) : fail(d.str() + " expected " + to_json(want).dump());
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli, e2e;
  for (int k = 1; k + 1 < argc; k += 2) {
    const std::string flag = argv[k];
    if (flag == "--cli") cli = argv[k + 1];
    else if (flag == "--e2e-data") e2e = argv[k + 1];
  }
  std::optional<std::vector<LabeledDocument>> data;
  try {
    data = dataset();
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }

  check("tokenizer-golden", 1, tokenizer_golden);
  check("corpus-stats", 10, [&] { return corpus_stats_check(data); });
  check("crf-inference-oracle", 60, crf_inference_oracle);
  check("crf-gradient-check", 30, crf_gradient_check);
  check("crf-leave-one-out", 1800, [&] { return crf_leave_one_out(data); });
  check("chunker-properties", 60, chunker_properties);
  check("span-extraction-exhaustive", 10, span_extraction_exhaustive);
  check("matcher-oracle-and-funnel", 10, matcher_check);
  check("error-analyses", 10, error_analyses);
  check("end-to-end-fixture", 120, [&] { return end_to_end(cli, e2e); });

  std::cout << (failures == 0 ? "acceptance: all criteria met or skipped" : "acceptance: failures present") << '\n';
  return failures == 0 ? 0 : 1;
}
