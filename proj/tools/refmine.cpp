// refmine: command-line driver for the reference-mining pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "refmine/refmine.hpp"

namespace fs = std::filesystem;
using namespace refmine;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct Options {
  std::size_t jobs = 1;
  std::string abbreviations_file;

  std::vector<std::string> inputs;
  std::string input;
  std::string output = "-";
  std::vector<std::string> doc_ids;

  std::string vocab;
  std::size_t max_len = 64;

  std::string model;
  crf::TrainConfig train;

  std::string column = "pred";

  std::string store;
  std::string front_page;
  int year_from = 1980;
  int year_to = 2010;

  std::string report = "-";
  std::string predictions;
  std::string histogram;
  std::string runs;
  double bin_width = 0.1;
};

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

// "-" writes to stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path == "-" || path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw DataError("cannot write '" + path + "'");
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }
  void close() {
    get().flush();
    if (!get()) throw DataError("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::string slurp(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AbbreviationSet load_abbreviations(const std::string& path) {
  if (path.empty()) return default_abbreviations();
  AbbreviationSet out;
  std::ifstream in = open_in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] != '#') out.insert(line);
  }
  return out;
}

std::vector<LabeledDocument> load_iob(const std::string& path) {
  std::ifstream in = open_in(path);
  auto docs = read_iob(in, path);
  sort_by_doc_id(docs);
  return docs;
}

std::string doc_id_for(const Options& o, std::size_t k) {
  if (k < o.doc_ids.size()) return o.doc_ids[k];
  return fs::path(o.inputs[k]).stem().string();
}

void check_doc_ids(const Options& o) {
  if (!o.doc_ids.empty() && o.doc_ids.size() != o.inputs.size()) {
    throw CLI::ValidationError("--doc-id", "give one id per input file");
  }
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// ---------------------------------------------------------------------------

int cmd_tokenize(const Options& o) {
  check_doc_ids(o);
  const AbbreviationSet abbrevs = load_abbreviations(o.abbreviations_file);
  std::vector<LabeledDocument> docs;
  for (std::size_t k = 0; k < o.inputs.size(); ++k) {
    LabeledDocument d;
    d.doc_id = doc_id_for(o, k);
    d.tokens = tokenize(slurp(o.inputs[k]), abbrevs);
    if (d.tokens.empty()) throw DataError(o.inputs[k] + ": no tokens");
    fill_fallback_pos(d);
    docs.push_back(std::move(d));
  }
  sort_by_doc_id(docs);
  Output out(o.output);
  write_iob(out.get(), docs);
  out.close();
  return 0;
}

int cmd_ingest_brat(const Options& o) {
  check_doc_ids(o);
  const AbbreviationSet abbrevs = load_abbreviations(o.abbreviations_file);
  std::vector<LabeledDocument> docs;
  for (std::size_t k = 0; k < o.inputs.size(); ++k) {
    const fs::path txt = o.inputs[k];
    fs::path ann = txt;
    ann.replace_extension(".ann");
    std::ifstream ann_in = open_in(ann.string());
    Alignment a = ingest_brat(doc_id_for(o, k), slurp(txt.string()), ann_in, abbrevs, ann.string());
    warn(a.warnings);
    fill_fallback_pos(a.doc);
    docs.push_back(std::move(a.doc));
  }
  sort_by_doc_id(docs);
  Output out(o.output);
  write_iob(out.get(), docs);
  out.close();
  return 0;
}

int cmd_stats(const Options& o) {
  const auto docs = load_iob(o.input);
  const CorpusStats s = corpus_stats(docs);
  Output out(o.output);
  auto& os = out.get();
  os << "documents\t" << s.n_documents << '\n'
     << "references\t" << s.n_references << '\n'
     << "b_tokens\t" << s.n_b_tokens << '\n'
     << "i_tokens\t" << s.n_i_tokens << '\n'
     << "reference_tokens\t" << s.n_b_tokens + s.n_i_tokens << '\n';
  os << "mean_reference_length\t";
  if (s.mean_reference_length) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *s.mean_reference_length);
    os << buf;
  } else {
    os << '_';
  }
  os << '\n';
  out.close();
  return 0;
}

int cmd_chunk(const Options& o) {
  if (o.max_len < 3) throw CLI::ValidationError("--max-len", "must be at least 3");
  const auto docs = load_iob(o.input);
  std::ifstream vin = open_in(o.vocab);
  const SubwordVocab vocab = SubwordVocab::load(vin, {}, "##", o.vocab);
  std::vector<std::vector<Chunk>> per_doc(docs.size());
  std::vector<std::vector<std::string>> warnings(docs.size());
  parallel_for(docs.size(), o.jobs,
               [&](std::size_t k) { per_doc[k] = chunk_document(docs[k], vocab, o.max_len, &warnings[k]); });
  std::vector<Chunk> all;
  for (std::size_t k = 0; k < docs.size(); ++k) {
    warn(warnings[k]);
    all.insert(all.end(), per_doc[k].begin(), per_doc[k].end());
  }
  Output out(o.output);
  write_chunks(out.get(), all);
  out.close();
  return 0;
}

int cmd_train_crf(const Options& o) {
  const auto docs = load_iob(o.input);
  const crf::TrainResult r = crf::train(docs, o.train);
  std::cerr << "trained on " << docs.size() << " documents, " << r.model.index().size() << " features, "
            << r.optimizer.iterations << " iterations, objective " << r.optimizer.value << '\n';
  Output out(o.model);
  crf::save_model(out.get(), r.model);
  out.close();
  return 0;
}

int cmd_label(const Options& o) {
  auto docs = load_iob(o.input);
  std::ifstream min = open_in(o.model);
  const crf::CrfModel model = crf::load_model(min, o.model);
  parallel_for(docs.size(), o.jobs, [&](std::size_t k) { docs[k].pred = crf::label_document(model, docs[k]); });
  Output out(o.output);
  write_iob(out.get(), docs);
  out.close();
  return 0;
}

int cmd_extract(const Options& o) {
  auto docs = load_iob(o.input);
  std::vector<ReferenceSpan> spans;
  for (const auto& d : docs) {
    const auto& labels = o.column == "gold" ? d.gold : d.pred;
    if (!labels) throw DataError(o.input + ": document '" + d.doc_id + "' has no " + o.column + " column");
    auto s = extract_spans(d.doc_id, *labels, d.tokens);
    spans.insert(spans.end(), s.begin(), s.end());
  }
  Output out(o.output);
  write_spans(out.get(), spans);
  out.close();
  return 0;
}

int cmd_parse(const Options& o) {
  std::ifstream in = open_in(o.input);
  const auto spans = read_spans(in, o.input);
  Output out(o.output);
  write_parsed(out.get(), parse_all(spans));
  out.close();
  return 0;
}

int cmd_match(const Options& o) {
  std::ifstream in = open_in(o.input);
  const auto parsed = read_parsed(in, o.input);
  std::ifstream sin = open_in(o.store);
  const PublicationStore store = load_publications(sin, o.store);
  FrontPageCitations fp;
  if (!o.front_page.empty()) {
    std::ifstream fin = open_in(o.front_page);
    fp = read_front_page(fin, o.front_page);
  }
  if (o.year_from > o.year_to) throw CLI::ValidationError("--year-from", "must not exceed --year-to");
  const MatchingReport report = run_matching(parsed, store, fp, YearRange{o.year_from, o.year_to});
  Output out(o.output);
  write_counts(out.get(), report.counts);
  out.close();
  return 0;
}

int cmd_evaluate_loo(const Options& o) {
  const auto docs = load_iob(o.input);
  const eval::LooResult r = eval::loo_harness(docs, crf_trainer(o.train), o.jobs);
  Output out(o.report);
  eval::write_report(out.get(), r.report);
  out.close();
  if (!o.predictions.empty()) {
    Output pout(o.predictions);
    write_iob(pout.get(), r.predictions);
    pout.close();
  }
  return 0;
}

int cmd_error_analysis(const Options& o) {
  const auto docs = load_iob(o.input);
  const eval::ErrorAnalysis a = eval::analyse_errors(docs);
  Output hist(o.histogram.empty() ? "-" : o.histogram);
  eval::write_histogram(hist.get(), a.positions, o.bin_width);
  hist.close();
  if (!o.runs.empty()) {
    Output runs(o.runs);
    eval::write_run_lengths(runs.get(), a.runs);
    runs.close();
  }
  const auto q1 = a.runs.lower_quartile(), q2 = a.runs.median(), q3 = a.runs.upper_quartile();
  if (q2) {
    std::cerr << "o-runs: " << a.runs.lengths.size() << ", quartiles " << *q1 << " / " << *q2 << " / " << *q3
              << '\n';
  } else {
    std::cerr << "o-runs: none\n";
  }
  return 0;
}

void add_train_flags(CLI::App* c, Options& o) {
  c->add_option("--l2-sigma", o.train.l2_sigma, "Gaussian prior width for the L2 penalty")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c->add_option("--max-iterations", o.train.max_iterations, "L-BFGS iteration cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c->add_option("--tolerance", o.train.tolerance, "Relative objective decrease for convergence")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c->add_option("--lbfgs-memory", o.train.lbfgs_memory, "Number of L-BFGS correction pairs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mine scientific references from patent full texts."};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with default option values; command-line flags win");
  Options o;
  app.add_option("--jobs,-j", o.jobs, "Worker threads for per-document work")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--abbreviations", o.abbreviations_file,
                 "File with one abbreviation per line that keeps its final period (default: al.)")
      ->check(CLI::ExistingFile);

  auto out_opt = [&](CLI::App* c, const char* what) {
    c->add_option("-o,--output", o.output, what)->capture_default_str();
  };
  auto in_opt = [&](CLI::App* c, const char* what) {
    c->add_option("input", o.input, what)->required()->check(CLI::ExistingFile);
  };

  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> commands;

  auto* tok = app.add_subcommand("tokenize", "Raw text files to an IOB skeleton (no labels)");
  tok->add_option("inputs", o.inputs, "Text files; the doc_id is the file stem")->required()->check(CLI::ExistingFile);
  tok->add_option("--doc-id", o.doc_ids, "Explicit doc_id per input, in order");
  out_opt(tok, "IOB output file");
  commands.emplace_back(tok, cmd_tokenize);

  auto* ing = app.add_subcommand("ingest-brat", "Text files plus sibling .ann files to gold-labelled IOB");
  ing->add_option("inputs", o.inputs, "Text files; annotations are read from <stem>.ann")
      ->required()
      ->check(CLI::ExistingFile);
  ing->add_option("--doc-id", o.doc_ids, "Explicit doc_id per input, in order");
  out_opt(ing, "IOB output file");
  commands.emplace_back(ing, cmd_ingest_brat);

  auto* st = app.add_subcommand("stats", "Reference counts and mean length from gold labels");
  in_opt(st, "IOB file with gold labels");
  out_opt(st, "Report file");
  commands.emplace_back(st, cmd_stats);

  auto* ch = app.add_subcommand("chunk", "Split IOB documents into fixed-length subword windows (JSON lines)");
  in_opt(ch, "IOB file");
  ch->add_option("--vocab", o.vocab, "Subword vocabulary, one token per line")->required()->check(CLI::ExistingFile);
  ch->add_option("--max-len", o.max_len, "Window length including [CLS] and [SEP]")->capture_default_str();
  out_opt(ch, "Chunk dump");
  commands.emplace_back(ch, cmd_chunk);

  auto* tr = app.add_subcommand("train-crf", "Fit the CRF on gold-labelled IOB");
  in_opt(tr, "IOB file with gold labels");
  tr->add_option("-m,--model", o.model, "Model file to write")->required();
  add_train_flags(tr, o);
  commands.emplace_back(tr, cmd_train_crf);

  auto* lb = app.add_subcommand("label", "Fill the predicted column with a trained CRF");
  in_opt(lb, "IOB file");
  lb->add_option("-m,--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  out_opt(lb, "IOB output file");
  commands.emplace_back(lb, cmd_label);

  auto* ex = app.add_subcommand("extract", "Reference spans from a label column");
  in_opt(ex, "IOB file");
  ex->add_option("--column", o.column, "Label column to read")
      ->capture_default_str()
      ->check(CLI::IsMember({"pred", "gold"}));
  out_opt(ex, "Span TSV");
  commands.emplace_back(ex, cmd_extract);

  auto* pa = app.add_subcommand("parse", "Bibliographic fields for each extracted span");
  in_opt(pa, "Span TSV");
  out_opt(pa, "Parsed TSV");
  commands.emplace_back(pa, cmd_parse);

  auto* ma = app.add_subcommand("match", "Link parsed references to a publication store and report the funnel");
  in_opt(ma, "Parsed TSV");
  ma->add_option("--store", o.store, "Publication store TSV")->required()->check(CLI::ExistingFile);
  ma->add_option("--front-page", o.front_page, "patent_id TAB record_id citations to exclude")
      ->check(CLI::ExistingFile);
  ma->add_option("--year-from", o.year_from, "First focus year")->capture_default_str();
  ma->add_option("--year-to", o.year_to, "Last focus year")->capture_default_str();
  out_opt(ma, "Counts JSON");
  commands.emplace_back(ma, cmd_match);

  auto* lo = app.add_subcommand("evaluate-loo", "Leave-one-out CRF evaluation with pooled token metrics");
  in_opt(lo, "IOB file with gold labels");
  lo->add_option("--report", o.report, "Metrics table")->capture_default_str();
  lo->add_option("--predictions", o.predictions, "IOB file with held-out predictions filled in");
  add_train_flags(lo, o);
  commands.emplace_back(lo, cmd_evaluate_loo);

  auto* ea = app.add_subcommand("error-analysis", "Positions and run lengths of predicted O inside gold references");
  in_opt(ea, "IOB file with gold and predicted labels");
  ea->add_option("--histogram", o.histogram, "Relative-position histogram (default stdout)");
  ea->add_option("--runs", o.runs, "O-run length counts");
  ea->add_option("--bin-width", o.bin_width, "Histogram bin width")
      ->capture_default_str()
      ->check(CLI::Range(1e-6, 1.0));
  commands.emplace_back(ea, cmd_error_analysis);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    for (auto& [cmd, fn] : commands) {
      if (cmd->parsed()) return fn(o);
    }
    return kExitUsage;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kExitData;
  } catch (const crf::TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const eval::FoldError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}
