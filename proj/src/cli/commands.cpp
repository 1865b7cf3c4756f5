#include "cmg/baseline/nngen.hpp"
#include "cmg/cli/cli.hpp"
#include "cmg/cli/svg.hpp"
#include "cmg/errors.hpp"
#include "cmg/example.hpp"
#include "cmg/metrics/metrics.hpp"
#include "cmg/trainer/checkpoint.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace cmg::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string in, out, config, pipeline, checkpoint, metrics = "bleu,rouge,meteor", hist_out, pattern;
  std::string format = "auto", refs, hyps, train, vocab, ratios;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<int> max_len, k, epochs;
  std::size_t index = 0;
};

RunConfig effective_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (!o.pipeline.empty()) {
    const auto mode = preprocess::parse_mode(o.pipeline);
    if (mode != cfg.pipeline.mode) {
      cfg.pipeline = mode == preprocess::Mode::reference ? preprocess::PipelineConfig::reference()
                                                         : preprocess::PipelineConfig::rigorous();
    }
  }
  if (o.seed) {
    cfg.split.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.n) cfg.split.sample_size = *o.n;
  if (!o.ratios.empty()) {
    std::array<double, 3> r{};
    std::istringstream in(o.ratios);
    std::string part;
    std::size_t i = 0;
    while (std::getline(in, part, ',')) {
      if (i == 3) throw CLI::ValidationError("--ratios", "expected three comma-separated numbers");
      try {
        std::size_t used = 0;
        r[i++] = std::stod(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::logic_error&) {
        throw CLI::ValidationError("--ratios", "not a number: " + part);
      }
    }
    if (i != 3) throw CLI::ValidationError("--ratios", "expected three comma-separated numbers");
    cfg.split.ratios = r;
  }
  if (o.k) cfg.nngen_k = *o.k;
  if (o.max_len) cfg.model.max_decode_len = *o.max_len;
  if (o.epochs) cfg.train.max_epochs = *o.epochs;
  cfg.validate();
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(std::move(line));
  }
  return lines;
}

// Token sequences from plain text (one space-joined sequence per line) or
// JSONL records carrying "hypothesis" or "target".
std::vector<TokenSeq> read_sequences(const fs::path& path) {
  if (path.extension() != ".jsonl") return metrics::read_token_lines(path);
  std::vector<TokenSeq> out;
  long lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("hypothesis")) {
        out.push_back(j.at("hypothesis").get<TokenSeq>());
      } else {
        out.push_back(j.at("target").get<TokenSeq>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string hypothesis_line(const std::string& sha, const TokenSeq& hyp) {
  nlohmann::ordered_json j;
  j["sha"] = sha;
  j["hypothesis"] = hyp;
  return j.dump();
}

fs::path sibling(const fs::path& path, std::string_view suffix) {
  return path.parent_path() / (path.stem().string() + std::string(suffix));
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// A training output directory resolves to its best/ checkpoint.
fs::path resolve_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json") && fs::exists(dir / "best" / "manifest.json")) return dir / "best";
  return dir;
}

const preprocess::PosLexicon& lexicon_for(const RunConfig& cfg, std::optional<preprocess::PosLexicon>& storage) {
  if (!cfg.lexicon) return preprocess::PosLexicon::bundled();
  storage = preprocess::PosLexicon::load(*cfg.lexicon);
  return *storage;
}

int cmd_ingest(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  CorpusFormat format;
  if (o.format == "git") {
    format = CorpusFormat::git_repo;
  } else if (o.format == "jsonl") {
    format = CorpusFormat::jsonl;
  } else {
    format = fs::is_directory(o.in) ? CorpusFormat::git_repo : CorpusFormat::jsonl;
  }
  auto read = read_corpus(o.in, format, cfg.filter.per_repo_cap);
  for (const auto& e : read.errors) err << "warning: record " << e.line << ": " << e.message << '\n';
  const std::size_t total = read.commits.size();
  auto summary = filter_commits(std::move(read.commits), cfg.filter);
  std::string text;
  for (const auto& c : summary.kept) {
    text += to_json_line(c);
    text += '\n';
  }
  ensure_parent(o.out);
  write_file_atomic(o.out, text);
  nlohmann::ordered_json report;
  report["read"] = total;
  report["errors"] = read.errors.size();
  report["kept"] = summary.kept.size();
  report["dropped"] = summary.dropped;
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_preprocess(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  std::optional<preprocess::PosLexicon> lex_storage;
  const auto& lexicon = lexicon_for(cfg, lex_storage);
  auto read = read_corpus(o.in, CorpusFormat::jsonl);
  for (const auto& e : read.errors) err << "warning: line " << e.line << ": " << e.message << '\n';
  const auto result = preprocess::run_pipeline(read.commits, cfg.pipeline, lexicon);
  const fs::path out_path = o.out;
  ensure_parent(out_path);
  write_examples(out_path, result.examples);
  std::string rejects;
  std::map<std::string, std::size_t> reasons;
  for (const auto& r : result.rejected) {
    rejects += to_json_line(r);
    rejects += '\n';
    ++reasons[std::string(preprocess::to_string(r.reason))];
  }
  write_file_atomic(sibling(out_path, ".rejects.jsonl"), rejects);
  nlohmann::ordered_json report;
  report["mode"] = preprocess::to_string(cfg.pipeline.mode);
  report["read"] = read.commits.size();
  report["accepted"] = result.examples.size();
  report["rejected"] = reasons;
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_split(const Options& o, std::ostream& out, std::ostream&) {
  const RunConfig cfg = effective_config(o);
  const auto lines = read_lines(o.in);
  const auto idx = sample_and_split(lines.size(), cfg.split);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  nlohmann::ordered_json report;
  for (const auto& [name, ids] : {std::pair{"train", &idx.train}, std::pair{"valid", &idx.valid},
                                  std::pair{"test", &idx.test}}) {
    std::string text;
    for (std::size_t i : *ids) {
      text += lines[i];
      text += '\n';
    }
    write_file_atomic(dir / (std::string(name) + ".jsonl"), text);
    report[name] = ids->size();
  }
  out << report.dump() << '\n';
  return kExitOk;
}

std::pair<Vocabulary, Vocabulary> build_vocabs(std::span<const ProcessedExample> examples, const VocabOptions& v) {
  std::vector<TokenSeq> src, tgt;
  src.reserve(examples.size());
  tgt.reserve(examples.size());
  for (const auto& ex : examples) {
    src.push_back(ex.source);
    tgt.push_back(ex.target);
  }
  return {build_vocab(src, v.min_freq, v.max_size), build_vocab(tgt, v.min_freq, v.max_size)};
}

int cmd_vocab(const Options& o, std::ostream& out, std::ostream&) {
  const RunConfig cfg = effective_config(o);
  const auto examples = read_examples(o.in);
  const auto [src, tgt] = build_vocabs(examples, cfg.vocab);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  src.save(dir / "src_vocab.json");
  tgt.save(dir / "tgt_vocab.json");
  nlohmann::ordered_json report;
  report["src_size"] = src.size();
  report["tgt_size"] = tgt.size();
  report["src_fingerprint"] = fingerprint_hex(src.fingerprint());
  report["tgt_fingerprint"] = fingerprint_hex(tgt.fingerprint());
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  const fs::path in = o.in;
  const auto train_examples = read_examples(in / "train.jsonl");
  const auto valid_examples = read_examples(in / "valid.jsonl");
  if (train_examples.empty()) throw DomainError("train: " + (in / "train.jsonl").string() + " is empty");
  if (valid_examples.empty()) throw DomainError("train: " + (in / "valid.jsonl").string() + " is empty");

  Vocabulary src, tgt;
  if (!o.vocab.empty()) {
    src = Vocabulary::load(fs::path(o.vocab) / "src_vocab.json");
    tgt = Vocabulary::load(fs::path(o.vocab) / "tgt_vocab.json");
  } else {
    std::tie(src, tgt) = build_vocabs(train_examples, cfg.vocab);
  }
  seq2seq::ModelConfig mc = cfg.model;
  mc.src_vocab = src.size();
  mc.tgt_vocab = tgt.size();
  auto initial = seq2seq::ModelParams::initialize(mc, cfg.train.seed);

  const auto train_set = trainer::encode_examples(train_examples, src, tgt);
  const auto valid_set = trainer::encode_examples(valid_examples, src, tgt);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  trainer::TrainHooks hooks;
  hooks.checkpoints = trainer::CheckpointSink{dir, &src, &tgt};
  hooks.on_epoch = [&err](const trainer::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d train %.6f valid %.6f lr %g (%.1fs)\n", r.epoch, r.train_loss,
                  r.valid_loss, r.lr, r.seconds);
    err << line << std::flush;
  };
  const auto result = trainer::train(std::move(initial), train_set, valid_set, cfg.train, hooks);
  nlohmann::ordered_json report;
  report["best_epoch"] = result.best_epoch;
  report["best_valid_loss"] = result.best_valid_loss;
  report["epochs"] = result.log.records.size();
  report["stopped_early"] = result.stopped_early;
  if (result.aborted) report["aborted"] = *result.aborted;
  out << report.dump() << '\n';
  return result.aborted ? kExitData : kExitOk;
}

int cmd_generate(const Options& o, std::ostream& out, std::ostream&) {
  effective_config(o);
  auto ck = trainer::load_checkpoint(resolve_checkpoint(o.checkpoint));
  const int max_len = o.max_len ? *o.max_len : ck.params.config.max_decode_len;
  const auto examples = read_examples(o.in);
  std::string text;
  for (const auto& ex : examples) {
    const auto ids = encode(ck.src_vocab, ex.source, true);
    const auto gen = seq2seq::greedy_decode(ck.params, ids, max_len);
    text += hypothesis_line(ex.sha, decode(ck.tgt_vocab, gen.tokens));
    text += '\n';
  }
  ensure_parent(o.out);
  write_file_atomic(o.out, text);
  out << "{\"hypotheses\":" << examples.size() << "}\n";
  return kExitOk;
}

int cmd_nngen(const Options& o, std::ostream& out, std::ostream&) {
  const RunConfig cfg = effective_config(o);
  const auto train = read_examples(o.train);
  const auto index = baseline::BowIndex::build(train);
  const auto queries = read_examples(o.in);
  std::string text;
  for (const auto& q : queries) {
    text += hypothesis_line(q.sha, baseline::nngen_generate(index, q.source, cfg.nngen_k));
    text += '\n';
  }
  ensure_parent(o.out);
  write_file_atomic(o.out, text);
  out << "{\"hypotheses\":" << queries.size() << "}\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream&) {
  const auto which = metrics::MetricSet::parse(o.metrics);
  auto refs = read_sequences(o.refs);
  auto hyps = read_sequences(o.hyps);
  if (refs.size() != hyps.size()) {
    throw DataError("evaluate: " + o.refs + " has " + std::to_string(refs.size()) + " entries but " + o.hyps +
                    " has " + std::to_string(hyps.size()));
  }
  std::vector<metrics::TokenPair> pairs;
  pairs.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) pairs.push_back({std::move(refs[i]), std::move(hyps[i])});
  const auto report = metrics::evaluate(pairs, which).to_json();
  if (!o.out.empty()) {
    ensure_parent(o.out);
    write_file_atomic(o.out, report + "\n");
  }
  out << report << '\n';
  return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out, std::ostream&) {
  const auto examples = read_examples(o.in);
  const auto stats = corpus_stats(examples);
  const auto json = stats_to_json(stats);
  if (!o.out.empty()) {
    ensure_parent(o.out);
    write_file_atomic(o.out, json + "\n");
  } else {
    out << json << '\n';
  }
  if (!o.hist_out.empty()) {
    ensure_parent(o.hist_out);
    write_file_atomic(o.hist_out, histogram_svg(stats.source_hist, "Diff length distribution", "diff tokens"));
  }
  if (!o.pattern.empty()) {
    std::vector<TokenSeq> messages;
    messages.reserve(examples.size());
    for (const auto& ex : examples) messages.push_back(ex.target);
    const double fraction = count_pattern(messages, o.pattern);
    nlohmann::ordered_json report;
    report["pattern"] = o.pattern;
    report["matches"] = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(messages.size())));
    report["total"] = messages.size();
    report["fraction"] = fraction;
    out << report.dump() << '\n';
  }
  return kExitOk;
}

int cmd_attention(const Options& o, std::ostream& out, std::ostream&) {
  auto ck = trainer::load_checkpoint(resolve_checkpoint(o.checkpoint));
  const int max_len = o.max_len ? *o.max_len : ck.params.config.max_decode_len;
  const auto examples = read_examples(o.in);
  if (o.index >= examples.size()) {
    throw RangeError("attention: index " + std::to_string(o.index) + " but " + o.in + " holds " +
                     std::to_string(examples.size()) + " examples");
  }
  const auto& ex = examples[o.index];
  const auto ids = encode(ck.src_vocab, ex.source, true);
  const auto gen = seq2seq::greedy_decode(ck.params, ids, max_len);
  TokenSeq source{std::string(kSosToken)};
  source.insert(source.end(), ex.source.begin(), ex.source.end());
  source.emplace_back(kEosToken);
  const TokenSeq target = decode(ck.tgt_vocab, gen.tokens);
  const fs::path json_path = o.out;
  ensure_parent(json_path);
  write_file_atomic(json_path, attention_json(source, target, gen.attention.alpha) + "\n");
  write_file_atomic(sibling(json_path, ".svg"), attention_svg(source, target, gen.attention.alpha));
  nlohmann::ordered_json report;
  report["sha"] = ex.sha;
  report["hypothesis"] = target;
  out << report.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Commit message generation from diffs", "cmg"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  };
  auto add_seed = [&o](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed"); };

  auto* ingest = app.add_subcommand("ingest", "Read commits from a JSONL archive or git repository and filter them");
  ingest->add_option("--in", o.in, "JSONL file or git repository")->required();
  ingest->add_option("--out", o.out, "Raw commit JSONL")->required();
  ingest->add_option("--format", o.format, "auto, jsonl or git")->check(CLI::IsMember({"auto", "jsonl", "git"}));
  add_config(ingest);

  auto* prep = app.add_subcommand("preprocess", "Clean and tokenize raw commits");
  prep->add_option("--in", o.in, "Raw commit JSONL")->required();
  prep->add_option("--out", o.out, "Processed JSONL; rejects go to <stem>.rejects.jsonl")->required();
  prep->add_option("--pipeline", o.pipeline, "reference or rigorous")
      ->check(CLI::IsMember({"reference", "rigorous"}));
  add_config(prep);

  auto* split = app.add_subcommand("split", "Sample and partition records into train/valid/test");
  split->add_option("--in", o.in, "JSONL records")->required();
  split->add_option("--out", o.out, "Output directory")->required();
  split->add_option("--n", o.n, "Sample size");
  split->add_option("--ratios", o.ratios, "Train,valid,test ratios");
  add_seed(split);
  add_config(split);

  auto* vocab = app.add_subcommand("vocab", "Build source and target vocabularies");
  vocab->add_option("--in", o.in, "Processed training JSONL")->required();
  vocab->add_option("--out", o.out, "Output directory")->required();
  add_config(vocab);

  auto* train = app.add_subcommand("train", "Train the attentional encoder-decoder");
  train->add_option("--in", o.in, "Directory holding train.jsonl and valid.jsonl")->required();
  train->add_option("--out", o.out, "Checkpoint directory")->required();
  train->add_option("--vocab", o.vocab, "Directory holding src_vocab.json and tgt_vocab.json");
  train->add_option("--epochs", o.epochs, "Maximum number of epochs");
  add_seed(train);
  add_config(train);

  auto* gen = app.add_subcommand("generate", "Generate messages with a trained model");
  gen->add_option("--checkpoint", o.checkpoint, "Checkpoint or training directory")->required();
  gen->add_option("--in", o.in, "Processed JSONL")->required();
  gen->add_option("--out", o.out, "Hypotheses JSONL")->required();
  gen->add_option("--max-len", o.max_len, "Maximum generated tokens");
  add_config(gen);

  auto* nn = app.add_subcommand("nngen", "Nearest-neighbour baseline");
  nn->add_option("--train", o.train, "Processed training JSONL")->required();
  nn->add_option("--in", o.in, "Processed query JSONL")->required();
  nn->add_option("--out", o.out, "Hypotheses JSONL")->required();
  nn->add_option("--k", o.k, "Candidates re-ranked by BLEU");
  add_config(nn);

  auto* eval = app.add_subcommand("evaluate", "Score hypotheses against references");
  eval->add_option("--refs", o.refs, "References: text lines or JSONL")->required();
  eval->add_option("--hyps", o.hyps, "Hypotheses: text lines or JSONL")->required();
  eval->add_option("--metrics", o.metrics, "Comma-separated subset of bleu,rouge,meteor");
  eval->add_option("--out", o.out, "Also write the report here");

  auto* stats = app.add_subcommand("stats", "Length histograms and pattern counts");
  stats->add_option("--in", o.in, "Processed JSONL")->required();
  stats->add_option("--out", o.out, "Stats JSON (default: stdout)");
  stats->add_option("--hist-out", o.hist_out, "SVG histogram of diff lengths");
  stats->add_option("--pattern", o.pattern, "Message template with <*> wildcards");

  auto* attn = app.add_subcommand("attention", "Export the attention map of one example");
  attn->add_option("--checkpoint", o.checkpoint, "Checkpoint or training directory")->required();
  attn->add_option("--in", o.in, "Processed JSONL")->required();
  attn->add_option("--out", o.out, "Attention JSON; the heatmap goes to <stem>.svg")->required();
  attn->add_option("--index", o.index, "Example position in --in");
  attn->add_option("--max-len", o.max_len, "Maximum generated tokens");

  std::vector<const char*> argv{"cmg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (app.got_subcommand(ingest)) return cmd_ingest(o, out, err);
    if (app.got_subcommand(prep)) return cmd_preprocess(o, out, err);
    if (app.got_subcommand(split)) return cmd_split(o, out, err);
    if (app.got_subcommand(vocab)) return cmd_vocab(o, out, err);
    if (app.got_subcommand(train)) return cmd_train(o, out, err);
    if (app.got_subcommand(gen)) return cmd_generate(o, out, err);
    if (app.got_subcommand(nn)) return cmd_nngen(o, out, err);
    if (app.got_subcommand(eval)) return cmd_evaluate(o, out, err);
    if (app.got_subcommand(stats)) return cmd_stats(o, out, err);
    if (app.got_subcommand(attn)) return cmd_attention(o, out, err);
    return kExitUsage;
  } catch (const CLI::CallForHelp&) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << sub->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace cmg::cli
