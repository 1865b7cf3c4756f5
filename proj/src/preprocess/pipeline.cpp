#include "cmg/errors.hpp"
#include "cmg/preprocess.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>

namespace cmg::preprocess {

std::string_view to_string(Rejection reason) {
  switch (reason) {
    case Rejection::msg_too_short: return "msg-too-short";
    case Rejection::msg_too_long: return "msg-too-long";
    case Rejection::no_verb: return "no-verb";
    case Rejection::empty_diff: return "empty-diff";
    case Rejection::diff_too_long: return "diff-too-long";
  }
  return "unknown";
}

namespace {

TokenSeq message_tokens(const RawCommit& c, const PipelineConfig& cfg) {
  if (cfg.mode == Mode::reference) return reference_message_tokens(c.message);
  return tokenize_message(first_sentence(clean_message(first_line(c.message))));
}

TokenSeq diff_tokens(const RawCommit& c, const PipelineConfig& cfg) {
  if (cfg.mode == Mode::reference) return reference_diff_tokens(c.diff);
  const ParsedDiff parsed = parse_diff(c.diff);
  return clean_and_tokenize_diff(parsed.files, cfg);
}

int min_tokens(const PipelineConfig& cfg) {
  return cfg.mode == Mode::rigorous ? cfg.min_msg_tokens : 1;
}

}  // namespace

ProcessResult process_example(const RawCommit& commit, const PipelineConfig& cfg,
                              const PosLexicon& lexicon, const std::set<std::string>* top_verbs) {
  ProcessResult r;
  TokenSeq target = message_tokens(commit, cfg);
  const auto len = static_cast<int>(target.size());
  if (len < min_tokens(cfg)) {
    r.rejection = Rejection::msg_too_short;
    return r;
  }
  if (len > cfg.max_msg_tokens) {
    r.rejection = Rejection::msg_too_long;
    return r;
  }
  switch (cfg.verb_filter) {
    case VerbFilter::off:
      break;
    case VerbFilter::starts_with_verb:
      if (tag_and_verb_filter(target, lexicon) == VerbCheck::rejected) {
        r.rejection = Rejection::no_verb;
        return r;
      }
      break;
    case VerbFilter::vdo_approx:
      if (!top_verbs) throw StateError("vdo-approx verb filter needs the top verb list");
      if (!top_verbs->count(target.front())) {
        r.rejection = Rejection::no_verb;
        return r;
      }
      break;
  }
  TokenSeq source = diff_tokens(commit, cfg);
  if (source.empty()) {
    r.rejection = Rejection::empty_diff;
    return r;
  }
  if (static_cast<int>(source.size()) > cfg.max_diff_tokens) {
    r.rejection = Rejection::diff_too_long;
    return r;
  }
  r.example = ProcessedExample{std::move(source), std::move(target), commit.sha};
  return r;
}

std::set<std::string> top_first_verbs(std::span<const RawCommit> commits,
                                      const PipelineConfig& cfg, const PosLexicon& lexicon,
                                      std::size_t n) {
  std::map<std::string, long> counts;
  for (const auto& c : commits) {
    const TokenSeq tokens = message_tokens(c, cfg);
    const auto len = static_cast<int>(tokens.size());
    if (len < min_tokens(cfg) || len > cfg.max_msg_tokens) continue;
    if (tag_and_verb_filter(tokens, lexicon) != VerbCheck::rejected) ++counts[tokens.front()];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> out;
  for (std::size_t k = 0; k < ranked.size() && k < n; ++k) out.insert(ranked[k].first);
  return out;
}

PipelineOutput run_pipeline(std::span<const RawCommit> commits, const PipelineConfig& cfg,
                            const PosLexicon& lexicon) {
  cfg.validate();
  std::set<std::string> top;
  if (cfg.verb_filter == VerbFilter::vdo_approx) top = top_first_verbs(commits, cfg, lexicon);
  PipelineOutput out;
  for (const auto& c : commits) {
    ProcessResult r = process_example(c, cfg, lexicon, &top);
    if (r.example) {
      out.examples.push_back(std::move(*r.example));
    } else {
      out.rejected.push_back({c.sha, *r.rejection});
    }
  }
  return out;
}

std::string to_json_line(const Rejected& r) {
  nlohmann::ordered_json j;
  j["sha"] = r.sha;
  j["reason"] = std::string(to_string(r.reason));
  return j.dump();
}

}  // namespace cmg::preprocess
