#include "cmg/corpus.hpp"

#include "cmg/errors.hpp"
#include "cmg/random.hpp"
#include "cmg/utf8.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cmg {

bool is_valid_sha(std::string_view sha) {
  return sha.size() == 40 && std::all_of(sha.begin(), sha.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

void CommitFilterConfig::validate() const {
  if (max_diff_bytes == 0) throw DomainError("filter config: max_diff_bytes must be positive");
  if (per_repo_cap == 0) throw DomainError("filter config: per_repo_cap must be positive");
}

std::string_view to_string(FilterReason reason) {
  switch (reason) {
    case FilterReason::keep: return "keep";
    case FilterReason::merge: return "merge";
    case FilterReason::initial: return "initial";
    case FilterReason::oversize: return "oversize";
  }
  return "unknown";
}

FilterReason filter_commit(const RawCommit& commit, const CommitFilterConfig& cfg) {
  if (cfg.drop_merges && commit.parent_count > 1) return FilterReason::merge;
  if (cfg.drop_initial && commit.parent_count == 0) return FilterReason::initial;
  if (commit.diff.size() > cfg.max_diff_bytes) return FilterReason::oversize;
  return FilterReason::keep;
}

RawCommit commit_from_json(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(sanitize_utf8(line));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto text_field = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw DataError(std::string("missing field '") + key + "'");
      return {};
    }
    if (!j.at(key).is_string()) throw DataError(std::string("field '") + key + "' is not a string");
    return sanitize_utf8(j.at(key).get<std::string>());
  };
  RawCommit c;
  c.repo = text_field("repo", false);
  c.sha = text_field("sha", true);
  c.message = text_field("message", true);
  c.diff = text_field("diff", true);
  if (!is_valid_sha(c.sha)) throw DataError("sha '" + c.sha + "' is not 40 lowercase hex digits");
  if (!j.contains("parent_count")) throw DataError("missing field 'parent_count'");
  const auto& pc = j.at("parent_count");
  if (!pc.is_number_integer() || pc.get<long long>() < 0) {
    throw DataError("parent_count must be a non-negative integer");
  }
  c.parent_count = static_cast<int>(pc.get<long long>());
  return c;
}

std::string to_json_line(const RawCommit& commit) {
  nlohmann::ordered_json j;
  j["repo"] = commit.repo;
  j["sha"] = commit.sha;
  j["message"] = commit.message;
  j["diff"] = commit.diff;
  j["parent_count"] = commit.parent_count;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void read_jsonl(const std::filesystem::path& path, const CommitSink& on_commit,
                const ErrorSink& on_error) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      on_commit(commit_from_json(line));
    } catch (const DataError& e) {
      on_error(RecordError{lineno, e.what()});
    }
  }
}

namespace {

std::string shell_quote(std::string_view arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += '\'';
  return out;
}

std::string run_git(const std::filesystem::path& repo, const std::vector<std::string>& args) {
  std::string cmd = "git -C " + shell_quote(repo.string()) + " -c core.quotepath=off";
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw IoError("cannot run git");
  std::string out;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = ::pclose(pipe);
  if (status != 0) {
    throw IoError("git " + (args.empty() ? std::string() : args.front()) + " failed in " +
                  repo.string());
  }
  return out;
}

}  // namespace

void read_git_repo(const std::filesystem::path& path, std::size_t cap,
                   const CommitSink& on_commit, const ErrorSink& on_error) {
  if (!std::filesystem::exists(path)) throw IoError("no such repository: " + path.string());
  std::string listing;
  try {
    listing = run_git(path, {"rev-list", "--parents", "HEAD"});
  } catch (const IoError&) {
    throw IoError(path.string() + " is not a git repository with a resolvable HEAD");
  }
  const std::string repo_name = std::filesystem::weakly_canonical(path).filename().string();
  std::istringstream lines(listing);
  std::string line;
  std::size_t yielded = 0;
  long ordinal = 0;
  while (yielded < cap && std::getline(lines, line)) {
    ++ordinal;
    std::istringstream fields(line);
    RawCommit c;
    c.repo = repo_name;
    fields >> c.sha;
    std::string parent;
    int parents = 0;
    while (fields >> parent) ++parents;
    c.parent_count = parents;
    try {
      std::string message = run_git(path, {"log", "-1", "--format=%B", c.sha});
      while (!message.empty() && (message.back() == '\n' || message.back() == '\r')) {
        message.pop_back();
      }
      c.message = sanitize_utf8(message);
      c.diff = sanitize_utf8(
          run_git(path, {"show", "--format=", "--no-color", "--no-ext-diff", "--no-renames", c.sha}));
    } catch (const IoError& e) {
      on_error(RecordError{ordinal, e.what()});
      continue;
    }
    on_commit(std::move(c));
    ++yielded;
  }
}

ReadResult read_corpus(const std::filesystem::path& path, CorpusFormat format,
                       std::size_t per_repo_cap) {
  ReadResult r;
  auto keep = [&r](RawCommit&& c) { r.commits.push_back(std::move(c)); };
  auto fail = [&r](const RecordError& e) { r.errors.push_back(e); };
  if (format == CorpusFormat::jsonl) {
    read_jsonl(path, keep, fail);
  } else {
    read_git_repo(path, per_repo_cap, keep, fail);
  }
  return r;
}

std::vector<RawCommit> apply_repo_cap(std::vector<RawCommit> commits, std::size_t cap) {
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<RawCommit> out;
  out.reserve(commits.size());
  for (auto& c : commits) {
    if (seen[c.repo]++ < cap) out.push_back(std::move(c));
  }
  return out;
}

FilterSummary filter_commits(std::vector<RawCommit> commits, const CommitFilterConfig& cfg) {
  cfg.validate();
  FilterSummary s;
  for (auto& c : apply_repo_cap(std::move(commits), cfg.per_repo_cap)) {
    const FilterReason reason = filter_commit(c, cfg);
    if (reason == FilterReason::keep) {
      s.kept.push_back(std::move(c));
    } else {
      ++s.dropped[std::string(to_string(reason))];
    }
  }
  return s;
}

void SplitSpec::validate() const {
  if (sample_size < 10) throw DomainError("split: sample_size must be at least 10");
  double total = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw DomainError("split: ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("split: ratios must sum to 1");
}

SplitIndices sample_and_split(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < spec.sample_size) {
    throw DomainError("split: corpus has " + std::to_string(n) +
                      " examples, fewer than sample_size " + std::to_string(spec.sample_size));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(spec.seed, 0x5b1));
  // Partial Fisher-Yates: the first sample_size slots become a uniform sample.
  for (std::size_t i = 0; i < spec.sample_size; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  const auto s = static_cast<double>(spec.sample_size);
  const auto n_valid = static_cast<std::size_t>(std::floor(spec.ratios[1] * s + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(spec.ratios[2] * s + 1e-9));
  const std::size_t n_train = spec.sample_size - n_valid - n_test;

  SplitIndices out;
  auto first = idx.begin();
  out.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  first += static_cast<std::ptrdiff_t>(n_train);
  out.valid.assign(first, first + static_cast<std::ptrdiff_t>(n_valid));
  first += static_cast<std::ptrdiff_t>(n_valid);
  out.test.assign(first, first + static_cast<std::ptrdiff_t>(n_test));
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

CorpusStats corpus_stats(std::span<const ProcessedExample> examples) {
  CorpusStats s;
  std::set<std::string_view> distinct;
  for (const auto& ex : examples) {
    ++s.count;
    ++s.source_hist[ex.source.size()];
    ++s.target_hist[ex.target.size()];
    distinct.insert(ex.source.begin(), ex.source.end());
    distinct.insert(ex.target.begin(), ex.target.end());
  }
  s.vocab_estimate = distinct.size();
  return s;
}

std::string stats_to_json(const CorpusStats& stats) {
  auto hist = [](const std::map<std::size_t, std::size_t>& h) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [len, freq] : h) j[std::to_string(len)] = freq;
    return j;
  };
  nlohmann::ordered_json j;
  j["count"] = stats.count;
  j["source_hist"] = hist(stats.source_hist);
  j["target_hist"] = hist(stats.target_hist);
  j["vocab_estimate"] = stats.vocab_estimate;
  return j.dump();
}

}  // namespace cmg
