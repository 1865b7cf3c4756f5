#pragma once

#include "cmg/example.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cmg {

struct RawCommit {
  std::string repo;
  std::string sha;  // 40 lowercase hex digits
  std::string message;
  std::string diff;
  int parent_count = 1;

  bool operator==(const RawCommit&) const = default;
};

bool is_valid_sha(std::string_view sha);

struct CommitFilterConfig {
  std::size_t max_diff_bytes = 1u << 20;
  bool drop_merges = true;
  bool drop_initial = true;
  std::size_t per_repo_cap = 10000;

  void validate() const;
};

enum class FilterReason { keep, merge, initial, oversize };

std::string_view to_string(FilterReason reason);

FilterReason filter_commit(const RawCommit& commit, const CommitFilterConfig& cfg);

enum class CorpusFormat { jsonl, git_repo };

// A record that could not be read; the stream continues past it.
struct RecordError {
  long line = 0;  // 1-based line for JSONL, commit ordinal for git
  std::string message;
};

using CommitSink = std::function<void(RawCommit&&)>;
using ErrorSink = std::function<void(const RecordError&)>;

// Parses one JSONL record. Invalid UTF-8 in text fields is replaced with
// U+FFFD. Throws DataError on malformed records.
RawCommit commit_from_json(std::string_view line);
std::string to_json_line(const RawCommit& commit);

// JSONL records in file order.
void read_jsonl(const std::filesystem::path& path, const CommitSink& on_commit,
                const ErrorSink& on_error);

// Commits reachable from HEAD, newest first, at most `cap` of them. Root
// commits are yielded with parent_count 0.
void read_git_repo(const std::filesystem::path& path, std::size_t cap,
                   const CommitSink& on_commit, const ErrorSink& on_error);

struct ReadResult {
  std::vector<RawCommit> commits;
  std::vector<RecordError> errors;
};

// Collects a whole corpus. The per-repository cap applies to git input; use
// apply_repo_cap for JSONL archives.
ReadResult read_corpus(const std::filesystem::path& path, CorpusFormat format,
                       std::size_t per_repo_cap = 10000);

// Keeps the first `cap` commits of each repository, preserving order.
std::vector<RawCommit> apply_repo_cap(std::vector<RawCommit> commits, std::size_t cap);

struct FilterSummary {
  std::vector<RawCommit> kept;
  std::map<std::string, std::size_t> dropped;  // reason -> count
};

FilterSummary filter_commits(std::vector<RawCommit> commits, const CommitFilterConfig& cfg);

struct SplitSpec {
  std::size_t sample_size = 36000;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;  // each sorted ascending
};

// Draws sample_size of the n indices without replacement and partitions them.
// Valid and test sizes are floor(ratio * sample_size); the remainder goes to
// train.
SplitIndices sample_and_split(std::size_t n, const SplitSpec& spec);

struct CorpusStats {
  std::size_t count = 0;
  std::map<std::size_t, std::size_t> source_hist;  // token count -> frequency
  std::map<std::size_t, std::size_t> target_hist;
  std::size_t vocab_estimate = 0;  // distinct tokens over both sides
};

CorpusStats corpus_stats(std::span<const ProcessedExample> examples);

// {"count":N,"source_hist":{...},"target_hist":{...},"vocab_estimate":V}
std::string stats_to_json(const CorpusStats& stats);

}  // namespace cmg
