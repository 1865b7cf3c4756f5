#pragma once

#include "cmg/corpus.hpp"
#include "cmg/example.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cmg::preprocess {

enum class Mode { reference, rigorous };
enum class VerbFilter { vdo_approx, starts_with_verb, off };

std::string_view to_string(Mode mode);
std::string_view to_string(VerbFilter filter);
Mode parse_mode(std::string_view text);
VerbFilter parse_verb_filter(std::string_view text);

struct PipelineConfig {
  Mode mode = Mode::rigorous;
  int max_msg_tokens = 30;
  int min_msg_tokens = 2;  // rigorous only; reference requires one token
  int max_diff_tokens = 100;
  std::set<std::string> extension_whitelist{"java"};  // empty keeps every file
  VerbFilter verb_filter = VerbFilter::starts_with_verb;

  static PipelineConfig reference();
  static PipelineConfig rigorous();
  void validate() const;
};

// ---- messages ----------------------------------------------------------

// Removes labels, issue references, mentions, URLs and hash fragments,
// replaces version numbers with <version>, splits camelCase, drops
// characters outside printable ASCII, lowercases and collapses whitespace.
std::string clean_message(std::string_view raw);

std::string_view first_line(std::string_view text);

// Drops standalone words of 7-40 hex digits that mix digits and letters.
std::string strip_hashes(std::string_view text);

// First line, cut at the first '.', '!' or '?' that is followed by
// whitespace or ends the text; trailing punctuation and extra whitespace
// removed.
std::string first_sentence(std::string_view text);

// Splits at lower->upper, acronym->word and digit/letter boundaries.
std::vector<std::string> split_subtokens(std::string_view token);

// Word runs and punctuation runs; <version> stays one token.
TokenSeq tokenize_message(std::string_view text);

inline constexpr std::string_view kVersionToken = "<version>";

// ---- part of speech ------------------------------------------------------

enum class Tag { verb, noun, other };

std::string_view to_string(Tag tag);

// Word -> coarse tag table. Each line is `token<TAB>TAG`; the first line for
// a token sets its tag, and a later VERB line marks it as a verb that the
// tagger may mislabel (used by the pronoun retry).
class PosLexicon {
 public:
  static PosLexicon parse(std::string_view text);
  static PosLexicon load(const std::filesystem::path& path);
  static const PosLexicon& bundled();

  Tag tag(std::string_view token) const;  // unknown tokens are OTHER
  bool is_ambiguous_verb(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tags_.size(); }

 private:
  std::unordered_map<std::string, Tag> tags_;
  std::unordered_set<std::string> ambiguous_;
};

// Tags a sequence. A token right after the pronoun "i" that is an ambiguous
// verb is tagged VERB.
std::vector<Tag> tag_tokens(std::span<const std::string> tokens, const PosLexicon& lexicon);

enum class VerbCheck { first_word, pronoun_retry, rejected };

// Accepts when the first token is tagged VERB, or when it is tagged VERB
// after prepending "i".
VerbCheck tag_and_verb_filter(std::span<const std::string> tokens, const PosLexicon& lexicon);

// ---- diffs ---------------------------------------------------------------

struct FileDiff {
  std::string filename;  // basename of the post-image (pre-image for deletions)
  std::string change_context;
  std::vector<std::string> added_lines;
  std::vector<std::string> removed_lines;
  int lines_changed = 0;

  bool operator==(const FileDiff&) const = default;
};

struct DiffParseError {
  std::size_t offset = 0;  // byte offset of the offending line
  std::string message;
};

struct ParsedDiff {
  std::vector<FileDiff> files;
  std::vector<DiffParseError> errors;
};

ParsedDiff parse_diff(std::string_view raw);

// Whitespace/punctuation tokenizer for code that keeps operators and comment
// markers such as ++ and // whole.
TokenSeq tokenize_code(std::string_view text);

// Tokens of one file: filename, context, then "-" lines, then "+" lines.
TokenSeq file_tokens(const FileDiff& file);

TokenSeq clean_and_tokenize_diff(std::span<const FileDiff> files, const PipelineConfig& cfg);

std::string extension_of(std::string_view filename);

// ---- reference mode ------------------------------------------------------

// WordPunct tokenization of a raw diff after removing hash fragments.
TokenSeq reference_diff_tokens(std::string_view diff);
TokenSeq reference_message_tokens(std::string_view message);

// ---- whole pipeline ------------------------------------------------------

enum class Rejection { msg_too_short, msg_too_long, no_verb, empty_diff, diff_too_long };

std::string_view to_string(Rejection reason);

struct ProcessResult {
  std::optional<ProcessedExample> example;
  std::optional<Rejection> rejection;

  bool accepted() const { return example.has_value(); }
};

// `top_verbs` is required for the vdo-approx verb filter.
ProcessResult process_example(const RawCommit& commit, const PipelineConfig& cfg,
                              const PosLexicon& lexicon,
                              const std::set<std::string>* top_verbs = nullptr);

// Most frequent first tokens tagged as verbs, ties broken lexicographically.
std::set<std::string> top_first_verbs(std::span<const RawCommit> commits,
                                      const PipelineConfig& cfg, const PosLexicon& lexicon,
                                      std::size_t n = 20);

struct Rejected {
  std::string sha;
  Rejection reason;
};

struct PipelineOutput {
  std::vector<ProcessedExample> examples;
  std::vector<Rejected> rejected;
};

PipelineOutput run_pipeline(std::span<const RawCommit> commits, const PipelineConfig& cfg,
                            const PosLexicon& lexicon);

std::string to_json_line(const Rejected& r);

}  // namespace cmg::preprocess
