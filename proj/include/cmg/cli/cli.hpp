#pragma once

#include "cmg/corpus.hpp"
#include "cmg/preprocess.hpp"
#include "cmg/seq2seq/model.hpp"
#include "cmg/trainer/trainer.hpp"
#include "cmg/vocab.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cmg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct VocabOptions {
  int min_freq = 1;
  std::optional<int> max_size;
};

// Settings for every subcommand. Each JSON section is optional and every
// field in it is optional; unknown sections or fields raise DataError.
struct RunConfig {
  CommitFilterConfig filter;
  preprocess::PipelineConfig pipeline = preprocess::PipelineConfig::rigorous();
  std::optional<std::filesystem::path> lexicon;
  SplitSpec split;
  seq2seq::ModelConfig model;
  trainer::TrainConfig train;
  VocabOptions vocab;
  int nngen_k = 5;

  // {"filter":{...},"pipeline":{...},"split":{...},"model":{...},
  //  "train":{...},"vocab":{...},"nngen":{...}}
  static RunConfig from_json(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
};

// Template match over whitespace tokens; "<*>" matches one or more tokens.
bool matches_pattern(std::span<const std::string> message, std::span<const std::string> pattern);

// Fraction of messages matching `pattern`. Throws DomainError when
// `messages` is empty.
double count_pattern(std::span<const TokenSeq> messages, std::string_view pattern);

// Entry point behind the `cmg` executable; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cmg::cli
