#pragma once

#include "cmg/vocab.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmg::metrics {

using Tokens = std::span<const std::string>;

struct TokenPair {
  TokenSeq reference;
  TokenSeq hypothesis;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 2PR / (P + R), or 0 when both are 0.
double f1_score(double precision, double recall);

// Corpus BLEU on a 0-100 scale: clipped n-gram matches and hypothesis
// n-gram counts are summed over all pairs before the geometric mean, which
// skips orders that have no hypothesis n-gram in the whole corpus.
double bleu_corpus(std::span<const TokenPair> pairs, int max_n = 4);

// Sentence BLEU in [0, 1] with add-one smoothing of every n-gram precision.
double sentence_bleu_smoothed(Tokens reference, Tokens hypothesis, int max_n = 4);

Prf rouge_n(Tokens reference, Tokens hypothesis, int n);
std::size_t lcs_length(Tokens a, Tokens b);
Prf rouge_l(Tokens reference, Tokens hypothesis);

// Weighted LCS with f(k) = k^alpha over consecutive matches.
double weighted_lcs(Tokens reference, Tokens hypothesis, double alpha);
Prf rouge_w(Tokens reference, Tokens hypothesis, double alpha = 1.2);

struct MeteorParams {
  double recall_weight = 9.0;  // F_mean = (1 + w) P R / (R + w P)
  double penalty_gamma = 0.5;
  double penalty_beta = 3.0;
};

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

// Exact-match unigram alignment: each hypothesis token, left to right, takes
// the leftmost unused equal reference token.
MeteorAlignment meteor_align(Tokens reference, Tokens hypothesis);
double meteor(Tokens reference, Tokens hypothesis, const MeteorParams& params = {});

struct MetricSet {
  bool bleu = true;
  bool rouge = true;
  bool meteor = true;

  // Comma-separated subset of bleu, rouge, meteor.
  static MetricSet parse(std::string_view list);
};

// All scores on a 0-100 scale; metrics outside the requested set are absent.
struct EvalReport {
  std::optional<double> bleu;
  std::optional<double> rouge1;
  std::optional<double> rouge2;
  std::optional<double> rougeL;
  std::optional<double> rougeW;
  std::optional<double> meteor;
  std::size_t pairs = 0;

  std::string to_json() const;
  static EvalReport from_json(std::string_view text);
};

EvalReport evaluate(std::span<const TokenPair> pairs, const MetricSet& which = {},
                    const MeteorParams& meteor_params = {}, double rouge_w_alpha = 1.2);

// One whitespace-separated token sequence per line.
std::vector<TokenSeq> read_token_lines(const std::filesystem::path& path);

// Line-aligned reference and hypothesis files.
EvalReport evaluate_files(const std::filesystem::path& refs, const std::filesystem::path& hyps,
                          const MetricSet& which = {});

}  // namespace cmg::metrics
