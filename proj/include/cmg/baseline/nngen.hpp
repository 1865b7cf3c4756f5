#pragma once

#include "cmg/example.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cmg::baseline {

inline constexpr int kDefaultK = 5;

// Sparse bag-of-words counts keyed by term id, sorted by id.
struct BowVector {
  std::vector<std::pair<int, double>> entries;
  double norm = 0.0;

  double count(int term) const;
};

// Nearest-neighbour index over training diffs. Examples with an empty diff
// are left out.
class BowIndex {
 public:
  static BowIndex build(std::span<const ProcessedExample> train);

  std::size_t size() const { return messages_.size(); }
  std::size_t term_count() const { return terms_.size(); }
  const TokenSeq& message(std::size_t i) const { return messages_[i]; }
  const TokenSeq& diff(std::size_t i) const { return diffs_[i]; }
  const BowVector& vector(std::size_t i) const { return vectors_[i]; }
  // Training message seen most often, earliest first on ties.
  const TokenSeq& most_frequent_message() const { return messages_[most_frequent_]; }

  // Query counts over indexed terms; unknown tokens still add to the norm.
  BowVector vectorize(std::span<const std::string> tokens) const;
  // Cosine similarity of the query to every indexed diff.
  std::vector<double> cosine_all(std::span<const std::string> query) const;

 private:
  std::unordered_map<std::string, int> terms_;
  std::vector<std::vector<std::pair<std::size_t, double>>> postings_;  // term -> (doc, count)
  std::vector<BowVector> vectors_;
  std::vector<TokenSeq> diffs_;
  std::vector<TokenSeq> messages_;
  std::size_t most_frequent_ = 0;
};

struct Retrieval {
  std::size_t index = 0;  // position in the BowIndex
  double cosine = 0.0;
  double bleu = 0.0;
  bool fallback = false;  // empty query
};

// Top-k diffs by cosine (ties to the lower index), re-ranked by smoothed
// sentence BLEU-4 of each candidate diff against the query diff.
Retrieval nngen_retrieve(const BowIndex& index, std::span<const std::string> query, int k = kDefaultK);
const TokenSeq& nngen_generate(const BowIndex& index, std::span<const std::string> query,
                               int k = kDefaultK);

}  // namespace cmg::baseline
