#include "cmg/baseline/nngen.hpp"

#include "cmg/errors.hpp"
#include "cmg/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace cmg::baseline {

double BowVector::count(int term) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), std::make_pair(term, 0.0),
                                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return it != entries.end() && it->first == term ? it->second : 0.0;
}

BowIndex BowIndex::build(std::span<const ProcessedExample> train) {
  if (train.empty()) throw DomainError("nngen: empty training set");
  BowIndex idx;
  for (const auto& ex : train) {
    if (ex.source.empty()) continue;
    std::map<int, double> counts;
    for (const auto& tok : ex.source) {
      const auto [it, added] = idx.terms_.emplace(tok, static_cast<int>(idx.terms_.size()));
      if (added) idx.postings_.emplace_back();
      counts[it->second] += 1.0;
    }
    BowVector v;
    double sq = 0.0;
    const std::size_t doc = idx.vectors_.size();
    for (const auto& [term, c] : counts) {
      v.entries.emplace_back(term, c);
      idx.postings_[static_cast<std::size_t>(term)].emplace_back(doc, c);
      sq += c * c;
    }
    v.norm = std::sqrt(sq);
    idx.vectors_.push_back(std::move(v));
    idx.diffs_.push_back(ex.source);
    idx.messages_.push_back(ex.target);
  }
  if (idx.vectors_.empty()) throw DomainError("nngen: every training diff is empty");

  std::map<TokenSeq, std::pair<std::size_t, std::size_t>> freq;  // message -> (count, first)
  for (std::size_t i = 0; i < idx.messages_.size(); ++i) {
    auto [it, added] = freq.emplace(idx.messages_[i], std::make_pair(std::size_t{0}, i));
    ++it->second.first;
  }
  std::size_t best_count = 0;
  for (const auto& [msg, cf] : freq) {
    if (cf.first > best_count || (cf.first == best_count && cf.second < idx.most_frequent_)) {
      best_count = cf.first;
      idx.most_frequent_ = cf.second;
    }
  }
  return idx;
}

BowVector BowIndex::vectorize(std::span<const std::string> tokens) const {
  std::map<int, double> known;
  std::map<std::string, double> unknown;
  for (const auto& tok : tokens) {
    const auto it = terms_.find(tok);
    if (it != terms_.end()) {
      known[it->second] += 1.0;
    } else {
      unknown[tok] += 1.0;
    }
  }
  BowVector v;
  double sq = 0.0;
  for (const auto& [term, c] : known) {
    v.entries.emplace_back(term, c);
    sq += c * c;
  }
  for (const auto& [tok, c] : unknown) sq += c * c;
  v.norm = std::sqrt(sq);
  return v;
}

std::vector<double> BowIndex::cosine_all(std::span<const std::string> query) const {
  const BowVector q = vectorize(query);
  std::vector<double> dot(vectors_.size(), 0.0);
  for (const auto& [term, qc] : q.entries) {
    for (const auto& [doc, dc] : postings_[static_cast<std::size_t>(term)]) dot[doc] += qc * dc;
  }
  std::vector<double> out(vectors_.size(), 0.0);
  if (q.norm == 0.0) return out;
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = dot[d] / (q.norm * vectors_[d].norm);
  return out;
}

Retrieval nngen_retrieve(const BowIndex& index, std::span<const std::string> query, int k) {
  if (k < 1) throw DomainError("nngen: k must be at least 1");
  Retrieval r;
  if (query.empty()) {
    const TokenSeq& msg = index.most_frequent_message();
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index.message(i) == msg) {
        r.index = i;
        break;
      }
    }
    r.fallback = true;
    return r;
  }
  const auto cos = index.cosine_all(query);
  std::vector<std::size_t> order(cos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto top = std::min(order.size(), static_cast<std::size_t>(k));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&cos](std::size_t a, std::size_t b) {
                      return cos[a] != cos[b] ? cos[a] > cos[b] : a < b;
                    });
  std::vector<std::size_t> candidates(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top));
  std::sort(candidates.begin(), candidates.end());
  bool first = true;
  for (const auto c : candidates) {
    const double b = metrics::sentence_bleu_smoothed(query, index.diff(c));
    if (first || b > r.bleu) {
      r.index = c;
      r.bleu = b;
      r.cosine = cos[c];
      first = false;
    }
  }
  return r;
}

const TokenSeq& nngen_generate(const BowIndex& index, std::span<const std::string> query, int k) {
  return index.message(nngen_retrieve(index, query, k).index);
}

}  // namespace cmg::baseline
