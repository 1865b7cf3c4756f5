#include "cmg/metrics/metrics.hpp"

#include "cmg/errors.hpp"
#include "cmg/example.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace cmg::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(Tokens tokens, int n) {
  NgramCounts out;
  const auto len = static_cast<std::size_t>(n);
  if (tokens.size() < len) return out;
  for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + len))];
  }
  return out;
}

std::size_t total(const NgramCounts& c) {
  std::size_t s = 0;
  for (const auto& [g, k] : c) s += k;
  return s;
}

std::size_t clipped_overlap(const NgramCounts& ref, const NgramCounts& hyp) {
  std::size_t s = 0;
  for (const auto& [g, k] : hyp) {
    const auto it = ref.find(g);
    if (it != ref.end()) s += std::min(k, it->second);
  }
  return s;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void check_n(int n) {
  if (n < 1) throw DomainError("n-gram order must be at least 1");
}

}  // namespace

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

double bleu_corpus(std::span<const TokenPair> pairs, int max_n) {
  check_n(max_n);
  if (pairs.empty()) throw DomainError("bleu_corpus: empty corpus");
  std::vector<double> matches(static_cast<std::size_t>(max_n), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(max_n), 0.0);
  double ref_len = 0.0, hyp_len = 0.0;
  for (const auto& p : pairs) {
    ref_len += static_cast<double>(p.reference.size());
    hyp_len += static_cast<double>(p.hypothesis.size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = ngrams(p.hypothesis, n);
      matches[static_cast<std::size_t>(n - 1)] +=
          static_cast<double>(clipped_overlap(ngrams(p.reference, n), h));
      counts[static_cast<std::size_t>(n - 1)] += static_cast<double>(total(h));
    }
  }
  // Orders with no hypothesis n-gram anywhere in the corpus are left out.
  double log_sum = 0.0;
  int orders = 0;
  for (int k = 0; k < max_n; ++k) {
    const auto K = static_cast<std::size_t>(k);
    if (counts[K] == 0.0) continue;
    if (matches[K] == 0.0) return 0.0;
    log_sum += std::log(matches[K] / counts[K]);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_sum / orders);
}

double sentence_bleu_smoothed(Tokens reference, Tokens hypothesis, int max_n) {
  check_n(max_n);
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto h = ngrams(hypothesis, n);
    const double m = static_cast<double>(clipped_overlap(ngrams(reference, n), h));
    log_sum += std::log((m + 1.0) / (static_cast<double>(total(h)) + 1.0));
  }
  const double c = static_cast<double>(hypothesis.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / max_n);
}

Prf rouge_n(Tokens reference, Tokens hypothesis, int n) {
  check_n(n);
  const auto r = ngrams(reference, n);
  const auto h = ngrams(hypothesis, n);
  const double overlap = static_cast<double>(clipped_overlap(r, h));
  Prf out;
  out.precision = ratio(overlap, static_cast<double>(total(h)));
  out.recall = ratio(overlap, static_cast<double>(total(r)));
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

std::size_t lcs_length(Tokens a, Tokens b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf rouge_l(Tokens reference, Tokens hypothesis) {
  const double lcs = static_cast<double>(lcs_length(reference, hypothesis));
  Prf out;
  out.precision = ratio(lcs, static_cast<double>(hypothesis.size()));
  out.recall = ratio(lcs, static_cast<double>(reference.size()));
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

double weighted_lcs(Tokens reference, Tokens hypothesis, double alpha) {
  const std::size_t m = reference.size(), n = hypothesis.size();
  auto f = [alpha](double k) { return std::pow(k, alpha); };
  std::vector<double> c((m + 1) * (n + 1), 0.0);
  std::vector<std::size_t> w((m + 1) * (n + 1), 0);
  auto at = [n](std::size_t i, std::size_t j) { return i * (n + 1) + j; };
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (reference[i - 1] == hypothesis[j - 1]) {
        const auto k = static_cast<double>(w[at(i - 1, j - 1)]);
        c[at(i, j)] = c[at(i - 1, j - 1)] + f(k + 1.0) - f(k);
        w[at(i, j)] = w[at(i - 1, j - 1)] + 1;
      } else {
        c[at(i, j)] = std::max(c[at(i - 1, j)], c[at(i, j - 1)]);
      }
    }
  }
  return c[at(m, n)];
}

Prf rouge_w(Tokens reference, Tokens hypothesis, double alpha) {
  if (!(alpha > 1.0)) throw DomainError("rouge_w: alpha must exceed 1");
  Prf out;
  if (reference.empty() || hypothesis.empty()) return out;
  const double wlcs = weighted_lcs(reference, hypothesis, alpha);
  auto f = [alpha](double k) { return std::pow(k, alpha); };
  auto f_inv = [alpha](double x) { return std::pow(x, 1.0 / alpha); };
  out.precision = f_inv(wlcs / f(static_cast<double>(hypothesis.size())));
  out.recall = f_inv(wlcs / f(static_cast<double>(reference.size())));
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

MeteorAlignment meteor_align(Tokens reference, Tokens hypothesis) {
  std::vector<bool> used(reference.size(), false);
  MeteorAlignment a;
  std::ptrdiff_t last_ref = -2;
  bool last_hyp_matched = false;
  for (std::size_t j = 0; j < hypothesis.size(); ++j) {
    std::ptrdiff_t hit = -1;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      if (!used[i] && reference[i] == hypothesis[j]) {
        hit = static_cast<std::ptrdiff_t>(i);
        break;
      }
    }
    if (hit < 0) {
      last_hyp_matched = false;
      continue;
    }
    used[static_cast<std::size_t>(hit)] = true;
    ++a.matches;
    if (!(last_hyp_matched && hit == last_ref + 1)) ++a.chunks;
    last_ref = hit;
    last_hyp_matched = true;
  }
  return a;
}

double meteor(Tokens reference, Tokens hypothesis, const MeteorParams& params) {
  const auto a = meteor_align(reference, hypothesis);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(hypothesis.size());
  const double r = m / static_cast<double>(reference.size());
  const double w = params.recall_weight;
  const double f_mean = (1.0 + w) * p * r / (r + w * p);
  const double penalty =
      params.penalty_gamma * std::pow(static_cast<double>(a.chunks) / m, params.penalty_beta);
  return f_mean * (1.0 - penalty);
}

MetricSet MetricSet::parse(std::string_view list) {
  MetricSet s{false, false, false};
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto end = list.find(',', pos);
    if (end == std::string_view::npos) end = list.size();
    const auto name = list.substr(pos, end - pos);
    if (name == "bleu") {
      s.bleu = true;
    } else if (name == "rouge") {
      s.rouge = true;
    } else if (name == "meteor") {
      s.meteor = true;
    } else {
      throw DomainError("unknown metric '" + std::string(name) + "' (expected bleu, rouge, meteor)");
    }
    pos = end + 1;
  }
  return s;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("bleu", bleu);
  put("rouge1", rouge1);
  put("rouge2", rouge2);
  put("rougeL", rougeL);
  put("rougeW", rougeW);
  put("meteor", meteor);
  j["pairs"] = pairs;
  return j.dump();
}

EvalReport EvalReport::from_json(std::string_view text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    auto get = [&j](const char* key) -> std::optional<double> {
      if (!j.contains(key)) return std::nullopt;
      return j.at(key).get<double>();
    };
    r.bleu = get("bleu");
    r.rouge1 = get("rouge1");
    r.rouge2 = get("rouge2");
    r.rougeL = get("rougeL");
    r.rougeW = get("rougeW");
    r.meteor = get("meteor");
    r.pairs = j.at("pairs").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("evaluation report: ") + e.what());
  }
  return r;
}

EvalReport evaluate(std::span<const TokenPair> pairs, const MetricSet& which,
                    const MeteorParams& meteor_params, double rouge_w_alpha) {
  if (pairs.empty()) throw DomainError("evaluate: empty corpus (no pairs to average)");
  EvalReport r;
  r.pairs = pairs.size();
  const double n = static_cast<double>(pairs.size());
  if (which.bleu) r.bleu = bleu_corpus(pairs);
  if (which.rouge) {
    double r1 = 0, r2 = 0, rl = 0, rw = 0;
    for (const auto& p : pairs) {
      r1 += rouge_n(p.reference, p.hypothesis, 1).f1;
      r2 += rouge_n(p.reference, p.hypothesis, 2).f1;
      rl += rouge_l(p.reference, p.hypothesis).f1;
      rw += rouge_w(p.reference, p.hypothesis, rouge_w_alpha).f1;
    }
    r.rouge1 = 100.0 * r1 / n;
    r.rouge2 = 100.0 * r2 / n;
    r.rougeL = 100.0 * rl / n;
    r.rougeW = 100.0 * rw / n;
  }
  if (which.meteor) {
    double m = 0;
    for (const auto& p : pairs) m += meteor(p.reference, p.hypothesis, meteor_params);
    r.meteor = 100.0 * m / n;
  }
  return r;
}

std::vector<TokenSeq> read_token_lines(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<TokenSeq> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    TokenSeq toks;
    for (std::string w; words >> w;) toks.push_back(std::move(w));
    out.push_back(std::move(toks));
  }
  return out;
}

EvalReport evaluate_files(const std::filesystem::path& refs, const std::filesystem::path& hyps,
                          const MetricSet& which) {
  auto r = read_token_lines(refs);
  auto h = read_token_lines(hyps);
  if (r.size() != h.size()) {
    throw DataError("evaluate: " + refs.string() + " has " + std::to_string(r.size()) +
                    " lines but " + hyps.string() + " has " + std::to_string(h.size()));
  }
  std::vector<TokenPair> pairs;
  pairs.reserve(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) pairs.push_back({std::move(r[k]), std::move(h[k])});
  return evaluate(pairs, which);
}

}  // namespace cmg::metrics
