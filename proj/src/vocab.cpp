#include "cmg/vocab.hpp"

#include "cmg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace cmg {

namespace {

bool has_upper(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; });
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size() + kNumSpecials);
  for (auto s : {kPadToken, kSosToken, kEosToken, kUnkToken}) tokens_.emplace_back(s);
  for (auto& t : tokens) tokens_.push_back(std::move(t));
  for (int i = 0; i < size(); ++i) {
    const auto& t = tokens_[static_cast<std::size_t>(i)];
    if (t.empty()) throw DataError("vocabulary: empty token at index " + std::to_string(i));
    if (has_upper(t)) throw DataError("vocabulary: token '" + t + "' is not lowercase");
    if (!index_.emplace(t, i).second) throw DataError("vocabulary: duplicate token '" + t + "'");
  }
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw RangeError("vocabulary: id " + std::to_string(id) + " outside size " +
                     std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id_or_unk(std::string_view token) const { return find(token).value_or(kUnkId); }

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (char c : t) feed(static_cast<unsigned char>(c));
    feed(0);
  }
  return h;
}

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["specials"] = std::vector<std::string>(tokens_.begin(), tokens_.begin() + kNumSpecials);
  j["tokens"] = std::vector<std::string>(tokens_.begin() + kNumSpecials, tokens_.end());
  return j.dump();
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("vocabulary: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("specials") || !j.contains("tokens")) {
    throw DataError("vocabulary: expected {\"specials\": [...], \"tokens\": [...]}");
  }
  std::vector<std::string> specials, tokens;
  try {
    specials = j.at("specials").get<std::vector<std::string>>();
    tokens = j.at("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("vocabulary: ") + e.what());
  }
  const std::vector<std::string> expected{std::string(kPadToken), std::string(kSosToken),
                                          std::string(kEosToken), std::string(kUnkToken)};
  if (specials != expected) throw DataError("vocabulary: unexpected special tokens");
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Vocabulary build_vocab(std::span<const TokenSeq> sequences, int min_freq,
                       std::optional<int> max_size) {
  if (min_freq < 1) throw DomainError("build_vocab: min_freq must be at least 1");
  std::map<std::string, long> counts;
  for (const auto& seq : sequences) {
    for (const auto& t : seq) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> ranked;
  for (auto& [t, n] : counts) {
    if (n >= min_freq && !(t == kPadToken || t == kSosToken || t == kEosToken || t == kUnkToken)) {
      ranked.emplace_back(t, n);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size) {
    const auto room = static_cast<std::size_t>(std::max(0, *max_size - kNumSpecials));
    if (ranked.size() > room) ranked.resize(room);
  }
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [t, n] : ranked) tokens.push_back(std::move(t));
  return Vocabulary(std::move(tokens));
}

std::vector<int> encode(const Vocabulary& vocab, std::span<const std::string> tokens,
                        bool add_markers) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  if (add_markers) ids.push_back(kSosId);
  for (const auto& t : tokens) ids.push_back(vocab.id_or_unk(t));
  if (add_markers) ids.push_back(kEosId);
  return ids;
}

TokenSeq decode(const Vocabulary& vocab, std::span<const int> ids) {
  TokenSeq out;
  for (int id : ids) {
    const auto& t = vocab.token(id);
    if (id != kPadId && id != kSosId && id != kEosId) out.push_back(t);
  }
  return out;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

}  // namespace cmg
