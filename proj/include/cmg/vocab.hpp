#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cmg {

inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecials = 4;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kSosToken = "<sos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<unk>";

using TokenSeq = std::vector<std::string>;

// Bidirectional token <-> index map. Indices 0-3 hold <pad>, <sos>, <eos>,
// <unk>; immutable once built.
class Vocabulary {
 public:
  Vocabulary();  // specials only
  // `tokens` excludes the specials; duplicates and upper-case are rejected.
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  std::optional<int> find(std::string_view token) const;
  int id_or_unk(std::string_view token) const;
  // Every token in id order, specials included.
  const std::vector<std::string>& tokens() const { return tokens_; }

  // 64-bit FNV-1a over every token in id order (specials included), each
  // followed by a NUL byte.
  std::uint64_t fingerprint() const;

  std::string to_json() const;
  static Vocabulary from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens with frequency >= min_freq, most frequent first, ties broken
// lexicographically; truncated so the vocabulary holds at most max_size ids.
Vocabulary build_vocab(std::span<const TokenSeq> sequences, int min_freq = 1,
                       std::optional<int> max_size = std::nullopt);

std::vector<int> encode(const Vocabulary& vocab, std::span<const std::string> tokens,
                        bool add_markers);

// Drops <pad>, <sos> and <eos>; <unk> is kept as a placeholder. Throws RangeError for ids outside the vocabulary.
TokenSeq decode(const Vocabulary& vocab, std::span<const int> ids);

std::string fingerprint_hex(std::uint64_t fp);

}  // namespace cmg
