#include "cmg/preprocess.hpp"

#include "cmg/errors.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace cmg::preprocess {

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '_';
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_alpha(char c) { return is_upper(c) || is_lower(c); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out += ' ';
      pending = false;
      out += c;
    }
  }
  return out;
}

std::string ascii_lower(std::string s) {
  for (char& c : s) {
    if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

// Splits every alphanumeric run into its sub-tokens, separated by spaces.
std::string split_camel_runs(const std::string& s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_alnum(s[i])) {
      out += s[i++];
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_alnum(s[j])) ++j;
    const auto parts = split_subtokens(std::string_view(s).substr(i, j - i));
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (k) out += ' ';
      out += parts[k];
    }
    i = j;
  }
  return out;
}

std::string printable_ascii_only(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (is_space(c)) {
      out += ' ';
    } else if (c >= 0x20 && c <= 0x7e) {
      out += c;
    }
  }
  return out;
}

std::string clean_pass(std::string s) {
  static const std::regex label(R"(^\s*(\[[^\]\n]*\]\s*)+)");
  static const std::regex paren_issue(R"(\(\s*#\d+\s*\))");
  static const std::regex issue(R"(#\d+)");
  static const std::regex mention(R"((^|[^\w])@\w[\w\-]*)");
  static const std::regex url(R"(https?://\S+)");
  static const std::regex version(R"(\bv?\d+(\.\d+)+(-\w+)?\b)");

  s = std::regex_replace(s, label, "");
  s = std::regex_replace(s, paren_issue, " ");
  s = std::regex_replace(s, issue, " ");
  s = std::regex_replace(s, mention, "$1");
  s = std::regex_replace(s, url, " ");
  s = strip_hashes(s);
  s = std::regex_replace(s, version, std::string(kVersionToken));
  s = split_camel_runs(s);
  s = printable_ascii_only(s);
  return collapse_whitespace(ascii_lower(std::move(s)));
}

}  // namespace

std::string strip_hashes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word_char(s[i])) {
      out += s[i++];
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_word_char(s[j])) ++j;
    const auto word = s.substr(i, j - i);
    const bool hex = std::all_of(word.begin(), word.end(),
                                 [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
    const bool digit = std::any_of(word.begin(), word.end(), is_digit);
    const bool letter = std::any_of(word.begin(), word.end(), is_alpha);
    if (!(hex && digit && letter && word.size() >= 7 && word.size() <= 40)) out.append(word);
    i = j;
  }
  return out;
}

std::string_view to_string(Mode mode) {
  return mode == Mode::reference ? "reference" : "rigorous";
}

std::string_view to_string(VerbFilter filter) {
  switch (filter) {
    case VerbFilter::vdo_approx: return "vdo-approx";
    case VerbFilter::starts_with_verb: return "starts-with-verb";
    case VerbFilter::off: return "off";
  }
  return "off";
}

Mode parse_mode(std::string_view text) {
  if (text == "reference") return Mode::reference;
  if (text == "rigorous") return Mode::rigorous;
  throw DomainError("unknown pipeline mode '" + std::string(text) + "'");
}

VerbFilter parse_verb_filter(std::string_view text) {
  if (text == "vdo-approx") return VerbFilter::vdo_approx;
  if (text == "starts-with-verb") return VerbFilter::starts_with_verb;
  if (text == "off") return VerbFilter::off;
  throw DomainError("unknown verb filter '" + std::string(text) + "'");
}

PipelineConfig PipelineConfig::reference() {
  PipelineConfig c;
  c.mode = Mode::reference;
  c.min_msg_tokens = 1;
  c.extension_whitelist.clear();
  c.verb_filter = VerbFilter::vdo_approx;
  return c;
}

PipelineConfig PipelineConfig::rigorous() { return PipelineConfig{}; }

void PipelineConfig::validate() const {
  if (min_msg_tokens < 1) throw DomainError("pipeline config: min_msg_tokens must be at least 1");
  if (min_msg_tokens > max_msg_tokens) {
    throw DomainError("pipeline config: min_msg_tokens exceeds max_msg_tokens");
  }
  if (max_diff_tokens <= 0) throw DomainError("pipeline config: max_diff_tokens must be positive");
}

std::string clean_message(std::string_view raw) {
  std::string s(raw);
  for (int pass = 0; pass < 8; ++pass) {
    std::string next = clean_pass(s);
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

std::string_view first_line(std::string_view text) {
  const auto nl = text.find('\n');
  auto line = text.substr(0, nl);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::string first_sentence(std::string_view text) {
  std::string_view line = first_line(text);
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == line.size() || is_space(line[i + 1]))) {
      line = line.substr(0, i);
      break;
    }
  }
  std::string s = collapse_whitespace(line);
  while (!s.empty() && (std::string_view(".!?,;: ").find(s.back()) != std::string_view::npos)) {
    s.pop_back();
  }
  return s;
}

std::vector<std::string> split_subtokens(std::string_view token) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i < token.size(); ++i) {
    const char a = token[i - 1], b = token[i];
    const bool lower_upper = is_lower(a) && is_upper(b);
    const bool acronym_end =
        is_upper(a) && is_upper(b) && i + 1 < token.size() && is_lower(token[i + 1]);
    const bool digit_edge = (is_digit(a) && is_alpha(b)) || (is_alpha(a) && is_digit(b));
    if (lower_upper || acronym_end || digit_edge) {
      out.emplace_back(token.substr(start, i - start));
      start = i;
    }
  }
  if (start < token.size()) out.emplace_back(token.substr(start));
  return out;
}

TokenSeq tokenize_message(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
    } else if (text.substr(i).starts_with(kVersionToken)) {
      out.emplace_back(kVersionToken);
      i += kVersionToken.size();
    } else if (is_word_char(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      std::size_t j = i;
      while (j < text.size() && !is_space(text[j]) && !is_word_char(text[j]) &&
             !text.substr(j).starts_with(kVersionToken)) {
        ++j;
      }
      out.emplace_back(text.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

TokenSeq reference_message_tokens(std::string_view message) {
  static const std::regex paren_issue(R"(\(\s*#\d+\s*\))");
  static const std::regex issue(R"(#\d+)");
  std::string s(first_line(message));
  s = std::regex_replace(s, paren_issue, " ");
  s = std::regex_replace(s, issue, " ");
  s = first_sentence(printable_ascii_only(s));
  return tokenize_message(ascii_lower(std::move(s)));
}

TokenSeq reference_diff_tokens(std::string_view diff) {
  const std::string s = ascii_lower(printable_ascii_only(strip_hashes(diff)));
  TokenSeq out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == ' ') {
      ++i;
      continue;
    }
    const bool word = is_word_char(s[i]);
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && is_word_char(s[j]) == word) ++j;
    out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace cmg::preprocess
