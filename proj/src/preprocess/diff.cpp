#include "cmg/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>

namespace cmg::preprocess {

namespace {

struct Line {
  std::string_view text;
  std::size_t offset;
};

std::vector<Line> split_lines(std::string_view raw) {
  std::vector<Line> out;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    auto end = raw.find('\n', pos);
    if (end == std::string_view::npos) end = raw.size();
    auto text = raw.substr(pos, end - pos);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    out.push_back({text, pos});
    pos = end + 1;
  }
  return out;
}

bool is_block_start(std::string_view line) { return line.starts_with("diff --git "); }

// Path from a "--- a/x" or "+++ b/x" header, without the a/ or b/ prefix.
std::string header_path(std::string_view rest) {
  if (const auto tab = rest.find('\t'); tab != std::string_view::npos) rest = rest.substr(0, tab);
  if (rest.size() >= 2 && rest.front() == '"' && rest.back() == '"') {
    rest = rest.substr(1, rest.size() - 2);
  }
  if (rest == "/dev/null") return std::string(rest);
  if (rest.starts_with("a/") || rest.starts_with("b/")) rest.remove_prefix(2);
  return std::string(rest);
}

std::string basename(std::string_view path) {
  const auto slash = path.rfind('/');
  return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

bool parse_count(std::string_view& s, int& value) {
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr == first) return false;
  s.remove_prefix(static_cast<std::size_t>(ptr - first));
  return true;
}

// "-l[,s] +l[,s]" ranges; a missing count means one line.
bool parse_range(std::string_view& s, char sign, int& count) {
  if (s.empty() || s.front() != sign) return false;
  s.remove_prefix(1);
  int start = 0;
  if (!parse_count(s, start)) return false;
  count = 1;
  if (!s.empty() && s.front() == ',') {
    s.remove_prefix(1);
    if (!parse_count(s, count)) return false;
  }
  return true;
}

struct HunkHeader {
  int old_count = 0;
  int new_count = 0;
  std::string_view context;
};

bool parse_hunk_header(std::string_view line, HunkHeader& h) {
  if (!line.starts_with("@@ ")) return false;
  line.remove_prefix(3);
  if (!parse_range(line, '-', h.old_count)) return false;
  if (line.empty() || line.front() != ' ') return false;
  line.remove_prefix(1);
  if (!parse_range(line, '+', h.new_count)) return false;
  if (!line.starts_with(" @@")) return false;
  line.remove_prefix(3);
  while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
  while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
  h.context = line;
  return true;
}

}  // namespace

ParsedDiff parse_diff(std::string_view raw) {
  ParsedDiff out;
  const auto lines = split_lines(raw);
  const std::size_t n = lines.size();
  std::size_t i = 0;
  while (i < n && !is_block_start(lines[i].text)) ++i;

  while (i < n) {
    const std::string_view git_line = lines[i].text;
    ++i;
    std::string pre, post;
    while (i < n && !is_block_start(lines[i].text) && !lines[i].text.starts_with("@@")) {
      const auto t = lines[i].text;
      if (t.starts_with("--- ")) pre = header_path(t.substr(4));
      if (t.starts_with("+++ ")) post = header_path(t.substr(4));
      ++i;
    }

    FileDiff file;
    std::string error;
    std::size_t error_offset = 0;
    while (i < n && !is_block_start(lines[i].text) && error.empty()) {
      if (!lines[i].text.starts_with("@@")) {
        ++i;
        continue;
      }
      HunkHeader h;
      const std::size_t hunk_offset = lines[i].offset;
      if (!parse_hunk_header(lines[i].text, h)) {
        error = "malformed hunk header";
        error_offset = hunk_offset;
        break;
      }
      if (!h.context.empty()) {
        if (!file.change_context.empty()) file.change_context += ' ';
        file.change_context += h.context;
      }
      ++i;
      int old_left = h.old_count, new_left = h.new_count;
      while (old_left > 0 || new_left > 0) {
        if (i >= n || is_block_start(lines[i].text)) {
          error = "truncated hunk: " + std::to_string(old_left) + " old and " +
                  std::to_string(new_left) + " new lines missing";
          error_offset = hunk_offset;
          break;
        }
        const auto t = lines[i].text;
        const char sigil = t.empty() ? ' ' : t.front();
        if (sigil == '\\') {
          ++i;
          continue;
        }
        const bool ok = (sigil == ' ' && old_left > 0 && new_left > 0) ||
                        (sigil == '-' && old_left > 0) || (sigil == '+' && new_left > 0);
        if (!ok) {
          error = "hunk body does not match its header";
          error_offset = lines[i].offset;
          break;
        }
        if (sigil != '+') --old_left;
        if (sigil != '-') --new_left;
        if (sigil == '-') file.removed_lines.emplace_back(t.substr(1));
        if (sigil == '+') file.added_lines.emplace_back(t.substr(1));
        ++i;
      }
    }
    if (!error.empty()) {
      out.errors.push_back({error_offset, error});
      while (i < n && !is_block_start(lines[i].text)) ++i;
      continue;
    }

    std::string path = !post.empty() && post != "/dev/null" ? post : pre;
    if (path.empty() || path == "/dev/null") {
      const auto b = git_line.rfind(" b/");
      path = b == std::string_view::npos ? std::string() : std::string(git_line.substr(b + 3));
    }
    file.filename = basename(path);
    file.lines_changed = static_cast<int>(file.added_lines.size() + file.removed_lines.size());
    if (file.lines_changed > 0) out.files.push_back(std::move(file));
  }
  return out;
}

namespace {

// Longest match first.
constexpr std::array<std::string_view, 34> kOperators{
    ">>>=", "<<=", ">>=", ">>>", "===", "!==", "...", "->*", "**=", "::", "->", "++", "--",
    "//",   "/*",  "*/",  "==",  "!=",  "<=",  ">=",  "&&",  "||",  "+=", "-=", "*=", "/=",
    "%=",   "&=",  "|=",  "^=",  "<<",  ">>",  "=>",  "**"};

bool is_code_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '_' || u >= 0x80;
}

bool is_code_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool printable_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c > 0x20 && c < 0x7f; });
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void emit_word(TokenSeq& out, std::string_view word) {
  if (!printable_ascii(word)) return;  // non-English token
  for (auto& part : split_subtokens(word)) out.push_back(lower(part));
}

}  // namespace

TokenSeq tokenize_code(std::string_view text) {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_code_space(c)) {
      ++i;
    } else if (is_code_word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && is_code_word_byte(text[j])) ++j;
      emit_word(out, text.substr(i, j - i));
      i = j;
    } else {
      const auto rest = text.substr(i);
      std::size_t len = 1;
      for (auto op : kOperators) {
        if (rest.starts_with(op)) {
          len = op.size();
          break;
        }
      }
      const auto tok = text.substr(i, len);
      if (printable_ascii(tok)) out.emplace_back(tok);
      i += len;
    }
  }
  return out;
}

TokenSeq file_tokens(const FileDiff& file) {
  TokenSeq out = tokenize_code(file.filename);
  for (auto& t : tokenize_code(file.change_context)) out.push_back(std::move(t));
  auto lines = [&out](const std::vector<std::string>& body, const char* marker) {
    for (const auto& line : body) {
      auto toks = tokenize_code(line);
      if (toks.empty()) continue;
      out.emplace_back(marker);
      for (auto& t : toks) out.push_back(std::move(t));
    }
  };
  lines(file.removed_lines, "-");
  lines(file.added_lines, "+");
  return out;
}

std::string extension_of(std::string_view filename) {
  const auto dot = filename.rfind('.');
  if (dot == std::string_view::npos || dot == 0) return {};
  return lower(filename.substr(dot + 1));
}

TokenSeq clean_and_tokenize_diff(std::span<const FileDiff> files, const PipelineConfig& cfg) {
  std::vector<const FileDiff*> kept;
  for (const auto& f : files) {
    if (cfg.extension_whitelist.empty() || cfg.extension_whitelist.count(extension_of(f.filename))) {
      kept.push_back(&f);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const FileDiff* a, const FileDiff* b) {
    return a->lines_changed > b->lines_changed;
  });
  TokenSeq out;
  for (const auto* f : kept) {
    for (auto& t : file_tokens(*f)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace cmg::preprocess
