#include "cmg/errors.hpp"
#include "cmg/example.hpp"
#include "cmg/preprocess.hpp"

namespace cmg::preprocess {

namespace detail {
extern const char* const kBundledLexicon;
}

std::string_view to_string(Tag tag) {
  switch (tag) {
    case Tag::verb: return "VERB";
    case Tag::noun: return "NOUN";
    case Tag::other: return "OTHER";
  }
  return "OTHER";
}

PosLexicon PosLexicon::parse(std::string_view text) {
  PosLexicon lex;
  std::size_t pos = 0;
  long lineno = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw DataError("lexicon line " + std::to_string(lineno) + ": expected token<TAB>TAG");
    }
    const std::string token(line.substr(0, tab));
    const auto name = line.substr(tab + 1);
    Tag tag;
    if (name == "VERB") {
      tag = Tag::verb;
    } else if (name == "NOUN") {
      tag = Tag::noun;
    } else if (name == "OTHER") {
      tag = Tag::other;
    } else {
      throw DataError("lexicon line " + std::to_string(lineno) + ": unknown tag '" +
                      std::string(name) + "'");
    }
    const auto [it, inserted] = lex.tags_.emplace(token, tag);
    if (!inserted && tag == Tag::verb && it->second != Tag::verb) lex.ambiguous_.insert(token);
  }
  return lex;
}

PosLexicon PosLexicon::load(const std::filesystem::path& path) { return parse(read_file(path)); }

const PosLexicon& PosLexicon::bundled() {
  static const PosLexicon lex = parse(detail::kBundledLexicon);
  return lex;
}

Tag PosLexicon::tag(std::string_view token) const {
  const auto it = tags_.find(std::string(token));
  return it == tags_.end() ? Tag::other : it->second;
}

bool PosLexicon::is_ambiguous_verb(std::string_view token) const {
  return ambiguous_.count(std::string(token)) != 0;
}

bool PosLexicon::contains(std::string_view token) const {
  return tags_.count(std::string(token)) != 0;
}

std::vector<Tag> tag_tokens(std::span<const std::string> tokens, const PosLexicon& lexicon) {
  std::vector<Tag> tags;
  tags.reserve(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    Tag t = lexicon.tag(tokens[k]);
    if (t != Tag::verb && k > 0 && tokens[k - 1] == "i" && lexicon.is_ambiguous_verb(tokens[k])) {
      t = Tag::verb;
    }
    tags.push_back(t);
  }
  return tags;
}

VerbCheck tag_and_verb_filter(std::span<const std::string> tokens, const PosLexicon& lexicon) {
  if (tokens.empty()) return VerbCheck::rejected;
  if (tag_tokens(tokens, lexicon).front() == Tag::verb) return VerbCheck::first_word;
  std::vector<std::string> with_pronoun;
  with_pronoun.reserve(tokens.size() + 1);
  with_pronoun.emplace_back("i");
  with_pronoun.insert(with_pronoun.end(), tokens.begin(), tokens.end());
  if (tag_tokens(with_pronoun, lexicon)[1] == Tag::verb) return VerbCheck::pronoun_retry;
  return VerbCheck::rejected;
}

}  // namespace cmg::preprocess
