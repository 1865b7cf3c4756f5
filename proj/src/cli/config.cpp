#include "cmg/cli/cli.hpp"

#include "cmg/errors.hpp"
#include "cmg/example.hpp"

#include <json.hpp>

#include <initializer_list>
#include <set>

namespace cmg::cli {

namespace {

using Json = nlohmann::json;

const Json* section(const Json& root, const char* name) {
  const auto it = root.find(name);
  if (it == root.end()) return nullptr;
  if (!it->is_object()) throw DataError(std::string("config: section \"") + name + "\" must be an object");
  return &*it;
}

void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw DataError("config: unknown key \"" + key + "\" in " + where);
  }
}

template <class T>
void read(const Json& obj, const char* key, T& dst) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    dst = it->get<T>();
  } catch (const Json::exception&) {
    throw DataError(std::string("config: field \"") + key + "\" has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw DataError("config: top level must be an object");
  check_keys(root, "top level", {"filter", "pipeline", "split", "model", "train", "vocab", "nngen"});

  RunConfig cfg;
  if (const Json* s = section(root, "filter")) {
    check_keys(*s, "filter", {"max_diff_bytes", "drop_merges", "drop_initial", "per_repo_cap"});
    read(*s, "max_diff_bytes", cfg.filter.max_diff_bytes);
    read(*s, "drop_merges", cfg.filter.drop_merges);
    read(*s, "drop_initial", cfg.filter.drop_initial);
    read(*s, "per_repo_cap", cfg.filter.per_repo_cap);
  }
  if (const Json* s = section(root, "pipeline")) {
    check_keys(*s, "pipeline", {"mode", "max_msg_tokens", "min_msg_tokens", "max_diff_tokens",
                                "extension_whitelist", "verb_filter", "lexicon"});
    if (s->contains("mode")) {
      std::string mode;
      read(*s, "mode", mode);
      cfg.pipeline = preprocess::parse_mode(mode) == preprocess::Mode::reference
                         ? preprocess::PipelineConfig::reference()
                         : preprocess::PipelineConfig::rigorous();
    }
    read(*s, "max_msg_tokens", cfg.pipeline.max_msg_tokens);
    read(*s, "min_msg_tokens", cfg.pipeline.min_msg_tokens);
    read(*s, "max_diff_tokens", cfg.pipeline.max_diff_tokens);
    read(*s, "extension_whitelist", cfg.pipeline.extension_whitelist);
    if (s->contains("verb_filter")) {
      std::string vf;
      read(*s, "verb_filter", vf);
      cfg.pipeline.verb_filter = preprocess::parse_verb_filter(vf);
    }
    if (s->contains("lexicon")) {
      std::string path;
      read(*s, "lexicon", path);
      cfg.lexicon = path;
    }
  }
  if (const Json* s = section(root, "split")) {
    check_keys(*s, "split", {"sample_size", "ratios", "seed"});
    read(*s, "sample_size", cfg.split.sample_size);
    read(*s, "ratios", cfg.split.ratios);
    read(*s, "seed", cfg.split.seed);
  }
  if (const Json* s = section(root, "model")) {
    check_keys(*s, "model", {"hidden_dim", "embed_dim", "embed_dropout", "max_decode_len"});
    read(*s, "hidden_dim", cfg.model.hidden_dim);
    read(*s, "embed_dim", cfg.model.embed_dim);
    read(*s, "embed_dropout", cfg.model.embed_dropout);
    read(*s, "max_decode_len", cfg.model.max_decode_len);
  }
  if (const Json* s = section(root, "train")) {
    check_keys(*s, "train", {"lr", "lr_decay_factor", "plateau_patience", "early_stop_patience", "batch_size",
                             "teacher_forcing_p", "max_epochs", "seed", "clip_norm"});
    read(*s, "lr", cfg.train.lr);
    read(*s, "lr_decay_factor", cfg.train.lr_decay_factor);
    read(*s, "plateau_patience", cfg.train.plateau_patience);
    read(*s, "early_stop_patience", cfg.train.early_stop_patience);
    read(*s, "batch_size", cfg.train.batch_size);
    read(*s, "teacher_forcing_p", cfg.train.teacher_forcing_p);
    read(*s, "max_epochs", cfg.train.max_epochs);
    read(*s, "seed", cfg.train.seed);
    read(*s, "clip_norm", cfg.train.clip_norm);
  }
  if (const Json* s = section(root, "vocab")) {
    check_keys(*s, "vocab", {"min_freq", "max_size"});
    read(*s, "min_freq", cfg.vocab.min_freq);
    if (s->contains("max_size") && !(*s)["max_size"].is_null()) {
      int max_size = 0;
      read(*s, "max_size", max_size);
      cfg.vocab.max_size = max_size;
    }
  }
  if (const Json* s = section(root, "nngen")) {
    check_keys(*s, "nngen", {"k"});
    read(*s, "k", cfg.nngen_k);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

void RunConfig::validate() const {
  filter.validate();
  pipeline.validate();
  split.validate();
  train.validate();
  if (model.hidden_dim <= 0 || model.embed_dim <= 0) throw DomainError("model config: sizes must be positive");
  if (!(model.embed_dropout >= 0.0 && model.embed_dropout < 1.0)) {
    throw DomainError("model config: embed_dropout must lie in [0, 1)");
  }
  if (model.max_decode_len < 1) throw DomainError("model config: max_decode_len must be >= 1");
  if (vocab.min_freq < 1) throw DomainError("vocab config: min_freq must be >= 1");
  if (vocab.max_size && *vocab.max_size < kNumSpecials) {
    throw DomainError("vocab config: max_size must be at least 4");
  }
  if (nngen_k < 1) throw DomainError("nngen config: k must be >= 1");
}

bool matches_pattern(std::span<const std::string> message, std::span<const std::string> pattern) {
  // reach[j] is true when the first j pattern tokens can consume the prefix
  // read so far.
  const std::size_t m = pattern.size();
  std::vector<char> reach(m + 1, 0), next(m + 1, 0);
  reach[0] = 1;
  for (const auto& tok : message) {
    std::fill(next.begin(), next.end(), 0);
    for (std::size_t j = 0; j < m; ++j) {
      if (pattern[j] == "<*>") {
        // Start the wildcard here or extend one that already consumed a token.
        if (reach[j] || reach[j + 1]) next[j + 1] = 1;
      } else if (reach[j] && pattern[j] == tok) {
        next[j + 1] = 1;
      }
    }
    reach.swap(next);
  }
  return reach[m] != 0;
}

double count_pattern(std::span<const TokenSeq> messages, std::string_view pattern) {
  if (messages.empty()) throw DomainError("count_pattern: no messages");
  TokenSeq pat;
  std::size_t pos = 0;
  while (pos < pattern.size()) {
    const auto start = pattern.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    auto end = pattern.find_first_of(" \t", start);
    if (end == std::string_view::npos) end = pattern.size();
    pat.emplace_back(pattern.substr(start, end - start));
    pos = end;
  }
  if (pat.empty()) throw DomainError("count_pattern: empty pattern");
  std::size_t hits = 0;
  for (const auto& m : messages) hits += matches_pattern(m, pat);
  return static_cast<double>(hits) / static_cast<double>(messages.size());
}

}  // namespace cmg::cli
