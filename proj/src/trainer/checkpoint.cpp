#include "cmg/trainer/checkpoint.hpp"

#include "cmg/errors.hpp"
#include "cmg/example.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>

namespace cmg::trainer {

namespace {

using nlohmann::ordered_json;

const char* const kManifest = "manifest.json";
const char* const kPayload = "params.bin";
const char* const kSrcVocab = "src_vocab.json";
const char* const kTgtVocab = "tgt_vocab.json";

std::uint64_t parse_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw DataError("checkpoint manifest: bad hex value '" + s + "'");
  }
  return std::stoull(s, nullptr, 16);
}

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int k = 0; k < 4; ++k) out += static_cast<char>((bits >> (8 * k)) & 0xffu);
}

double get_f32(const std::string& in, std::size_t pos) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string CheckpointManifest::to_json() const {
  ordered_json j;
  j["schema_version"] = schema_version;
  j["model"] = {{"src_vocab", config.src_vocab},         {"tgt_vocab", config.tgt_vocab},
                {"hidden_dim", config.hidden_dim},       {"embed_dim", config.embed_dim},
                {"embed_dropout", config.embed_dropout}, {"max_decode_len", config.max_decode_len}};
  j["src_fingerprint"] = fingerprint_hex(src_fingerprint);
  j["tgt_fingerprint"] = fingerprint_hex(tgt_fingerprint);
  j["valid_loss"] = std::isfinite(valid_loss) ? ordered_json(valid_loss) : ordered_json(nullptr);
  j["epoch"] = epoch;
  j["payload_bytes"] = payload_bytes;
  j["payload_checksum"] = fingerprint_hex(payload_checksum);
  auto& table = j["params"] = ordered_json::array();
  for (const auto& p : params) {
    table.push_back({{"name", p.name},
                     {"shape", {p.rows, p.cols}},
                     {"dtype", "f32"},
                     {"offset", p.offset}});
  }
  return j.dump(2) + "\n";
}

CheckpointManifest CheckpointManifest::from_json(std::string_view text) {
  CheckpointManifest m;
  try {
    const auto j = ordered_json::parse(text);
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kCheckpointSchema) {
      throw DataError("checkpoint manifest: unsupported schema_version " +
                      std::to_string(m.schema_version));
    }
    const auto& model = j.at("model");
    m.config.src_vocab = model.at("src_vocab").get<int>();
    m.config.tgt_vocab = model.at("tgt_vocab").get<int>();
    m.config.hidden_dim = model.at("hidden_dim").get<int>();
    m.config.embed_dim = model.at("embed_dim").get<int>();
    m.config.embed_dropout = model.at("embed_dropout").get<double>();
    m.config.max_decode_len = model.at("max_decode_len").get<int>();
    m.src_fingerprint = parse_hex(j.at("src_fingerprint").get<std::string>());
    m.tgt_fingerprint = parse_hex(j.at("tgt_fingerprint").get<std::string>());
    const auto& vl = j.at("valid_loss");
    m.valid_loss = vl.is_null() ? std::numeric_limits<double>::infinity() : vl.get<double>();
    m.epoch = j.at("epoch").get<int>();
    m.payload_bytes = j.at("payload_bytes").get<std::uint64_t>();
    m.payload_checksum = parse_hex(j.at("payload_checksum").get<std::string>());
    for (const auto& p : j.at("params")) {
      if (p.at("dtype").get<std::string>() != "f32") {
        throw DataError("checkpoint manifest: unsupported dtype for " + p.at("name").get<std::string>());
      }
      const auto& shape = p.at("shape");
      if (shape.size() != 2) throw DataError("checkpoint manifest: shape must have two entries");
      m.params.push_back({p.at("name").get<std::string>(), shape[0].get<seq2seq::Index>(),
                          shape[1].get<seq2seq::Index>(), p.at("offset").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }
  m.config.validate();
  m.validate();
  return m;
}

void CheckpointManifest::validate() const {
  std::uint64_t expected = 0;
  for (const auto& p : params) {
    if (p.rows < 0 || p.cols < 0) throw DataError("checkpoint manifest: negative shape for " + p.name);
    if (p.offset != expected) {
      throw DataError("checkpoint manifest: offset of " + p.name + " is " + std::to_string(p.offset) +
                      ", expected " + std::to_string(expected));
    }
    expected += static_cast<std::uint64_t>(p.rows * p.cols) * 4u;
  }
  if (expected != payload_bytes) {
    throw DataError("checkpoint manifest: parameter table covers " + std::to_string(expected) +
                    " bytes but payload_bytes is " + std::to_string(payload_bytes));
  }
}

void save_checkpoint(const std::filesystem::path& dir, const seq2seq::ModelParams& params,
                     const Vocabulary& src_vocab, const Vocabulary& tgt_vocab, double valid_loss,
                     int epoch) {
  if (params.config.src_vocab != src_vocab.size() || params.config.tgt_vocab != tgt_vocab.size()) {
    throw DimensionError("save_checkpoint: vocabulary sizes disagree with the model config");
  }
  std::filesystem::create_directories(dir);
  CheckpointManifest m;
  m.config = params.config;
  m.src_fingerprint = src_vocab.fingerprint();
  m.tgt_fingerprint = tgt_vocab.fingerprint();
  m.valid_loss = valid_loss;
  m.epoch = epoch;
  std::string payload;
  payload.reserve(params.parameter_count() * 4);
  for (const auto& [name, t] : params.named()) {
    m.params.push_back({name, t->rows(), t->cols(), payload.size()});
    const auto& v = t->value;
    for (seq2seq::Index i = 0; i < v.size(); ++i) put_f32(payload, v.data()[i]);
  }
  m.payload_bytes = payload.size();
  m.payload_checksum = fnv1a64(payload);

  src_vocab.save(dir / kSrcVocab);
  tgt_vocab.save(dir / kTgtVocab);
  write_file_atomic(dir / kPayload, payload);
  // The manifest goes last so a reader never sees it ahead of its payload.
  write_file_atomic(dir / kManifest, m.to_json());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint c{seq2seq::ModelParams{}, Vocabulary(), Vocabulary(),
               CheckpointManifest::from_json(read_file(dir / kManifest))};
  const auto& m = c.manifest;
  c.src_vocab = Vocabulary::load(dir / kSrcVocab);
  c.tgt_vocab = Vocabulary::load(dir / kTgtVocab);
  if (c.src_vocab.fingerprint() != m.src_fingerprint ||
      c.tgt_vocab.fingerprint() != m.tgt_fingerprint) {
    throw FingerprintError("checkpoint " + dir.string() +
                           ": stored vocabularies do not match the manifest fingerprints");
  }

  const std::string payload = read_file(dir / kPayload);
  if (payload.size() != m.payload_bytes) {
    throw IntegrityError("checkpoint " + dir.string() + ": params.bin holds " +
                         std::to_string(payload.size()) + " bytes, manifest says " +
                         std::to_string(m.payload_bytes));
  }
  if (fnv1a64(payload) != m.payload_checksum) {
    throw IntegrityError("checkpoint " + dir.string() + ": params.bin checksum mismatch");
  }

  c.params = seq2seq::ModelParams::zeros(m.config);
  auto named = c.params.named();
  if (named.size() != m.params.size()) {
    throw DataError("checkpoint " + dir.string() + ": parameter table has " +
                    std::to_string(m.params.size()) + " entries, model expects " +
                    std::to_string(named.size()));
  }
  for (std::size_t k = 0; k < named.size(); ++k) {
    const auto& entry = m.params[k];
    auto& t = *named[k].second;
    if (entry.name != named[k].first || entry.rows != t.rows() || entry.cols != t.cols()) {
      throw DataError("checkpoint " + dir.string() + ": parameter '" + entry.name +
                      "' does not match model block '" + named[k].first + "'");
    }
    for (seq2seq::Index i = 0; i < t.size(); ++i) {
      t.value.data()[i] = get_f32(payload, entry.offset + static_cast<std::size_t>(i) * 4);
    }
  }
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const Vocabulary& src_vocab,
                           const Vocabulary& tgt_vocab) {
  Checkpoint c = load_checkpoint(dir);
  if (c.manifest.src_fingerprint != src_vocab.fingerprint() ||
      c.manifest.tgt_fingerprint != tgt_vocab.fingerprint()) {
    throw FingerprintError("checkpoint " + dir.string() +
                           " was trained with different vocabularies (fingerprint mismatch)");
  }
  return c;
}

}  // namespace cmg::trainer
