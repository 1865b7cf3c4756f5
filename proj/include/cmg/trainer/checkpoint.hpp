#pragma once

#include "cmg/seq2seq/model.hpp"
#include "cmg/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace cmg::trainer {

inline constexpr int kCheckpointSchema = 1;

struct ParamEntry {
  std::string name;
  seq2seq::Index rows = 0;
  seq2seq::Index cols = 0;
  std::uint64_t offset = 0;  // bytes into params.bin
};

struct CheckpointManifest {
  int schema_version = kCheckpointSchema;
  seq2seq::ModelConfig config;
  std::uint64_t src_fingerprint = 0;
  std::uint64_t tgt_fingerprint = 0;
  std::vector<ParamEntry> params;
  std::uint64_t payload_bytes = 0;
  std::uint64_t payload_checksum = 0;  // FNV-1a 64 over params.bin
  double valid_loss = std::numeric_limits<double>::infinity();
  int epoch = 0;

  std::string to_json() const;
  static CheckpointManifest from_json(std::string_view text);
  // Offsets contiguous, in order and inside the payload.
  void validate() const;
};

struct Checkpoint {
  seq2seq::ModelParams params;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  CheckpointManifest manifest;
};

// Writes manifest.json, params.bin (little-endian f32, row-major) and both
// vocabularies into `dir`, each file atomically.
void save_checkpoint(const std::filesystem::path& dir, const seq2seq::ModelParams& params,
                     const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                     double valid_loss = std::numeric_limits<double>::infinity(), int epoch = 0);

// Throws IntegrityError for a damaged payload and FingerprintError when the
// stored vocabularies disagree with the manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Also refuses a checkpoint trained with different vocabularies.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const Vocabulary& src_vocab,
                           const Vocabulary& tgt_vocab);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace cmg::trainer
