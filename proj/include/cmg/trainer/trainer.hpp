#pragma once

#include "cmg/example.hpp"
#include "cmg/seq2seq/model.hpp"
#include "cmg/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmg::trainer {

struct TrainConfig {
  double lr = 0.1;
  double lr_decay_factor = 0.1;
  int plateau_patience = 10;
  int early_stop_patience = 20;
  int batch_size = 64;
  double teacher_forcing_p = 0.5;
  int max_epochs = 200;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  // <= 0 disables clipping

  void validate() const;
};

// Id sequences with <sos>/<eos> markers.
struct EncodedExample {
  std::vector<int> source;
  std::vector<int> target;
};

std::vector<EncodedExample> encode_examples(std::span<const ProcessedExample> examples,
                                            const Vocabulary& src_vocab,
                                            const Vocabulary& tgt_vocab);

// Consecutive batches over a seeded permutation of `examples`; the last
// batch holds the remainder. Batch::example_ids index into `examples`.
std::vector<seq2seq::Batch> make_batches(std::span<const EncodedExample> examples,
                                         int batch_size, std::uint64_t seed);
// Same, in dataset order.
std::vector<seq2seq::Batch> make_batches_in_order(std::span<const EncodedExample> examples,
                                                  int batch_size);

std::vector<seq2seq::Batch> make_batches(std::span<const ProcessedExample> examples,
                                         const Vocabulary& src_vocab,
                                         const Vocabulary& tgt_vocab, int batch_size,
                                         std::uint64_t seed);

struct StepReport {
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
};

double gradient_norm(const seq2seq::ModelParams& params);

// theta <- theta - lr * g for every parameter after rescaling g to at most
// clip_norm in global L2 norm; gradients are cleared afterwards. Throws
// NonFiniteError, leaving parameters untouched, if any gradient is not finite.
StepReport sgd_step(seq2seq::ModelParams& params, double lr, double clip_norm = 0.0);

struct ScheduleState {
  double lr = 0.1;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  static ScheduleState start(const TrainConfig& cfg) { return ScheduleState{cfg.lr}; }
};

struct ScheduleDecision {
  double lr = 0.0;
  bool improved = false;
  bool decayed = false;
  bool stop = false;
};

// One call per epoch. A strictly lower loss resets the non-improvement
// counter; otherwise it grows, the rate decays each time it reaches a
// multiple of plateau_patience and training stops once it reaches
// early_stop_patience.
ScheduleDecision schedule(ScheduleState& state, double valid_loss, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;

  // epoch,train_loss,valid_loss,lr,seconds
  std::string to_csv() const;
  static TrainLog from_csv(std::string_view text);
};

// Token-weighted mean cross-entropy with teacher forcing and no dropout.
double evaluate_loss(seq2seq::ModelParams& params, std::span<const seq2seq::Batch> batches);

struct CheckpointSink {
  std::filesystem::path dir;  // receives last/, best/ and train_log.csv
  const Vocabulary* src_vocab = nullptr;
  const Vocabulary* tgt_vocab = nullptr;
};

struct TrainResult {
  seq2seq::ModelParams best;
  double best_valid_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;  // 0 is the initialization
  TrainLog log;
  bool stopped_early = false;
  std::optional<std::string> aborted;  // diagnostic when a loss or gradient went non-finite
};

struct TrainHooks {
  std::optional<CheckpointSink> checkpoints;
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(seq2seq::ModelParams initial, std::span<const EncodedExample> train_set,
                  std::span<const EncodedExample> valid_set, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

}  // namespace cmg::trainer
