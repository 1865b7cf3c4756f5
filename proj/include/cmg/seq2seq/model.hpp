#pragma once

#include "cmg/numerics/ops.hpp"
#include "cmg/vocab.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cmg::seq2seq {

using numerics::Index;
using numerics::Mask;
using Mat = numerics::Matrix<double>;
using Tensor = numerics::Tensor<double>;
using Tape = numerics::Tape<double>;
using Var = numerics::Var<double>;

struct ModelConfig {
  int src_vocab = 0;
  int tgt_vocab = 0;
  int hidden_dim = 512;  // per encoder direction and for the decoder
  int embed_dim = 256;
  double embed_dropout = 0.1;
  int max_decode_len = 30;

  void validate() const;
};

// Gate weights of one GRU cell, applied as row vectors: x W + h U + b.
struct GruParams {
  Tensor w_update, w_reset, w_candidate;  // input x hidden
  Tensor u_update, u_reset, u_candidate;  // hidden x hidden
  Tensor b_update, b_reset, b_candidate;  // 1 x hidden
};

struct ModelParams {
  ModelConfig config;
  Tensor embed_src;  // src_vocab x embed
  Tensor embed_tgt;  // tgt_vocab x embed
  GruParams encoder_fwd;
  GruParams encoder_bwd;
  Tensor bridge_w;  // 2*hidden x hidden
  Tensor bridge_b;  // 1 x hidden
  GruParams decoder;  // input is [embedding; context]
  Tensor attn_query;  // hidden x hidden, applied to the previous decoder state
  Tensor attn_key;    // 2*hidden x hidden, applied to encoder states
  Tensor attn_score;  // hidden x 1
  Tensor out_w;       // (hidden + embed + 2*hidden) x tgt_vocab
  Tensor out_b;       // 1 x tgt_vocab

  // Zero-valued parameters with the shapes implied by `config`.
  static ModelParams zeros(const ModelConfig& config);
  // Uniform(-0.08, 0.08) initialization from a seeded generator.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  // Every tensor in a fixed order with a stable name. Pointers stay valid as
  // long as this object is not moved.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  void zero_grad();
  bool all_finite() const;
  std::size_t parameter_count() const;
};

// Padded mini-batch. Ids are stored row-major (batch x steps); sequences
// carry <sos> and <eos> markers and are padded with <pad>.
struct Batch {
  Index size = 0;
  Index src_steps = 0;
  Index tgt_steps = 0;
  std::vector<int> src;
  std::vector<int> tgt;
  std::vector<int> src_len;  // true lengths, markers included
  std::vector<int> tgt_len;
  std::vector<std::size_t> example_ids;  // position in the originating dataset

  int src_at(Index row, Index step) const { return src[static_cast<std::size_t>(row * src_steps + step)]; }
  int tgt_at(Index row, Index step) const { return tgt[static_cast<std::size_t>(row * tgt_steps + step)]; }
  std::vector<int> src_column(Index step) const;
  std::vector<int> tgt_column(Index step) const;
  std::vector<std::uint8_t> src_live(Index step) const;
  std::vector<std::uint8_t> tgt_live(Index step) const;
  Mask src_mask() const;
};

// Builds a batch from already-encoded sequences (markers included).
Batch make_batch(std::span<const std::vector<int>> sources,
                 std::span<const std::vector<int>> targets);

// Parameters bound as leaves of one tape.
struct BoundGru {
  Var w_update, w_reset, w_candidate, u_update, u_reset, u_candidate, b_update, b_reset,
      b_candidate;
};

struct BoundParams {
  Var embed_src, embed_tgt;
  BoundGru encoder_fwd, encoder_bwd, decoder;
  Var bridge_w, bridge_b;
  Var attn_query, attn_key, attn_score;
  Var out_w, out_b;
  ModelConfig config;
};

BoundParams bind(Tape& tape, ModelParams& params);

Var gru_step(const BoundGru& cell, const Var& input, const Var& state);

struct EncoderOutput {
  std::vector<Var> states;  // per source step, batch x 2*hidden
  std::vector<Var> keys;    // per source step, states[t] * attn_key
  Var initial_decoder;      // batch x hidden
  Mask mask;                // batch x src_steps
};

struct Attention {
  Var context;  // batch x 2*hidden
  Var weights;  // batch x src_steps
};

struct StepOutput {
  Var state;   // batch x hidden
  Var logits;  // batch x tgt_vocab
};

// Bidirectional GRU over the source. Padding positions carry the previous
// state forward unchanged in both directions.
EncoderOutput encode(const BoundParams& p, const Batch& batch, Rng& rng, bool training);

// Additive attention of the previous decoder state over the encoder states.
Attention attend(const BoundParams& p, const Var& prev_state, const EncoderOutput& enc);

// One decoder step: GRU over [embed(y_prev); context], then the output
// projection of [state; embed(y_prev); context].
StepOutput decode_step(const BoundParams& p, std::span<const int> prev_tokens,
                       const Var& prev_state, const Var& context, Rng& rng, bool training);

struct LossOptions {
  double teacher_forcing = 1.0;
  std::uint64_t seed = 0;
  bool training = true;  // enables embedding dropout
};

// Mean token cross-entropy over live target positions. With probability
// teacher_forcing the gold token is fed back at each step, otherwise the
// previous argmax prediction (one draw per step for the whole batch).
Var forward_loss(Tape& tape, ModelParams& params, const Batch& batch, const LossOptions& options);

// Loss value only (no gradients retained).
double loss_value(ModelParams& params, const Batch& batch, const LossOptions& options);

// Attention weights: one row per emitted token, one column per source
// position (markers included).
struct AttentionMap {
  Mat alpha;
};

struct Generation {
  std::vector<int> tokens;  // excludes <sos> and <eos>
  AttentionMap attention;
};

// Greedy decoding from <sos>; stops at <eos> or after max_len tokens. Ties
// in the argmax go to the lowest id.
std::vector<Generation> greedy_decode(ModelParams& params, const Batch& batch, int max_len);
Generation greedy_decode(ModelParams& params, std::span<const int> src_ids, int max_len);

}  // namespace cmg::seq2seq
