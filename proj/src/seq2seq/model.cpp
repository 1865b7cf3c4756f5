#include "cmg/seq2seq/model.hpp"

#include "cmg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cmg::seq2seq {

namespace num = cmg::numerics;

void ModelConfig::validate() const {
  if (src_vocab <= 0 || tgt_vocab <= 0 || hidden_dim <= 0 || embed_dim <= 0) {
    throw DomainError("model config: vocabulary and layer sizes must be positive");
  }
  if (!(embed_dropout >= 0.0 && embed_dropout < 1.0)) {
    throw DomainError("model config: embed_dropout must lie in [0, 1)");
  }
  if (max_decode_len < 0) throw DomainError("model config: max_decode_len must be >= 0");
}

namespace {

Tensor zeros_tensor(int rows, int cols) { return Tensor(Mat::Zero(rows, cols)); }

GruParams zero_gru(int input, int hidden) {
  return GruParams{zeros_tensor(input, hidden),  zeros_tensor(input, hidden),
                   zeros_tensor(input, hidden),  zeros_tensor(hidden, hidden),
                   zeros_tensor(hidden, hidden), zeros_tensor(hidden, hidden),
                   zeros_tensor(1, hidden),      zeros_tensor(1, hidden),
                   zeros_tensor(1, hidden)};
}

template <typename Gru, typename Out>
void append_gru(Out& out, const std::string& prefix, Gru& g) {
  out.emplace_back(prefix + ".w_update", &g.w_update);
  out.emplace_back(prefix + ".w_reset", &g.w_reset);
  out.emplace_back(prefix + ".w_candidate", &g.w_candidate);
  out.emplace_back(prefix + ".u_update", &g.u_update);
  out.emplace_back(prefix + ".u_reset", &g.u_reset);
  out.emplace_back(prefix + ".u_candidate", &g.u_candidate);
  out.emplace_back(prefix + ".b_update", &g.b_update);
  out.emplace_back(prefix + ".b_reset", &g.b_reset);
  out.emplace_back(prefix + ".b_candidate", &g.b_candidate);
}

template <typename Self, typename Out>
void collect(Self& self, Out& out) {
  out.emplace_back("embed_src", &self.embed_src);
  out.emplace_back("embed_tgt", &self.embed_tgt);
  append_gru(out, "encoder_fwd", self.encoder_fwd);
  append_gru(out, "encoder_bwd", self.encoder_bwd);
  out.emplace_back("bridge_w", &self.bridge_w);
  out.emplace_back("bridge_b", &self.bridge_b);
  append_gru(out, "decoder", self.decoder);
  out.emplace_back("attn_query", &self.attn_query);
  out.emplace_back("attn_key", &self.attn_key);
  out.emplace_back("attn_score", &self.attn_score);
  out.emplace_back("out_w", &self.out_w);
  out.emplace_back("out_b", &self.out_b);
}

BoundGru bind_gru(Tape& tape, GruParams& g) {
  return BoundGru{tape.leaf(g.w_update), tape.leaf(g.w_reset),     tape.leaf(g.w_candidate),
                  tape.leaf(g.u_update), tape.leaf(g.u_reset),     tape.leaf(g.u_candidate),
                  tape.leaf(g.b_update), tape.leaf(g.b_reset),     tape.leaf(g.b_candidate)};
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const int h = config.hidden_dim, e = config.embed_dim;
  ModelParams p;
  p.config = config;
  p.embed_src = zeros_tensor(config.src_vocab, e);
  p.embed_tgt = zeros_tensor(config.tgt_vocab, e);
  p.encoder_fwd = zero_gru(e, h);
  p.encoder_bwd = zero_gru(e, h);
  p.bridge_w = zeros_tensor(2 * h, h);
  p.bridge_b = zeros_tensor(1, h);
  p.decoder = zero_gru(e + 2 * h, h);
  p.attn_query = zeros_tensor(h, h);
  p.attn_key = zeros_tensor(2 * h, h);
  p.attn_score = zeros_tensor(h, 1);
  p.out_w = zeros_tensor(h + e + 2 * h, config.tgt_vocab);
  p.out_b = zeros_tensor(1, config.tgt_vocab);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  Rng rng(mix_seed(seed, 0x1417));
  for (auto& [name, t] : p.named()) {
    for (Index i = 0; i < t->value.size(); ++i) t->value.data()[i] = uniform(rng, -0.08, 0.08);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect(*this, out);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

bool ModelParams::all_finite() const {
  for (const auto& [name, t] : named()) {
    if (!t->value.allFinite()) return false;
  }
  return true;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += static_cast<std::size_t>(t->size());
  return n;
}

std::vector<int> Batch::src_column(Index step) const {
  std::vector<int> col(static_cast<std::size_t>(size));
  for (Index b = 0; b < size; ++b) col[static_cast<std::size_t>(b)] = src_at(b, step);
  return col;
}

std::vector<int> Batch::tgt_column(Index step) const {
  std::vector<int> col(static_cast<std::size_t>(size));
  for (Index b = 0; b < size; ++b) col[static_cast<std::size_t>(b)] = tgt_at(b, step);
  return col;
}

std::vector<std::uint8_t> Batch::src_live(Index step) const {
  std::vector<std::uint8_t> live(static_cast<std::size_t>(size));
  for (Index b = 0; b < size; ++b) {
    live[static_cast<std::size_t>(b)] = step < src_len[static_cast<std::size_t>(b)] ? 1 : 0;
  }
  return live;
}

std::vector<std::uint8_t> Batch::tgt_live(Index step) const {
  std::vector<std::uint8_t> live(static_cast<std::size_t>(size));
  for (Index b = 0; b < size; ++b) {
    live[static_cast<std::size_t>(b)] = step < tgt_len[static_cast<std::size_t>(b)] ? 1 : 0;
  }
  return live;
}

Mask Batch::src_mask() const {
  Mask m(size, src_steps);
  for (Index b = 0; b < size; ++b) {
    for (Index t = 0; t < src_steps; ++t) m(b, t) = t < src_len[static_cast<std::size_t>(b)];
  }
  return m;
}

Batch make_batch(std::span<const std::vector<int>> sources,
                 std::span<const std::vector<int>> targets) {
  if (sources.empty()) throw DomainError("make_batch: empty batch");
  if (!targets.empty() && targets.size() != sources.size()) {
    throw DimensionError("make_batch: " + std::to_string(sources.size()) + " sources but " +
                         std::to_string(targets.size()) + " targets");
  }
  Batch b;
  b.size = static_cast<Index>(sources.size());
  for (const auto& s : sources) {
    if (s.empty()) throw DomainError("make_batch: empty source sequence");
    b.src_steps = std::max<Index>(b.src_steps, static_cast<Index>(s.size()));
  }
  for (const auto& t : targets) b.tgt_steps = std::max<Index>(b.tgt_steps, static_cast<Index>(t.size()));
  b.src.assign(static_cast<std::size_t>(b.size * b.src_steps), kPadId);
  b.tgt.assign(static_cast<std::size_t>(b.size * b.tgt_steps), kPadId);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::copy(sources[i].begin(), sources[i].end(),
              b.src.begin() + static_cast<std::ptrdiff_t>(i) * b.src_steps);
    b.src_len.push_back(static_cast<int>(sources[i].size()));
    if (!targets.empty()) {
      std::copy(targets[i].begin(), targets[i].end(),
                b.tgt.begin() + static_cast<std::ptrdiff_t>(i) * b.tgt_steps);
      b.tgt_len.push_back(static_cast<int>(targets[i].size()));
    }
    b.example_ids.push_back(i);
  }
  return b;
}

BoundParams bind(Tape& tape, ModelParams& params) {
  BoundParams b;
  b.config = params.config;
  b.embed_src = tape.leaf(params.embed_src);
  b.embed_tgt = tape.leaf(params.embed_tgt);
  b.encoder_fwd = bind_gru(tape, params.encoder_fwd);
  b.encoder_bwd = bind_gru(tape, params.encoder_bwd);
  b.bridge_w = tape.leaf(params.bridge_w);
  b.bridge_b = tape.leaf(params.bridge_b);
  b.decoder = bind_gru(tape, params.decoder);
  b.attn_query = tape.leaf(params.attn_query);
  b.attn_key = tape.leaf(params.attn_key);
  b.attn_score = tape.leaf(params.attn_score);
  b.out_w = tape.leaf(params.out_w);
  b.out_b = tape.leaf(params.out_b);
  return b;
}

Var gru_step(const BoundGru& c, const Var& x, const Var& h) {
  using num::matmul;
  const Var z = num::sigmoid(matmul(x, c.w_update) + matmul(h, c.u_update) + c.b_update);
  const Var r = num::sigmoid(matmul(x, c.w_reset) + matmul(h, c.u_reset) + c.b_reset);
  const Var n =
      num::tanh(matmul(x, c.w_candidate) + matmul(num::mul(r, h), c.u_candidate) + c.b_candidate);
  // (1 - z) * n + z * h
  return n + num::mul(z, h - n);
}

namespace {

void check_ids(std::span<const int> ids, int vocab, const char* what) {
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw RangeError(std::string(what) + ": id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

}  // namespace

EncoderOutput encode(const BoundParams& p, const Batch& batch, Rng& rng, bool training) {
  check_ids(batch.src, p.config.src_vocab, "encode");
  Tape& tape = *p.embed_src.tape();
  const Index steps = batch.src_steps;
  const int h = p.config.hidden_dim;

  std::vector<Var> inputs;
  std::vector<std::vector<std::uint8_t>> live;
  inputs.reserve(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) {
    const auto ids = batch.src_column(t);
    inputs.push_back(num::dropout(num::gather_rows<double>(p.embed_src, ids),
                                  p.config.embed_dropout, rng, training));
    live.push_back(batch.src_live(t));
  }

  const Var zero = tape.constant(Mat::Zero(batch.size, h));
  std::vector<Var> fwd(static_cast<std::size_t>(steps)), bwd(static_cast<std::size_t>(steps));
  Var state = zero;
  for (Index t = 0; t < steps; ++t) {
    const auto k = static_cast<std::size_t>(t);
    state = num::select_rows<double>(live[k], gru_step(p.encoder_fwd, inputs[k], state), state);
    fwd[k] = state;
  }
  state = zero;
  for (Index t = steps; t-- > 0;) {
    const auto k = static_cast<std::size_t>(t);
    state = num::select_rows<double>(live[k], gru_step(p.encoder_bwd, inputs[k], state), state);
    bwd[k] = state;
  }

  EncoderOutput out;
  out.mask = batch.src_mask();
  for (Index t = 0; t < steps; ++t) {
    const auto k = static_cast<std::size_t>(t);
    out.states.push_back(num::hcat<double>({fwd[k], bwd[k]}));
    out.keys.push_back(num::matmul(out.states.back(), p.attn_key));
  }
  // Final state of each direction: forward after the last live token,
  // backward after reading back to <sos>.
  const Var summary = num::hcat<double>({fwd.back(), bwd.front()});
  out.initial_decoder = num::tanh(num::matmul(summary, p.bridge_w) + p.bridge_b);
  return out;
}

Attention attend(const BoundParams& p, const Var& prev_state, const EncoderOutput& enc) {
  Tape& tape = *prev_state.tape();
  const Index steps = static_cast<Index>(enc.states.size());
  const Index rows = prev_state.rows();
  const Var query = num::matmul(prev_state, p.attn_query);

  std::vector<Var> scores;
  std::vector<bool> used(static_cast<std::size_t>(steps));
  scores.reserve(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) {
    const auto k = static_cast<std::size_t>(t);
    used[k] = enc.mask.col(t).any();
    if (used[k]) {
      scores.push_back(num::matmul(num::tanh(enc.keys[k] + query), p.attn_score));
    } else {
      // Column is padding for every row; its weight is exactly zero.
      scores.push_back(tape.constant(Mat::Zero(rows, 1)));
    }
  }
  const Var weights = num::softmax(num::hcat(scores), &enc.mask);

  Var context;
  for (Index t = 0; t < steps; ++t) {
    const auto k = static_cast<std::size_t>(t);
    if (!used[k]) continue;
    const Var term = num::scale_rows(num::slice_cols(weights, t, 1), enc.states[k]);
    context = context.valid() ? context + term : term;
  }
  return Attention{context, weights};
}

StepOutput decode_step(const BoundParams& p, std::span<const int> prev_tokens,
                       const Var& prev_state, const Var& context, Rng& rng, bool training) {
  check_ids(prev_tokens, p.config.tgt_vocab, "decode_step");
  const Var emb = num::dropout(num::gather_rows<double>(p.embed_tgt, prev_tokens),
                               p.config.embed_dropout, rng, training);
  const Var state = gru_step(p.decoder, num::hcat<double>({emb, context}), prev_state);
  const Var logits =
      num::matmul(num::hcat<double>({state, emb, context}), p.out_w) + p.out_b;
  return StepOutput{state, logits};
}

Var forward_loss(Tape& tape, ModelParams& params, const Batch& batch, const LossOptions& options) {
  if (batch.size == 0 || batch.tgt_steps < 2) {
    throw DomainError("forward_loss: batch has no target positions to predict");
  }
  Rng rng(mix_seed(options.seed, 0x5eed));
  const BoundParams p = bind(tape, params);
  const EncoderOutput enc = encode(p, batch, rng, options.training);

  Var state = enc.initial_decoder;
  std::vector<int> input = batch.tgt_column(0);
  Var total;
  long live_count = 0;
  for (Index t = 1; t < batch.tgt_steps; ++t) {
    const Attention att = attend(p, state, enc);
    const StepOutput step = decode_step(p, input, state, att.context, rng, options.training);
    const auto gold = batch.tgt_column(t);
    const auto live = batch.tgt_live(t);
    live_count += std::count(live.begin(), live.end(), std::uint8_t{1});
    const Var ce = num::cross_entropy_sum<double>(step.logits, gold, live);
    total = total.valid() ? total + ce : ce;
    state = step.state;

    const bool force = bernoulli(rng, options.teacher_forcing);
    input = force ? gold : num::argmax_rows(step.logits.value());
  }
  if (live_count == 0) throw DomainError("forward_loss: every target position is padding");
  return num::scale(total, 1.0 / static_cast<double>(live_count));
}

double loss_value(ModelParams& params, const Batch& batch, const LossOptions& options) {
  Tape tape;
  return forward_loss(tape, params, batch, options).value()(0, 0);
}

std::vector<Generation> greedy_decode(ModelParams& params, const Batch& batch, int max_len) {
  std::vector<Generation> out(static_cast<std::size_t>(batch.size));
  if (max_len <= 0) return out;
  Tape tape;
  Rng rng(0);
  const BoundParams p = bind(tape, params);
  const EncoderOutput enc = encode(p, batch, rng, false);

  std::vector<std::vector<double>> alpha_rows(static_cast<std::size_t>(batch.size));
  std::vector<bool> done(static_cast<std::size_t>(batch.size), false);
  std::vector<int> input(static_cast<std::size_t>(batch.size), kSosId);
  Var state = enc.initial_decoder;
  for (int step = 0; step < max_len; ++step) {
    const Attention att = attend(p, state, enc);
    const StepOutput next = decode_step(p, input, state, att.context, rng, false);
    input = num::argmax_rows(next.logits.value());
    state = next.state;
    bool all_done = true;
    for (Index b = 0; b < batch.size; ++b) {
      const auto k = static_cast<std::size_t>(b);
      if (done[k]) continue;
      if (input[k] == kEosId) {
        done[k] = true;
        continue;
      }
      out[k].tokens.push_back(input[k]);
      const int len = batch.src_len[k];
      for (int j = 0; j < len; ++j) alpha_rows[k].push_back(att.weights.value()(b, j));
      all_done = false;
    }
    if (all_done) break;
  }
  for (Index b = 0; b < batch.size; ++b) {
    const auto k = static_cast<std::size_t>(b);
    const Index cols = batch.src_len[k];
    const Index rows = static_cast<Index>(out[k].tokens.size());
    out[k].attention.alpha = Mat(rows, cols);
    std::copy(alpha_rows[k].begin(), alpha_rows[k].end(), out[k].attention.alpha.data());
  }
  return out;
}

Generation greedy_decode(ModelParams& params, std::span<const int> src_ids, int max_len) {
  std::vector<std::vector<int>> sources{std::vector<int>(src_ids.begin(), src_ids.end())};
  return std::move(greedy_decode(params, make_batch(sources, {}), max_len).front());
}

}  // namespace cmg::seq2seq
