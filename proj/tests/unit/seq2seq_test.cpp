#include "cmg/seq2seq/model.hpp"
#include "support/model_gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace cmg;
using namespace cmg::seq2seq;

namespace {

ModelConfig small_config(int vocab = 20, int hidden = 8, int embed = 6) {
  ModelConfig c;
  c.src_vocab = vocab;
  c.tgt_vocab = vocab;
  c.hidden_dim = hidden;
  c.embed_dim = embed;
  c.embed_dropout = 0.0;
  return c;
}

Batch toy_batch() {
  const std::vector<std::vector<int>> src{{1, 5, 6, 7, 2}, {1, 8, 9, 2}};
  const std::vector<std::vector<int>> tgt{{1, 4, 11, 2}, {1, 12, 2}};
  return make_batch(src, tgt);
}

void randomize(ModelParams& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& [name, t] : p.named()) {
    for (Index i = 0; i < t->size(); ++i) t->value.data()[i] = uniform(rng, -scale, scale);
  }
}

}  // namespace

TEST_CASE("parameter shapes follow the config") {
  const ModelConfig c = small_config(20, 8, 6);
  const ModelParams p = ModelParams::zeros(c);
  CHECK(p.embed_src.rows() == 20);
  CHECK(p.embed_src.cols() == 6);
  CHECK(p.decoder.w_update.rows() == 6 + 16);
  CHECK(p.bridge_w.rows() == 16);
  CHECK(p.attn_key.rows() == 16);
  CHECK(p.out_w.rows() == 8 + 6 + 16);
  CHECK(p.out_w.cols() == 20);
  CHECK(p.named().size() == 2 + 9 * 3 + 2 + 3 + 2);

  ModelConfig bad = c;
  bad.embed_dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.hidden_dim = 0;
  CHECK_THROWS_AS(ModelParams::zeros(bad), DomainError);
}

TEST_CASE("initialization is seeded and bounded") {
  const ModelConfig c = small_config();
  const ModelParams a = ModelParams::initialize(c, 3);
  const ModelParams b = ModelParams::initialize(c, 3);
  const ModelParams d = ModelParams::initialize(c, 4);
  CHECK(a.out_w.value == b.out_w.value);
  CHECK(a.out_w.value != d.out_w.value);
  for (const auto& [name, t] : a.named()) {
    CHECK(t->value.cwiseAbs().maxCoeff() <= 0.08);
  }
}

TEST_CASE("make_batch pads and masks") {
  const std::vector<std::vector<int>> src{{1, 5, 2}, {1, 5, 6, 7, 2}};
  const std::vector<std::vector<int>> tgt{{1, 2}, {1, 4, 2}};
  const Batch b = make_batch(src, tgt);
  CHECK(b.src_steps == 5);
  CHECK(b.tgt_steps == 3);
  CHECK(b.src_column(4) == std::vector<int>{kPadId, 2});
  const Mask m = b.src_mask();
  CHECK(m(0, 2));
  CHECK_FALSE(m(0, 3));
  CHECK(m(1, 4));
  CHECK_THROWS_AS(make_batch(src, std::vector<std::vector<int>>{{1, 2}}), DimensionError);
  CHECK_THROWS_AS(make_batch({}, {}), DomainError);
}

TEST_CASE("zero parameters give zero encoder states") {
  ModelParams p = ModelParams::zeros(small_config());
  const Batch batch = toy_batch();
  Tape tape;
  Rng rng(1);
  const BoundParams bp = bind(tape, p);
  const EncoderOutput enc = encode(bp, batch, rng, false);
  REQUIRE(enc.states.size() == 5);
  for (const auto& h : enc.states) {
    CHECK(h.rows() == 2);
    CHECK(h.cols() == 16);
    CHECK(h.value().isZero(0.0));
  }
  CHECK(enc.initial_decoder.value().isZero(0.0));
}

TEST_CASE("length-two source gives two encoder rows") {
  ModelParams p = ModelParams::initialize(small_config(), 2);
  const std::vector<std::vector<int>> src{{kSosId, kEosId}};
  const Batch batch = make_batch(src, {});
  Tape tape;
  Rng rng(1);
  const EncoderOutput enc = encode(bind(tape, p), batch, rng, false);
  CHECK(enc.states.size() == 2);
}

TEST_CASE("zero parameters: decoder halves the state and predicts uniformly") {
  ModelParams p = ModelParams::zeros(small_config());
  Tape tape;
  Rng rng(1);
  const BoundParams bp = bind(tape, p);
  Mat prev(2, 8);
  prev.setConstant(0.6);
  prev(1, 3) = -1.0;
  const Var prev_state = tape.constant(prev);
  const Var context = tape.constant(Mat::Ones(2, 16));
  const std::vector<int> tokens{1, 7};
  const StepOutput out = decode_step(bp, tokens, prev_state, context, rng, false);
  CHECK((out.state.value() - 0.5 * prev).norm() == doctest::Approx(0.0));
  const Mat dist = numerics::softmax(out.logits).value();
  for (Index j = 0; j < dist.cols(); ++j) CHECK(dist(0, j) == doctest::Approx(1.0 / 20));

  const std::vector<int> bad{1, 20};
  CHECK_THROWS_AS(decode_step(bp, bad, prev_state, context, rng, false), RangeError);
}

TEST_CASE("zero attention parameters average the unmasked states") {
  ModelParams p = ModelParams::zeros(small_config(20, 2, 3));
  Tape tape;
  const BoundParams bp = bind(tape, p);
  EncoderOutput enc;
  Mat h0(1, 4), h1(1, 4), h2(1, 4);
  h0 << 1, 0, 0, 0;
  h1 << 0, 1, 0, 0;
  h2 << 9, 9, 9, 9;
  for (const Mat& h : {h0, h1, h2}) {
    enc.states.push_back(tape.constant(h));
    enc.keys.push_back(numerics::matmul(enc.states.back(), bp.attn_key));
  }
  enc.mask = Mask::Constant(1, 3, true);
  enc.mask(0, 2) = false;
  const Attention att = attend(bp, tape.constant(Mat::Zero(1, 2)), enc);
  CHECK(att.weights.value()(0, 0) == doctest::Approx(0.5));
  CHECK(att.weights.value()(0, 1) == doctest::Approx(0.5));
  CHECK(att.weights.value()(0, 2) == 0.0);
  Mat expected(1, 4);
  expected << 0.5, 0.5, 0, 0;
  CHECK((att.context.value() - expected).norm() == doctest::Approx(0.0));
}

TEST_CASE("hand-set attention scores give two thirds and one third") {
  ModelParams p = ModelParams::zeros(small_config(20, 1, 3));
  // e_j = v * tanh(H_j * W_H), with H_0 * W_H = atanh(1/2) and v = 2 ln 2.
  p.attn_key.value(0, 0) = 1.0;
  p.attn_score.value(0, 0) = 2.0 * std::log(2.0);
  Tape tape;
  const BoundParams bp = bind(tape, p);
  EncoderOutput enc;
  Mat h0(1, 2), h1(1, 2);
  h0 << std::atanh(0.5), 0;
  h1 << 0, 0;
  for (const Mat& h : {h0, h1}) {
    enc.states.push_back(tape.constant(h));
    enc.keys.push_back(numerics::matmul(enc.states.back(), bp.attn_key));
  }
  enc.mask = Mask::Constant(1, 2, true);
  const Attention att = attend(bp, tape.constant(Mat::Zero(1, 1)), enc);
  CHECK(att.weights.value()(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(att.weights.value()(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("reversing the source and swapping directions mirrors the encoder") {
  ModelParams p = ModelParams::initialize(small_config(), 11);
  ModelParams q = p;
  std::swap(q.encoder_fwd, q.encoder_bwd);
  const std::vector<std::vector<int>> forward{{1, 5, 6, 7, 2}};
  const std::vector<std::vector<int>> reversed{{2, 7, 6, 5, 1}};
  Tape tape;
  Rng rng(1);
  const EncoderOutput a = encode(bind(tape, p), make_batch(forward, {}), rng, false);
  const EncoderOutput b = encode(bind(tape, q), make_batch(reversed, {}), rng, false);
  const Index h = 8;
  for (std::size_t t = 0; t < 5; ++t) {
    const Mat& ha = a.states[t].value();
    const Mat& hb = b.states[4 - t].value();
    CHECK((ha.leftCols(h) - hb.rightCols(h)).norm() == 0.0);
    CHECK((ha.rightCols(h) - hb.leftCols(h)).norm() == 0.0);
  }
}

TEST_CASE("decoder output is a probability vector") {
  ModelParams p = ModelParams::zeros(small_config());
  randomize(p, 5, 1.0);
  Tape tape;
  Rng rng(1);
  const BoundParams bp = bind(tape, p);
  const Batch batch = toy_batch();
  const EncoderOutput enc = encode(bp, batch, rng, false);
  Var state = enc.initial_decoder;
  std::vector<int> input{kSosId, kSosId};
  for (int step = 0; step < 4; ++step) {
    const Attention att = attend(bp, state, enc);
    const StepOutput out = decode_step(bp, input, state, att.context, rng, false);
    const Mat dist = numerics::softmax(out.logits).value();
    for (Index r = 0; r < dist.rows(); ++r) {
      CHECK(dist.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(dist.row(r).minCoeff() >= 0.0);
      CHECK(att.weights.value().row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(att.weights.value()(1, 4) == 0.0);
    input = numerics::argmax_rows(out.logits.value());
    state = out.state;
  }
}

TEST_CASE("initial loss is close to log of the target vocabulary") {
  ModelConfig c = small_config(50, 16, 8);
  ModelParams p = ModelParams::initialize(c, 9);
  const double loss = loss_value(p, toy_batch(), LossOptions{1.0, 0, false});
  CHECK(std::abs(loss - std::log(50.0)) < 0.1 * std::log(50.0));
}

TEST_CASE("appending padding to the source leaves the loss unchanged") {
  ModelParams p = ModelParams::initialize(small_config(), 21);
  randomize(p, 22, 0.5);
  const std::vector<std::vector<int>> src{{1, 5, 6, 7, 2}};
  const std::vector<std::vector<int>> tgt{{1, 4, 11, 2}};
  const Batch plain = make_batch(src, tgt);

  Batch padded = plain;
  padded.src_steps = plain.src_steps + 3;
  padded.src = plain.src;
  padded.src.insert(padded.src.end(), 3, kPadId);

  const LossOptions opts{0.5, 3, false};
  const double a = loss_value(p, plain, opts);
  const double b = loss_value(p, padded, opts);
  CHECK(std::abs(a - b) < 1e-9);
}

TEST_CASE("a short example keeps its loss when batched with a longer one") {
  ModelParams p = ModelParams::initialize(small_config(), 31);
  randomize(p, 32, 0.5);
  const std::vector<std::vector<int>> short_src{{1, 8, 9, 2}};
  const std::vector<std::vector<int>> short_tgt{{1, 12, 2}};
  const Batch alone = make_batch(short_src, short_tgt);
  const Batch together = toy_batch();  // row 1 is the same example

  // Sum of per-token losses: the batch mean times the live target count.
  const LossOptions opts{1.0, 0, false};
  const Batch first = make_batch(std::vector<std::vector<int>>{{1, 5, 6, 7, 2}},
                                 std::vector<std::vector<int>>{{1, 4, 11, 2}});
  const double joint = loss_value(p, together, opts) * 5;
  const double separate = loss_value(p, first, opts) * 3 + loss_value(p, alone, opts) * 2;
  CHECK(std::abs(joint - separate) < 1e-9);
}

TEST_CASE("teacher forcing probability selects forced or free-running inputs") {
  ModelParams p = ModelParams::initialize(small_config(), 41);
  randomize(p, 42, 1.0);
  const Batch batch = toy_batch();
  const double forced_a = loss_value(p, batch, LossOptions{1.0, 1, false});
  const double forced_b = loss_value(p, batch, LossOptions{1.0, 99, false});
  const double free_a = loss_value(p, batch, LossOptions{0.0, 1, false});
  const double free_b = loss_value(p, batch, LossOptions{0.0, 99, false});
  CHECK(forced_a == forced_b);
  CHECK(free_a == free_b);
  CHECK(forced_a != free_a);

  const double drop_a = loss_value(p, batch, LossOptions{0.5, 7, true});
  const double drop_b = loss_value(p, batch, LossOptions{0.5, 7, true});
  CHECK(drop_a == drop_b);
}

TEST_CASE("forward_loss rejects batches without targets") {
  ModelParams p = ModelParams::initialize(small_config(), 1);
  const std::vector<std::vector<int>> src{{1, 5, 2}};
  const Batch no_targets = make_batch(src, {});
  CHECK_THROWS_AS(loss_value(p, no_targets, LossOptions{}), DomainError);
  const std::vector<std::vector<int>> bad_src{{1, 25, 2}};
  const std::vector<std::vector<int>> tgt{{1, 4, 2}};
  CHECK_THROWS_AS(loss_value(p, make_batch(bad_src, tgt), LossOptions{}), RangeError);
}

TEST_CASE("full-model gradient matches central differences") {
  ModelConfig c = small_config(20, 8, 6);
  c.embed_dropout = 0.1;
  ModelParams p = ModelParams::initialize(c, 5);
  randomize(p, 6, 0.5);
  const LossOptions opts{1.0, 13, true};
  const auto errors = testing::model_gradient_errors(p, toy_batch(), opts);
  CHECK(errors.size() == p.named().size());
  for (const auto& e : errors) {
    INFO(e.name);
    CHECK(e.relative_error < 1e-4);
  }
}

TEST_CASE("greedy decoding") {
  ModelParams p = ModelParams::initialize(small_config(), 51);
  randomize(p, 52, 1.0);
  const std::vector<int> src{1, 5, 6, 7, 2};
  CHECK(greedy_decode(p, src, 0).tokens.empty());

  const Generation g = greedy_decode(p, src, 6);
  CHECK(g.tokens.size() <= 6);
  CHECK(g.attention.alpha.rows() == static_cast<Index>(g.tokens.size()));
  CHECK(g.attention.alpha.cols() == 5);
  for (Index r = 0; r < g.attention.alpha.rows(); ++r) {
    CHECK(g.attention.alpha.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (int t : g.tokens) CHECK(t != kEosId);
  CHECK(greedy_decode(p, src, 6).tokens == g.tokens);

  // Batched decoding agrees with one-at-a-time decoding.
  const std::vector<std::vector<int>> sources{{1, 8, 9, 2}, src};
  const auto both = greedy_decode(p, make_batch(sources, {}), 6);
  CHECK(both[1].tokens == g.tokens);
  CHECK((both[1].attention.alpha - g.attention.alpha).norm() < 1e-12);
  CHECK(both[0].tokens == greedy_decode(p, sources[0], 6).tokens);
}

TEST_CASE("zero parameters decode the lowest id until max_len") {
  ModelParams p = ModelParams::zeros(small_config());
  const std::vector<int> src{1, 5, 2};
  const Generation g = greedy_decode(p, src, 4);
  CHECK(g.tokens == std::vector<int>{kPadId, kPadId, kPadId, kPadId});
}
