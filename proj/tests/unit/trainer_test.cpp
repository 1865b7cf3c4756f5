#include "cmg/errors.hpp"
#include "cmg/random.hpp"
#include "cmg/trainer/checkpoint.hpp"
#include "cmg/trainer/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace cmg;
using namespace cmg::trainer;

namespace fs = std::filesystem;

namespace {

seq2seq::ModelConfig tiny_config(int src = 12, int tgt = 10) {
  seq2seq::ModelConfig c;
  c.src_vocab = src;
  c.tgt_vocab = tgt;
  c.hidden_dim = 8;
  c.embed_dim = 6;
  return c;
}

std::vector<EncodedExample> toy_data(int n, int src_vocab, int tgt_vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedExample> out;
  for (int i = 0; i < n; ++i) {
    EncodedExample ex;
    ex.source = {kSosId};
    const int len = 2 + static_cast<int>(uniform_below(rng, 4));
    for (int t = 0; t < len; ++t) {
      ex.source.push_back(kNumSpecials + static_cast<int>(uniform_below(rng, src_vocab - kNumSpecials)));
    }
    ex.source.push_back(kEosId);
    ex.target = {kSosId};
    const int tl = 1 + static_cast<int>(uniform_below(rng, 3));
    for (int t = 0; t < tl; ++t) {
      ex.target.push_back(kNumSpecials + static_cast<int>(uniform_below(rng, tgt_vocab - kNumSpecials)));
    }
    ex.target.push_back(kEosId);
    out.push_back(ex);
  }
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cmg_trainer_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Vocabulary numbered_vocab(const std::string& prefix, int total) {
  std::vector<std::string> toks;
  for (int i = kNumSpecials; i < total; ++i) toks.push_back(prefix + std::to_string(i));
  return Vocabulary(toks);
}

bool same_values(const seq2seq::ModelParams& a, const seq2seq::ModelParams& b) {
  const auto na = a.named();
  const auto nb = b.named();
  if (na.size() != nb.size()) return false;
  for (std::size_t k = 0; k < na.size(); ++k) {
    if (na[k].second->value != nb[k].second->value) return false;
  }
  return true;
}

// Independent restatement of the schedule as a function of the counter.
struct CounterSchedule {
  double lr;
  bool stop;
};

CounterSchedule schedule_from_counter(int counter, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (int c = 1; c <= counter; ++c) {
    if (c % cfg.plateau_patience == 0) lr *= cfg.lr_decay_factor;
  }
  return {lr, counter >= cfg.early_stop_patience};
}

}  // namespace

TEST_CASE("make_batches sizes, padding and determinism") {
  const auto data = toy_data(130, 12, 10, 1);
  const auto batches = make_batches(data, 64, 9);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size == 64);
  CHECK(batches[1].size == 64);
  CHECK(batches[2].size == 2);

  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    for (Eigen::Index r = 0; r < b.size; ++r) {
      const auto id = b.example_ids[static_cast<std::size_t>(r)];
      seen.insert(id);
      CHECK(b.src_len[static_cast<std::size_t>(r)] == static_cast<int>(data[id].source.size()));
      CHECK(b.src_at(r, 0) == kSosId);
    }
  }
  CHECK(seen.size() == 130);

  const auto again = make_batches(data, 64, 9);
  const auto other = make_batches(data, 64, 10);
  CHECK(again[0].example_ids == batches[0].example_ids);
  CHECK(other[0].example_ids != batches[0].example_ids);
  CHECK_THROWS_AS(make_batches(data, 0, 1), DomainError);
}

TEST_CASE("short sequences are padded and masked") {
  std::vector<EncodedExample> pair{{{1, 5, 2}, {1, 4, 2}}, {{1, 5, 6, 7, 2}, {1, 4, 2}}};
  const auto b = make_batches_in_order(pair, 2)[0];
  CHECK(b.src_steps == 5);
  const auto mask = b.src_mask();
  CHECK(mask.row(0).cast<int>().sum() == 3);
  CHECK((mask.row(0).cast<int>() == Eigen::Array<int, 1, 5>(1, 1, 1, 0, 0)).all());
  CHECK(b.src_at(0, 3) == kPadId);
  CHECK(b.src_len == std::vector<int>{3, 5});
}

TEST_CASE("sgd_step arithmetic") {
  auto p = seq2seq::ModelParams::zeros(tiny_config());
  p.out_b.value(0, 0) = 1.0;
  p.out_b.grad(0, 0) = 2.0;
  auto r = sgd_step(p, 0.1);
  CHECK(p.out_b.value(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.grad_norm == doctest::Approx(2.0));
  CHECK(p.out_b.grad.isZero());

  auto init = seq2seq::ModelParams::initialize(tiny_config(), 3);
  auto q = init;
  for (auto& [name, t] : q.named()) t->grad.setConstant(0.5);
  sgd_step(q, 0.0);
  CHECK(same_values(q, init));

  p.out_b.grad(0, 0) = 6.0;
  p.out_b.grad(0, 1) = 8.0;
  const double before0 = p.out_b.value(0, 0);
  r = sgd_step(p, 1.0, 5.0);
  CHECK(r.clipped);
  CHECK(r.grad_norm == doctest::Approx(10.0));
  CHECK(p.out_b.value(0, 0) == doctest::Approx(before0 - 3.0));
  CHECK(p.out_b.value(0, 1) == doctest::Approx(-4.0));

  const auto snapshot = p;
  p.embed_src.grad(1, 1) = std::nan("");
  CHECK_THROWS_AS(sgd_step(p, 0.1), NonFiniteError);
  CHECK(same_values(p, snapshot));
}

TEST_CASE("one small step decreases the loss on a fixed batch") {
  auto p = seq2seq::ModelParams::initialize(tiny_config(), 11);
  const auto data = toy_data(4, 12, 10, 5);
  const auto batch = make_batches_in_order(data, 4)[0];
  const seq2seq::LossOptions opts{1.0, 0, false};
  const double before = seq2seq::loss_value(p, batch, opts);
  {
    seq2seq::Tape tape;
    tape.backward(seq2seq::forward_loss(tape, p, batch, opts));
  }
  sgd_step(p, 1e-3);
  CHECK(seq2seq::loss_value(p, batch, opts) < before);
}

TEST_CASE("schedule decays at the plateau and stops at twenty") {
  TrainConfig cfg;
  auto s = ScheduleState::start(cfg);
  CHECK(schedule(s, 1.0, cfg).improved);
  int decays = 0;
  for (int e = 1; e <= 10; ++e) {
    const auto d = schedule(s, 1.1, cfg);
    decays += d.decayed;
    CHECK_FALSE(d.stop);
    if (e < 10) CHECK(d.lr == 0.1);
  }
  CHECK(decays == 1);
  CHECK(s.lr == doctest::Approx(0.01).epsilon(1e-15));

  bool stop = false;
  for (int e = 11; e <= 20; ++e) {
    const auto d = schedule(s, 1.0, cfg);  // equal is not an improvement
    CHECK(d.stop == (e == 20));
    stop = d.stop;
  }
  CHECK(stop);

  auto t = ScheduleState::start(cfg);
  for (int e = 0; e < 100; ++e) {
    const auto d = schedule(t, 10.0 - 0.01 * e, cfg);
    CHECK(d.improved);
    CHECK_FALSE(d.stop);
    CHECK(d.lr == 0.1);
  }
}

TEST_CASE("schedule depends only on the non-improvement counter") {
  TrainConfig cfg;
  cfg.plateau_patience = 3;
  cfg.early_stop_patience = 7;
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = ScheduleState::start(cfg);
    double best = INFINITY;
    int counter = 0;
    double lr_expected = cfg.lr;
    for (int e = 0; e < 30; ++e) {
      const double loss = uniform(rng, 0.0, 1.0);
      const auto d = schedule(s, loss, cfg);
      if (loss < best) {
        best = loss;
        lr_expected = s.lr;  // the rate is never restored
        counter = 0;
        CHECK(d.improved);
        CHECK_FALSE(d.stop);
      } else {
        const auto before = schedule_from_counter(counter, cfg);
        ++counter;
        const auto after = schedule_from_counter(counter, cfg);
        lr_expected *= after.lr / before.lr;
        CHECK(d.stop == after.stop);
        CHECK(d.decayed == (after.lr != before.lr));
      }
      CHECK(d.lr == doctest::Approx(lr_expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("train with zero epochs returns the initialization") {
  const auto init = seq2seq::ModelParams::initialize(tiny_config(), 4);
  const auto data = toy_data(6, 12, 10, 2);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const auto r = train(init, data, data, cfg);
  CHECK(r.log.records.empty());
  CHECK(r.best_epoch == 0);
  CHECK(same_values(r.best, init));
  CHECK_THROWS_AS(train(init, {}, data, cfg), DomainError);
}

TEST_CASE("lr zero leaves parameters at initialization") {
  const auto init = seq2seq::ModelParams::initialize(tiny_config(), 4);
  const auto data = toy_data(6, 12, 10, 2);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.max_epochs = 3;
  cfg.batch_size = 2;
  const auto r = train(init, data, data, cfg);
  CHECK(r.log.records.size() == 3);
  CHECK(same_values(r.best, init));
}

TEST_CASE("training is reproducible and keeps the best epoch") {
  const auto init = seq2seq::ModelParams::initialize(tiny_config(), 8);
  const auto train_set = toy_data(12, 12, 10, 3);
  const auto valid_set = toy_data(5, 12, 10, 4);
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.batch_size = 4;
  cfg.lr = 0.5;
  cfg.seed = 77;
  const auto a = train(init, train_set, valid_set, cfg);
  const auto b = train(init, train_set, valid_set, cfg);
  REQUIRE(a.log.records.size() == b.log.records.size());
  double min_valid = INFINITY;
  int min_epoch = 0;
  for (std::size_t k = 0; k < a.log.records.size(); ++k) {
    const auto& ra = a.log.records[k];
    const auto& rb = b.log.records[k];
    CHECK(ra.epoch == static_cast<int>(k) + 1);
    CHECK(ra.train_loss == rb.train_loss);
    CHECK(ra.valid_loss == rb.valid_loss);
    CHECK(ra.lr == rb.lr);
    if (ra.valid_loss < min_valid) {
      min_valid = ra.valid_loss;
      min_epoch = ra.epoch;
    }
  }
  CHECK(same_values(a.best, b.best));
  CHECK(a.best_valid_loss == min_valid);
  CHECK(a.best_epoch == min_epoch);
  auto best = a.best;
  CHECK(evaluate_loss(best, make_batches_in_order(valid_set, 4)) == min_valid);
  CHECK(a.log.records.back().train_loss < a.log.records.front().train_loss);
}

TEST_CASE("a tiny corpus can be overfit") {
  auto cfg_model = tiny_config();
  cfg_model.hidden_dim = 16;
  cfg_model.embed_dropout = 0.0;
  const auto data = toy_data(4, 12, 10, 6);
  TrainConfig cfg;
  cfg.max_epochs = 300;
  cfg.lr = 0.5;
  cfg.batch_size = 1;
  cfg.teacher_forcing_p = 1.0;
  cfg.plateau_patience = 1000;
  cfg.early_stop_patience = 1000;
  const auto r = train(seq2seq::ModelParams::initialize(cfg_model, 2), data, data, cfg);
  CHECK(r.log.records.back().train_loss < 0.1);
}

TEST_CASE("divergence aborts with the last good parameters") {
  const auto init = seq2seq::ModelParams::initialize(tiny_config(), 8);
  const auto data = toy_data(8, 12, 10, 3);
  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.batch_size = 2;
  cfg.lr = 1e200;
  cfg.clip_norm = 0.0;
  const auto r = train(init, data, data, cfg);
  REQUIRE(r.aborted.has_value());
  CHECK(r.best.all_finite());
  CHECK(r.log.records.size() < 20);
}

TEST_CASE("train log csv round trip") {
  TrainLog log;
  log.records.push_back({1, 3.25, 3.5, 0.1, 0.02});
  log.records.push_back({2, 2.125, 3.0, 0.01, 0.03});
  const auto csv = log.to_csv();
  CHECK(csv.rfind("epoch,train_loss,valid_loss,lr,seconds\n1,3.25,3.5,0.10000000000000001,", 0) == 0);
  const auto back = TrainLog::from_csv(csv);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[1].train_loss == 2.125);
  CHECK(back.records[0].lr == 0.1);
  CHECK_THROWS_AS(TrainLog::from_csv("epoch,train_loss,valid_loss,lr,seconds\n2,1,1,1,1\n1,1,1,1,1\n"),
                  DataError);
}

TEST_CASE("checkpoint round trip is exact at f32 precision") {
  const auto cfg = tiny_config();
  const auto src = numbered_vocab("s", cfg.src_vocab);
  const auto tgt = numbered_vocab("t", cfg.tgt_vocab);
  const auto params = seq2seq::ModelParams::initialize(cfg, 99);
  const auto dir = scratch_dir("roundtrip");
  save_checkpoint(dir, params, src, tgt, 1.5, 7);
  for (const char* f : {"manifest.json", "params.bin", "src_vocab.json", "tgt_vocab.json"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(fs::file_size(dir / "params.bin") == params.parameter_count() * 4);

  const auto loaded = load_checkpoint(dir, src, tgt);
  CHECK(loaded.manifest.valid_loss == 1.5);
  CHECK(loaded.manifest.epoch == 7);
  CHECK(loaded.params.config.hidden_dim == cfg.hidden_dim);
  const auto a = params.named();
  const auto b = loaded.params.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].first == b[k].first);
    const auto& va = a[k].second->value;
    const auto& vb = b[k].second->value;
    for (Eigen::Index i = 0; i < va.size(); ++i) {
      CHECK(vb.data()[i] == static_cast<double>(static_cast<float>(va.data()[i])));
    }
  }

  // f32 values survive unchanged through a second save.
  const auto dir2 = scratch_dir("roundtrip2");
  save_checkpoint(dir2, loaded.params, src, tgt, 1.5, 7);
  CHECK(read_file(dir / "params.bin") == read_file(dir2 / "params.bin"));
  CHECK(same_values(load_checkpoint(dir2).params, loaded.params));
}

TEST_CASE("checkpoint integrity and fingerprint checks") {
  const auto cfg = tiny_config();
  const auto src = numbered_vocab("s", cfg.src_vocab);
  const auto tgt = numbered_vocab("t", cfg.tgt_vocab);
  const auto params = seq2seq::ModelParams::initialize(cfg, 1);
  const auto dir = scratch_dir("integrity");

  save_checkpoint(dir, params, src, tgt);
  CHECK(load_checkpoint(dir).manifest.valid_loss == INFINITY);
  const auto other_src = numbered_vocab("x", cfg.src_vocab);
  CHECK_THROWS_AS(load_checkpoint(dir, other_src, tgt), FingerprintError);

  std::string payload = read_file(dir / "params.bin");
  payload[17] = static_cast<char>(payload[17] ^ 0x01);
  write_file_atomic(dir / "params.bin", payload);
  CHECK_THROWS_AS(load_checkpoint(dir), IntegrityError);

  payload.resize(payload.size() - 4);
  write_file_atomic(dir / "params.bin", payload);
  CHECK_THROWS_AS(load_checkpoint(dir), IntegrityError);

  save_checkpoint(dir, params, src, tgt);
  other_src.save(dir / "src_vocab.json");
  CHECK_THROWS_AS(load_checkpoint(dir), FingerprintError);

  CHECK_THROWS_AS(save_checkpoint(dir, params, numbered_vocab("s", 5), tgt), DimensionError);
}

TEST_CASE("manifest offsets are validated") {
  CheckpointManifest m;
  m.params = {{"a", 2, 3, 0}, {"b", 1, 4, 24}};
  m.payload_bytes = 40;
  CHECK_NOTHROW(m.validate());
  m.params[1].offset = 20;
  CHECK_THROWS_AS(m.validate(), DataError);
  m.params[1].offset = 24;
  m.payload_bytes = 36;
  CHECK_THROWS_AS(m.validate(), DataError);
}

TEST_CASE("training writes checkpoints and the log") {
  const auto cfg_model = tiny_config();
  const auto src = numbered_vocab("s", cfg_model.src_vocab);
  const auto tgt = numbered_vocab("t", cfg_model.tgt_vocab);
  const auto data = toy_data(6, 12, 10, 2);
  const auto dir = scratch_dir("sink");
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 3;
  TrainHooks hooks;
  hooks.checkpoints = CheckpointSink{dir, &src, &tgt};
  int calls = 0;
  hooks.on_epoch = [&calls](const EpochRecord&) { ++calls; };
  const auto r = train(seq2seq::ModelParams::initialize(cfg_model, 3), data, data, cfg, hooks);
  CHECK(calls == 3);
  const auto best = load_checkpoint(dir / "best", src, tgt);
  CHECK(best.manifest.epoch == r.best_epoch);
  CHECK(best.manifest.valid_loss == r.best_valid_loss);
  CHECK(load_checkpoint(dir / "last").manifest.epoch == 3);
  CHECK(TrainLog::from_csv(read_file(dir / "train_log.csv")).records.size() == 3);
}
