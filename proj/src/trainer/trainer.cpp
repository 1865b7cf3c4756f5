#include "cmg/trainer/trainer.hpp"

#include "cmg/errors.hpp"
#include "cmg/random.hpp"
#include "cmg/trainer/checkpoint.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace cmg::trainer {

namespace {

constexpr std::uint64_t kOrderTag = 0xba7c;
constexpr std::uint64_t kLossTag = 0x1055;

long live_targets(const seq2seq::Batch& b) {
  long n = 0;
  for (int len : b.tgt_len) n += std::max(len - 1, 0);
  return n;
}

std::vector<seq2seq::Batch> batches_over(std::span<const EncodedExample> examples,
                                         std::span<const std::size_t> order, int batch_size) {
  std::vector<seq2seq::Batch> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<int>> src, tgt;
    for (std::size_t k = start; k < end; ++k) {
      src.push_back(examples[order[k]].source);
      tgt.push_back(examples[order[k]].target);
    }
    seq2seq::Batch b = seq2seq::make_batch(src, tgt);
    b.example_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(b));
  }
  return out;
}

void check_batch_size(int batch_size) {
  if (batch_size <= 0) throw DomainError("make_batches: batch_size must be positive");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw DomainError("train config: lr must be finite and >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) {
    throw DomainError("train config: lr_decay_factor must lie in (0, 1)");
  }
  if (plateau_patience <= 0 || early_stop_patience <= 0) {
    throw DomainError("train config: patience values must be positive");
  }
  if (batch_size <= 0) throw DomainError("train config: batch_size must be positive");
  if (!(teacher_forcing_p >= 0.0 && teacher_forcing_p <= 1.0)) {
    throw DomainError("train config: teacher_forcing_p must lie in [0, 1]");
  }
  if (max_epochs < 0) throw DomainError("train config: max_epochs must be >= 0");
}

std::vector<EncodedExample> encode_examples(std::span<const ProcessedExample> examples,
                                            const Vocabulary& src_vocab,
                                            const Vocabulary& tgt_vocab) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back({encode(src_vocab, ex.source, true), encode(tgt_vocab, ex.target, true)});
  }
  return out;
}

std::vector<seq2seq::Batch> make_batches(std::span<const EncodedExample> examples,
                                         int batch_size, std::uint64_t seed) {
  check_batch_size(batch_size);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  return batches_over(examples, order, batch_size);
}

std::vector<seq2seq::Batch> make_batches_in_order(std::span<const EncodedExample> examples,
                                                  int batch_size) {
  check_batch_size(batch_size);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return batches_over(examples, order, batch_size);
}

std::vector<seq2seq::Batch> make_batches(std::span<const ProcessedExample> examples,
                                         const Vocabulary& src_vocab,
                                         const Vocabulary& tgt_vocab, int batch_size,
                                         std::uint64_t seed) {
  const auto encoded = encode_examples(examples, src_vocab, tgt_vocab);
  return make_batches(encoded, batch_size, seed);
}

double gradient_norm(const seq2seq::ModelParams& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.named()) sq += t->grad.squaredNorm();
  return std::sqrt(sq);
}

StepReport sgd_step(seq2seq::ModelParams& params, double lr, double clip_norm) {
  StepReport r;
  for (const auto& [name, t] : params.named()) {
    if (!t->grad.allFinite()) {
      params.zero_grad();
      throw NonFiniteError("sgd_step: non-finite gradient in parameter block '" + name + "'");
    }
  }
  r.grad_norm = gradient_norm(params);
  double scale = lr;
  if (clip_norm > 0.0 && r.grad_norm > clip_norm) {
    r.clipped = true;
    scale *= clip_norm / r.grad_norm;
  }
  for (auto& [name, t] : params.named()) {
    if (t->requires_grad) t->value -= scale * t->grad;
    t->zero_grad();
  }
  return r;
}

ScheduleDecision schedule(ScheduleState& state, double valid_loss, const TrainConfig& cfg) {
  ScheduleDecision d;
  if (valid_loss < state.best) {
    state.best = valid_loss;
    state.bad_epochs = 0;
    d.improved = true;
  } else {
    ++state.bad_epochs;
    if (state.bad_epochs % cfg.plateau_patience == 0) {
      state.lr *= cfg.lr_decay_factor;
      d.decayed = true;
    }
    d.stop = state.bad_epochs >= cfg.early_stop_patience;
  }
  d.lr = state.lr;
  return d;
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,valid_loss,lr,seconds\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.valid_loss)
        << ',' << format_double(r.lr) << ',' << format_double(r.seconds) << '\n';
  }
  return out.str();
}

TrainLog TrainLog::from_csv(std::string_view text) {
  TrainLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,valid_loss,lr,seconds") {
    throw DataError("train log: missing or unexpected header");
  }
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    EpochRecord r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf%c", &r.epoch, &r.train_loss, &r.valid_loss,
                    &r.lr, &r.seconds, &tail) != 5) {
      throw DataError("train log line " + std::to_string(lineno) + ": expected five fields");
    }
    if (!log.records.empty() && r.epoch <= log.records.back().epoch) {
      throw DataError("train log line " + std::to_string(lineno) + ": epochs must increase");
    }
    log.records.push_back(r);
  }
  return log;
}

double evaluate_loss(seq2seq::ModelParams& params, std::span<const seq2seq::Batch> batches) {
  double total = 0.0;
  long count = 0;
  const seq2seq::LossOptions opts{1.0, 0, false};
  for (const auto& b : batches) {
    const long n = live_targets(b);
    if (n == 0) continue;
    total += seq2seq::loss_value(params, b, opts) * static_cast<double>(n);
    count += n;
  }
  if (count == 0) throw DomainError("evaluate_loss: no target positions");
  return total / static_cast<double>(count);
}

TrainResult train(seq2seq::ModelParams initial, std::span<const EncodedExample> train_set,
                  std::span<const EncodedExample> valid_set, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty() || valid_set.empty()) throw DomainError("train: empty train or validation set");
  const auto& sink = hooks.checkpoints;
  if (sink && (!sink->src_vocab || !sink->tgt_vocab)) {
    throw StateError("train: checkpoint sink needs both vocabularies");
  }

  TrainResult result;
  result.best = initial;
  seq2seq::ModelParams params = std::move(initial);
  params.zero_grad();
  const auto valid_batches = make_batches_in_order(valid_set, cfg.batch_size);
  ScheduleState sched = ScheduleState::start(cfg);

  auto save = [&](const char* sub, const seq2seq::ModelParams& p, double loss, int epoch) {
    if (sink) save_checkpoint(sink->dir / sub, p, *sink->src_vocab, *sink->tgt_vocab, loss, epoch);
  };
  auto save_log = [&] {
    if (sink) write_file_atomic(sink->dir / "train_log.csv", result.log.to_csv());
  };
  if (sink && cfg.max_epochs == 0) save("best", result.best, result.best_valid_loss, 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = sched.lr;
    const auto batches = make_batches(train_set, cfg.batch_size, mix_seed(cfg.seed, kOrderTag + epoch));
    double total = 0.0;
    long count = 0;
    try {
      for (std::size_t k = 0; k < batches.size(); ++k) {
        const auto& b = batches[k];
        const long n = live_targets(b);
        if (n == 0) continue;
        const seq2seq::LossOptions opts{
            cfg.teacher_forcing_p,
            mix_seed(cfg.seed, mix_seed(kLossTag + static_cast<std::uint64_t>(epoch), k)), true};
        double loss = 0.0;
        {
          seq2seq::Tape tape;
          const auto l = seq2seq::forward_loss(tape, params, b, opts);
          loss = l.value()(0, 0);
          if (!std::isfinite(loss)) {
            throw NonFiniteError("non-finite training loss in epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(k));
          }
          tape.backward(l);
        }
        sgd_step(params, lr, cfg.clip_norm);
        total += loss * static_cast<double>(n);
        count += n;
      }
    } catch (const NonFiniteError& e) {
      result.aborted = std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")";
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = count ? total / static_cast<double>(count) : 0.0;
    rec.valid_loss = evaluate_loss(params, valid_batches);
    rec.lr = lr;
    if (!std::isfinite(rec.valid_loss)) {
      result.aborted = "non-finite validation loss in epoch " + std::to_string(epoch);
      break;
    }
    const ScheduleDecision d = schedule(sched, rec.valid_loss, cfg);
    if (d.improved) {
      result.best = params;
      result.best_valid_loss = rec.valid_loss;
      result.best_epoch = epoch;
      save("best", params, rec.valid_loss, epoch);
    }
    save("last", params, rec.valid_loss, epoch);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.records.push_back(rec);
    save_log();
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (d.stop) {
      result.stopped_early = true;
      break;
    }
  }
  result.best.zero_grad();
  return result;
}

}  // namespace cmg::trainer
