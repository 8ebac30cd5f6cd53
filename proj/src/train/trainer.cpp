#include "clampcap/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "clampcap/error.hpp"

namespace clampcap::train {

using grad::Graph;
using grad::NodeId;

std::string to_string(StopMetric m) { return m == StopMetric::CIDEr ? "CIDEr" : "SPIDEr"; }

StopMetric stop_metric_from(const std::string& name) {
  if (name == "CIDEr") return StopMetric::CIDEr;
  if (name == "SPIDEr") return StopMetric::SPIDEr;
  fail(ErrorKind::InvalidConfig, "early_stop_metric must be CIDEr or SPIDEr, got '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (max_epochs < 1) fail(ErrorKind::InvalidConfig, "max_epochs must be >= 1");
  if (patience > max_epochs) fail(ErrorKind::InvalidConfig, "patience must not exceed max_epochs");
  if (!(lr > 0.0)) fail(ErrorKind::InvalidConfig, "lr must be positive");
  if (!(clip_norm > 0.0)) fail(ErrorKind::InvalidConfig, "clip_norm must be positive");
  if (!(content_loss_scale >= 0.0)) fail(ErrorKind::InvalidConfig, "content_loss_scale must be >= 0");
}

LossNodes compute_total_loss(Graph& g, std::span<const NodeId> caption_probs,
                             const std::vector<std::vector<std::size_t>>& targets,
                             const text::ClassWeights& weights, NodeId content_probs,
                             const Tensor& content_labels, double lambda) {
  LossNodes out;
  out.caption = grad::weighted_nll_loss(g, caption_probs, targets, weights.weights);
  out.content = grad::bce_loss(g, content_probs, content_labels);
  out.total = grad::add(g, out.caption, grad::scale(g, out.content, lambda));
  return out;
}

std::optional<double> EpochRecord::score(const std::string& name) const {
  for (const auto& [n, v] : scores) {
    if (n == name) return v;
  }
  return std::nullopt;
}

namespace {

std::vector<std::vector<std::size_t>> target_indices(const text::Batch& batch) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(batch.size());
  for (const auto& t : batch.targets) out.push_back(t.indices);
  return out;
}

grad::Rng stream(std::uint64_t seed, std::size_t epoch, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(which)};
  return grad::Rng(seq);
}

}  // namespace

std::vector<Tensor> batch_gradients(const model::ModelParams& params, const model::ModelConfig& mc,
                                    const text::Batch& batch, const text::ClassWeights& weights,
                                    double lambda, grad::Mode mode, grad::Rng& rng,
                                    BatchLosses* losses) {
  Graph g;
  const auto bound = model::bind(g, params, true);
  const auto enc = model::encode(g, bound, batch.features, batch.valid_frames, mc.dropout_p, mode, rng);
  const auto caption = model::decode_captions(g, bound, enc, batch.steps());
  const NodeId content = model::decode_content_words(g, bound, enc);
  const LossNodes loss = compute_total_loss(g, caption, target_indices(batch), weights, content,
                                            batch.content_labels, lambda);
  const double total = g.value(loss.total)[0];
  if (!std::isfinite(total)) {
    fail(ErrorKind::NonFiniteLoss, "loss is " + std::to_string(total) + " (caption " +
                                       std::to_string(g.value(loss.caption)[0]) + ", content " +
                                       std::to_string(g.value(loss.content)[0]) + ")");
  }
  if (losses) {
    losses->total = total;
    losses->caption = g.value(loss.caption)[0];
    losses->content = g.value(loss.content)[0];
  }
  g.backward(loss.total);
  std::vector<Tensor> grads;
  grads.reserve(bound.leaves.size());
  for (NodeId id : bound.leaves) grads.push_back(g.grad(id));
  return grads;
}

BatchLosses train_batch(TrainState& state, const text::Batch& batch,
                        const text::ClassWeights& weights, const TrainConfig& cfg, grad::Rng& rng) {
  BatchLosses losses;
  auto grads = batch_gradients(state.params, state.model_config, batch, weights,
                               cfg.content_loss_scale, grad::Mode::Train, rng, &losses);
  if (cfg.accumulate_gradients) {
    if (state.accumulated.empty()) {
      state.accumulated = grads;
    } else {
      for (std::size_t i = 0; i < grads.size(); ++i) {
        for (std::size_t j = 0; j < grads[i].size(); ++j) state.accumulated[i][j] += grads[i][j];
      }
    }
    grads = state.accumulated;
  }
  losses.grad_norm = grad::clip_grad_norm(grads, cfg.clip_norm);
  const auto tensors = state.params.tensors();
  grad::adam_step(tensors, grads, state.optimizer, cfg.lr);
  return losses;
}

EpochRecord train_epoch(TrainState& state, std::span<const text::Example> data,
                        const text::Vocabulary& vocab, const text::ClassWeights& weights,
                        const TrainConfig& cfg, std::size_t epoch) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto shuffle_rng = stream(cfg.seed, epoch, 1);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  auto dropout_rng = stream(cfg.seed, epoch, 2);

  EpochRecord rec;
  rec.epoch = epoch;
  double caption_sum = 0.0, content_sum = 0.0;
  for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
    const std::size_t last = std::min(order.size(), first + cfg.batch_size);
    std::vector<const text::Example*> members;
    for (std::size_t i = first; i < last; ++i) members.push_back(&data[order[i]]);
    const auto batch = text::make_batch(std::span<const text::Example* const>(members), vocab);
    const auto losses = train_batch(state, batch, weights, cfg, dropout_rng);
    caption_sum += losses.caption * static_cast<double>(members.size());
    content_sum += losses.content * static_cast<double>(members.size());
  }
  if (!data.empty()) {
    rec.caption_loss = caption_sum / static_cast<double>(data.size());
    rec.content_loss = content_sum / static_cast<double>(data.size());
  }
  if (rec.caption_loss > 0.0) rec.ratio = rec.content_loss / rec.caption_loss;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

bool EarlyStopping::update(std::size_t epoch, double value) {
  if (!seen_ || value > best_) {
    seen_ = true;
    best_ = value;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

StopTrace trace_early_stop(std::span<const double> history, std::size_t patience,
                           std::size_t max_epochs) {
  EarlyStopping stopper(patience);
  StopTrace trace;
  const std::size_t epochs = std::min(history.size(), max_epochs);
  for (std::size_t e = 1; e <= epochs; ++e) {
    stopper.update(e, history[e - 1]);
    trace.stop_epoch = e;
    if (stopper.should_stop()) break;
  }
  trace.best_epoch = stopper.best_epoch();
  return trace;
}

std::vector<std::string> caption_clips(const model::ModelParams& params,
                                       const model::ModelConfig& mc,
                                       std::span<const ValidationClip> clips, std::size_t steps,
                                       const text::Vocabulary& vocab, std::size_t batch_size) {
  std::vector<std::string> out;
  out.reserve(clips.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t first = 0; first < clips.size(); first += batch_size) {
    const std::size_t last = std::min(clips.size(), first + batch_size);
    std::vector<const dsp::MelSpectrogram*> mels;
    for (std::size_t i = first; i < last; ++i) mels.push_back(clips[i].features.get());
    auto result = model::infer(params, mc, mels, steps, vocab);
    for (auto& c : result.captions) out.push_back(std::move(c));
  }
  return out;
}

std::vector<metrics::EvalPair> eval_pairs(std::span<const ValidationClip> clips,
                                          std::span<const std::string> captions) {
  std::vector<metrics::EvalPair> pairs;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    metrics::EvalPair p;
    p.clip_id = clips[i].features ? clips[i].features->clip_id : std::to_string(i);
    p.candidate = text::normalize_words(captions[i]);
    p.references = clips[i].references;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

LoopResult early_stop_loop(TrainState& state, std::span<const text::Example> train,
                           std::span<const ValidationClip> validation,
                           const text::Vocabulary& vocab, const text::ClassWeights& weights,
                           std::size_t decode_steps, const TrainConfig& cfg,
                           const LoopHooks& hooks) {
  cfg.validate();
  if (validation.empty()) fail(ErrorKind::InvalidConfig, "early stopping needs a validation split");
  if (cfg.early_stop_metric == StopMetric::SPIDEr && !hooks.spice) {
    fail(ErrorKind::MissingSpice, "SPIDEr early stopping needs an external SPICE scorer");
  }

  LoopResult result;
  result.best_params = state.params;
  EarlyStopping stopper(cfg.patience);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec = train_epoch(state, train, vocab, weights, cfg, epoch);
    const auto captions =
        caption_clips(state.params, state.model_config, validation, decode_steps, vocab, cfg.batch_size);
    const auto pairs = eval_pairs(validation, captions);
    metrics::MetricReport report = metrics::score_corpus(pairs);
    if (hooks.spice) {
      report.spice = 100.0 * hooks.spice(pairs);
      report.spider = metrics::spider(report.cider, report.spice);
    }
    rec.scores = report.entries();
    const double metric =
        cfg.early_stop_metric == StopMetric::SPIDEr ? *report.spider : report.cider;

    result.history.push_back(rec);
    result.epochs_run = epoch;
    spdlog::debug("epoch {} caption {:.5f} content {:.5f} {} {:.3f}", epoch, rec.caption_loss,
                  rec.content_loss, to_string(cfg.early_stop_metric), metric);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.update(epoch, metric)) {
      result.best_params = state.params;
      result.best_epoch = epoch;
      result.best_metric = metric;
      if (hooks.on_improvement) hooks.on_improvement(epoch, state.params, metric);
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os.precision(12);
  os << "epoch,caption_loss,content_loss,ratio";
  if (!history.empty()) {
    for (const auto& [name, v] : history.front().scores) os << ',' << name;
  }
  os << '\n';
  for (const auto& rec : history) {
    os << rec.epoch << ',' << rec.caption_loss << ',' << rec.content_loss << ',';
    if (rec.ratio) os << *rec.ratio;
    for (const auto& [name, v] : rec.scores) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace clampcap::train
