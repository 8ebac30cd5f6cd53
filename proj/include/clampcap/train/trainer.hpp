#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clampcap/grad/graph.hpp"
#include "clampcap/grad/optim.hpp"
#include "clampcap/metrics/metrics.hpp"
#include "clampcap/model/captioner.hpp"
#include "clampcap/text/corpus.hpp"

namespace clampcap::train {

enum class StopMetric { CIDEr, SPIDEr };

std::string to_string(StopMetric m);
StopMetric stop_metric_from(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t patience = 100;
  double lr = 1e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  StopMetric early_stop_metric = StopMetric::CIDEr;
  double content_loss_scale = 1.0;  // lambda
  /// Keeps summing gradients across batches instead of resetting them. Only
  /// for reproducing the unreset-gradient behaviour in comparisons.
  bool accumulate_gradients = false;

  void validate() const;
};

struct LossNodes {
  grad::NodeId total, caption, content;
};

/// total = caption + lambda * content, with the caption term the weighted NLL
/// over every target step and the content term the mean binary cross-entropy.
LossNodes compute_total_loss(grad::Graph& g, std::span<const grad::NodeId> caption_probs,
                             const std::vector<std::vector<std::size_t>>& targets,
                             const text::ClassWeights& weights, grad::NodeId content_probs,
                             const Tensor& content_labels, double lambda);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double caption_loss = 0.0;
  double content_loss = 0.0;
  std::optional<double> ratio;  // content / caption
  std::vector<std::pair<std::string, double>> scores;
  double wall_seconds = 0.0;

  std::optional<double> score(const std::string& name) const;
};

struct BatchLosses {
  double total = 0.0, caption = 0.0, content = 0.0;
  double grad_norm = 0.0;  // before clipping
};

/// Everything needed to run optimization steps on one model.
struct TrainState {
  model::ModelConfig model_config;
  model::ModelParams params;
  grad::AdamState optimizer;
  std::vector<Tensor> accumulated;  // used only with accumulate_gradients
};

/// Full-graph gradient of the total loss for one batch, in
/// ModelParams::for_each order, plus the loss values.
std::vector<Tensor> batch_gradients(const model::ModelParams& params, const model::ModelConfig& mc,
                                    const text::Batch& batch, const text::ClassWeights& weights,
                                    double lambda, grad::Mode mode, grad::Rng& rng,
                                    BatchLosses* losses);

/// Forward, backward, clip, Adam step. Gradients are discarded afterwards
/// unless accumulation is switched on.
BatchLosses train_batch(TrainState& state, const text::Batch& batch,
                        const text::ClassWeights& weights, const TrainConfig& cfg, grad::Rng& rng);

/// One pass over `data` in an order shuffled from (seed, epoch); the last
/// short batch is kept. Throws NonFiniteLoss.
EpochRecord train_epoch(TrainState& state, std::span<const text::Example> data,
                        const text::Vocabulary& vocab, const text::ClassWeights& weights,
                        const TrainConfig& cfg, std::size_t epoch);

/// Patience rule: a value strictly above the best so far is an improvement;
/// training stops once `patience` epochs pass without one.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the metric of a finished epoch; returns true if it improved.
  bool update(std::size_t epoch, double value);
  bool should_stop() const { return since_best_ >= patience_; }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
  bool seen_ = false;
};

struct StopTrace {
  std::size_t stop_epoch = 0;  // last epoch run
  std::size_t best_epoch = 0;
};

/// Replays a metric history through the patience rule.
StopTrace trace_early_stop(std::span<const double> history, std::size_t patience,
                           std::size_t max_epochs);

/// A validation clip: features plus reference captions.
struct ValidationClip {
  std::shared_ptr<const dsp::MelSpectrogram> features;
  std::vector<metrics::Tokens> references;
};

/// Greedy captions for every clip, decoded in groups of `batch_size`.
std::vector<std::string> caption_clips(const model::ModelParams& params,
                                       const model::ModelConfig& mc,
                                       std::span<const ValidationClip> clips, std::size_t steps,
                                       const text::Vocabulary& vocab, std::size_t batch_size);

std::vector<metrics::EvalPair> eval_pairs(std::span<const ValidationClip> clips,
                                          std::span<const std::string> captions);

/// Corpus-level SPICE (fraction) for the given captions; supplied by an
/// external tool.
using SpiceScorer = std::function<double(std::span<const metrics::EvalPair>)>;

struct LoopHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t epoch, const model::ModelParams&, double metric)> on_improvement;
  SpiceScorer spice;
};

struct LoopResult {
  model::ModelParams best_params;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> history;
};

/// Trains until the validation metric stalls for `patience` epochs or
/// `max_epochs` is reached, returning the parameters of the best epoch.
LoopResult early_stop_loop(TrainState& state, std::span<const text::Example> train,
                           std::span<const ValidationClip> validation,
                           const text::Vocabulary& vocab, const text::ClassWeights& weights,
                           std::size_t decode_steps, const TrainConfig& cfg,
                           const LoopHooks& hooks = {});

/// CSV with epoch, caption_loss, content_loss, ratio and one column per score.
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace clampcap::train
