#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clampcap/dsp/frontend.hpp"
#include "clampcap/grad/graph.hpp"
#include "clampcap/grad/gru.hpp"
#include "clampcap/grad/ops.hpp"
#include "clampcap/text/corpus.hpp"

namespace clampcap::model {

struct ModelConfig {
  std::size_t n_mels = 64;
  std::size_t hidden = 512;          // per encoder direction
  std::size_t decoder_hidden = 0;    // 0: same as hidden
  std::size_t encoder_layers = 3;
  double dropout_p = 0.25;
  std::size_t vocab_size = 0;
  std::size_t content_size = 0;

  void validate() const;
  std::size_t decoder_width() const { return decoder_hidden == 0 ? hidden : decoder_hidden; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderLayerParams {
  grad::GruCellParams fwd;
  grad::GruCellParams bwd;
};

struct DecoderParams {
  grad::GruCellParams gru;
  Tensor fc_w;  // hidden x outputs
  Tensor fc_b;  // 1 x outputs
};

/// Every trainable tensor of the encoder and both decoders.
struct ModelParams {
  std::vector<EncoderLayerParams> encoder;
  DecoderParams caption;
  DecoderParams content;

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& cfg);

  /// Seeded initialization: GRU matrices uniform in +-1/sqrt(hidden), decoder
  /// output matrices uniform in +-1/sqrt(outputs), all biases zero.
  void init(grad::Rng& rng);

  /// Visits every tensor in a fixed order under a dotted name.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::vector<Tensor*> tensors();
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

ModelParams make_params(const ModelConfig& cfg, std::uint64_t seed);

/// Parameter leaves inside one graph, in ModelParams::for_each order.
struct BoundParams {
  std::vector<std::pair<grad::GruNodes, grad::GruNodes>> encoder;
  grad::GruNodes caption_gru;
  grad::NodeId caption_w, caption_b;
  grad::GruNodes content_gru;
  grad::NodeId content_w, content_b;
  std::vector<grad::NodeId> leaves;
};

BoundParams bind(grad::Graph& g, const ModelParams& params, bool requires_grad);

struct EncoderOutput {
  std::vector<grad::NodeId> sequence;  // T steps, each B x 2H
  grad::NodeId summary = 0;            // B x 2H, row b = sequence[valid[b] - 1] row b
  std::vector<std::size_t> valid_frames;
};

/// Stacked biGRU encoder with dropout after each layer in train mode.
/// `features` are B matrices of n_mels x T sharing T.
EncoderOutput encode(grad::Graph& g, const BoundParams& p, std::span<const Tensor> features,
                     std::span<const std::size_t> valid_frames, double dropout_p, grad::Mode mode,
                     grad::Rng& rng);

/// Caption decoder: the summary vector is fed at every one of `steps` steps;
/// returns per-step B x K word distributions.
std::vector<grad::NodeId> decode_captions(grad::Graph& g, const BoundParams& p,
                                          const EncoderOutput& enc, std::size_t steps);

/// Content-word decoder: GRU over the encoder sequence, per-frame sigmoid
/// outputs max-pooled over each example's valid frames. Returns B x K'.
grad::NodeId decode_content_words(grad::Graph& g, const BoundParams& p, const EncoderOutput& enc);

/// Word distribution matrix (K x T') of example `b` from per-step outputs.
Tensor caption_matrix(const grad::Graph& g, std::span<const grad::NodeId> steps, std::size_t b);

/// Argmax word per step (ties to the lowest index), [SOS] dropped, stopping
/// at the first [EOS].
std::string greedy_caption(const Tensor& probs, const text::Vocabulary& vocab);

/// Pads variable-length features at the end to a common frame count.
std::vector<Tensor> pad_features(std::span<const dsp::MelSpectrogram* const> mels,
                                 std::vector<std::size_t>* valid_frames);

struct Inference {
  std::vector<std::string> captions;
  Tensor content_probs;  // B x K'
  std::vector<Tensor> caption_probs;  // per example K x T'
};

/// Eval-mode forward pass over a group of clips.
Inference infer(const ModelParams& params, const ModelConfig& cfg,
                std::span<const dsp::MelSpectrogram* const> mels, std::size_t steps,
                const text::Vocabulary& vocab);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::size_t epoch = 0;
  double metric = 0.0;
};

inline constexpr int kCheckpointVersion = 1;

/// "CCKP" magic, u32 header length, JSON header (format_version, config,
/// epoch, metric), u32 block count, then per tensor: u32 name length, name,
/// u32 rank, u64 dims, little-endian float64 values.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);
/// Loads and checks the stored configuration against `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace clampcap::model
