#include "clampcap/model/captioner.hpp"

#include <algorithm>
#include <cmath>

#include "clampcap/error.hpp"

namespace clampcap::model {

using grad::Graph;
using grad::NodeId;

void ModelConfig::validate() const {
  if (n_mels < 1 || hidden < 1 || encoder_layers < 1 || vocab_size < 1 || content_size < 1) {
    fail(ErrorKind::InvalidConfig, "model dimensions must all be >= 1");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    fail(ErrorKind::InvalidConfig, "dropout_p must lie in [0, 1)");
  }
}

ModelParams::ModelParams(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.hidden;
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.n_mels : 2 * h;
    encoder.push_back({grad::GruCellParams(in, h), grad::GruCellParams(in, h)});
  }
  const std::size_t d = cfg.decoder_width();
  caption = {grad::GruCellParams(2 * h, d), Tensor(d, cfg.vocab_size), Tensor(1, cfg.vocab_size)};
  content = {grad::GruCellParams(2 * h, d), Tensor(d, cfg.content_size), Tensor(1, cfg.content_size)};
}

void ModelParams::init(grad::Rng& rng) {
  for (auto& layer : encoder) {
    layer.fwd.init_uniform(rng);
    layer.bwd.init_uniform(rng);
  }
  for (DecoderParams* d : {&caption, &content}) {
    d->gru.init_uniform(rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d->fc_w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : d->fc_w.values()) v = dist(rng);
    d->fc_b.fill(0.0);
  }
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l) + ".";
    encoder[l].fwd.for_each([&](const std::string& n, Tensor& t) { fn(prefix + "fwd." + n, t); });
    encoder[l].bwd.for_each([&](const std::string& n, Tensor& t) { fn(prefix + "bwd." + n, t); });
  }
  caption.gru.for_each([&](const std::string& n, Tensor& t) { fn("caption.gru." + n, t); });
  fn("caption.fc.W", caption.fc_w);
  fn("caption.fc.b", caption.fc_b);
  content.gru.for_each([&](const std::string& n, Tensor& t) { fn("content.gru." + n, t); });
  fn("content.fc.W", content.fc_w);
  fn("content.fc.b", content.fc_b);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each([&](const std::string& n, Tensor& t) { fn(n, t); });
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  std::vector<const Tensor*> ta, tb;
  a.for_each([&](const std::string&, const Tensor& t) { ta.push_back(&t); });
  b.for_each([&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

ModelParams make_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  grad::Rng rng(seed);
  p.init(rng);
  return p;
}

BoundParams bind(Graph& g, const ModelParams& params, bool requires_grad) {
  BoundParams b;
  const std::size_t first = g.size();
  for (const auto& layer : params.encoder) {
    auto f = grad::bind_gru(g, layer.fwd, requires_grad);
    auto r = grad::bind_gru(g, layer.bwd, requires_grad);
    b.encoder.emplace_back(f, r);
  }
  b.caption_gru = grad::bind_gru(g, params.caption.gru, requires_grad);
  b.caption_w = g.leaf(params.caption.fc_w, requires_grad);
  b.caption_b = g.leaf(params.caption.fc_b, requires_grad);
  b.content_gru = grad::bind_gru(g, params.content.gru, requires_grad);
  b.content_w = g.leaf(params.content.fc_w, requires_grad);
  b.content_b = g.leaf(params.content.fc_b, requires_grad);
  // Leaves were appended contiguously in for_each order.
  for (std::size_t id = first; id < g.size(); ++id) b.leaves.push_back(id);
  return b;
}

EncoderOutput encode(Graph& g, const BoundParams& p, std::span<const Tensor> features,
                     std::span<const std::size_t> valid_frames, double dropout_p, grad::Mode mode,
                     grad::Rng& rng) {
  if (features.empty()) fail(ErrorKind::ShapeMismatch, "encode: empty batch");
  if (valid_frames.size() != features.size()) {
    fail(ErrorKind::ShapeMismatch, "encode: one valid frame count per example required");
  }
  const std::size_t batch = features.size();
  const std::size_t bands = features.front().rows();
  const std::size_t frames = features.front().cols();
  const std::size_t expected = g.value(p.encoder.front().first.w_z).cols();
  if (bands != expected) {
    fail(ErrorKind::ShapeMismatch, "encode: features have " + std::to_string(bands) +
                                       " bands, model expects " + std::to_string(expected));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (features[b].rows() != bands || features[b].cols() != frames) {
      fail(ErrorKind::ShapeMismatch, "encode: feature matrices must share N x T");
    }
    if (valid_frames[b] < 1 || valid_frames[b] > frames) {
      fail(ErrorKind::ShapeMismatch, "encode: valid frame count out of range");
    }
  }

  std::vector<NodeId> xs(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    Tensor x(batch, bands);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t n = 0; n < bands; ++n) x.at(b, n) = features[b].at(n, t);
    xs[t] = g.leaf(std::move(x));
  }

  for (const auto& [fwd, bwd] : p.encoder) {
    xs = grad::bigru_layer(g, xs, fwd, bwd);
    for (NodeId& x : xs) x = grad::dropout(g, x, dropout_p, mode, rng);
  }

  EncoderOutput out;
  out.sequence = std::move(xs);
  out.valid_frames.assign(valid_frames.begin(), valid_frames.end());
  std::vector<std::size_t> last(batch);
  for (std::size_t b = 0; b < batch; ++b) last[b] = valid_frames[b] - 1;
  out.summary = grad::gather_rows(g, out.sequence, last);
  return out;
}

std::vector<NodeId> decode_captions(Graph& g, const BoundParams& p, const EncoderOutput& enc,
                                    std::size_t steps) {
  if (steps < 1) fail(ErrorKind::ShapeMismatch, "decode_captions: need at least one step");
  const std::size_t batch = g.value(enc.summary).rows();
  // The input is identical at every step, so its projection is shared.
  const grad::GruInput in = grad::gru_project_input(g, enc.summary, p.caption_gru);
  NodeId h = g.leaf(Tensor(batch, p.caption_gru.hidden));
  std::vector<NodeId> probs(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    h = grad::gru_step(g, in, h, p.caption_gru);
    probs[t] = grad::softmax_rows(g, grad::affine(g, h, p.caption_w, p.caption_b));
  }
  return probs;
}

NodeId decode_content_words(Graph& g, const BoundParams& p, const EncoderOutput& enc) {
  const std::size_t batch = g.value(enc.summary).rows();
  const std::size_t longest = *std::max_element(enc.valid_frames.begin(), enc.valid_frames.end());
  // The scan is causal, so frames past an example's valid length never reach
  // its pooled outputs.
  std::span<const NodeId> frames(enc.sequence.data(), longest);
  const NodeId h0 = g.leaf(Tensor(batch, p.content_gru.hidden));
  const auto hs = grad::gru_scan(g, frames, h0, p.content_gru);
  std::vector<NodeId> activations(hs.size());
  for (std::size_t t = 0; t < hs.size(); ++t) {
    activations[t] = grad::sigmoid(g, grad::affine(g, hs[t], p.content_w, p.content_b));
  }
  return grad::temporal_max_pool(g, activations, enc.valid_frames);
}

Tensor caption_matrix(const Graph& g, std::span<const NodeId> steps, std::size_t b) {
  const std::size_t k = g.value(steps.front()).cols();
  Tensor out(k, steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    auto row = g.value(steps[t]).row(b);
    for (std::size_t i = 0; i < k; ++i) out.at(i, t) = row[i];
  }
  return out;
}

std::string greedy_caption(const Tensor& probs, const text::Vocabulary& vocab) {
  std::string caption;
  for (std::size_t t = 0; t < probs.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.rows(); ++i) {
      if (probs.at(i, t) > probs.at(best, t)) best = i;
    }
    if (best == vocab.eos()) break;
    if (best == vocab.sos()) continue;
    if (!caption.empty()) caption += ' ';
    caption += vocab.word(best);
  }
  return caption;
}

std::vector<Tensor> pad_features(std::span<const dsp::MelSpectrogram* const> mels,
                                 std::vector<std::size_t>* valid_frames) {
  std::size_t longest = 0;
  for (const auto* m : mels) longest = std::max(longest, m->values.cols());
  std::vector<Tensor> out;
  if (valid_frames) valid_frames->clear();
  for (const auto* m : mels) {
    Tensor padded(m->values.rows(), longest);
    for (std::size_t n = 0; n < m->values.rows(); ++n) {
      std::copy(m->values.row(n).begin(), m->values.row(n).end(), padded.row(n).begin());
    }
    out.push_back(std::move(padded));
    if (valid_frames) valid_frames->push_back(m->values.cols());
  }
  return out;
}

Inference infer(const ModelParams& params, const ModelConfig& cfg,
                std::span<const dsp::MelSpectrogram* const> mels, std::size_t steps,
                const text::Vocabulary& vocab) {
  std::vector<std::size_t> valid;
  const auto features = pad_features(mels, &valid);
  Graph g;
  const BoundParams bound = bind(g, params, false);
  grad::Rng unused(0);
  const auto enc = encode(g, bound, features, valid, cfg.dropout_p, grad::Mode::Eval, unused);
  const auto steps_out = decode_captions(g, bound, enc, steps);
  const NodeId content = decode_content_words(g, bound, enc);

  Inference out;
  out.content_probs = g.value(content);
  for (std::size_t b = 0; b < mels.size(); ++b) {
    out.caption_probs.push_back(caption_matrix(g, steps_out, b));
    out.captions.push_back(greedy_caption(out.caption_probs.back(), vocab));
  }
  return out;
}

}  // namespace clampcap::model
