#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clampcap/dsp/frontend.hpp"
#include "clampcap/tensor.hpp"

namespace clampcap::text {

inline constexpr std::string_view kSos = "[SOS]";
inline constexpr std::string_view kEos = "[EOS]";

/// Caption tokens bracketed by [SOS] ... [EOS].
struct TokenSeq {
  std::vector<std::string> tokens;

  /// Tokens without the [SOS]/[EOS] brackets.
  std::vector<std::string> words() const;
  std::string joined_words() const;
  std::size_t size() const { return tokens.size(); }

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

/// Lowercases ASCII letters, deletes ASCII punctuation, splits on whitespace
/// and adds the [SOS]/[EOS] brackets.
TokenSeq preprocess_caption(std::string_view raw);

/// The same normalization without brackets; used by the metrics.
std::vector<std::string> normalize_words(std::string_view raw);

class Vocabulary {
 public:
  Vocabulary();  // specials only
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  bool contains(std::string_view w) const;
  /// Throws UnknownWord.
  std::size_t index_of(std::string_view w) const;

  std::size_t sos() const { return 0; }
  std::size_t eos() const { return 1; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// [SOS] and [EOS] at positions 0 and 1, then the remaining words sorted.
Vocabulary build_vocabulary(std::span<const TokenSeq> corpus);

struct TargetMatrix {
  Tensor values;  // K x T'
  std::size_t caption_len = 0;
  std::vector<std::size_t> indices;  // word index per column
};

TargetMatrix encode_targets(const TokenSeq& seq, const Vocabulary& vocab, std::size_t steps);
std::vector<std::string> decode_targets(const TargetMatrix& target, const Vocabulary& vocab);

/// Ordered content-word list with lookup.
class ContentWordList {
 public:
  ContentWordList() = default;
  explicit ContentWordList(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  /// Index of `w`, or size() if absent.
  std::size_t find(std::string_view w) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Vocabulary words (without specials) that are not in the stop list.
ContentWordList content_words_from(const Vocabulary& vocab, std::span<const std::string> stop_list);

struct ContentWordVector {
  std::vector<double> values;  // 0/1, length K'
};

ContentWordVector extract_content_words(const TokenSeq& seq, const ContentWordList& content);

using WordCounts = std::map<std::string, std::size_t>;

/// Occurrences over un-padded token sequences, brackets included.
WordCounts count_words(std::span<const TokenSeq> corpus);

struct ClassWeights {
  std::vector<double> weights;  // vocabulary order
};

/// w_i proportional to 1/count_i, scaled to mean 1 over the vocabulary.
ClassWeights compute_class_weights(const WordCounts& counts, const Vocabulary& vocab);
ClassWeights unit_class_weights(std::size_t vocab_size);

struct Example {
  std::shared_ptr<const dsp::MelSpectrogram> features;
  TokenSeq caption;
  ContentWordVector content;
};

struct Batch {
  std::vector<Tensor> features;  // B tensors, N x T each (zero-padded at the end)
  std::vector<TargetMatrix> targets;  // B matrices, K x T' (EOS-padded)
  Tensor content_labels;              // B x K'
  std::vector<std::size_t> valid_frames;

  std::size_t size() const { return features.size(); }
  std::size_t frames() const { return features.empty() ? 0 : features.front().cols(); }
  std::size_t steps() const { return targets.empty() ? 0 : targets.front().values.cols(); }
};

Batch make_batch(std::span<const Example* const> examples, const Vocabulary& vocab);
Batch make_batch(std::span<const Example> examples, const Vocabulary& vocab);

/// One word per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

struct CorpusInfo {
  Vocabulary vocab;
  WordCounts counts;
  ClassWeights weights;
  ContentWordList content;
  std::size_t max_caption_len = 0;  // tokens, brackets included; decode length
};

void save_corpus(const std::filesystem::path& path, const CorpusInfo& info);
CorpusInfo load_corpus(const std::filesystem::path& path);

}  // namespace clampcap::text
