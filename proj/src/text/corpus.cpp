#include "clampcap/text/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

#include "clampcap/error.hpp"

namespace clampcap::text {

std::vector<std::string> TokenSeq::words() const {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (t != kSos && t != kEos) out.push_back(t);
  }
  return out;
}

std::string TokenSeq::joined_words() const {
  std::string out;
  for (const auto& w : words()) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> normalize_words(std::string_view raw) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (c < 128 && std::ispunct(c)) {
      continue;
    } else {
      current += c < 128 ? static_cast<char>(std::tolower(c)) : ch;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

TokenSeq preprocess_caption(std::string_view raw) {
  TokenSeq seq;
  seq.tokens.emplace_back(kSos);
  for (auto& w : normalize_words(raw)) seq.tokens.push_back(std::move(w));
  seq.tokens.emplace_back(kEos);
  return seq;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  words_.emplace_back(kSos);
  words_.emplace_back(kEos);
  for (auto& w : words) {
    if (w == kSos || w == kEos) continue;
    words_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) {
      fail(ErrorKind::InvalidConfig, "duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

bool Vocabulary::contains(std::string_view w) const { return index_.contains(std::string(w)); }

std::size_t Vocabulary::index_of(std::string_view w) const {
  auto it = index_.find(std::string(w));
  if (it == index_.end()) fail(ErrorKind::UnknownWord, "word '" + std::string(w) + "' is not in the vocabulary");
  return it->second;
}

Vocabulary build_vocabulary(std::span<const TokenSeq> corpus) {
  std::set<std::string> unique;
  for (const auto& seq : corpus) {
    for (const auto& t : seq.tokens) {
      if (t != kSos && t != kEos) unique.insert(t);
    }
  }
  return Vocabulary(std::vector<std::string>(unique.begin(), unique.end()));
}

TargetMatrix encode_targets(const TokenSeq& seq, const Vocabulary& vocab, std::size_t steps) {
  if (steps < seq.size()) {
    fail(ErrorKind::ShapeMismatch, "target length " + std::to_string(steps) +
                                       " shorter than caption of " + std::to_string(seq.size()));
  }
  TargetMatrix target;
  target.values = Tensor(vocab.size(), steps);
  target.caption_len = seq.size();
  target.indices.resize(steps, vocab.eos());
  for (std::size_t t = 0; t < seq.size(); ++t) target.indices[t] = vocab.index_of(seq.tokens[t]);
  for (std::size_t t = 0; t < steps; ++t) target.values.at(target.indices[t], t) = 1.0;
  return target;
}

std::vector<std::string> decode_targets(const TargetMatrix& target, const Vocabulary& vocab) {
  std::vector<std::string> out;
  const std::size_t k = target.values.rows();
  for (std::size_t t = 0; t < target.values.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i) {
      if (target.values.at(i, t) > target.values.at(best, t)) best = i;
    }
    out.push_back(vocab.word(best));
  }
  return out;
}

ContentWordList::ContentWordList(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) {
      fail(ErrorKind::InvalidConfig, "duplicate content word '" + words_[i] + "'");
    }
  }
}

std::size_t ContentWordList::find(std::string_view w) const {
  auto it = index_.find(std::string(w));
  return it == index_.end() ? words_.size() : it->second;
}

ContentWordList content_words_from(const Vocabulary& vocab, std::span<const std::string> stop_list) {
  const std::set<std::string> stops(stop_list.begin(), stop_list.end());
  std::vector<std::string> words;
  for (const auto& w : vocab.words()) {
    if (w == kSos || w == kEos || stops.contains(w)) continue;
    words.push_back(w);
  }
  return ContentWordList(std::move(words));
}

ContentWordVector extract_content_words(const TokenSeq& seq, const ContentWordList& content) {
  ContentWordVector v;
  v.values.assign(content.size(), 0.0);
  for (const auto& t : seq.tokens) {
    const std::size_t i = content.find(t);
    if (i < content.size()) v.values[i] = 1.0;
  }
  return v;
}

WordCounts count_words(std::span<const TokenSeq> corpus) {
  WordCounts counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq.tokens) ++counts[t];
  }
  return counts;
}

ClassWeights compute_class_weights(const WordCounts& counts, const Vocabulary& vocab) {
  ClassWeights cw;
  cw.weights.resize(vocab.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto it = counts.find(vocab.word(i));
    if (it == counts.end() || it->second == 0) {
      fail(ErrorKind::ZeroCount, "vocabulary word '" + vocab.word(i) + "' has no occurrences");
    }
    cw.weights[i] = 1.0 / static_cast<double>(it->second);
    sum += cw.weights[i];
  }
  const double mean = sum / static_cast<double>(vocab.size());
  for (double& w : cw.weights) w /= mean;
  return cw;
}

ClassWeights unit_class_weights(std::size_t vocab_size) {
  return ClassWeights{std::vector<double>(vocab_size, 1.0)};
}

Batch make_batch(std::span<const Example* const> examples, const Vocabulary& vocab) {
  if (examples.empty()) fail(ErrorKind::ShapeMismatch, "empty batch");
  std::size_t max_frames = 0, max_steps = 0;
  const std::size_t bands = examples.front()->features->values.rows();
  const std::size_t content = examples.front()->content.values.size();
  for (const Example* ex : examples) {
    if (ex->features->values.rows() != bands) {
      fail(ErrorKind::ShapeMismatch, "feature band counts differ within batch");
    }
    if (ex->content.values.size() != content) {
      fail(ErrorKind::ShapeMismatch, "content vector lengths differ within batch");
    }
    max_frames = std::max(max_frames, ex->features->values.cols());
    max_steps = std::max(max_steps, ex->caption.size());
  }

  Batch batch;
  batch.content_labels = Tensor(examples.size(), content);
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const Example& ex = *examples[b];
    const Tensor& src = ex.features->values;
    Tensor padded(bands, max_frames);
    for (std::size_t n = 0; n < bands; ++n) {
      std::copy(src.row(n).begin(), src.row(n).end(), padded.row(n).begin());
    }
    batch.features.push_back(std::move(padded));
    batch.valid_frames.push_back(src.cols());
    batch.targets.push_back(encode_targets(ex.caption, vocab, max_steps));
    std::copy(ex.content.values.begin(), ex.content.values.end(),
              batch.content_labels.row(b).begin());
  }
  return batch;
}

Batch make_batch(std::span<const Example> examples, const Vocabulary& vocab) {
  std::vector<const Example*> ptrs;
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return make_batch(std::span<const Example* const>(ptrs), vocab);
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open word list " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    words.push_back(line.substr(first, last - first + 1));
  }
  return words;
}

void save_corpus(const std::filesystem::path& path, const CorpusInfo& info) {
  nlohmann::json j;
  j["words"] = info.vocab.words();
  std::vector<std::size_t> counts;
  for (const auto& w : info.vocab.words()) {
    auto it = info.counts.find(w);
    counts.push_back(it == info.counts.end() ? 0 : it->second);
  }
  j["counts"] = counts;
  j["weights"] = info.weights.weights;
  j["content_words"] = info.content.words();
  j["max_caption_len"] = info.max_caption_len;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CorpusInfo load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, path.string() + ": " + e.what());
  }
  CorpusInfo info;
  const auto words = j.at("words").get<std::vector<std::string>>();
  const auto counts = j.at("counts").get<std::vector<std::size_t>>();
  if (words.size() < 2 || words[0] != kSos || words[1] != kEos || counts.size() != words.size()) {
    fail(ErrorKind::CorruptFile, path.string() + ": malformed vocabulary");
  }
  info.vocab = Vocabulary(std::vector<std::string>(words.begin() + 2, words.end()));
  for (std::size_t i = 0; i < words.size(); ++i) info.counts[words[i]] = counts[i];
  info.weights.weights = j.at("weights").get<std::vector<double>>();
  if (info.weights.weights.size() != words.size()) {
    fail(ErrorKind::CorruptFile, path.string() + ": weight count differs from vocabulary");
  }
  info.content = ContentWordList(j.at("content_words").get<std::vector<std::string>>());
  info.max_caption_len = j.value("max_caption_len", std::size_t{0});
  return info;
}

}  // namespace clampcap::text
