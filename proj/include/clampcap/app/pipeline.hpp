#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "clampcap/app/config.hpp"
#include "clampcap/dsp/frontend.hpp"
#include "clampcap/text/corpus.hpp"
#include "clampcap/train/trainer.hpp"

namespace clampcap::app {

struct ManifestEntry {
  std::string clip_id;  // the CSV file_name
  std::filesystem::path audio_path;
  std::filesystem::path feature_path;  // set by attach_feature_paths
  std::vector<std::string> raw_captions;
  std::vector<text::TokenSeq> captions;
};

using Manifest = std::vector<ManifestEntry>;

/// Reads a Clotho captions CSV (file_name, caption_1..caption_n) and checks
/// that every referenced WAV exists. Throws MalformedRow and MissingAudio.
/// An empty file yields an empty manifest and a warning.
Manifest ingest_clotho_csv(const std::filesystem::path& captions_csv,
                           const std::filesystem::path& audio_dir);

/// <features_dir>/<file stem>.feat for every entry.
void attach_feature_paths(Manifest& manifest, const std::filesystem::path& features_dir);

using FeatureMap = std::map<std::string, std::shared_ptr<const dsp::MelSpectrogram>>;

/// Log-mel features for every clip, one file per parallel task. Existing
/// feature files with a matching configuration are reused; with
/// `write_missing` new ones are written next to them.
FeatureMap extract_features(const Manifest& manifest, const dsp::FrontendConfig& cfg,
                            bool write_missing);

/// Vocabulary, counts, inverse-frequency weights and content words from the
/// development captions. `content_words` overrides the stop-list complement.
text::CorpusInfo prepare_corpus(const Manifest& development,
                                const std::vector<std::string>& stop_list,
                                const std::vector<std::string>* content_words);

/// One training example per caption; every caption of a clip shares the
/// clip's feature matrix.
std::vector<text::Example> make_examples(const Manifest& manifest, const FeatureMap& features,
                                         const text::CorpusInfo& corpus);

std::vector<train::ValidationClip> make_validation(const Manifest& manifest,
                                                   const FeatureMap& features);

/// Everything a training run needs, loaded from an experiment config.
struct PreparedData {
  Manifest development;
  Manifest validation;
  FeatureMap features;
  text::CorpusInfo corpus;
  std::vector<text::Example> examples;
  std::vector<train::ValidationClip> validation_clips;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

/// Model dimensions from the config plus the corpus sizes.
model::ModelConfig model_config_for(const ExperimentConfig& cfg, const text::CorpusInfo& corpus);

struct RunResult {
  train::LoopResult loop;
  model::ModelConfig model_config;
  metrics::MetricReport best_report;  // validation scores of the best epoch
  double best_recall = 0.0;           // content-word recall of the best epoch
};

/// Trains one variant on prepared data. Writes history.csv, best.ckpt and
/// last.ckpt into `output_dir` when it is non-empty.
RunResult run_training(const ExperimentConfig& cfg, const PreparedData& data,
                       const std::filesystem::path& output_dir);

/// Greedy captions as a candidates CSV (file_name,caption_predicted).
std::string candidates_csv(const std::vector<std::string>& clip_ids,
                           const std::vector<std::string>& captions);

/// Runs `command` with the candidates and references CSVs appended as
/// arguments; it must print file_name,spice rows to stdout.
train::SpiceScorer external_spice(const std::string& command, const std::filesystem::path& scratch);

}  // namespace clampcap::app
