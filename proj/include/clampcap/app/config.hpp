#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "clampcap/app/synth.hpp"
#include "clampcap/dsp/frontend.hpp"
#include "clampcap/model/captioner.hpp"
#include "clampcap/train/trainer.hpp"

namespace clampcap::app {

enum class Variant { Baseline, CwrCaps, CwrWlCaps };

std::string to_string(Variant v);
/// Accepts "baseline", "CWR-CAPS", "CWR-WL-CAPS" (case-insensitive).
Variant variant_from(const std::string& name);

struct Paths {
  std::filesystem::path dataset_root;
  std::filesystem::path captions_csv = "clotho_captions_development.csv";
  std::filesystem::path audio_dir = "development";
  std::filesystem::path validation_captions_csv = "clotho_captions_evaluation.csv";
  std::filesystem::path validation_audio_dir = "evaluation";
  std::filesystem::path stop_list = "data/stoplist.txt";
  std::filesystem::path content_words;  // optional explicit list
  std::filesystem::path output_dir = "runs/default";

  /// Dataset-relative entries joined onto dataset_root.
  std::filesystem::path in_dataset(const std::filesystem::path& p) const;
};

/// Loss settings implied by the variant.
struct VariantSettings {
  double lambda = 0.0;
  bool inverse_frequency_weights = false;
};

struct ExperimentConfig {
  dsp::FrontendConfig frontend;
  model::ModelConfig model;  // vocab/content sizes are filled from the corpus
  train::TrainConfig train;
  Paths paths;
  Variant variant = Variant::CwrWlCaps;
  SynthSpec synth;
  std::string spice_command;  // optional, run per validation pass for SPIDEr
  int jobs = 0;               // 0: OpenMP default

  void validate() const;
  VariantSettings settings() const;
};

/// Flat INI: [frontend] [model] [train] [paths] [experiment] [synth].
/// Unknown sections or keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

/// `section.key=value` overrides applied on top of a loaded config.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

/// Canonical INI text of every field; parse_config(to_ini(c)) == c.
std::string to_ini(const ExperimentConfig& cfg);

}  // namespace clampcap::app
