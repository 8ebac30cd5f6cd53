#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace clampcap::app {

enum class EventKind { Tone, DecayTone, Chirps, Sweep, WhiteNoise, LowNoise, Bursts, Clicks };

/// A sound event type and the captions that describe it. For tonal kinds the
/// range is in Hz; for Clicks it is the click rate.
struct SynthEvent {
  std::string name;
  EventKind kind = EventKind::Tone;
  double f_lo = 0.0;
  double f_hi = 0.0;
  std::vector<std::string> templates;
  std::vector<std::string> content_words;
};

/// Eight events with disjoint content words; every template is
/// "<article> <noun> is <verb>".
std::vector<SynthEvent> default_inventory();

struct SynthSpec {
  std::size_t n_clips = 64;             // development split
  std::size_t n_validation_clips = 32;
  int sample_rate = 8000;
  double min_duration_s = 0.8;
  double max_duration_s = 1.2;
  std::size_t captions_per_clip = 5;
  std::size_t n_events = 8;             // leading entries of `events`
  std::size_t templates_per_event = 0;  // 0: all
  double noise_level = 0.05;
  std::uint64_t seed = 7;
  std::vector<SynthEvent> events = default_inventory();

  /// Throws InvalidConfig.
  void validate() const;
  std::vector<SynthEvent> active_events() const;
};

struct SynthClip {
  std::string file_name;
  std::size_t event = 0;  // index into the active events
  std::vector<double> samples;
  std::vector<std::string> captions;
};

struct SynthDataset {
  std::vector<SynthClip> development;
  std::vector<SynthClip> validation;
  std::vector<std::string> function_words;  // template words that are not content words
  int sample_rate = 0;
};

/// Events are assigned round-robin, so each event labels exactly
/// ceil or floor of n / n_events clips.
SynthDataset synth_dataset(const SynthSpec& spec);

/// Clotho layout under `root`: development/ and evaluation/ WAV folders,
/// clotho_captions_{development,evaluation}.csv and function_words.txt.
void write_dataset(const SynthDataset& ds, const std::filesystem::path& root);

}  // namespace clampcap::app
