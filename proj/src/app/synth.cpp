#include "clampcap/app/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <cstdio>

#include "clampcap/dsp/wav.hpp"
#include "clampcap/error.hpp"
#include "clampcap/text/corpus.hpp"
#include "clampcap/text/csv.hpp"

namespace clampcap::app {

namespace {

using Rng = std::mt19937_64;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Raised-cosine fade over the first and last 10 ms.
double fade(std::size_t i, std::size_t len, int sr) {
  const double ramp = 0.01 * sr;
  const double d = std::min<double>(static_cast<double>(i), static_cast<double>(len - 1 - i));
  if (d >= ramp) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * d / ramp);
}

std::vector<double> render(const SynthEvent& ev, std::size_t len, int sr, Rng& rng) {
  std::vector<double> y(len, 0.0);
  const double fs = sr;
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (ev.kind) {
    case EventKind::Tone: {
      const double f = uniform(rng, ev.f_lo, ev.f_hi);
      for (std::size_t i = 0; i < len; ++i) {
        const double t = i / fs;
        y[i] = std::sin(kTwoPi * f * t) + 0.3 * std::sin(kTwoPi * 2 * f * t);
      }
      break;
    }
    case EventKind::DecayTone: {
      const double f = uniform(rng, ev.f_lo, ev.f_hi);
      const std::size_t period = static_cast<std::size_t>(0.5 * fs);
      for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i % period) / fs;
        const double env = std::exp(-t / 0.12);
        y[i] = env * (std::sin(kTwoPi * f * t) + 0.5 * std::sin(kTwoPi * 2.76 * f * t));
      }
      break;
    }
    case EventKind::Chirps: {
      const std::size_t period = static_cast<std::size_t>(0.15 * fs);
      const std::size_t chirp = static_cast<std::size_t>(0.06 * fs);
      double phase = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = i % period;
        if (k >= chirp) continue;
        const double frac = static_cast<double>(k) / static_cast<double>(chirp);
        phase += kTwoPi * (ev.f_lo + (ev.f_hi - ev.f_lo) * frac) / fs;
        y[i] = std::sin(phase) * std::sin(std::numbers::pi * frac);
      }
      break;
    }
    case EventKind::Sweep: {
      const double centre = 0.5 * (ev.f_lo + ev.f_hi);
      const double depth = 0.5 * (ev.f_hi - ev.f_lo);
      const double rate = uniform(rng, 1.5, 3.0);
      double phase = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        phase += kTwoPi * (centre + depth * std::sin(kTwoPi * rate * i / fs)) / fs;
        y[i] = std::sin(phase);
      }
      break;
    }
    case EventKind::WhiteNoise:
      for (auto& v : y) v = 0.5 * gauss(rng);
      break;
    case EventKind::LowNoise: {
      const double a = std::exp(-kTwoPi * std::max(ev.f_hi, 1.0) / fs);
      const double rate = uniform(rng, 0.8, 2.0);
      double state = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        state = a * state + (1.0 - a) * gauss(rng);
        y[i] = 6.0 * state * (0.6 + 0.4 * std::sin(kTwoPi * rate * i / fs));
      }
      break;
    }
    case EventKind::Bursts: {
      const double a_hi = std::exp(-kTwoPi * ev.f_hi / fs);
      const double a_lo = std::exp(-kTwoPi * ev.f_lo / fs);
      const std::size_t period = static_cast<std::size_t>(0.25 * fs);
      const std::size_t burst = static_cast<std::size_t>(0.08 * fs);
      double hi = 0.0, lo = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double x = gauss(rng);
        hi = a_hi * hi + (1.0 - a_hi) * x;
        lo = a_lo * lo + (1.0 - a_lo) * x;
        const std::size_t k = i % period;
        y[i] = k < burst ? 3.0 * (hi - lo) * std::sin(std::numbers::pi * k / burst) : 0.0;
      }
      break;
    }
    case EventKind::Clicks: {
      const double rate = uniform(rng, ev.f_lo, ev.f_hi);
      const std::size_t period = std::max<std::size_t>(1, static_cast<std::size_t>(fs / rate));
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = i % period;
        y[i] = k < 40 ? std::exp(-static_cast<double>(k) / 6.0) * (k % 2 ? -1.0 : 1.0) : 0.0;
      }
      break;
    }
  }
  return y;
}

SynthClip make_clip(const SynthSpec& spec, const std::vector<SynthEvent>& events,
                    std::size_t event, const std::string& name, Rng& rng) {
  const int sr = spec.sample_rate;
  const double duration = uniform(rng, spec.min_duration_s, spec.max_duration_s);
  const std::size_t len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(duration * sr)));
  SynthClip clip;
  clip.file_name = name;
  clip.event = event;
  clip.samples.assign(len, 0.0);

  if (spec.noise_level > 0.0) {
    std::normal_distribution<double> gauss(0.0, spec.noise_level);
    for (auto& v : clip.samples) v = gauss(rng);
  }

  const std::size_t ev_len =
      std::max<std::size_t>(1, static_cast<std::size_t>(len * uniform(rng, 0.6, 0.8)));
  const std::size_t onset = static_cast<std::size_t>((len - ev_len) * uniform(rng, 0.0, 1.0));
  const double amp = uniform(rng, 0.25, 0.5);
  const auto sound = render(events[event], ev_len, sr, rng);
  for (std::size_t i = 0; i < ev_len && onset + i < len; ++i) {
    clip.samples[onset + i] += amp * fade(i, ev_len, sr) * sound[i];
  }

  const auto& ev = events[event];
  for (std::size_t c = 0; c < spec.captions_per_clip; ++c) {
    const std::size_t pick =
        std::uniform_int_distribution<std::size_t>(0, ev.templates.size() - 1)(rng);
    clip.captions.push_back(ev.templates[pick]);
  }
  return clip;
}

std::vector<SynthClip> make_split(const SynthSpec& spec, const std::vector<SynthEvent>& events,
                                  std::size_t n, const std::string& prefix, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  Rng rng(seq);
  std::vector<SynthClip> out;
  for (std::size_t i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.wav", prefix.c_str(), i);
    out.push_back(make_clip(spec, events, i % events.size(), name, rng));
  }
  return out;
}

void write_split(const std::vector<SynthClip>& clips, const std::filesystem::path& audio_dir,
                 const std::filesystem::path& csv, std::size_t captions, int sr) {
  std::filesystem::create_directories(audio_dir);
  std::ofstream out(csv, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + csv.string());
  text::CsvRow header{"file_name"};
  for (std::size_t c = 1; c <= captions; ++c) header.push_back("caption_" + std::to_string(c));
  out << text::csv_line(header) << "\n";
  for (const auto& clip : clips) {
    dsp::write_wav16(audio_dir / clip.file_name, clip.samples, sr);
    text::CsvRow row{clip.file_name};
    row.insert(row.end(), clip.captions.begin(), clip.captions.end());
    out << text::csv_line(row) << "\n";
  }
}

}  // namespace

std::vector<SynthEvent> default_inventory() {
  return {
      {"motor", EventKind::Tone, 100, 250, {"a motor is humming", "the motor is humming"}, {"motor", "humming"}},
      {"stream", EventKind::WhiteNoise, 0, 0, {"a stream is flowing", "the stream is flowing"}, {"stream", "flowing"}},
      {"bird", EventKind::Chirps, 2000, 3500, {"a bird is chirping", "the bird is chirping"}, {"bird", "chirping"}},
      {"bell", EventKind::DecayTone, 700, 1100, {"a bell is ringing", "the bell is ringing"}, {"bell", "ringing"}},
      {"dog", EventKind::Bursts, 300, 900, {"a dog is barking", "the dog is barking"}, {"dog", "barking"}},
      {"siren", EventKind::Sweep, 600, 1300, {"a siren is wailing", "the siren is wailing"}, {"siren", "wailing"}},
      {"clock", EventKind::Clicks, 4, 8, {"a clock is ticking", "the clock is ticking"}, {"clock", "ticking"}},
      {"wind", EventKind::LowNoise, 0, 300, {"a wind is blowing", "the wind is blowing"}, {"wind", "blowing"}},
  };
}

void SynthSpec::validate() const {
  if (n_clips < 1) fail(ErrorKind::InvalidConfig, "synth n_clips must be >= 1");
  if (sample_rate < 1000) fail(ErrorKind::InvalidConfig, "synth sample_rate must be >= 1000");
  if (!(min_duration_s > 0.0 && max_duration_s >= min_duration_s)) {
    fail(ErrorKind::InvalidConfig, "synth durations must satisfy 0 < min <= max");
  }
  if (captions_per_clip < 1) fail(ErrorKind::InvalidConfig, "synth captions_per_clip must be >= 1");
  if (n_events < 1 || n_events > events.size()) {
    fail(ErrorKind::InvalidConfig, "synth n_events must lie in 1.." + std::to_string(events.size()));
  }
  if (!(noise_level >= 0.0)) fail(ErrorKind::InvalidConfig, "synth noise_level must be >= 0");
  std::set<std::string> content;
  for (const auto& ev : active_events()) {
    if (ev.templates.empty()) fail(ErrorKind::InvalidConfig, "synth event " + ev.name + " has no templates");
    content.insert(ev.content_words.begin(), ev.content_words.end());
  }
  for (const auto& ev : active_events()) {
    for (const auto& t : ev.templates) {
      const auto words = text::normalize_words(t);
      for (const auto& w : ev.content_words) {
        if (std::find(words.begin(), words.end(), w) == words.end()) {
          fail(ErrorKind::InvalidConfig, "template '" + t + "' lacks content word " + w);
        }
      }
      for (const auto& w : words) {
        const bool own = std::find(ev.content_words.begin(), ev.content_words.end(), w) !=
                         ev.content_words.end();
        if (!own && content.contains(w)) {
          fail(ErrorKind::InvalidConfig, "template '" + t + "' uses another event's content word " + w);
        }
      }
    }
  }
}

std::vector<SynthEvent> SynthSpec::active_events() const {
  std::vector<SynthEvent> out(events.begin(),
                              events.begin() + static_cast<std::ptrdiff_t>(std::min(n_events, events.size())));
  if (templates_per_event > 0) {
    for (auto& ev : out) {
      if (ev.templates.size() > templates_per_event) ev.templates.resize(templates_per_event);
    }
  }
  return out;
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const auto events = spec.active_events();
  SynthDataset ds;
  ds.sample_rate = spec.sample_rate;
  ds.development = make_split(spec, events, spec.n_clips, "dev", 1);
  ds.validation = make_split(spec, events, spec.n_validation_clips, "val", 2);

  std::set<std::string> content, function;
  for (const auto& ev : events) content.insert(ev.content_words.begin(), ev.content_words.end());
  for (const auto& ev : events) {
    for (const auto& t : ev.templates) {
      for (const auto& w : text::normalize_words(t)) {
        if (!content.contains(w)) function.insert(w);
      }
    }
  }
  ds.function_words.assign(function.begin(), function.end());
  return ds;
}

void write_dataset(const SynthDataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  const std::size_t captions = ds.development.empty() ? 1 : ds.development.front().captions.size();
  write_split(ds.development, root / "development", root / "clotho_captions_development.csv",
              captions, ds.sample_rate);
  write_split(ds.validation, root / "evaluation", root / "clotho_captions_evaluation.csv", captions,
              ds.sample_rate);
  std::ofstream out(root / "function_words.txt", std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write function word list under " + root.string());
  out << "# function words of the synthetic templates\n";
  for (const auto& w : ds.function_words) out << w << '\n';
}

}  // namespace clampcap::app
