#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "clampcap/dsp/wav.hpp"
#include "clampcap/tensor.hpp"

namespace clampcap::dsp {

struct FrontendConfig {
  int n_mels = 64;
  double window_ms = 46.0;
  double overlap = 0.5;
  double log_floor = 1e-10;

  void validate() const;
};

/// Frame geometry for a clip: window/hop lengths in samples and frame count.
struct FrameLayout {
  std::size_t win_len = 0;
  std::size_t hop = 0;
  std::size_t frame_count = 0;
};

FrameLayout frame_layout(std::size_t signal_len, int sample_rate, const FrontendConfig& cfg);

/// Windowed frames, one per row (T x win_len). Signals shorter than one
/// window produce a single zero-padded frame.
struct FramedSignal {
  FrameLayout layout;
  Tensor frames;
};

FramedSignal frame_signal(const AudioClip& clip, const FrontendConfig& cfg);

/// Periodic Hamming window: 0.54 - 0.46 cos(2 pi n / len).
std::vector<double> hamming_periodic(std::size_t len);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
  Tensor weights;                   // n_mels x (n_fft/2 + 1)
  std::vector<double> center_freqs;  // Hz, strictly increasing
};

MelFilterbank build_mel_filterbank(int sample_rate, std::size_t n_fft, int n_mels);

std::size_t next_pow2(std::size_t n);

/// One-sided power spectrum |X_k|^2 for k = 0..n_fft/2 of a real frame,
/// zero-padded to n_fft.
std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n_fft);

struct MelSpectrogram {
  Tensor values;  // n_mels x T
  std::size_t frame_count = 0;
  std::string clip_id;

  std::size_t bands() const { return values.rows(); }
};

MelSpectrogram log_mel_energies(const AudioClip& clip, const FrontendConfig& cfg);

struct FeatureFileInfo {
  int sample_rate = 0;
  FrontendConfig config;
};

/// Feature container: "CCFT" magic, u32 little-endian header length, JSON
/// header, then n_mels x T little-endian float32 values in row-major order.
void write_feature_file(const std::filesystem::path& path, const MelSpectrogram& mel,
                        int sample_rate, const FrontendConfig& cfg);
MelSpectrogram read_feature_file(const std::filesystem::path& path,
                                 FeatureFileInfo* info = nullptr);

}  // namespace clampcap::dsp
