#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace clampcap::dsp {

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;
  std::string source_id;
};

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float.
/// 16-bit samples are scaled by 1/32768.
AudioClip load_wav(const std::filesystem::path& path);

/// Decodes an in-memory WAV image; `source_id` is copied to the clip.
AudioClip parse_wav(const std::vector<unsigned char>& bytes, const std::string& source_id);

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1) before quantization.
void write_wav16(const std::filesystem::path& path, const std::vector<double>& samples,
                 int sample_rate);

std::vector<unsigned char> encode_wav16(const std::vector<double>& samples, int sample_rate);
std::vector<unsigned char> encode_wav_float(const std::vector<float>& samples, int sample_rate,
                                            int channels = 1);

}  // namespace clampcap::dsp
