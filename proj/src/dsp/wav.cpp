#include "clampcap/dsp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "clampcap/error.hpp"

namespace clampcap::dsp {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::vector<unsigned char> header(std::uint16_t format, std::uint16_t channels,
                                  std::uint32_t rate, std::uint16_t bits,
                                  std::uint32_t data_bytes) {
  std::vector<unsigned char> out;
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * channels * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  return out;
}

}  // namespace

AudioClip parse_wav(const std::vector<unsigned char>& bytes, const std::string& source_id) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::NotWav, source_id + ": missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) fail(ErrorKind::NotWav, source_id + ": short fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && size >= 26 && avail >= 26) {
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || data == nullptr) fail(ErrorKind::NotWav, source_id + ": missing fmt or data chunk");
  if (channels != 1) {
    fail(ErrorKind::UnsupportedChannels,
         source_id + ": " + std::to_string(channels) + " channels, expected mono");
  }
  if (rate == 0) fail(ErrorKind::NotWav, source_id + ": zero sample rate");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = source_id;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
      clip.samples[i] = raw / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t raw = read_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &raw, sizeof v);
      clip.samples[i] = std::clamp(static_cast<double>(v), -1.0, 1.0);
    }
  } else {
    fail(ErrorKind::UnsupportedEncoding, source_id + ": format " + std::to_string(format) +
                                             " with " + std::to_string(bits) + " bits");
  }
  if (clip.samples.empty()) fail(ErrorKind::NotWav, source_id + ": no samples");
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.stem().string());
}

std::vector<unsigned char> encode_wav16(const std::vector<double>& samples, int sample_rate) {
  auto out = header(kFormatPcm, 1, static_cast<std::uint32_t>(sample_rate), 16,
                    static_cast<std::uint32_t>(samples.size() * 2));
  for (double s : samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

std::vector<unsigned char> encode_wav_float(const std::vector<float>& samples, int sample_rate,
                                            int channels) {
  auto out = header(kFormatFloat, static_cast<std::uint16_t>(channels),
                    static_cast<std::uint32_t>(sample_rate), 32,
                    static_cast<std::uint32_t>(samples.size() * 4));
  for (float s : samples) {
    std::uint32_t raw;
    std::memcpy(&raw, &s, sizeof raw);
    put_u32(out, raw);
  }
  return out;
}

void write_wav16(const std::filesystem::path& path, const std::vector<double>& samples,
                 int sample_rate) {
  const auto bytes = encode_wav16(samples, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace clampcap::dsp
