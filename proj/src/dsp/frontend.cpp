#include "clampcap/dsp/frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include <json.hpp>

#include "clampcap/error.hpp"

namespace clampcap::dsp {

namespace {

// FFTW planning is not thread-safe; execution with fresh arrays is.
class PlanCache {
 public:
  fftw_plan get(std::size_t n) {
    std::lock_guard lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::CorruptFile, "truncated feature file");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace

void FrontendConfig::validate() const {
  if (n_mels < 1) fail(ErrorKind::InvalidConfig, "n_mels must be >= 1");
  if (!(window_ms > 0.0)) fail(ErrorKind::InvalidConfig, "window_ms must be positive");
  if (!(overlap > 0.0 && overlap < 1.0)) fail(ErrorKind::InvalidConfig, "overlap must lie in (0, 1)");
  if (!(log_floor > 0.0)) fail(ErrorKind::InvalidConfig, "log_floor must be positive");
}

FrameLayout frame_layout(std::size_t signal_len, int sample_rate, const FrontendConfig& cfg) {
  cfg.validate();
  FrameLayout layout;
  layout.win_len = static_cast<std::size_t>(std::llround(cfg.window_ms / 1000.0 * sample_rate));
  layout.win_len = std::max<std::size_t>(layout.win_len, 1);
  const double hop = std::floor(static_cast<double>(layout.win_len) * (1.0 - cfg.overlap) + 1e-9);
  layout.hop = std::max<std::size_t>(static_cast<std::size_t>(hop), 1);
  if (signal_len < layout.win_len) {
    layout.frame_count = 1;
  } else {
    layout.frame_count = 1 + (signal_len - layout.win_len) / layout.hop;
  }
  return layout;
}

std::vector<double> hamming_periodic(std::size_t len) {
  std::vector<double> w(len);
  for (std::size_t n = 0; n < len; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(len));
  }
  return w;
}

FramedSignal frame_signal(const AudioClip& clip, const FrontendConfig& cfg) {
  if (clip.samples.empty()) fail(ErrorKind::InvalidConfig, clip.source_id + ": empty clip");
  FramedSignal out;
  out.layout = frame_layout(clip.samples.size(), clip.sample_rate, cfg);
  const auto& lay = out.layout;
  out.frames = Tensor(lay.frame_count, lay.win_len);
  const auto window = hamming_periodic(lay.win_len);
  for (std::size_t t = 0; t < lay.frame_count; ++t) {
    const std::size_t start = t * lay.hop;
    auto row = out.frames.row(t);
    for (std::size_t i = 0; i < lay.win_len; ++i) {
      const std::size_t s = start + i;
      row[i] = s < clip.samples.size() ? clip.samples[s] * window[i] : 0.0;
    }
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

MelFilterbank build_mel_filterbank(int sample_rate, std::size_t n_fft, int n_mels) {
  if (n_mels < 1) fail(ErrorKind::InvalidConfig, "n_mels must be >= 1");
  if (n_fft == 0 || (n_fft & (n_fft - 1)) != 0) {
    fail(ErrorKind::InvalidConfig, "n_fft must be a power of two");
  }
  const std::size_t n_bins = n_fft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);

  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }

  MelFilterbank fb;
  fb.weights = Tensor(static_cast<std::size_t>(n_mels), n_bins);
  fb.center_freqs.assign(edges.begin() + 1, edges.end() - 1);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      fb.weights.at(static_cast<std::size_t>(m), k) = w;
      any = any || w > 0.0;
    }
    if (!any) {
      fail(ErrorKind::TooManyBands, std::to_string(n_mels) + " mel bands leave band " +
                                        std::to_string(m) + " without an FFT bin (n_fft=" +
                                        std::to_string(n_fft) + ")");
    }
  }
  return fb;
}

std::vector<double> power_spectrum(std::span<const double> frame, std::size_t n_fft) {
  const std::size_t n_bins = n_fft / 2 + 1;
  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(n_fft));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(n_bins));
  const std::size_t n = std::min(frame.size(), n_fft);
  std::copy_n(frame.begin(), n, in.get());
  std::fill(in.get() + n, in.get() + n_fft, 0.0);
  fftw_execute_dft_r2c(plan_cache().get(n_fft), in.get(), out.get());
  std::vector<double> power(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double re = out.get()[k][0], im = out.get()[k][1];
    power[k] = re * re + im * im;
  }
  return power;
}

MelSpectrogram log_mel_energies(const AudioClip& clip, const FrontendConfig& cfg) {
  const FramedSignal framed = frame_signal(clip, cfg);
  const std::size_t n_fft = next_pow2(framed.layout.win_len);
  const MelFilterbank fb = build_mel_filterbank(clip.sample_rate, n_fft, cfg.n_mels);
  const std::size_t frames = framed.layout.frame_count;
  const std::size_t bands = static_cast<std::size_t>(cfg.n_mels);
  const std::size_t n_bins = fb.weights.cols();
  const double log_floor = std::log(cfg.log_floor);

  MelSpectrogram mel;
  mel.values = Tensor(bands, frames);
  mel.frame_count = frames;
  mel.clip_id = clip.source_id;

  const auto count = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel for schedule(static) if (frames * n_fft >= (1 << 16))
  for (std::ptrdiff_t ti = 0; ti < count; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    const auto power = power_spectrum(framed.frames.row(t), n_fft);
    for (std::size_t m = 0; m < bands; ++m) {
      const auto w = fb.weights.row(m);
      double energy = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) energy += w[k] * power[k];
      mel.values.at(m, t) = energy > cfg.log_floor ? std::log(energy) : log_floor;
    }
  }
  return mel;
}

void write_feature_file(const std::filesystem::path& path, const MelSpectrogram& mel,
                        int sample_rate, const FrontendConfig& cfg) {
  nlohmann::json header = {
      {"clip_id", mel.clip_id},
      {"N", mel.values.rows()},
      {"T", mel.values.cols()},
      {"sample_rate", sample_rate},
      {"config",
       {{"n_mels", cfg.n_mels},
        {"window_ms", cfg.window_ms},
        {"overlap", cfg.overlap},
        {"log_floor", cfg.log_floor}}},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write("CCFT", 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : mel.values.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t raw;
    std::memcpy(&raw, &f, sizeof raw);
    put_u32(out, raw);
  }
}

MelSpectrogram read_feature_file(const std::filesystem::path& path, FeatureFileInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CCFT", 4) != 0) {
    fail(ErrorKind::CorruptFile, path.string() + ": not a feature file");
  }
  const std::uint32_t len = get_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) fail(ErrorKind::CorruptFile, path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, path.string() + ": " + e.what());
  }
  MelSpectrogram mel;
  mel.clip_id = header.at("clip_id").get<std::string>();
  const auto rows = header.at("N").get<std::size_t>();
  const auto cols = header.at("T").get<std::size_t>();
  mel.values = Tensor(rows, cols);
  mel.frame_count = cols;
  for (double& v : mel.values.values()) {
    const std::uint32_t raw = get_u32(in);
    float f;
    std::memcpy(&f, &raw, sizeof f);
    v = f;
  }
  if (info) {
    info->sample_rate = header.at("sample_rate").get<int>();
    const auto& c = header.at("config");
    info->config.n_mels = c.at("n_mels").get<int>();
    info->config.window_ms = c.at("window_ms").get<double>();
    info->config.overlap = c.at("overlap").get<double>();
    info->config.log_floor = c.at("log_floor").get<double>();
  }
  return mel;
}

}  // namespace clampcap::dsp
