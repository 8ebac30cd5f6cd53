#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "clampcap/error.hpp"
#include "clampcap/model/captioner.hpp"

namespace clampcap::model {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) {
    std::uint64_t raw;
    std::memcpy(&raw, &v, sizeof raw);
    put(raw, 8);
  }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() {
    const std::uint64_t raw = get(8);
    double v;
    std::memcpy(&v, &raw, sizeof v);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail(ErrorKind::CorruptFile, "checkpoint truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

nlohmann::json config_json(const ModelConfig& c) {
  return {{"n_mels", c.n_mels},           {"hidden", c.hidden}, {"decoder_hidden", c.decoder_hidden},
          {"encoder_layers", c.encoder_layers}, {"dropout_p", c.dropout_p},
          {"vocab_size", c.vocab_size},   {"content_size", c.content_size}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.n_mels = j.at("n_mels").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.decoder_hidden = j.at("decoder_hidden").get<std::size_t>();
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.content_size = j.at("content_size").get<std::size_t>();
  return c;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"config", config_json(ckpt.config)},
                                 {"epoch", ckpt.epoch},
                                 {"metric", ckpt.metric}};
  const std::string text = header.dump();
  Writer w;
  w.bytes("CCKP");
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  std::uint32_t blocks = 0;
  ckpt.params.for_each([&](const std::string&, const Tensor&) { ++blocks; });
  w.u32(blocks);
  ckpt.params.for_each([&](const std::string& name, const Tensor& t) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  });
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "CCKP") fail(ErrorKind::CorruptFile, "not a checkpoint file");
  const std::uint32_t len = r.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, std::string("checkpoint header: ") + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::VersionMismatch, "checkpoint format " + std::to_string(version) +
                                         ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  try {
    ckpt.config = config_from(header.at("config"));
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.metric = header.at("metric").get<double>();
    ckpt.config.validate();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, std::string("checkpoint header: ") + e.what());
  }
  ckpt.params = ModelParams(ckpt.config);

  std::uint32_t expected_blocks = 0;
  ckpt.params.for_each([&](const std::string&, Tensor&) { ++expected_blocks; });
  if (r.u32() != expected_blocks) fail(ErrorKind::CorruptFile, "checkpoint block count mismatch");
  ckpt.params.for_each([&](const std::string& name, Tensor& t) {
    const std::string stored = r.bytes(r.u32());
    if (stored != name) fail(ErrorKind::CorruptFile, "expected tensor " + name + ", found " + stored);
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape()) {
      fail(ErrorKind::CorruptFile, "tensor " + name + " has shape " + shape_string(shape) +
                                       ", config implies " + t.shape_string());
    }
    for (double& v : t.values()) v = r.f64();
  });
  if (!r.done()) fail(ErrorKind::CorruptFile, "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.config == expected)) {
    fail(ErrorKind::ConfigMismatch,
         "checkpoint config " + config_json(ckpt.config).dump() + " does not match model " +
             config_json(expected).dump());
  }
  return ckpt;
}

}  // namespace clampcap::model
