#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clampcap {

enum class ErrorKind {
  // dsp
  NotWav,
  UnsupportedChannels,
  UnsupportedEncoding,
  TooManyBands,
  InvalidConfig,
  // text
  UnknownWord,
  ZeroCount,
  // grad
  ShapeMismatch,
  GraphCycle,
  NonScalarLoss,
  NonFiniteLoss,
  // model
  VersionMismatch,
  CorruptFile,
  ConfigMismatch,
  // metrics
  DegenerateCorpus,
  MissingSpice,
  MissingCandidate,
  IdMismatch,
  // cli
  BadFlag,
  MissingConfig,
  MissingAudio,
  MalformedRow,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every library failure carries a kind so the CLI can print a
/// machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace clampcap
