#include "clampcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "clampcap/error.hpp"

namespace clampcap {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : Tensor(std::vector<std::size_t>{rows, cols}, fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    fail(ErrorKind::ShapeMismatch, "tensor of shape " + clampcap::shape_string(shape_) +
                                       " given " + std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return values_.empty() ? 0 : 1;
  if (shape_.size() == 1) return 1;
  return element_count(shape_) / shape_.back();
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return values_.empty() ? 0 : 1;
  return shape_.back();
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const { return clampcap::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotWav: return "NotWav";
    case ErrorKind::UnsupportedChannels: return "UnsupportedChannels";
    case ErrorKind::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorKind::TooManyBands: return "TooManyBands";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::UnknownWord: return "UnknownWord";
    case ErrorKind::ZeroCount: return "ZeroCount";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::GraphCycle: return "GraphCycle";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::DegenerateCorpus: return "DegenerateCorpus";
    case ErrorKind::MissingSpice: return "MissingSpice";
    case ErrorKind::MissingCandidate: return "MissingCandidate";
    case ErrorKind::IdMismatch: return "IdMismatch";
    case ErrorKind::BadFlag: return "BadFlag";
    case ErrorKind::MissingConfig: return "MissingConfig";
    case ErrorKind::MissingAudio: return "MissingAudio";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace clampcap
