#pragma once

#include <stdexcept>
#include <string>

namespace hgan {

enum class Err {
  EmptyDataset,
  DecodeError,
  ShapeMismatch,
  CropTooLarge,
  InvalidBatchSize,
  MaskRequired,
  InvalidKernel,
  InvalidConfig,
  ShapeError,
  WeightLoadError,
  NonFiniteLoss,
  InsufficientSamples,
  IncomparableFeatures,
  EmbeddingError,
  NumericalInstability,
  IncompatibleCheckpoint,
  IOError,
  ConfigError,
  LockError,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::EmptyDataset: return "EmptyDataset";
    case Err::DecodeError: return "DecodeError";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::CropTooLarge: return "CropTooLarge";
    case Err::InvalidBatchSize: return "InvalidBatchSize";
    case Err::MaskRequired: return "MaskRequired";
    case Err::InvalidKernel: return "InvalidKernel";
    case Err::InvalidConfig: return "InvalidConfig";
    case Err::ShapeError: return "ShapeError";
    case Err::WeightLoadError: return "WeightLoadError";
    case Err::NonFiniteLoss: return "NonFiniteLoss";
    case Err::InsufficientSamples: return "InsufficientSamples";
    case Err::IncomparableFeatures: return "IncomparableFeatures";
    case Err::EmbeddingError: return "EmbeddingError";
    case Err::NumericalInstability: return "NumericalInstability";
    case Err::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case Err::IOError: return "IOError";
    case Err::ConfigError: return "ConfigError";
    case Err::LockError: return "LockError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Err code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace hgan
