#pragma once

#include <stdexcept>
#include <string>

namespace panoptic {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Too few points to define a box.
class DegenerateClusterError : public Error {
 public:
  using Error::Error;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class SceneTooDenseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A referenced file does not exist.
class IngestError : public IoError {
 public:
  using IoError::IoError;
};

// File exists but its content does not match the expected layout.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class PoseError : public IoError {
 public:
  using IoError::IoError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace panoptic
