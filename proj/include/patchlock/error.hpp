#pragma once

#include <stdexcept>
#include <string>

namespace patchlock {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Matrix/vector dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Singular or numerically singular matrix.
class SingularError : public Error {
 public:
  using Error::Error;
};

// Image/patch geometry violations (non-divisible dimensions, bad grids).
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Operation applied in the wrong state (e.g. encrypting twice).
class StateError : public Error {
 public:
  using Error::Error;
};

// Segmentation label outside [0, num_classes) and not the ignore value.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, truncated payload, invalid values).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures (open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

// Summary statistics requested on too few samples.
class StatsError : public Error {
 public:
  using Error::Error;
};

// Training failures (divergence, empty effective batch).
class TrainError : public Error {
 public:
  using Error::Error;
};

// Key generation could not produce usable material.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Missing environment capability (e.g. no entropy source).
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied argument outside the documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace patchlock
