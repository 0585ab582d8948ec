#pragma once

#include <stdexcept>
#include <string>

namespace p2cws {

// Malformed or inconsistent input data (schema violations, invariant breaks).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required observation is absent (no detection near the queried time,
// missing joint, ...). Window building treats this as a detector miss.
class MissingObservation : public DataError {
 public:
  using DataError::DataError;
};

// Degenerate geometry: zero-length direction, collinear joints, point
// behind the camera.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace p2cws
