#pragma once

#include <stdexcept>

namespace dne {

// Invalid configuration or hyperparameters. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or mismatched input data: manifests, images, checkpoints.
// The CLI maps this to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between tensors, layers, or genomes.
struct ShapeError : DataError {
  using DataError::DataError;
};

// Failure to write an output artifact. The CLI maps this to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dne
