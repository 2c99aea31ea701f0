// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowgen {

// Numeric failures (non-finite losses, diverged integration, failed solves).
// Validation problems use std::invalid_argument / std::domain_error.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input files.
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

class TrainError : public NumericError {
  public:
    TrainError(std::size_t step, const std::string& what)
        : NumericError("training step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const { return step_; }

  private:
    std::size_t step_;
};

}  // namespace flowgen
