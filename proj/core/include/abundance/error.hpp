#pragma once

#include <stdexcept>
#include <string>

namespace abundance {

/// Malformed or inconsistent input (files, arguments, preconditions).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed: non-convergence, divergence, singular factorization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query point lies outside the domain of a raster or mesh.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace abundance
