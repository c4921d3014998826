#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace zeq {

// Input outside the chart or otherwise rejected before any numerics run.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical stage failed (quadrature, root finding, indefinite Gram, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QuadratureError : public NumericalError {
 public:
  QuadratureError(const std::string& what, double achieved)
      : NumericalError(what + " (achieved relative error " + std::to_string(achieved) + ")"),
        achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

class RootFindingError : public NumericalError {
 public:
  RootFindingError(const std::string& what, std::vector<int> unconverged)
      : NumericalError(what), unconverged_(std::move(unconverged)) {}
  const std::vector<int>& unconverged() const { return unconverged_; }

 private:
  std::vector<int> unconverged_;
};

// A zero sits on (or numerically indistinguishably close to) a counting contour.
class BoundaryZeroError : public NumericalError {
 public:
  BoundaryZeroError(const std::string& what, int segment)
      : NumericalError(what), segment_(segment) {}
  int segment() const { return segment_; }

 private:
  int segment_;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace zeq
