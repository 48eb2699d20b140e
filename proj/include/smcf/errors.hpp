#pragma once

#include <stdexcept>
#include <string>

namespace smcf {

// Point outside a chart's admissible domain, or a metric that fails to be
// positive definite there.
class DomainError : public std::runtime_error {
 public:
  DomainError(int chart, const std::string& what)
      : std::runtime_error("chart " + std::to_string(chart) + ": " + what), chart_(chart) {}
  int chart() const { return chart_; }

 private:
  int chart_;
};

// Vectors that fail to span a line or a plane.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A frame that is not orthonormal (or not adapted) to the required tolerance.
class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Induced metric degenerate at a node.
class ImmersionError : public std::runtime_error {
 public:
  ImmersionError(int node, const std::string& what)
      : std::runtime_error("node " + std::to_string(node) + ": " + what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

// Flow aborted; carries the step index at which it happened.
class FlowError : public std::runtime_error {
 public:
  FlowError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// Input outside the range where an estimate is asserted (e.g. delta below threshold).
class HypothesisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace smcf
