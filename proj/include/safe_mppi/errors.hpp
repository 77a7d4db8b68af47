// Copyright 2026 The safe_mppi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace safe_mppi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or inputs that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Integration produced a non-finite state.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Every MPPI rollout had non-finite cost.
class NoFeasibleRollout : public Error {
 public:
  using Error::Error;
};

/// The control input cannot influence the barrier at this state yet the
/// constraint demands an increase.
class DegenerateConstraint : public Error {
 public:
  using Error::Error;
};

class RelativeDegreeTooHigh : public Error {
 public:
  using Error::Error;
};

/// The QP constraint set is empty.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, int constraint_index)
      : Error(what), constraint_index_(constraint_index) {}
  /// Index of the most violated constraint at detection time.
  int constraint_index() const { return constraint_index_; }

 private:
  int constraint_index_;
};

class DegenerateMeasurement : public Error {
 public:
  using Error::Error;
};

class NonPsdCovariance : public Error {
 public:
  using Error::Error;
};

}  // namespace safe_mppi
