/*
 * Copyright 2026 The pemb Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PEMB_ERRORS_H_
#define PEMB_ERRORS_H_

#include <stdexcept>
#include <string>

namespace pemb {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition (shapes, unit norms, ranges).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input is valid in shape but degenerate (e.g. zero-norm vector to normalize).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced or an iterative routine failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid or incompatible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training diverged or otherwise failed; message identifies where.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace pemb

#endif  // PEMB_ERRORS_H_
