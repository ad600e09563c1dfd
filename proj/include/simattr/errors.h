/*
 * Copyright 2026 The simattr Authors.
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

#ifndef SIMATTR_ERRORS_H_
#define SIMATTR_ERRORS_H_

#include <stdexcept>
#include <string>

namespace simattr {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Store file does not carry the expected magic or version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Store file payload is truncated or has trailing bytes.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Data or parameters violate a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Vector or matrix shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// The (modified) training set cannot be trained on, e.g. fewer than two
// populated classes.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace simattr

#endif  // SIMATTR_ERRORS_H_
