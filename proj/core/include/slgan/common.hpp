// Copyright 2026 The slgan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fmt/format.h>

#include <stdexcept>
#include <string>
#include <utility>

namespace slgan {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or shape disagreement between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain (NaN, negative weight, bad range).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// File or stream could not be read or written, or its contents are malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

template <typename E = DomainError, typename... Args>
inline void check(bool condition, fmt::format_string<Args...> format, Args&&... args) {
  if (!condition) {
    throw E(fmt::format(format, std::forward<Args>(args)...));
  }
}

}  // namespace slgan
