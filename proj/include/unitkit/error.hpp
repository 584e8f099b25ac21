// Copyright 2026 The unitkit Authors
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

namespace unitkit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or invariant violation on caller-supplied values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (open, write, rename).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A binary or text file does not follow its documented layout.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, version_mismatch, size_mismatch, malformed };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace unitkit
