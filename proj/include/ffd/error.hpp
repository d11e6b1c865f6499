// Copyright 2026 The FFD Toolkit Authors
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
#include <string_view>

namespace ffd {

/// Error kinds raised by the toolkit. Each kind belongs to one family,
/// which the command line maps to a process exit code.
enum class Errc {
  invalid_parameter,
  invalid_input,
  empty_input,
  dimension_mismatch,
  duplicate_id,
  corrupt_corpus,
  schema,
  shape,
  invalid_label,
  degenerate_labels,
  missing_condition,
  io,
  assertion,
};

enum class ErrorFamily { io, validation, assertion };

constexpr ErrorFamily family_of(Errc code) noexcept {
  switch (code) {
    case Errc::io:
      return ErrorFamily::io;
    case Errc::assertion:
      return ErrorFamily::assertion;
    default:
      return ErrorFamily::validation;
  }
}

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::invalid_input: return "invalid-input";
    case Errc::empty_input: return "empty-input";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::duplicate_id: return "duplicate-id";
    case Errc::corrupt_corpus: return "corrupt-corpus";
    case Errc::schema: return "schema";
    case Errc::shape: return "shape";
    case Errc::invalid_label: return "invalid-label";
    case Errc::degenerate_labels: return "degenerate-labels";
    case Errc::missing_condition: return "missing-condition";
    case Errc::io: return "io";
    case Errc::assertion: return "assertion";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorFamily family() const noexcept { return family_of(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace ffd
