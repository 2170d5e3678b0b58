// Copyright (c) 2026 The alvtts Authors
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

namespace alvtts {

enum class ErrorKind {
  kConfig,       // bad configuration or missing upstream artifact
  kIo,           // file missing or unreadable
  kFormat,       // binary/text format violation
  kParse,        // malformed manifest or corpus line
  kValidation,   // data violates a domain invariant
  kShape,        // tensor/sequence shape mismatch
  kVocabulary,   // unknown token, speaker, dialect or word
  kAlignment,    // span out of range or not a partition
  kDuration,     // non-positive duration
  kLength,       // sequence longer than the model supports
  kDegenerate,   // degenerate F0 contour
  kNumeric,      // non-finite values or divergence
  kInput,        // empty or otherwise invalid argument
  kContract,     // pipeline contract (hash chain, reference length)
  kRemote,       // translation backend failure
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kVocabulary: return "vocabulary";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kDuration: return "duration";
    case ErrorKind::kLength: return "length";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kRemote: return "remote";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for the command-line tool: 2 config, 3 contract, 4 numeric divergence.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kIo:
      return 2;
    case ErrorKind::kNumeric:
      return 4;
    default:
      return 3;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace alvtts
