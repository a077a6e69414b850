/* Copyright 2026 The SpeechCache Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SPEECHCACHE_ERROR_HPP_
#define SPEECHCACHE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace speechcache {

enum class ErrorCode {
  kInputTooShort,
  kInvalidAudio,
  kInvalidFilter,
  kShapeError,
  kNoGraph,
  kNumeric,
  kInfeasible,
  kOracleTooLarge,
  kBadPreload,
  kNotInManifest,
  kLexiconMiss,
  kTrainingDiverged,
  kInfeasibleSetting,
  kFormat,
  kIo,
  kConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInputTooShort: return "InputTooShort";
    case ErrorCode::kInvalidAudio: return "InvalidAudio";
    case ErrorCode::kInvalidFilter: return "InvalidFilter";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kNoGraph: return "NoGraph";
    case ErrorCode::kNumeric: return "NumericError";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kOracleTooLarge: return "OracleTooLarge";
    case ErrorCode::kBadPreload: return "BadPreload";
    case ErrorCode::kNotInManifest: return "NotInManifest";
    case ErrorCode::kLexiconMiss: return "LexiconMiss";
    case ErrorCode::kTrainingDiverged: return "TrainingDiverged";
    case ErrorCode::kInfeasibleSetting: return "InfeasibleSetting";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kConfig: return "ConfigError";
  }
  return "Unknown";
}

// All library failures surface as this exception; `code()` identifies the
// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define SC_CHECK(cond, code, msg)                              \
  do {                                                         \
    if (!(cond)) throw ::speechcache::Error((code), (msg));    \
  } while (0)

}  // namespace speechcache

#endif  // SPEECHCACHE_ERROR_HPP_
