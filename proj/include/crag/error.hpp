// Copyright 2026 The crag Authors
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

namespace crag {

enum class ErrorKind {
  kPrecondition,
  kConfiguration,
  kEncoding,
  kContractViolation,
  kTransport,
  kStorage,
  kIntegrity,
  kFormat,
  kNotFound,
  kNumeric,
  kTraining,
  kParse,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kEncoding: return "input-encoding";
    case ErrorKind::kContractViolation: return "contract-violation";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kStorage: return "storage";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kParse: return "parse";
  }
  return "unknown";
}

/// Base of every error the library throws. `kind()` lets callers (the CLI in
/// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CRAG_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(Kind, what) {}    \
  };

CRAG_DEFINE_ERROR(PreconditionError, ErrorKind::kPrecondition)
CRAG_DEFINE_ERROR(ConfigError, ErrorKind::kConfiguration)
CRAG_DEFINE_ERROR(EncodingError, ErrorKind::kEncoding)
CRAG_DEFINE_ERROR(ContractViolation, ErrorKind::kContractViolation)
CRAG_DEFINE_ERROR(StorageError, ErrorKind::kStorage)
CRAG_DEFINE_ERROR(IntegrityError, ErrorKind::kIntegrity)
CRAG_DEFINE_ERROR(FormatError, ErrorKind::kFormat)
CRAG_DEFINE_ERROR(NotFoundError, ErrorKind::kNotFound)
CRAG_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)
CRAG_DEFINE_ERROR(TrainingError, ErrorKind::kTraining)
CRAG_DEFINE_ERROR(ParseError, ErrorKind::kParse)

#undef CRAG_DEFINE_ERROR

/// Transport failures carry how many attempts were made before giving up.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(ErrorKind::kTransport, what + " (after " + std::to_string(attempts) + " attempt(s))"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

#define CRAG_REQUIRE(cond, msg)                      \
  do {                                               \
    if (!(cond)) throw ::crag::PreconditionError(msg); \
  } while (0)

}  // namespace crag
